// Two generalization protocols for the embedding classifier: rooms whose
// key object never appeared in training, and a different object vocabulary
// at test time.
//
// ```bash
// cargo run -p scenesense --example holdout_and_transfer
// ```

use std::error::Error;
use std::path::Path;

use scenesense::classifiers::TrainConfig;
use scenesense::cooccurrence::{build_index, count_cooccurrences, CountingMode};
use scenesense::eval::{
    holdout_experiment, transfer_experiment, EmbeddingPipeline, SplitSpec, SplitUnit, TransferSide,
};
use scenesense::lm_backend::hash_embedder;
use scenesense::scene_graph::{load_scene_graph_path, preprocess, LabelSpace, RoomSample};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let space = LabelSpace::from_path(&fixtures.join("toy_label_space.json"))?;
    let (graph, _) = load_scene_graph_path(&fixtures.join("toy_graph.json"), &space)?;
    let (graph, _) = preprocess(graph, &space, None)?;
    let rooms = graph.samples();
    let table = count_cooccurrences(&rooms, &space, CountingMode::Presence, 1.0)?;
    let index = build_index(&table)?;

    let embedder = hash_embedder(64, 3);
    let train = TrainConfig {
        epochs: 40,
        batch_size: 32,
        learning_rate: 5e-3,
        lr_step: 20,
        hidden: vec![32],
        ..TrainConfig::default()
    };
    let pipeline = EmbeddingPipeline::new(&embedder, train);
    let spec = SplitSpec::new([0.7, 0.3, 0.0], SplitUnit::Building, 0)?;

    let holdout = vec!["chair".to_string()];
    let report = holdout_experiment(&rooms, &spec, &holdout, &space, &index, &pipeline)?;
    println!(
        "holdout: removed {} of {} training rows, accuracy {:.2} on {} rooms",
        report.removed_training_rows,
        report.removed_training_rows + report.training_rows,
        report.overall.overall_accuracy,
        report.overall.total
    );
    for (label, acc) in &report.per_object {
        println!("  {label}: {}/{}", acc.correct, acc.total);
    }

    // A coarser target vocabulary: "sofa" and "chair" both become "seat".
    let target_json = serde_json::json!({
        "name": "coarse",
        "object_labels": ["toilet", "sink", "bathtub", "bed", "dresser", "lamp", "stove", "refrigerator", "table", "seat", "tv"],
        "room_labels": space.room_labels,
    });
    let target_space = LabelSpace::from_json(&target_json.to_string())?;
    let target_rooms: Vec<RoomSample> = rooms
        .iter()
        .map(|r| {
            let mut r = r.clone();
            for o in &mut r.object_labels {
                if o == "sofa" || o == "chair" {
                    *o = "seat".into();
                }
            }
            r
        })
        .collect();
    let target_table = count_cooccurrences(&target_rooms, &target_space, CountingMode::Presence, 1.0)?;
    let target_index = build_index(&target_table)?;
    let outcome = transfer_experiment(
        &TransferSide {
            rooms: &rooms,
            space: &space,
            index: &index,
        },
        &TransferSide {
            rooms: &target_rooms,
            space: &target_space,
            index: &target_index,
        },
        &spec,
        &pipeline,
    )?;
    println!(
        "transfer accuracy {:.2} on {} rooms",
        outcome.report.overall_accuracy, outcome.report.total
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
