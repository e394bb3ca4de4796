// Train an MLP head on embedded bootstrap queries, save it, reload it and
// classify test rooms. A hashing embedder stands in for a real model.
//
// ```bash
// cargo run -p scenesense --example train_embedding_head
// ```

use std::error::Error;
use std::path::Path;

use scenesense::classifiers::{TrainConfig, TrainedHead};
use scenesense::cooccurrence::{build_index, count_cooccurrences, CountingMode};
use scenesense::eval::{evaluate, split, EmbeddingPipeline, EvalOptions, SplitSpec};
use scenesense::lm_backend::hash_embedder;
use scenesense::scene_graph::{load_scene_graph_path, preprocess, LabelSpace};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let space = LabelSpace::from_path(&fixtures.join("toy_label_space.json"))?;
    let (graph, _) = load_scene_graph_path(&fixtures.join("toy_graph.json"), &space)?;
    let (graph, _) = preprocess(graph, &space, None)?;
    let parts = split(&graph.samples(), &SplitSpec::default())?;

    let table = count_cooccurrences(&parts.train, &space, CountingMode::Presence, 1.0)?;
    let index = build_index(&table)?;
    let embedder = hash_embedder(64, 7);
    let train = TrainConfig {
        epochs: 80,
        batch_size: 32,
        learning_rate: 5e-3,
        lr_step: 40,
        hidden: vec![32],
        ..TrainConfig::default()
    };
    let pipeline = EmbeddingPipeline::new(&embedder, train);
    let train_rows = pipeline.bootstrap(&parts.train, &index)?;
    let val_rows = pipeline.bootstrap(&parts.val, &index)?;
    let (head, curve) = pipeline.fit(&train_rows, &val_rows, &space.room_labels)?;
    let last = curve.epochs.last().expect("at least one epoch");
    println!(
        "{} rows, loss {:.3} -> {:.3}, val accuracy {:.2}",
        train_rows.len(),
        curve.initial_train_loss,
        last.train_loss,
        last.val_accuracy.unwrap_or(f64::NAN)
    );

    let reloaded = TrainedHead::from_json(&head.to_json())?;
    let classifier = pipeline.classifier(&reloaded, &index);
    let options = EvalOptions {
        split: "test".into(),
        ..Default::default()
    };
    let outcome = evaluate(&classifier, &parts.test, &space.room_labels, &options)?;
    for p in &outcome.predictions {
        println!("{:>6}  {:<12} {:?}", p.room_id, p.predicted, p.objects_used);
    }
    println!("test accuracy {:.2}", outcome.report.overall_accuracy);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
