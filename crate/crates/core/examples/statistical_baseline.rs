// Count object/room co-occurrences on training buildings and classify the
// held-out buildings with the naive-Bayes baseline.
//
// ```bash
// cargo run -p scenesense --example statistical_baseline
// ```

use std::error::Error;
use std::path::Path;

use scenesense::classifiers::StatisticalClassifier;
use scenesense::cooccurrence::{count_cooccurrences, CountingMode};
use scenesense::eval::{evaluate, split, EvalOptions, SplitSpec};
use scenesense::scene_graph::{load_scene_graph_path, preprocess, LabelSpace};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let space = LabelSpace::from_path(&fixtures.join("toy_label_space.json"))?;
    let (graph, _) = load_scene_graph_path(&fixtures.join("toy_graph.json"), &space)?;
    let (graph, _) = preprocess(graph, &space, None)?;
    let rooms = graph.samples();

    let spec = SplitSpec::default();
    let parts = split(&rooms, &spec)?;
    println!(
        "train {} / val {} / test {} rooms",
        parts.train.len(),
        parts.val.len(),
        parts.test.len()
    );

    let table = count_cooccurrences(&parts.train, &space, CountingMode::Presence, 1.0)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    print!("{}", String::from_utf8(csv)?);

    let classifier = StatisticalClassifier {
        table: &table,
        mode: CountingMode::Presence,
    };
    for (name, part) in [("test", &parts.test), ("full", &rooms)] {
        let options = EvalOptions {
            split: name.into(),
            seed: Some(spec.seed),
            ..Default::default()
        };
        let outcome = evaluate(&classifier, part, &space.room_labels, &options)?;
        println!("{name}: {}/{} correct", outcome.report.correct, outcome.report.total);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
