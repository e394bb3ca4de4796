// Render one query per candidate room label and let a scorer pick the most
// plausible sentence. The mock scorer reads log-probabilities from a table so
// this runs offline.
//
// ```bash
// cargo run -p scenesense --example zero_shot_scoring
// ```

use std::error::Error;

use scenesense::classifiers::classify_zero_shot;
use scenesense::cooccurrence::{build_index, CooccurrenceTable, SelectionConfig};
use scenesense::lm_backend::{mock_scorer_from_conditionals, LmScorer};
use scenesense::query::render_zero_shot;
use scenesense::scene_graph::RoomSample;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let rooms = ["bathroom", "kitchen", "office"].map(String::from).to_vec();
    let objects = ["sink", "refrigerator", "desk", "chair"].map(String::from).to_vec();
    let counts = vec![vec![30, 25, 0], vec![0, 40, 1], vec![0, 1, 30], vec![1, 15, 28]];
    let table = CooccurrenceTable::from_counts("demo", objects, rooms.clone(), counts, 1.0)?;
    let index = build_index(&table)?;
    let scorer = mock_scorer_from_conditionals(&table, -1e9, true);

    let bundle = render_zero_shot(&["refrigerator", "sink"], &rooms)?;
    for (label, text) in bundle.per_label() {
        println!("{:>9.4}  {text}  [{label}]", scorer.score(text)?);
    }

    let room = RoomSample::new("r1", "b1", None, ["chair", "sink", "refrigerator", "chair"]);
    let result = classify_zero_shot(&room, &scorer, &index, &SelectionConfig::default(), &rooms)?;
    println!("objects used: {:?}", result.objects_used);
    println!("prediction: {} (ranking {:?})", result.predicted, result.ranking());
    assert_eq!(result.predicted, "kitchen");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
