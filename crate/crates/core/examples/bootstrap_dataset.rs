// Expand labeled rooms into permuted embedding queries, one JSON line each.
//
// ```bash
// cargo run -p scenesense --example bootstrap_dataset
// ```

use std::error::Error;

use scenesense::cooccurrence::{InformativenessIndex, TieBreak};
use scenesense::query::{bootstrap_queries, DEFAULT_BOOTSTRAP_SCHEDULE};
use scenesense::scene_graph::RoomSample;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let index = InformativenessIndex::from_entries(
        vec![
            ("toilet".into(), 0.05),
            ("bathtub".into(), 0.10),
            ("sink".into(), 0.60),
            ("towel".into(), 0.70),
            ("lamp".into(), 1.20),
        ],
        4,
    );
    let room = RoomSample::new(
        "b0_r2",
        "b0",
        Some("bathroom"),
        ["lamp", "sink", "toilet", "towel", "bathtub"],
    );
    let rows = bootstrap_queries(&room, &index, &DEFAULT_BOOTSTRAP_SCHEDULE, TieBreak::Lexicographic)?;
    for row in &rows {
        println!("{}", serde_json::to_string(row)?);
    }
    // 2 singles, 6 ordered pairs, 24 ordered triples.
    assert_eq!(rows.len(), 32);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
