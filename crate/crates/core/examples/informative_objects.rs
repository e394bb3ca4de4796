// Rank object labels by how sharply they point at one room type, then pick
// the most telling objects of a cluttered room.
//
// ```bash
// cargo run -p scenesense --example informative_objects
// ```

use std::error::Error;

use scenesense::cooccurrence::{build_index, select_informative, CooccurrenceTable, SelectionConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let rooms = ["bathroom", "bedroom", "kitchen"].map(String::from).to_vec();
    let objects = ["toilet", "bed", "stove", "chair", "lamp"].map(String::from).to_vec();
    // Rows are objects, columns are room types.
    let counts = vec![
        vec![40, 0, 0],
        vec![0, 35, 1],
        vec![0, 0, 30],
        vec![2, 10, 25],
        vec![3, 20, 4],
    ];
    let table = CooccurrenceTable::from_counts("demo", objects, rooms, counts, 1.0)?;
    let index = build_index(&table)?;
    for (label, h) in index.entries() {
        println!("{label:>8}  H = {h:.4} nats");
    }

    let room = ["chair", "lamp", "chair", "stove", "lamp", "bed"];
    let picked = select_informative(
        &room,
        &index,
        &SelectionConfig {
            k: 2,
            ..Default::default()
        },
    )?;
    println!("most informative: {picked:?}");
    assert_eq!(picked, ["stove", "bed"]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
