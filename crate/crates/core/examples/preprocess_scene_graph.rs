// Load a scene graph, drop rejected labels, move misplaced objects into the
// room that contains them and print what changed.
//
// ```bash
// cargo run -p scenesense --example preprocess_scene_graph
// ```

use std::error::Error;
use std::path::Path;

use scenesense::scene_graph::{load_scene_graph_path, preprocess, LabelSpace};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let space = LabelSpace::from_path(&fixtures.join("toy_label_space.json"))?;
    let (graph, load) = load_scene_graph_path(&fixtures.join("toy_graph.json"), &space)?;
    println!(
        "loaded {} rooms and {} objects",
        graph.rooms().len(),
        graph.objects().len()
    );
    for (alias, n) in &load.aliases_applied {
        println!("  alias {alias} corrected {n} time(s)");
    }

    let (clean, report) = preprocess(graph, &space, None)?;
    print!("{report}");
    assert_eq!(clean.rooms().len(), 29);

    let lamp = clean.object("b1_r3_o9").expect("lamp survives preprocessing");
    println!("lamp now belongs to {}", lamp.room_id);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
