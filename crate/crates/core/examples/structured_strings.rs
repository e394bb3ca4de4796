// Serialize a room's size and object offsets, with each ablation.
//
// ```bash
// cargo run -p scenesense --example structured_strings
// ```

use std::error::Error;

use scenesense::query::{render_structured, StructuredStringConfig};
use scenesense::scene_graph::{Aabb, ObjectNode, RoomNode};

fn object(id: &str, label: &str, position: [f64; 3]) -> ObjectNode {
    ObjectNode {
        id: id.into(),
        label: label.into(),
        room_id: "r0".into(),
        position,
        bounding_box: Aabb::point(position),
    }
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let objects = [
        object("o0", "bed", [1.0, 1.0, 0.4]),
        object("o1", "lamp", [3.6, 0.4, 1.1]),
    ];
    let room = RoomNode {
        id: "r0".into(),
        label: Some("bedroom".into()),
        building_id: "b0".into(),
        bounding_box: Aabb::new([0.0, 0.0, 0.0], [4.0, 3.0, 2.5])?,
        object_ids: objects.iter().map(|o| o.id.clone()).collect(),
    };
    let refs: Vec<&ObjectNode> = objects.iter().collect();
    for (include_room_size, include_positions) in [(true, true), (true, false), (false, true), (false, false)] {
        let cfg = StructuredStringConfig {
            include_room_size,
            include_positions,
            ..Default::default()
        };
        println!("--- room size: {include_room_size}, positions: {include_positions}");
        print!(
            "{}",
            render_structured(&room, &refs, &cfg).text().unwrap_or("<skipped>\n")
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
