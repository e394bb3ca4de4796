use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{is_unlabeled, LabelSpace, SceneGraph, SceneGraphError};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterReport {
    /// Objects dropped for carrying a rejected or missing label.
    pub rejected_objects: BTreeMap<String, usize>,
    /// Objects dropped together with an excluded room.
    pub objects_in_excluded_rooms: usize,
    /// Rooms removed because their label is `none` or an outdoor label.
    pub excluded_rooms: Vec<String>,
    /// Rooms removed because no objects remained in them.
    pub emptied_rooms: Vec<String>,
}

impl FilterReport {
    pub fn objects_removed(&self) -> usize {
        self.rejected_objects.values().sum::<usize>() + self.objects_in_excluded_rooms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reassignment {
    pub object_id: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReassignReport {
    pub reassigned: Vec<Reassignment>,
    /// Objects outside their room's box and outside every other room's box.
    /// Their assignment is left untouched.
    pub uncontained: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RemapReport {
    pub relabeled: usize,
    /// Source labels without any mapping; their objects are dropped.
    pub unmapped: BTreeMap<String, usize>,
    /// Source labels whose every candidate is rejected in the target space.
    pub rejected: BTreeMap<String, usize>,
}

/// Drop rejected objects, excluded regions and empty rooms.
///
/// Rooms without a label are kept: they are the ones awaiting inference.
pub fn filter_objects(graph: SceneGraph, space: &LabelSpace) -> (SceneGraph, FilterReport) {
    let mut report = FilterReport::default();
    let (name, rooms, objects) = graph.into_parts();

    let mut excluded = HashSet::new();
    let mut kept_rooms = Vec::with_capacity(rooms.len());
    for room in rooms {
        match &room.label {
            Some(label) if space.is_excluded_room(label) => {
                excluded.insert(room.id.clone());
                report.excluded_rooms.push(room.id);
            }
            _ => kept_rooms.push(room),
        }
    }

    let mut kept_objects = Vec::with_capacity(objects.len());
    for object in objects {
        if excluded.contains(&object.room_id) {
            report.objects_in_excluded_rooms += 1;
        } else if is_unlabeled(&object.label) || space.is_rejected(&object.label) {
            *report.rejected_objects.entry(object.label).or_default() += 1;
        } else {
            kept_objects.push(object);
        }
    }

    let occupied: HashSet<&str> = kept_objects.iter().map(|o| o.room_id.as_str()).collect();
    let (kept_rooms, emptied): (Vec<_>, Vec<_>) =
        kept_rooms.into_iter().partition(|r| occupied.contains(r.id.as_str()));
    report.emptied_rooms = emptied.into_iter().map(|r| r.id).collect();

    (SceneGraph::assemble(name, kept_rooms, kept_objects), report)
}

/// Move every object whose center lies outside its room's box to the first
/// room (ascending room id) whose box contains it.
pub fn reassign_objects(graph: SceneGraph) -> (SceneGraph, ReassignReport) {
    let mut report = ReassignReport::default();
    let (name, rooms, mut objects) = graph.into_parts();

    let mut by_id: Vec<usize> = (0..rooms.len()).collect();
    by_id.sort_by(|&a, &b| rooms[a].id.cmp(&rooms[b].id));
    let lookup: BTreeMap<&str, usize> = rooms.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();

    for object in &mut objects {
        let current = &rooms[lookup[object.room_id.as_str()]];
        if current.bounding_box.contains(object.position) {
            continue;
        }
        let target = by_id
            .iter()
            .map(|&i| &rooms[i])
            .find(|r| r.bounding_box.contains(object.position));
        match target {
            Some(room) => {
                report.reassigned.push(Reassignment {
                    object_id: object.id.clone(),
                    from: object.room_id.clone(),
                    to: room.id.clone(),
                });
                object.room_id = room.id.clone();
            }
            None => report.uncontained.push(object.id.clone()),
        }
    }

    (SceneGraph::assemble(name, rooms, objects), report)
}

/// Translate object labels from `source` into `target` via `source.label_map`.
pub fn remap_label_space(
    graph: SceneGraph,
    source: &LabelSpace,
    target: &LabelSpace,
) -> Result<(SceneGraph, RemapReport), SceneGraphError> {
    if graph.label_space() != source.name {
        return Err(SceneGraphError::Validation(format!(
            "graph uses label space `{}`, not `{}`",
            graph.label_space(),
            source.name
        )));
    }
    let mut report = RemapReport::default();
    let (_, rooms, objects) = graph.into_parts();
    let mut kept = Vec::with_capacity(objects.len());
    for mut object in objects {
        let Some(candidates) = source.label_map.get(&object.label) else {
            *report.unmapped.entry(object.label).or_default() += 1;
            continue;
        };
        let chosen = candidates.iter().find(|c| !is_unlabeled(c) && !target.is_rejected(c));
        match chosen {
            Some(label) => {
                object.label = label.clone();
                report.relabeled += 1;
                kept.push(object);
            }
            None => *report.rejected.entry(object.label).or_default() += 1,
        }
    }
    Ok((SceneGraph::assemble(target.name.clone(), rooms, kept), report))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PreprocessReport {
    pub filter: FilterReport,
    pub reassign: ReassignReport,
    pub remap: Option<RemapReport>,
    /// Second filtering pass after reassignment and remapping.
    pub final_filter: FilterReport,
    pub rooms: usize,
    pub objects: usize,
}

/// Full cleanup chain: filter, reassign, optionally remap, filter again.
///
/// The trailing filter restores the "every room has an object" invariant,
/// which reassignment and remapping can both break.
pub fn preprocess(
    graph: SceneGraph,
    space: &LabelSpace,
    target: Option<&LabelSpace>,
) -> Result<(SceneGraph, PreprocessReport), SceneGraphError> {
    let (graph, filter) = filter_objects(graph, space);
    let (graph, reassign) = reassign_objects(graph);
    let (graph, remap, final_space) = match target {
        Some(target) => {
            let (g, r) = remap_label_space(graph, space, target)?;
            (g, Some(r), target)
        }
        None => (graph, None, space),
    };
    let (graph, final_filter) = filter_objects(graph, final_space);
    let report = PreprocessReport {
        filter,
        reassign,
        remap,
        final_filter,
        rooms: graph.rooms().len(),
        objects: graph.objects().len(),
    };
    Ok((graph, report))
}

impl fmt::Display for PreprocessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let write_filter = |f: &mut fmt::Formatter<'_>, title: &str, r: &FilterReport| {
            writeln!(f, "{title}")?;
            writeln!(f, "  objects removed: {}", r.objects_removed())?;
            for (label, n) in &r.rejected_objects {
                let shown = if label.is_empty() { "<empty>" } else { label };
                writeln!(f, "    {shown}: {n}")?;
            }
            writeln!(f, "  objects in excluded rooms: {}", r.objects_in_excluded_rooms)?;
            writeln!(f, "  excluded rooms removed: {}", r.excluded_rooms.len())?;
            writeln!(f, "  emptied rooms removed: {}", r.emptied_rooms.len())
        };
        write_filter(f, "filter", &self.filter)?;
        writeln!(f, "reassign")?;
        writeln!(f, "  objects reassigned: {}", self.reassign.reassigned.len())?;
        for r in &self.reassign.reassigned {
            writeln!(f, "    {}: {} -> {}", r.object_id, r.from, r.to)?;
        }
        writeln!(f, "  objects outside every room: {}", self.reassign.uncontained.len())?;
        for id in &self.reassign.uncontained {
            writeln!(f, "    {id}")?;
        }
        if let Some(remap) = &self.remap {
            writeln!(f, "remap")?;
            writeln!(f, "  objects relabeled: {}", remap.relabeled)?;
            writeln!(f, "  objects unmapped: {}", remap.unmapped.values().sum::<usize>())?;
            writeln!(
                f,
                "  objects mapped to rejected labels: {}",
                remap.rejected.values().sum::<usize>()
            )?;
        }
        write_filter(f, "final filter", &self.final_filter)?;
        writeln!(f, "result")?;
        writeln!(f, "  rooms: {}", self.rooms)?;
        writeln!(f, "  objects: {}", self.objects)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Aabb, ObjectNode, RoomNode};
    use super::*;

    fn space() -> LabelSpace {
        LabelSpace::new("mpcat40", ["toilet", "sink", "bed"], ["bathroom", "bedroom"])
            .unwrap()
            .with_rejected(["wall", "ceiling", "floor", "miscellaneous", "object", "unlabeled"])
            .unwrap()
    }

    fn room(id: &str, label: Option<&str>, min: [f64; 3], max: [f64; 3]) -> RoomNode {
        RoomNode {
            id: id.into(),
            label: label.map(Into::into),
            building_id: "b".into(),
            bounding_box: Aabb::new(min, max).unwrap(),
            object_ids: vec![],
        }
    }

    fn object(id: &str, label: &str, room: &str, p: [f64; 3]) -> ObjectNode {
        ObjectNode {
            id: id.into(),
            label: label.into(),
            room_id: room.into(),
            position: p,
            bounding_box: Aabb::point(p),
        }
    }

    fn unit_room(id: &str, label: &str) -> RoomNode {
        room(id, Some(label), [0.0; 3], [1.0; 3])
    }

    #[test]
    fn rejected_objects_are_dropped_and_room_kept() {
        let g = SceneGraph::from_parts(
            "mpcat40",
            vec![unit_room("r1", "bathroom")],
            vec![
                object("o1", "wall", "r1", [0.5; 3]),
                object("o2", "toilet", "r1", [0.5; 3]),
            ],
        )
        .unwrap();
        let (g, report) = filter_objects(g, &space());
        assert_eq!(g.rooms()[0].object_ids, vec!["o2"]);
        assert_eq!(report.rejected_objects["wall"], 1);
    }

    #[test]
    fn emptied_room_is_removed() {
        let g = SceneGraph::from_parts(
            "mpcat40",
            vec![unit_room("r1", "bathroom"), unit_room("r2", "bedroom")],
            vec![
                object("o1", "wall", "r1", [0.5; 3]),
                object("o2", "ceiling", "r1", [0.5; 3]),
                object("o3", "bed", "r2", [0.5; 3]),
            ],
        )
        .unwrap();
        let (g, report) = filter_objects(g, &space());
        assert_eq!(g.rooms().len(), 1);
        assert_eq!(report.emptied_rooms, vec!["r1"]);
    }

    #[test]
    fn outdoor_and_none_regions_are_removed() {
        let g = SceneGraph::from_parts(
            "mpcat40",
            vec![
                unit_room("r1", "yard"),
                unit_room("r2", "none"),
                unit_room("r3", "bedroom"),
            ],
            vec![
                object("o1", "bed", "r1", [0.5; 3]),
                object("o2", "bed", "r2", [0.5; 3]),
                object("o3", "bed", "r3", [0.5; 3]),
                object("o4", "", "r3", [0.5; 3]),
            ],
        )
        .unwrap();
        let (g, report) = filter_objects(g, &space());
        assert_eq!(g.rooms().len(), 1);
        assert_eq!(g.rooms()[0].id, "r3");
        assert_eq!(g.objects().len(), 1);
        assert_eq!(report.excluded_rooms, vec!["r1", "r2"]);
        assert_eq!(report.objects_in_excluded_rooms, 2);
        assert_eq!(report.rejected_objects[""], 1);
    }

    #[test]
    fn unlabeled_rooms_survive_filtering() {
        let g = SceneGraph::from_parts(
            "mpcat40",
            vec![room("r1", None, [0.0; 3], [1.0; 3])],
            vec![object("o1", "bed", "r1", [0.5; 3])],
        )
        .unwrap();
        assert_eq!(filter_objects(g, &space()).0.rooms().len(), 1);
    }

    fn two_rooms() -> Vec<RoomNode> {
        vec![
            room("a", Some("bathroom"), [5.0; 3], [9.0; 3]),
            room("b", Some("bedroom"), [-1.0; 3], [1.0; 3]),
        ]
    }

    #[test]
    fn misplaced_object_moves_to_containing_room() {
        let g = SceneGraph::from_parts(
            "mpcat40",
            two_rooms(),
            vec![
                object("o1", "toilet", "a", [0.0; 3]),
                object("o2", "bed", "a", [6.0; 3]),
            ],
        )
        .unwrap();
        let (g, report) = reassign_objects(g);
        assert_eq!(g.object("o1").unwrap().room_id, "b");
        assert_eq!(g.room("b").unwrap().object_ids, vec!["o1"]);
        assert_eq!(g.room("a").unwrap().object_ids, vec!["o2"]);
        assert_eq!(report.reassigned.len(), 1);
    }

    #[test]
    fn object_inside_its_room_is_untouched() {
        let g = SceneGraph::from_parts("mpcat40", two_rooms(), vec![object("o1", "bed", "b", [0.5; 3])]).unwrap();
        let (after, report) = reassign_objects(g.clone());
        assert_eq!(after, g);
        assert!(report.reassigned.is_empty() && report.uncontained.is_empty());
    }

    #[test]
    fn uncontained_object_is_flagged_and_kept() {
        let p = [100.0, 0.0, 0.0];
        let g = SceneGraph::from_parts("mpcat40", two_rooms(), vec![object("o1", "bed", "a", p)]).unwrap();
        // Brute-force containment over every room.
        assert!(g.rooms().iter().all(|r| !r.bounding_box.contains(p)));
        let (after, report) = reassign_objects(g);
        assert_eq!(after.object("o1").unwrap().room_id, "a");
        assert_eq!(report.uncontained, vec!["o1"]);
    }

    #[test]
    fn overlapping_rooms_tie_break_on_ascending_id() {
        let rooms = vec![
            room("z", Some("bathroom"), [0.0; 3], [1.0; 3]),
            room("m", Some("bedroom"), [0.0; 3], [3.0; 3]),
            room("c", Some("bedroom"), [0.0; 3], [3.0; 3]),
        ];
        let g = SceneGraph::from_parts("mpcat40", rooms, vec![object("o", "bed", "z", [2.0; 3])]).unwrap();
        assert_eq!(reassign_objects(g).0.object("o").unwrap().room_id, "c");
    }

    fn nyu() -> LabelSpace {
        LabelSpace::new(
            "nyuclass",
            ["washing machine", "stairs", "lamp", "wall"],
            ["bathroom", "bedroom"],
        )
        .unwrap()
        .with_label_map([
            ("washing machine", vec!["appliances".to_string()]),
            ("stairs", vec!["miscellaneous".to_string(), "stairs".to_string()]),
            ("wall", vec!["wall".to_string()]),
        ])
        .unwrap()
    }

    fn mpcat() -> LabelSpace {
        LabelSpace::new("mpcat40", ["appliances", "stairs"], ["bathroom", "bedroom"])
            .unwrap()
            .with_rejected(["wall", "miscellaneous"])
            .unwrap()
    }

    #[test]
    fn remap_picks_first_non_rejected_candidate() {
        let g = SceneGraph::from_parts(
            "nyuclass",
            vec![unit_room("r", "bathroom")],
            vec![
                object("o1", "washing machine", "r", [0.5; 3]),
                object("o2", "stairs", "r", [0.5; 3]),
                object("o3", "lamp", "r", [0.5; 3]),
                object("o4", "wall", "r", [0.5; 3]),
            ],
        )
        .unwrap();
        let (g, report) = remap_label_space(g, &nyu(), &mpcat()).unwrap();
        let labels: Vec<_> = g.objects().iter().map(|o| o.label.as_str()).collect();
        assert_eq!(labels, vec!["appliances", "stairs"]);
        assert_eq!(g.label_space(), "mpcat40");
        assert_eq!(report.unmapped["lamp"], 1);
        assert_eq!(report.rejected["wall"], 1);
    }

    #[test]
    fn remap_of_empty_graph_is_empty() {
        let (g, _) = remap_label_space(SceneGraph::empty("nyuclass"), &nyu(), &mpcat()).unwrap();
        assert!(g.rooms().is_empty() && g.objects().is_empty());
    }

    #[test]
    fn remap_rejects_wrong_source_space() {
        assert!(remap_label_space(SceneGraph::empty("other"), &nyu(), &mpcat()).is_err());
    }

    #[test]
    fn preprocess_leaves_no_empty_room() {
        // o1 is misplaced, so reassigning it empties room a.
        let g = SceneGraph::from_parts(
            "mpcat40",
            two_rooms(),
            vec![
                object("o1", "toilet", "a", [0.0; 3]),
                object("o2", "bed", "b", [0.5; 3]),
            ],
        )
        .unwrap();
        let (g, report) = preprocess(g, &space(), None).unwrap();
        assert_eq!(g.rooms().len(), 1);
        assert_eq!(g.rooms()[0].id, "b");
        assert_eq!(report.final_filter.emptied_rooms, vec!["a"]);
        let text = report.to_string();
        assert!(text.contains("objects reassigned: 1"), "{text}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const LABELS: [&str; 6] = ["toilet", "sink", "bed", "wall", "ceiling", ""];
        const ROOM_LABELS: [&str; 4] = ["bathroom", "bedroom", "yard", "none"];

        fn arb_graph() -> impl Strategy<Value = SceneGraph> {
            let rooms = prop::collection::vec((0..4usize, -5i32..5, -5i32..5, 1i32..6), 1..6);
            (
                rooms,
                prop::collection::vec((0..6usize, 0..6usize, -8i32..8, -8i32..8), 0..20),
            )
                .prop_map(|(rooms, objects)| {
                    let rooms: Vec<RoomNode> = rooms
                        .iter()
                        .enumerate()
                        .map(|(i, &(l, x, y, s))| {
                            let (x, y, s) = (x as f64, y as f64, s as f64);
                            room(&format!("r{i}"), Some(ROOM_LABELS[l]), [x, y, 0.0], [x + s, y + s, 3.0])
                        })
                        .collect();
                    let n = rooms.len();
                    let objects = objects
                        .iter()
                        .enumerate()
                        .map(|(i, &(l, r, x, y))| {
                            object(
                                &format!("o{i}"),
                                LABELS[l],
                                &format!("r{}", r % n),
                                [x as f64, y as f64, 1.0],
                            )
                        })
                        .collect();
                    SceneGraph::from_parts("mpcat40", rooms, objects).unwrap()
                })
        }

        proptest! {
            #[test]
            fn filter_is_idempotent(g in arb_graph()) {
                let (once, _) = filter_objects(g, &space());
                let (twice, _) = filter_objects(once.clone(), &space());
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn filter_never_grows(g in arb_graph()) {
                let (rooms, objects) = (g.rooms().len(), g.objects().len());
                let (after, _) = filter_objects(g, &space());
                prop_assert!(after.rooms().len() <= rooms);
                prop_assert!(after.objects().len() <= objects);
                for r in after.rooms() {
                    prop_assert!(!r.object_ids.is_empty());
                    prop_assert!(!space().is_excluded_room(r.label.as_deref().unwrap()));
                }
            }

            #[test]
            fn reassign_is_idempotent_and_conserving(g in arb_graph()) {
                let n = g.objects().len();
                let (once, _) = reassign_objects(g);
                prop_assert_eq!(once.objects().len(), n);
                let total: usize = once.rooms().iter().map(|r| r.object_ids.len()).sum();
                prop_assert_eq!(total, n);
                let (twice, _) = reassign_objects(once.clone());
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn preprocessed_rooms_are_occupied_and_labeled(g in arb_graph()) {
                let (after, _) = preprocess(g, &space(), None).unwrap();
                for r in after.rooms() {
                    prop_assert!(!r.object_ids.is_empty());
                    prop_assert_ne!(r.label.as_deref(), Some("none"));
                }
            }
        }
    }
}
