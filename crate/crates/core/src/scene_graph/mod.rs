//! Scene-graph data model: buildings contain rooms, rooms contain objects.
//!
//! Graphs are loaded from a JSON document, preprocessed once (see
//! [`preprocess`]) and treated as immutable afterwards.

mod label_space;
mod preprocess;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use label_space::{is_unlabeled, LabelSpace, DEFAULT_EXCLUDED_ROOMS, NONE_LABEL};
pub use preprocess::{
    filter_objects, preprocess, reassign_objects, remap_label_space, FilterReport, PreprocessReport, ReassignReport,
    RemapReport,
};

#[derive(Debug, Error)]
pub enum SceneGraphError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Axis-aligned box in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self, SceneGraphError> {
        let bbox = Aabb { min, max };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn point(p: [f64; 3]) -> Self {
        Aabb { min: p, max: p }
    }

    fn validate(&self) -> Result<(), SceneGraphError> {
        if self.min.iter().chain(&self.max).any(|v| !v.is_finite()) {
            return Err(SceneGraphError::Validation(
                "bounding box has a non-finite coordinate".into(),
            ));
        }
        if (0..3).any(|i| self.min[i] > self.max[i]) {
            return Err(SceneGraphError::Validation(format!(
                "bounding box min {:?} exceeds max {:?}",
                self.min, self.max
            )));
        }
        Ok(())
    }

    /// Closed-interval containment on every axis.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| 0.5 * (self.min[i] + self.max[i]))
    }

    pub fn extents(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.max[i] - self.min[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectNode {
    pub id: String,
    pub label: String,
    pub room_id: String,
    /// Object center.
    pub position: [f64; 3],
    pub bounding_box: Aabb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomNode {
    pub id: String,
    /// Absent for rooms whose label is to be inferred.
    pub label: Option<String>,
    pub building_id: String,
    pub bounding_box: Aabb,
    /// Contained objects, in graph insertion order.
    pub object_ids: Vec<String>,
}

/// A room reduced to what the language-only classifiers consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSample {
    pub room_id: String,
    pub building: String,
    pub label: Option<String>,
    /// Labels of contained objects in insertion order, with multiplicity.
    pub object_labels: Vec<String>,
}

impl RoomSample {
    pub fn new(
        room_id: impl Into<String>,
        building: impl Into<String>,
        label: Option<&str>,
        object_labels: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        RoomSample {
            room_id: room_id.into(),
            building: building.into(),
            label: label.map(str::to_string),
            object_labels: object_labels.into_iter().map(Into::into).collect(),
        }
    }

    /// Distinct object labels in order of first appearance.
    pub fn distinct_labels(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.object_labels
            .iter()
            .map(String::as_str)
            .filter(|l| seen.insert(*l))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    label_space: String,
    buildings: BTreeSet<String>,
    rooms: Vec<RoomNode>,
    objects: Vec<ObjectNode>,
}

impl SceneGraph {
    /// Assemble a graph from parts; `object_ids` on the rooms are rebuilt
    /// from each object's `room_id`.
    pub fn from_parts(
        label_space: impl Into<String>,
        rooms: Vec<RoomNode>,
        objects: Vec<ObjectNode>,
    ) -> Result<Self, SceneGraphError> {
        let mut room_ids = HashSet::new();
        for room in &rooms {
            room.bounding_box.validate()?;
            if !room_ids.insert(room.id.as_str()) {
                return Err(SceneGraphError::Validation(format!("duplicate room id `{}`", room.id)));
            }
        }
        let mut object_ids = HashSet::new();
        for object in &objects {
            object.bounding_box.validate()?;
            if !object_ids.insert(object.id.as_str()) {
                return Err(SceneGraphError::Validation(format!(
                    "duplicate object id `{}`",
                    object.id
                )));
            }
            if !room_ids.contains(object.room_id.as_str()) {
                return Err(SceneGraphError::Validation(format!(
                    "object `{}` references unknown room `{}`",
                    object.id, object.room_id
                )));
            }
            if object.position.iter().any(|v| !v.is_finite()) {
                return Err(SceneGraphError::Validation(format!(
                    "object `{}` has a non-finite position",
                    object.id
                )));
            }
            if !object.bounding_box.contains(object.position) {
                return Err(SceneGraphError::Validation(format!(
                    "object `{}` position lies outside its bounding box",
                    object.id
                )));
            }
        }
        Ok(Self::assemble(label_space.into(), rooms, objects))
    }

    fn assemble(label_space: String, mut rooms: Vec<RoomNode>, objects: Vec<ObjectNode>) -> Self {
        let mut members: HashMap<&str, Vec<String>> = HashMap::new();
        for object in &objects {
            members
                .entry(object.room_id.as_str())
                .or_default()
                .push(object.id.clone());
        }
        for room in &mut rooms {
            room.object_ids = members.remove(room.id.as_str()).unwrap_or_default();
        }
        let buildings = rooms.iter().map(|r| r.building_id.clone()).collect();
        SceneGraph {
            label_space,
            buildings,
            rooms,
            objects,
        }
    }

    pub fn empty(label_space: impl Into<String>) -> Self {
        Self::assemble(label_space.into(), Vec::new(), Vec::new())
    }

    pub fn label_space(&self) -> &str {
        &self.label_space
    }

    pub fn buildings(&self) -> &BTreeSet<String> {
        &self.buildings
    }

    pub fn rooms(&self) -> &[RoomNode] {
        &self.rooms
    }

    pub fn objects(&self) -> &[ObjectNode] {
        &self.objects
    }

    pub fn room(&self, id: &str) -> Option<&RoomNode> {
        self.rooms.iter().find(|r| r.id == id)
    }

    pub fn object(&self, id: &str) -> Option<&ObjectNode> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Objects contained in `room`, in insertion order.
    pub fn objects_in<'a>(&'a self, room: &'a RoomNode) -> impl Iterator<Item = &'a ObjectNode> + 'a {
        let wanted: HashSet<&str> = room.object_ids.iter().map(String::as_str).collect();
        self.objects.iter().filter(move |o| wanted.contains(o.id.as_str()))
    }

    pub fn sample(&self, room: &RoomNode) -> RoomSample {
        RoomSample {
            room_id: room.id.clone(),
            building: room.building_id.clone(),
            label: room.label.clone(),
            object_labels: self.objects_in(room).map(|o| o.label.clone()).collect(),
        }
    }

    pub fn samples(&self) -> Vec<RoomSample> {
        self.rooms.iter().map(|r| self.sample(r)).collect()
    }

    pub(crate) fn into_parts(self) -> (String, Vec<RoomNode>, Vec<ObjectNode>) {
        (self.label_space, self.rooms, self.objects)
    }

    pub fn to_document(&self) -> SceneGraphDocument {
        SceneGraphDocument {
            label_space: self.label_space.clone(),
            rooms: self
                .rooms
                .iter()
                .map(|r| RoomRecord {
                    id: r.id.clone(),
                    label: r.label.clone(),
                    building: r.building_id.clone(),
                    bbox_min: r.bounding_box.min,
                    bbox_max: r.bounding_box.max,
                })
                .collect(),
            objects: self
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    id: o.id.clone(),
                    label: o.label.clone(),
                    room_id: o.room_id.clone(),
                    position: o.position,
                    bbox_min: Some(o.bounding_box.min),
                    bbox_max: Some(o.bounding_box.max),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("scene graph serializes")
    }
}

/// On-disk scene-graph schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraphDocument {
    pub label_space: String,
    pub rooms: Vec<RoomRecord>,
    pub objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub building: String,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: String,
    pub label: String,
    pub room_id: String,
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox_min: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox_max: Option<[f64; 3]>,
}

/// Notes collected while loading a document.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    /// Object labels outside the label space, with occurrence counts. These
    /// objects are kept.
    pub unknown_object_labels: BTreeMap<String, usize>,
    /// Alias corrections applied (`raw -> canonical`), with counts.
    pub aliases_applied: BTreeMap<String, usize>,
}

pub fn parse_document(text: &str) -> Result<SceneGraphDocument, SceneGraphError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        SceneGraphError::Parse {
            line: inner.line(),
            column: inner.column(),
            message: format!("at `{path}`: {inner}"),
        }
    })
}

/// Parse and validate a scene-graph document against `space`.
pub fn load_scene_graph(text: &str, space: &LabelSpace) -> Result<(SceneGraph, LoadReport), SceneGraphError> {
    let doc = parse_document(text)?;
    graph_from_document(doc, space)
}

pub fn load_scene_graph_path(path: &Path, space: &LabelSpace) -> Result<(SceneGraph, LoadReport), SceneGraphError> {
    let text = std::fs::read_to_string(path).map_err(|source| SceneGraphError::Read {
        path: path.display().to_string(),
        source,
    })?;
    load_scene_graph(&text, space)
}

pub fn graph_from_document(
    doc: SceneGraphDocument,
    space: &LabelSpace,
) -> Result<(SceneGraph, LoadReport), SceneGraphError> {
    if doc.label_space != space.name {
        return Err(SceneGraphError::Validation(format!(
            "document uses label space `{}` but `{}` was supplied",
            doc.label_space, space.name
        )));
    }
    let mut report = LoadReport::default();
    let mut rooms = Vec::with_capacity(doc.rooms.len());
    for record in doc.rooms {
        if let Some(label) = &record.label {
            if space.room_index(label).is_none() && !space.is_excluded_room(label) {
                return Err(SceneGraphError::Validation(format!(
                    "room `{}` has label `{label}` outside the room label space",
                    record.id
                )));
            }
        }
        rooms.push(RoomNode {
            bounding_box: Aabb::new(record.bbox_min, record.bbox_max)
                .map_err(|e| SceneGraphError::Validation(format!("room `{}`: {e}", record.id)))?,
            id: record.id,
            label: record.label,
            building_id: record.building,
            object_ids: Vec::new(),
        });
    }
    let mut objects = Vec::with_capacity(doc.objects.len());
    for record in doc.objects {
        let canonical = space.canonical(&record.label).to_string();
        if canonical != record.label {
            *report.aliases_applied.entry(record.label.clone()).or_default() += 1;
        }
        if space.object_index(&canonical).is_none() && !space.is_rejected(&canonical) && !is_unlabeled(&canonical) {
            *report.unknown_object_labels.entry(canonical.clone()).or_default() += 1;
        }
        let bounding_box = match (record.bbox_min, record.bbox_max) {
            (Some(min), Some(max)) => Aabb { min, max },
            (None, None) => Aabb::point(record.position),
            _ => {
                return Err(SceneGraphError::Validation(format!(
                    "object `{}` has only one bounding-box corner",
                    record.id
                )))
            }
        };
        objects.push(ObjectNode {
            id: record.id,
            label: canonical,
            room_id: record.room_id,
            position: record.position,
            bounding_box,
        });
    }
    let graph = SceneGraph::from_parts(doc.label_space, rooms, objects)?;
    Ok((graph, report))
}
