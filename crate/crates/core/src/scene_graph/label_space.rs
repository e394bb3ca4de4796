use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SceneGraphError;

/// Room labels that are always dropped during filtering: outdoor regions that
/// are not true rooms.
pub const DEFAULT_EXCLUDED_ROOMS: [&str; 3] = ["yard", "balcony", "porch"];

/// Sentinel room label for unlabeled regions.
pub const NONE_LABEL: &str = "none";

/// Whether a raw label counts as "unlabeled". Empty strings and `none` are
/// both treated as missing.
pub fn is_unlabeled(label: &str) -> bool {
    let trimmed = label.trim();
    trimmed.is_empty() || trimmed.eq_ignore_ascii_case(NONE_LABEL)
}

/// A fixed vocabulary of object labels plus the shared room vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub name: String,
    pub object_labels: Vec<String>,
    pub room_labels: Vec<String>,
    #[serde(default, rename = "rejected")]
    pub rejected_object_labels: BTreeSet<String>,
    /// Misspelling corrections applied at load time (`raw -> canonical`).
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    /// Mapping from this space's object labels to another space's labels.
    /// A label may map to several candidates; the first non-rejected wins.
    #[serde(default, deserialize_with = "one_or_many_map")]
    pub label_map: BTreeMap<String, Vec<String>>,
    /// Region labels removed during filtering in addition to `none`.
    #[serde(default = "default_excluded_rooms")]
    pub excluded_rooms: BTreeSet<String>,
}

fn default_excluded_rooms() -> BTreeSet<String> {
    DEFAULT_EXCLUDED_ROOMS.iter().map(|s| s.to_string()).collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

fn one_or_many_map<'de, D>(de: D) -> Result<BTreeMap<String, Vec<String>>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let raw = BTreeMap::<String, OneOrMany>::deserialize(de)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                OneOrMany::One(s) => vec![s],
                OneOrMany::Many(v) => v,
            };
            (k, v)
        })
        .collect())
}

impl LabelSpace {
    pub fn new(
        name: impl Into<String>,
        object_labels: impl IntoIterator<Item = impl Into<String>>,
        room_labels: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, SceneGraphError> {
        let space = LabelSpace {
            name: name.into(),
            object_labels: object_labels.into_iter().map(Into::into).collect(),
            room_labels: room_labels.into_iter().map(Into::into).collect(),
            rejected_object_labels: BTreeSet::new(),
            aliases: BTreeMap::new(),
            label_map: BTreeMap::new(),
            excluded_rooms: default_excluded_rooms(),
        };
        space.validate()?;
        Ok(space)
    }

    pub fn with_rejected(
        mut self,
        rejected: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, SceneGraphError> {
        self.rejected_object_labels = rejected.into_iter().map(Into::into).collect();
        self.validate()?;
        Ok(self)
    }

    pub fn with_label_map(
        mut self,
        map: impl IntoIterator<Item = (impl Into<String>, Vec<String>)>,
    ) -> Result<Self, SceneGraphError> {
        self.label_map = map.into_iter().map(|(k, v)| (k.into(), v)).collect();
        self.validate()?;
        Ok(self)
    }

    pub fn with_aliases(mut self, aliases: impl IntoIterator<Item = (impl Into<String>, impl Into<String>)>) -> Self {
        self.aliases = aliases.into_iter().map(|(k, v)| (k.into(), v.into())).collect();
        self
    }

    pub fn from_json(text: &str) -> Result<Self, SceneGraphError> {
        let space: LabelSpace = serde_json::from_str(text).map_err(|e| SceneGraphError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        space.validate()?;
        Ok(space)
    }

    pub fn from_path(path: &Path) -> Result<Self, SceneGraphError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneGraphError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), SceneGraphError> {
        let invalid = |msg: String| Err(SceneGraphError::Validation(msg));
        if self.object_labels.is_empty() {
            return invalid(format!("label space `{}` has no object labels", self.name));
        }
        if self.room_labels.is_empty() {
            return invalid(format!("label space `{}` has no room labels", self.name));
        }
        for (kind, labels) in [("object", &self.object_labels), ("room", &self.room_labels)] {
            let mut seen = HashSet::new();
            for label in labels {
                if !seen.insert(label.as_str()) {
                    return invalid(format!("duplicate {kind} label `{label}`"));
                }
            }
        }
        if let Some(bad) = self
            .object_labels
            .iter()
            .find(|l| self.rejected_object_labels.contains(*l))
        {
            return invalid(format!("object label `{bad}` is also rejected"));
        }
        if let Some(bad) = self.label_map.keys().find(|k| !self.object_labels.contains(k)) {
            return invalid(format!("label_map key `{bad}` is not an object label"));
        }
        Ok(())
    }

    pub fn object_index(&self, label: &str) -> Option<usize> {
        self.object_labels.iter().position(|l| l == label)
    }

    pub fn room_index(&self, label: &str) -> Option<usize> {
        self.room_labels.iter().position(|l| l == label)
    }

    pub fn is_rejected(&self, label: &str) -> bool {
        self.rejected_object_labels.contains(label)
    }

    /// Region labels that must not survive filtering.
    pub fn is_excluded_room(&self, label: &str) -> bool {
        is_unlabeled(label) || self.excluded_rooms.contains(label)
    }

    pub fn canonical<'a>(&'a self, label: &'a str) -> &'a str {
        self.aliases.get(label).map(String::as_str).unwrap_or(label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_rejected_members() {
        assert!(LabelSpace::new("s", ["a", "a"], ["r"]).is_err());
        assert!(LabelSpace::new("s", ["a"], Vec::<String>::new()).is_err());
        let space = LabelSpace::new("s", ["a", "wall"], ["r"]).unwrap();
        assert!(space.with_rejected(["wall"]).is_err());
    }

    #[test]
    fn label_map_keys_must_be_object_labels() {
        let space = LabelSpace::new("s", ["a"], ["r"]).unwrap();
        assert!(space.clone().with_label_map([("b", vec!["x".to_string()])]).is_err());
        assert!(space.with_label_map([("a", vec!["x".to_string()])]).is_ok());
    }

    #[test]
    fn parses_file_with_single_and_list_mappings() {
        let text = r#"{
            "name": "nyuclass",
            "object_labels": ["washing machine", "stairs"],
            "room_labels": ["bathroom"],
            "rejected": ["wall"],
            "aliases": {"refridgerator": "refrigerator"},
            "label_map": {"washing machine": "appliances", "stairs": ["miscellaneous", "stairs"]}
        }"#;
        let space = LabelSpace::from_json(text).unwrap();
        assert_eq!(space.label_map["washing machine"], vec!["appliances"]);
        assert_eq!(space.label_map["stairs"].len(), 2);
        assert_eq!(space.canonical("refridgerator"), "refrigerator");
        assert!(space.is_excluded_room("yard"));
        assert!(space.is_excluded_room("none"));
        assert!(space.is_excluded_room(""));
    }

    #[test]
    fn parse_error_carries_position() {
        let err = LabelSpace::from_json("{\n  \"name\": }").unwrap_err();
        match err {
            SceneGraphError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
