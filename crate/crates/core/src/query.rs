//! Rendering rooms into query strings.
//!
//! Three string families are produced: zero-shot label queries (one per room
//! label), a single embedding query, and the structured room description.
//! The bootstrap generator expands a room into permuted embedding queries
//! for training.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooccurrence::{select_informative, InformativenessIndex, SelectionConfig, TieBreak};
use crate::scene_graph::{ObjectNode, RoomNode, RoomSample};

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("cannot render a query from an empty object list")]
    EmptyObjects,
    #[error("room `{0}` has no objects")]
    EmptyRoom(String),
    #[error("room `{0}` has no label")]
    Unlabeled(String),
    #[error("bootstrap schedule is empty")]
    EmptySchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMethod {
    ZeroShot,
    Embedding,
    Structured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryStrings {
    /// One string per room label, in label-space order.
    PerLabel(Vec<(String, String)>),
    Single(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBundle {
    pub room_id: Option<String>,
    pub method: QueryMethod,
    pub strings: QueryStrings,
    pub objects_used: Vec<String>,
}

impl QueryBundle {
    pub fn for_room(mut self, room_id: impl Into<String>) -> Self {
        self.room_id = Some(room_id.into());
        self
    }

    pub fn single(&self) -> Option<&str> {
        match &self.strings {
            QueryStrings::Single(s) => Some(s),
            QueryStrings::PerLabel(_) => None,
        }
    }

    pub fn per_label(&self) -> &[(String, String)] {
        match &self.strings {
            QueryStrings::PerLabel(v) => v,
            QueryStrings::Single(_) => &[],
        }
    }
}

/// Join labels as `a`, `a and b`, or `a, b, and c`.
pub fn render_list<S: AsRef<str>>(items: &[S]) -> String {
    match items {
        [] => String::new(),
        [one] => one.as_ref().to_string(),
        [a, b] => format!("{} and {}", a.as_ref(), b.as_ref()),
        [init @ .., last] => {
            let head: Vec<&str> = init.iter().map(AsRef::as_ref).collect();
            format!("{}, and {}", head.join(", "), last.as_ref())
        }
    }
}

/// `an` before a vowel letter, `a` otherwise.
pub fn indefinite_article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

pub fn zero_shot_query<S: AsRef<str>>(objects: &[S], room_label: &str) -> String {
    format!(
        "A room containing {} is called {} {}.",
        render_list(objects),
        indefinite_article(room_label),
        room_label
    )
}

pub fn embedding_query<S: AsRef<str>>(objects: &[S]) -> String {
    format!("This room contains {}.", render_list(objects))
}

fn owned<S: AsRef<str>>(objects: &[S]) -> Vec<String> {
    objects.iter().map(|s| s.as_ref().to_string()).collect()
}

/// One zero-shot query per room label. `objects` should already be ordered
/// by ascending entropy.
pub fn render_zero_shot<S: AsRef<str>>(objects: &[S], room_labels: &[String]) -> Result<QueryBundle, QueryError> {
    if objects.is_empty() {
        return Err(QueryError::EmptyObjects);
    }
    let strings = room_labels
        .iter()
        .map(|r| (r.clone(), zero_shot_query(objects, r)))
        .collect();
    Ok(QueryBundle {
        room_id: None,
        method: QueryMethod::ZeroShot,
        strings: QueryStrings::PerLabel(strings),
        objects_used: owned(objects),
    })
}

pub fn render_embedding<S: AsRef<str>>(objects: &[S]) -> Result<QueryBundle, QueryError> {
    if objects.is_empty() {
        return Err(QueryError::EmptyObjects);
    }
    Ok(QueryBundle {
        room_id: None,
        method: QueryMethod::Embedding,
        strings: QueryStrings::Single(embedding_query(objects)),
        objects_used: owned(objects),
    })
}

/// A zero-shot query decomposed back into its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedQuery {
    pub objects: Vec<String>,
    pub room_label: String,
}

/// Invert [`zero_shot_query`]. `is_object` resolves ambiguous splits when
/// labels themselves contain " and ".
pub fn parse_zero_shot(text: &str, is_object: impl Fn(&str) -> bool) -> Option<ParsedQuery> {
    let body = text.strip_prefix("A room containing ")?.strip_suffix('.')?;
    let (list, tail) = body.rsplit_once(" is called ")?;
    let room = tail.strip_prefix("an ").or_else(|| tail.strip_prefix("a "))?;
    if room.is_empty() {
        return None;
    }
    let objects = parse_list(list, &is_object)?;
    Some(ParsedQuery {
        objects,
        room_label: room.to_string(),
    })
}

fn parse_list(list: &str, is_object: &impl Fn(&str) -> bool) -> Option<Vec<String>> {
    if is_object(list) {
        return Some(vec![list.to_string()]);
    }
    if list.contains(", ") {
        let mut parts: Vec<&str> = list.split(", ").collect();
        let last = parts.pop()?.strip_prefix("and ")?;
        parts.push(last);
        if parts.len() >= 3 && parts.iter().all(|p| is_object(p)) {
            return Some(parts.into_iter().map(str::to_string).collect());
        }
        return None;
    }
    list.match_indices(" and ").find_map(|(i, sep)| {
        let (a, b) = (&list[..i], &list[i + sep.len()..]);
        (is_object(a) && is_object(b)).then(|| vec![a.to_string(), b.to_string()])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredStringConfig {
    pub include_room_size: bool,
    pub include_positions: bool,
    /// Rooms with more objects than this are skipped.
    pub max_objects: usize,
    pub decimals: usize,
}

impl Default for StructuredStringConfig {
    fn default() -> Self {
        StructuredStringConfig {
            include_room_size: true,
            include_positions: true,
            max_objects: 100,
            decimals: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StructuredOutcome {
    Rendered(QueryBundle),
    Skipped { room_id: String, object_count: usize },
}

impl StructuredOutcome {
    pub fn text(&self) -> Option<&str> {
        match self {
            StructuredOutcome::Rendered(b) => b.single(),
            StructuredOutcome::Skipped { .. } => None,
        }
    }
}

/// Fixed-point formatting, rounding half away from zero after scaling.
/// Never produces exponent notation or a negative zero.
pub fn format_fixed(value: f64, decimals: usize) -> String {
    let scale = 10f64.powi(decimals as i32);
    let mut rounded = (value * scale).round() / scale;
    if rounded == 0.0 {
        rounded = 0.0;
    }
    format!("{rounded:.decimals$}")
}

/// Serialize a room's extents and its objects' positions relative to the
/// room center. Objects appear in scene-graph insertion order.
pub fn render_structured(room: &RoomNode, objects: &[&ObjectNode], cfg: &StructuredStringConfig) -> StructuredOutcome {
    if objects.len() > cfg.max_objects {
        return StructuredOutcome::Skipped {
            room_id: room.id.clone(),
            object_count: objects.len(),
        };
    }
    let mut text = String::new();
    let axes = ["x", "y", "z"];
    let push_xyz = |text: &mut String, v: [f64; 3]| {
        for (axis, value) in axes.iter().zip(v) {
            text.push_str(axis);
            text.push(' ');
            text.push_str(&format_fixed(value, cfg.decimals));
            text.push('\n');
        }
    };
    if cfg.include_room_size {
        text.push_str("Room Size:\n");
        push_xyz(&mut text, room.bounding_box.extents());
        text.push('\n');
    }
    text.push_str("Object Locations:\n");
    let center = room.bounding_box.center();
    for (i, object) in objects.iter().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        text.push_str(&object.label);
        text.push('\n');
        if cfg.include_positions {
            let rel = [0, 1, 2].map(|a| object.position[a] - center[a]);
            push_xyz(&mut text, rel);
        }
    }
    StructuredOutcome::Rendered(QueryBundle {
        room_id: Some(room.id.clone()),
        method: QueryMethod::Structured,
        strings: QueryStrings::Single(text),
        objects_used: objects.iter().map(|o| o.label.clone()).collect(),
    })
}

/// `(k, n)`: permutations of `k` objects drawn from the `n` most informative.
pub const DEFAULT_BOOTSTRAP_SCHEDULE: [(usize, usize); 3] = [(1, 2), (2, 3), (3, 4)];

/// One training row of the bootstrapped embedding dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub text: String,
    pub label: String,
    pub room_id: String,
    /// Objects mentioned in `text`, in order. Not part of the file format.
    #[serde(skip)]
    pub objects: Vec<String>,
}

/// All ordered `k`-permutations of `0..n`, in lexicographic order.
pub fn permutations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn extend(n: usize, k: usize, prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                extend(n, k, prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    if k <= n {
        extend(n, k, &mut Vec::with_capacity(k), &mut vec![false; n], &mut out);
    }
    out
}

/// Expand a labeled room into permuted embedding queries.
///
/// When the room has fewer than `n` distinct labels all of them are used, and
/// `k` is capped at that count.
pub fn bootstrap_queries(
    room: &RoomSample,
    index: &InformativenessIndex,
    schedule: &[(usize, usize)],
    tie_break: TieBreak,
) -> Result<Vec<BootstrapRow>, QueryError> {
    if schedule.is_empty() {
        return Err(QueryError::EmptySchedule);
    }
    let label = room
        .label
        .clone()
        .ok_or_else(|| QueryError::Unlabeled(room.room_id.clone()))?;
    let mut rows = Vec::new();
    for &(k, n) in schedule {
        let cfg = SelectionConfig { k: n.max(1), tie_break };
        let top = select_informative(&room.object_labels, index, &cfg)
            .map_err(|_| QueryError::EmptyRoom(room.room_id.clone()))?;
        let k = k.min(top.len());
        for perm in permutations(top.len(), k) {
            let objects: Vec<String> = perm.iter().map(|&i| top[i].clone()).collect();
            rows.push(BootstrapRow {
                text: embedding_query(&objects),
                label: label.clone(),
                room_id: room.room_id.clone(),
                objects,
            });
        }
    }
    Ok(rows)
}
