//! Object-to-room conditionals `p(r|o)` and the entropy informativeness index.
//!
//! Ground-truth tables count how many rooms of each label contain an object
//! label and smooth with a pseudo-count. Proxy tables softmax language-model
//! scores of `"A room containing o is called a(n) r."` over all rooms.
//! Entropies are in nats; lower entropy means a more informative object.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm_backend::{BackendError, LmScorer};
use crate::query::zero_shot_query;
use crate::scene_graph::{LabelSpace, RoomSample};

#[derive(Debug, Error)]
pub enum CooccurrenceError {
    #[error("no training rooms")]
    NoTrainingRooms,
    #[error("room `{0}` has no label")]
    UnlabeledRoom(String),
    #[error("room label `{0}` is not in the label space")]
    UnknownRoomLabel(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("operation requires a ground-truth table")]
    NotGroundTruth,
    #[error("room `{0}` has no objects to select from")]
    EmptyRoom(String),
    #[error("smoothing pseudo-count must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("selection size k must be at least 1")]
    InvalidK,
    #[error("backend failed on query {query:?}: {source}")]
    Backend {
        query: String,
        #[source]
        source: BackendError,
    },
    #[error("table format: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a room contributes to the counts of an object label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// Once per room containing the label, however many instances.
    #[default]
    Presence,
    /// Once per instance.
    Multiplicity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSource {
    GroundTruth,
    Proxy,
}

#[derive(Debug, Clone, PartialEq)]
enum TableData {
    Counts(Vec<Vec<u64>>),
    Probabilities(Vec<Vec<f64>>),
}

/// Rows are object labels, columns are room labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceTable {
    label_space: String,
    object_labels: Vec<String>,
    room_labels: Vec<String>,
    alpha: f64,
    data: TableData,
    lookup: HashMap<String, usize>,
}

/// Metadata stored next to the CSV matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSidecar {
    pub source: TableSource,
    pub alpha: f64,
    pub label_space: String,
}

fn check_alpha(alpha: f64) -> Result<(), CooccurrenceError> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(CooccurrenceError::InvalidAlpha(alpha))
    }
}

impl CooccurrenceTable {
    pub fn from_counts(
        label_space: impl Into<String>,
        object_labels: Vec<String>,
        room_labels: Vec<String>,
        counts: Vec<Vec<u64>>,
        alpha: f64,
    ) -> Result<Self, CooccurrenceError> {
        check_alpha(alpha)?;
        if counts.len() != object_labels.len() || counts.iter().any(|r| r.len() != room_labels.len()) {
            return Err(CooccurrenceError::Format("count matrix shape mismatch".into()));
        }
        Ok(Self::build(
            label_space.into(),
            object_labels,
            room_labels,
            alpha,
            TableData::Counts(counts),
        ))
    }

    pub fn from_probabilities(
        label_space: impl Into<String>,
        object_labels: Vec<String>,
        room_labels: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, CooccurrenceError> {
        if rows.len() != object_labels.len() || rows.iter().any(|r| r.len() != room_labels.len()) {
            return Err(CooccurrenceError::Format("probability matrix shape mismatch".into()));
        }
        for (label, row) in object_labels.iter().zip(&rows) {
            validate_distribution(row, 1e-9)
                .map_err(|e| CooccurrenceError::InvalidDistribution(format!("row `{label}`: {e}")))?;
        }
        Ok(Self::build(
            label_space.into(),
            object_labels,
            room_labels,
            0.0,
            TableData::Probabilities(rows),
        ))
    }

    fn build(
        label_space: String,
        object_labels: Vec<String>,
        room_labels: Vec<String>,
        alpha: f64,
        data: TableData,
    ) -> Self {
        let lookup = object_labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        CooccurrenceTable {
            label_space,
            object_labels,
            room_labels,
            alpha,
            data,
            lookup,
        }
    }

    pub fn label_space(&self) -> &str {
        &self.label_space
    }

    pub fn object_labels(&self) -> &[String] {
        &self.object_labels
    }

    pub fn room_labels(&self) -> &[String] {
        &self.room_labels
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn source(&self) -> TableSource {
        match self.data {
            TableData::Counts(_) => TableSource::GroundTruth,
            TableData::Probabilities(_) => TableSource::Proxy,
        }
    }

    /// Raw counts for `object`; `None` for proxy tables and unknown labels.
    pub fn counts(&self, object: &str) -> Option<&[u64]> {
        match &self.data {
            TableData::Counts(c) => self.lookup.get(object).map(|&i| c[i].as_slice()),
            TableData::Probabilities(_) => None,
        }
    }

    /// Same table with a different pseudo-count.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self, CooccurrenceError> {
        check_alpha(alpha)?;
        let mut table = self.clone();
        table.alpha = alpha;
        Ok(table)
    }

    /// Laplace-smoothed `p(r|o)` from ground-truth counts.
    pub fn conditional_gt(&self, object: &str) -> Result<Vec<f64>, CooccurrenceError> {
        match &self.data {
            TableData::Counts(counts) => {
                let zeros;
                let row = match self.lookup.get(object) {
                    Some(&i) => &counts[i],
                    None => {
                        zeros = vec![0; self.room_labels.len()];
                        &zeros
                    }
                };
                Ok(smoothed(row, self.alpha))
            }
            TableData::Probabilities(_) => Err(CooccurrenceError::NotGroundTruth),
        }
    }

    /// `p(r|o)` in room-label order, whatever the source. Labels absent from
    /// the table get the uniform distribution.
    pub fn conditional(&self, object: &str) -> Vec<f64> {
        match &self.data {
            TableData::Counts(_) => self.conditional_gt(object).expect("counts table"),
            TableData::Probabilities(rows) => match self.lookup.get(object) {
                Some(&i) => rows[i].clone(),
                None => uniform(self.room_labels.len()),
            },
        }
    }

    /// CSV matrix: header `object,<room labels>`, then one row per object.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CooccurrenceError> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["object".to_string()];
        header.extend(self.room_labels.iter().cloned());
        out.write_record(&header)?;
        for (i, label) in self.object_labels.iter().enumerate() {
            let mut record = vec![label.clone()];
            match &self.data {
                TableData::Counts(c) => record.extend(c[i].iter().map(u64::to_string)),
                TableData::Probabilities(p) => record.extend(p[i].iter().map(f64::to_string)),
            }
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn sidecar(&self) -> TableSidecar {
        TableSidecar {
            source: self.source(),
            alpha: self.alpha,
            label_space: self.label_space.clone(),
        }
    }

    pub fn read_csv<R: Read>(reader: R, sidecar: &TableSidecar) -> Result<Self, CooccurrenceError> {
        let mut input = csv::Reader::from_reader(reader);
        let header = input.headers()?.clone();
        if header.get(0) != Some("object") {
            return Err(CooccurrenceError::Format("first header cell must be `object`".into()));
        }
        let room_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut object_labels = Vec::new();
        let mut cells = Vec::new();
        for record in input.records() {
            let record = record?;
            object_labels.push(record[0].to_string());
            cells.push(record.iter().skip(1).map(str::to_string).collect::<Vec<_>>());
        }
        let bad = |v: &str| CooccurrenceError::Format(format!("bad cell `{v}`"));
        match sidecar.source {
            TableSource::GroundTruth => {
                let counts = cells
                    .iter()
                    .map(|r| r.iter().map(|v| v.parse::<u64>().map_err(|_| bad(v))).collect())
                    .collect::<Result<_, _>>()?;
                Self::from_counts(
                    sidecar.label_space.clone(),
                    object_labels,
                    room_labels,
                    counts,
                    sidecar.alpha,
                )
            }
            TableSource::Proxy => {
                let rows = cells
                    .iter()
                    .map(|r| r.iter().map(|v| v.parse::<f64>().map_err(|_| bad(v))).collect())
                    .collect::<Result<_, _>>()?;
                Self::from_probabilities(sidecar.label_space.clone(), object_labels, room_labels, rows)
            }
        }
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// `(c_r + alpha) / (sum c + alpha * |R|)`; an all-zero row with no smoothing
/// falls back to uniform.
fn smoothed(row: &[u64], alpha: f64) -> Vec<f64> {
    let total = row.iter().map(|&c| c as f64).sum::<f64>() + alpha * row.len() as f64;
    if total == 0.0 {
        return uniform(row.len());
    }
    row.iter().map(|&c| (c as f64 + alpha) / total).collect()
}

/// Tally object/room co-occurrences over labeled rooms.
pub fn count_cooccurrences(
    rooms: &[RoomSample],
    space: &LabelSpace,
    mode: CountingMode,
    alpha: f64,
) -> Result<CooccurrenceTable, CooccurrenceError> {
    check_alpha(alpha)?;
    if rooms.is_empty() {
        return Err(CooccurrenceError::NoTrainingRooms);
    }
    let n_rooms = space.room_labels.len();
    let mut counts = vec![vec![0u64; n_rooms]; space.object_labels.len()];
    for room in rooms {
        let label = room
            .label
            .as_deref()
            .ok_or_else(|| CooccurrenceError::UnlabeledRoom(room.room_id.clone()))?;
        let r = space
            .room_index(label)
            .ok_or_else(|| CooccurrenceError::UnknownRoomLabel(label.to_string()))?;
        let labels: Vec<&str> = match mode {
            CountingMode::Presence => room.distinct_labels(),
            CountingMode::Multiplicity => room.object_labels.iter().map(String::as_str).collect(),
        };
        for object in labels {
            if let Some(o) = space.object_index(object) {
                counts[o][r] += 1;
            }
        }
    }
    CooccurrenceTable::from_counts(
        space.name.clone(),
        space.object_labels.clone(),
        space.room_labels.clone(),
        counts,
        alpha,
    )
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>, CooccurrenceError> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(CooccurrenceError::InvalidDistribution(format!(
            "cannot normalize scores with maximum {max}"
        )));
    }
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Proxy `p(r|o)`: softmax over rooms of the scorer's score for
/// `"A room containing o is called a(n) r."`.
pub fn conditional_proxy(
    scorer: &dyn LmScorer,
    object: &str,
    room_labels: &[String],
) -> Result<Vec<f64>, CooccurrenceError> {
    let queries: Vec<String> = room_labels.iter().map(|r| zero_shot_query(&[object], r)).collect();
    let scores = scorer
        .batch_score(&queries)
        .map_err(|source| CooccurrenceError::Backend {
            query: source.query().unwrap_or(&queries[0]).to_string(),
            source,
        })?;
    softmax(&scores)
}

/// Proxy table over every object label of `space`, scored in one batch.
pub fn build_proxy_table(scorer: &dyn LmScorer, space: &LabelSpace) -> Result<CooccurrenceTable, CooccurrenceError> {
    let n = space.room_labels.len();
    let queries: Vec<String> = space
        .object_labels
        .iter()
        .flat_map(|o| space.room_labels.iter().map(move |r| zero_shot_query(&[o], r)))
        .collect();
    let scores = scorer
        .batch_score(&queries)
        .map_err(|source| CooccurrenceError::Backend {
            query: source.query().unwrap_or("").to_string(),
            source,
        })?;
    let rows = scores.chunks(n).map(softmax).collect::<Result<Vec<_>, _>>()?;
    CooccurrenceTable::from_probabilities(
        space.name.clone(),
        space.object_labels.clone(),
        space.room_labels.clone(),
        rows,
    )
}

fn validate_distribution(dist: &[f64], tol: f64) -> Result<(), String> {
    if let Some(p) = dist.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!("probability {p} is negative or not finite"));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(format!("probabilities sum to {total}"));
    }
    Ok(())
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(dist: &[f64]) -> Result<f64, CooccurrenceError> {
    validate_distribution(dist, 1e-6).map_err(CooccurrenceError::InvalidDistribution)?;
    let h = -dist.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
    Ok(h.max(0.0))
}

/// Per-object entropies of `p(r|o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InformativenessIndex {
    entries: Vec<(String, f64)>,
    lookup: HashMap<String, usize>,
    max_entropy: f64,
}

impl InformativenessIndex {
    pub fn from_entries(entries: Vec<(String, f64)>, room_count: usize) -> Self {
        let lookup = entries.iter().enumerate().map(|(i, (l, _))| (l.clone(), i)).collect();
        InformativenessIndex {
            entries,
            lookup,
            max_entropy: (room_count as f64).ln(),
        }
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn max_entropy(&self) -> f64 {
        self.max_entropy
    }

    /// Entropy of `label`; labels outside the index are maximally
    /// uninformative.
    pub fn entropy_of(&self, label: &str) -> f64 {
        self.lookup
            .get(label)
            .map(|&i| self.entries[i].1)
            .unwrap_or(self.max_entropy)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CooccurrenceError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["object_label", "entropy"])?;
        for (label, h) in &self.entries {
            out.write_record([label.clone(), h.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, room_count: usize) -> Result<Self, CooccurrenceError> {
        let mut input = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for record in input.records() {
            let record = record?;
            if record.len() != 2 {
                return Err(CooccurrenceError::Format("index rows need two columns".into()));
            }
            let h: f64 = record[1]
                .parse()
                .map_err(|_| CooccurrenceError::Format(format!("bad entropy `{}`", &record[1])))?;
            entries.push((record[0].to_string(), h));
        }
        Ok(Self::from_entries(entries, room_count))
    }
}

pub fn build_index(table: &CooccurrenceTable) -> Result<InformativenessIndex, CooccurrenceError> {
    let entries = table
        .object_labels()
        .iter()
        .map(|o| Ok((o.clone(), entropy(&table.conditional(o))?)))
        .collect::<Result<Vec<_>, CooccurrenceError>>()?;
    Ok(InformativenessIndex::from_entries(entries, table.room_labels().len()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    Lexicographic,
    /// Keep the order of first appearance in the room.
    StableInputOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub k: usize,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            k: 3,
            tie_break: TieBreak::Lexicographic,
        }
    }
}

/// The `k` distinct present labels with lowest entropy, ascending.
pub fn select_informative<S: AsRef<str>>(
    present: &[S],
    index: &InformativenessIndex,
    cfg: &SelectionConfig,
) -> Result<Vec<String>, CooccurrenceError> {
    if cfg.k == 0 {
        return Err(CooccurrenceError::InvalidK);
    }
    let mut seen = HashSet::new();
    let mut candidates: Vec<(&str, f64)> = present
        .iter()
        .map(AsRef::as_ref)
        .filter(|l| seen.insert(*l))
        .map(|l| (l, index.entropy_of(l)))
        .collect();
    if candidates.is_empty() {
        return Err(CooccurrenceError::EmptyRoom(String::new()));
    }
    // sort_by is stable, so equal entropies keep input order unless the
    // comparator breaks the tie.
    candidates.sort_by(|a, b| {
        let by_h = a.1.total_cmp(&b.1);
        match cfg.tie_break {
            TieBreak::Lexicographic => by_h.then_with(|| a.0.cmp(b.0)),
            TieBreak::StableInputOrder => by_h,
        }
    });
    Ok(candidates.into_iter().take(cfg.k).map(|(l, _)| l.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rooms23() -> Vec<String> {
        let mut labels = vec!["bathroom".to_string(), "kitchen".to_string()];
        labels.extend((0..21).map(|i| format!("room{i:02}")));
        labels
    }

    fn space() -> LabelSpace {
        LabelSpace::new(
            "s",
            ["toilet", "sink", "chair", "bed"],
            ["bathroom", "bedroom", "kitchen", "office"],
        )
        .unwrap()
    }

    #[test]
    fn presence_counting() {
        let rooms = vec![
            RoomSample::new("a", "b", Some("bathroom"), ["toilet"]),
            RoomSample::new("c", "b", Some("bathroom"), ["toilet", "sink"]),
            RoomSample::new("d", "b", Some("office"), ["chair", "chair", "chair"]),
        ];
        let table = count_cooccurrences(&rooms, &space(), CountingMode::Presence, 1.0).unwrap();
        assert_eq!(table.counts("toilet").unwrap(), &[2, 0, 0, 0]);
        assert_eq!(table.counts("chair").unwrap(), &[0, 0, 0, 1]);
        let multi = count_cooccurrences(&rooms, &space(), CountingMode::Multiplicity, 1.0).unwrap();
        assert_eq!(multi.counts("chair").unwrap(), &[0, 0, 0, 3]);
    }

    #[test]
    fn counting_errors() {
        assert!(matches!(
            count_cooccurrences(&[], &space(), CountingMode::Presence, 1.0),
            Err(CooccurrenceError::NoTrainingRooms)
        ));
        let unlabeled = [RoomSample::new("a", "b", None, ["bed"])];
        assert!(matches!(
            count_cooccurrences(&unlabeled, &space(), CountingMode::Presence, 1.0),
            Err(CooccurrenceError::UnlabeledRoom(_))
        ));
        let unknown = [RoomSample::new("a", "b", Some("attic"), ["bed"])];
        assert!(matches!(
            count_cooccurrences(&unknown, &space(), CountingMode::Presence, 1.0),
            Err(CooccurrenceError::UnknownRoomLabel(_))
        ));
    }

    #[test]
    fn smoothing_by_hand() {
        let mut row = vec![0u64; 23];
        row[0] = 3;
        row[1] = 1;
        let table = CooccurrenceTable::from_counts("s", vec!["o".into()], rooms23(), vec![row], 1.0).unwrap();
        let p = table.conditional_gt("o").unwrap();
        assert_relative_eq!(p[0], 4.0 / 27.0, epsilon = 1e-15);
        assert_relative_eq!(p[1], 2.0 / 27.0, epsilon = 1e-15);
        assert!(p[2..].iter().all(|&x| (x - 1.0 / 27.0).abs() < 1e-15));
        let unseen = table.conditional_gt("ghost").unwrap();
        assert!(unseen.iter().all(|&x| (x - 1.0 / 23.0).abs() < 1e-15));
    }

    #[test]
    fn unsmoothed_one_hot_and_all_zero_rows() {
        let rooms = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let table = CooccurrenceTable::from_counts(
            "s",
            vec!["x".into(), "y".into()],
            rooms,
            vec![vec![0, 5, 0], vec![0, 0, 0]],
            0.0,
        )
        .unwrap();
        assert_eq!(table.conditional_gt("x").unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(table.conditional_gt("y").unwrap(), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn softmax_by_hand() {
        let p = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert_relative_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.75, epsilon = 1e-15);
        assert!(softmax(&[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn entropy_values() {
        let mut one_hot = vec![0.0; 23];
        one_hot[4] = 1.0;
        assert_eq!(entropy(&one_hot).unwrap(), 0.0);
        assert_relative_eq!(entropy(&[1.0 / 23.0; 23]).unwrap(), 23f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(entropy(&[0.5, 0.25, 0.25]).unwrap(), 1.5 * 2f64.ln(), epsilon = 1e-15);
        assert!(entropy(&[1.5, -0.5]).is_err());
        assert!(entropy(&[0.2, 0.2]).is_err());
    }

    #[test]
    fn index_for_exclusive_object_is_zero() {
        let rooms = vec![
            RoomSample::new("a", "b", Some("bathroom"), ["toilet", "sink"]),
            RoomSample::new("c", "b", Some("kitchen"), ["sink"]),
        ];
        let table = count_cooccurrences(&rooms, &space(), CountingMode::Presence, 0.0).unwrap();
        let index = build_index(&table).unwrap();
        assert_eq!(index.entropy_of("toilet"), 0.0);
        assert_relative_eq!(index.entropy_of("sink"), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(index.entropy_of("unheard-of"), 4f64.ln());
    }

    fn index_of(entries: &[(&str, f64)]) -> InformativenessIndex {
        InformativenessIndex::from_entries(entries.iter().map(|(l, h)| (l.to_string(), *h)).collect(), 23)
    }

    #[test]
    fn select_sorted_by_entropy() {
        let index = index_of(&[("toilet", 0.3), ("chair", 2.9), ("sink", 1.4)]);
        let cfg = SelectionConfig {
            k: 2,
            ..Default::default()
        };
        assert_eq!(
            select_informative(&["chair", "toilet", "sink", "toilet"], &index, &cfg).unwrap(),
            vec!["toilet", "sink"]
        );
    }

    #[test]
    fn select_returns_all_when_fewer_than_k() {
        let index = index_of(&[("bed", 0.5)]);
        let cfg = SelectionConfig::default();
        assert_eq!(select_informative(&["bed", "bed"], &index, &cfg).unwrap(), vec!["bed"]);
    }

    #[test]
    fn select_tie_breaks() {
        let index = index_of(&[("zebra", 1.0), ("apple", 1.0)]);
        let lex = SelectionConfig {
            k: 1,
            tie_break: TieBreak::Lexicographic,
        };
        assert_eq!(
            select_informative(&["zebra", "apple"], &index, &lex).unwrap(),
            vec!["apple"]
        );
        let stable = SelectionConfig {
            k: 1,
            tie_break: TieBreak::StableInputOrder,
        };
        assert_eq!(
            select_informative(&["zebra", "apple"], &index, &stable).unwrap(),
            vec!["zebra"]
        );
    }

    #[test]
    fn select_rejects_empty_rooms_and_zero_k() {
        let index = index_of(&[]);
        let empty: [&str; 0] = [];
        assert!(select_informative(&empty, &index, &SelectionConfig::default()).is_err());
        let zero = SelectionConfig {
            k: 0,
            ..Default::default()
        };
        assert!(select_informative(&["a"], &index, &zero).is_err());
    }

    #[test]
    fn csv_round_trip_for_both_sources() {
        let gt = CooccurrenceTable::from_counts(
            "s",
            vec!["a, quoted".into(), "b".into()],
            vec!["r1".into(), "r2".into()],
            vec![vec![1, 2], vec![0, 7]],
            0.5,
        )
        .unwrap();
        let proxy = CooccurrenceTable::from_probabilities(
            "s",
            vec!["a".into()],
            vec!["r1".into(), "r2".into()],
            vec![vec![0.1, 0.9]],
        )
        .unwrap();
        for table in [gt, proxy] {
            let mut buf = Vec::new();
            table.write_csv(&mut buf).unwrap();
            let back = CooccurrenceTable::read_csv(buf.as_slice(), &table.sidecar()).unwrap();
            assert_eq!(back, table);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn conditional_rows_sum_to_one(row in prop::collection::vec(0u64..50, 1..30), alpha in 0.0f64..20.0) {
                let rooms: Vec<String> = (0..row.len()).map(|i| format!("r{i}")).collect();
                let table = CooccurrenceTable::from_counts("s", vec!["o".into()], rooms, vec![row], alpha).unwrap();
                let total: f64 = table.conditional_gt("o").unwrap().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }

            #[test]
            fn softmax_is_shift_invariant(scores in prop::collection::vec(-30.0f64..30.0, 1..25), shift in -1e3f64..1e3) {
                let a = softmax(&scores).unwrap();
                let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
                let b = softmax(&shifted).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }

            // Moving mass from one room to another that already holds at
            // least as much never raises the entropy.
            #[test]
            fn concentrating_counts_never_raises_entropy(
                mut row in prop::collection::vec(0u64..20, 2..10),
                pick in any::<prop::sample::Index>(),
            ) {
                prop_assume!(row.iter().sum::<u64>() > 0);
                let rooms: Vec<String> = (0..row.len()).map(|i| format!("r{i}")).collect();
                let h = |row: &Vec<u64>| {
                    let t = CooccurrenceTable::from_counts("s", vec!["o".into()], rooms.clone(), vec![row.clone()], 0.0).unwrap();
                    entropy(&t.conditional_gt("o").unwrap()).unwrap()
                };
                let before = h(&row);
                let donor = pick.index(row.len());
                let recv = (0..row.len()).filter(|&i| i != donor).max_by_key(|&i| row[i]).unwrap();
                if row[recv] >= row[donor] {
                    row[recv] += row[donor];
                    row[donor] = 0;
                    prop_assert!(h(&row) <= before + 1e-12);
                }
            }

            #[test]
            fn selection_invariants(
                hs in prop::collection::vec(0.0f64..3.0, 1..12),
                present in prop::collection::vec(0usize..12, 1..20),
                k in 1usize..6,
            ) {
                let labels: Vec<String> = (0..hs.len()).map(|i| format!("o{i}")).collect();
                let index = InformativenessIndex::from_entries(
                    labels.iter().cloned().zip(hs.iter().copied()).collect(), 23);
                let present: Vec<String> = present.iter().map(|&i| format!("o{}", i % hs.len())).collect();
                let distinct: HashSet<&String> = present.iter().collect();
                let out = select_informative(&present, &index, &SelectionConfig { k, ..Default::default() }).unwrap();
                prop_assert_eq!(out.len(), k.min(distinct.len()));
                prop_assert!(out.iter().all(|l| distinct.contains(l)));
                prop_assert!(out.windows(2).all(|w| index.entropy_of(&w[0]) <= index.entropy_of(&w[1])));
            }
        }
    }
}
