//! Room classifiers that look only at object labels.
//!
//! * [`ZeroShotClassifier`] scores one templated sentence per room label with
//!   a language model and takes the best.
//! * [`StatisticalClassifier`] is naive Bayes over a co-occurrence table.
//! * [`EmbeddingClassifier`] embeds a room description and runs a trained
//!   [`mlp::MlpHead`] over it.
//!
//! All of them break ties between equal scores by picking the
//! lexicographically smallest room label, and always return the full score
//! map.

pub mod embedding;
pub mod mlp;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooccurrence::{
    select_informative, CooccurrenceError, CooccurrenceTable, CountingMode, InformativenessIndex, SelectionConfig,
};
use crate::lm_backend::{BackendError, LmScorer};
use crate::query::{render_zero_shot, QueryError};
use crate::scene_graph::RoomSample;

pub use embedding::{classify_embedding, train_embedding_head, EmbedderInfo, EmbeddingClassifier, TrainedHead};
pub use mlp::{train_mlp, Dataset, EpochStats, Gradients, MlpHead, TrainConfig, TrainError, TrainingCurve};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("room `{0}` has no objects")]
    EmptyRoom(String),
    #[error("score for `{label}` in room `{room_id}` is NaN")]
    NanScore { room_id: String, label: String },
    #[error("every room label scored -inf for room `{0}`")]
    Degenerate(String),
    #[error("no room labels to choose from")]
    NoLabels,
    #[error("scorer returned {got} scores for {expected} queries")]
    ScoreCount { expected: usize, got: usize },
    #[error("embedding has dimension {got}, head expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training label `{0}` is not a room label")]
    UnknownLabel(String),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Cooccurrence(#[from] CooccurrenceError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("head file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ZeroShot,
    Statistical,
    Embedding,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ZeroShot => "zero_shot",
            Method::Statistical => "statistical",
            Method::Embedding => "embedding",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub room_id: String,
    pub method: Method,
    pub predicted: String,
    /// One entry per room label. A `-inf` score serializes as `null`.
    pub scores: BTreeMap<String, f64>,
    pub objects_used: Vec<String>,
    /// More than one label reached the maximum score.
    pub tie: bool,
}

impl ClassificationResult {
    /// Labels ordered by descending score, ties lexicographic.
    pub fn ranking(&self) -> Vec<&str> {
        let mut ranked: Vec<(&str, f64)> = self.scores.iter().map(|(l, s)| (l.as_str(), *s)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.into_iter().map(|(l, _)| l).collect()
    }
}

/// Write one JSON object per line.
pub fn write_jsonl<W: Write>(results: &[ClassificationResult], mut writer: W) -> std::io::Result<()> {
    for result in results {
        serde_json::to_writer(&mut writer, result)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Best label and whether it was tied. The smallest label wins ties.
pub fn argmax(room_id: &str, scores: &BTreeMap<String, f64>) -> Result<(String, bool), ClassifyError> {
    let mut best: Option<(&str, f64)> = None;
    let mut tie = false;
    for (label, &score) in scores {
        if score.is_nan() {
            return Err(ClassifyError::NanScore {
                room_id: room_id.to_string(),
                label: label.clone(),
            });
        }
        match best {
            None => best = Some((label, score)),
            Some((_, b)) if score > b => {
                best = Some((label, score));
                tie = false;
            }
            Some((_, b)) if score == b => tie = true,
            _ => {}
        }
    }
    let (label, _) = best.ok_or(ClassifyError::NoLabels)?;
    Ok((label.to_string(), tie))
}

/// A configured classifier that can be run over many rooms in parallel.
pub trait RoomClassifier: Sync {
    fn method(&self) -> Method;

    fn classify(&self, room: &RoomSample) -> Result<ClassificationResult, ClassifyError>;
}

fn nonempty(room: &RoomSample) -> Result<(), ClassifyError> {
    if room.object_labels.is_empty() {
        return Err(ClassifyError::EmptyRoom(room.room_id.clone()));
    }
    Ok(())
}

/// Score one query per room label and return the best-scoring label.
pub fn classify_zero_shot(
    room: &RoomSample,
    scorer: &dyn LmScorer,
    index: &InformativenessIndex,
    cfg: &SelectionConfig,
    room_labels: &[String],
) -> Result<ClassificationResult, ClassifyError> {
    nonempty(room)?;
    if room_labels.is_empty() {
        return Err(ClassifyError::NoLabels);
    }
    let objects = select_informative(&room.object_labels, index, cfg)?;
    let bundle = render_zero_shot(&objects, room_labels)?;
    let texts: Vec<String> = bundle.per_label().iter().map(|(_, t)| t.clone()).collect();
    let raw = scorer.batch_score(&texts)?;
    if raw.len() != texts.len() {
        return Err(ClassifyError::ScoreCount {
            expected: texts.len(),
            got: raw.len(),
        });
    }
    let scores: BTreeMap<String, f64> = bundle
        .per_label()
        .iter()
        .zip(raw)
        .map(|((label, _), s)| (label.clone(), s))
        .collect();
    let (predicted, tie) = argmax(&room.room_id, &scores)?;
    Ok(ClassificationResult {
        room_id: room.room_id.clone(),
        method: Method::ZeroShot,
        predicted,
        scores,
        objects_used: objects,
        tie,
    })
}

/// Naive Bayes: `score(r) = sum_o ln p(r | o)`.
///
/// In presence mode each distinct label contributes once; in multiplicity
/// mode every object instance does. Terms are added in lexicographic label
/// order, so the result does not depend on object order.
pub fn classify_statistical(
    room: &RoomSample,
    table: &CooccurrenceTable,
    mode: CountingMode,
) -> Result<ClassificationResult, ClassifyError> {
    nonempty(room)?;
    if table.room_labels().is_empty() {
        return Err(ClassifyError::NoLabels);
    }
    let mut objects: Vec<String> = match mode {
        CountingMode::Presence => room.distinct_labels().into_iter().map(str::to_string).collect(),
        CountingMode::Multiplicity => room.object_labels.clone(),
    };
    objects.sort();
    let mut totals = vec![0.0; table.room_labels().len()];
    for object in &objects {
        for (total, p) in totals.iter_mut().zip(table.conditional(object)) {
            *total += p.ln();
        }
    }
    let scores: BTreeMap<String, f64> = table.room_labels().iter().cloned().zip(totals).collect();
    if scores.values().all(|s| *s == f64::NEG_INFINITY) {
        return Err(ClassifyError::Degenerate(room.room_id.clone()));
    }
    let (predicted, tie) = argmax(&room.room_id, &scores)?;
    if mode == CountingMode::Multiplicity {
        objects.dedup();
    }
    Ok(ClassificationResult {
        room_id: room.room_id.clone(),
        method: Method::Statistical,
        predicted,
        scores,
        objects_used: objects,
        tie,
    })
}

pub struct ZeroShotClassifier<'a> {
    pub scorer: &'a dyn LmScorer,
    pub index: &'a InformativenessIndex,
    pub selection: SelectionConfig,
    pub room_labels: Vec<String>,
}

impl RoomClassifier for ZeroShotClassifier<'_> {
    fn method(&self) -> Method {
        Method::ZeroShot
    }

    fn classify(&self, room: &RoomSample) -> Result<ClassificationResult, ClassifyError> {
        classify_zero_shot(room, self.scorer, self.index, &self.selection, &self.room_labels)
    }
}

pub struct StatisticalClassifier<'a> {
    pub table: &'a CooccurrenceTable,
    pub mode: CountingMode,
}

impl RoomClassifier for StatisticalClassifier<'_> {
    fn method(&self) -> Method {
        Method::Statistical
    }

    fn classify(&self, room: &RoomSample) -> Result<ClassificationResult, ClassifyError> {
        classify_statistical(room, self.table, self.mode)
    }
}
