//! Dataset splits, accuracy reports and the holdout/transfer experiments.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    ClassificationResult, ClassifyError, EmbeddingClassifier, RoomClassifier, TrainConfig, TrainedHead, TrainingCurve,
};
use crate::cooccurrence::{select_informative, CooccurrenceError, InformativenessIndex, SelectionConfig};
use crate::lm_backend::TextEmbedder;
use crate::query::{bootstrap_queries, BootstrapRow, QueryError, DEFAULT_BOOTSTRAP_SCHEDULE};
use crate::scene_graph::{LabelSpace, RoomSample};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("building-level split needs at least 3 buildings, found {0}")]
    TooFewBuildings(usize),
    #[error("room `{0}` has no label")]
    Unlabeled(String),
    #[error("room `{room_id}` has label `{label}` outside the room label set")]
    UnknownRoomLabel { room_id: String, label: String },
    #[error("no room could be evaluated")]
    EmptyEvaluation,
    #[error("no room mentions any holdout label")]
    EmptyHoldout,
    #[error("holdout label `{0}` is not in the object label space")]
    UnknownHoldoutLabel(String),
    #[error("room label sets differ between `{0}` and `{1}`")]
    LabelSpaceMismatch(String, String),
    #[error("no training rows left")]
    NoTrainingRows,
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Cooccurrence(#[from] CooccurrenceError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    #[default]
    Building,
    Room,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Target fractions of rooms for train, validation and test.
    pub ratios: [f64; 3],
    #[serde(default)]
    pub unit: SplitUnit,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.5, 0.2, 0.3],
            unit: SplitUnit::Building,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], unit: SplitUnit, seed: u64) -> Result<Self, EvalError> {
        let spec = SplitSpec { ratios, unit, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(EvalError::InvalidSplit(format!(
                "ratios {:?} must be non-negative",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EvalError::InvalidSplit(format!(
                "ratios {:?} sum to {sum}",
                self.ratios
            )));
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        let unit = match self.unit {
            SplitUnit::Building => "building",
            SplitUnit::Room => "room",
        };
        let [a, b, c] = self.ratios;
        format!("{unit}:{a}/{b}/{c}:seed={}", self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<RoomSample>,
    pub val: Vec<RoomSample>,
    pub test: Vec<RoomSample>,
}

impl Split {
    /// Fractions of rooms that actually landed in each part.
    pub fn realized_ratios(&self) -> [f64; 3] {
        let sizes = [self.train.len(), self.val.len(), self.test.len()];
        let total = sizes.iter().sum::<usize>().max(1) as f64;
        sizes.map(|n| n as f64 / total)
    }
}

/// Shuffle units (buildings or rooms) with the seed, then hand each to the
/// partition furthest below its target room count. Rooms keep input order
/// within a partition.
pub fn split(rooms: &[RoomSample], spec: &SplitSpec) -> Result<Split, EvalError> {
    spec.validate()?;
    let mut units: Vec<Vec<usize>> = match spec.unit {
        SplitUnit::Building => {
            let mut by_building: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, room) in rooms.iter().enumerate() {
                by_building.entry(&room.building).or_default().push(i);
            }
            if by_building.len() < 3 {
                return Err(EvalError::TooFewBuildings(by_building.len()));
            }
            by_building.into_values().collect()
        }
        SplitUnit::Room => (0..rooms.len()).map(|i| vec![i]).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    units.shuffle(&mut rng);

    let total = rooms.len() as f64;
    let mut assigned = [0usize; 3];
    let mut parts: [Vec<usize>; 3] = Default::default();
    for unit in units {
        let target = (0..3)
            .filter(|&p| spec.ratios[p] > 0.0)
            .max_by(|&a, &b| {
                let deficit = |p: usize| spec.ratios[p] * total - assigned[p] as f64;
                // Earlier partitions win equal deficits.
                deficit(a).total_cmp(&deficit(b)).then(b.cmp(&a))
            })
            .expect("ratios sum to one");
        assigned[target] += unit.len();
        parts[target].extend(unit);
    }
    let [train, val, test] = parts.map(|mut idx| {
        idx.sort_unstable();
        idx.into_iter().map(|i| rooms[i].clone()).collect::<Vec<_>>()
    });
    Ok(Split { train, val, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl LabelAccuracy {
    fn new(correct: usize, total: usize) -> Self {
        LabelAccuracy {
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub room_id: String,
    pub true_label: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub split: String,
    pub overall_accuracy: f64,
    pub correct: usize,
    /// Rooms that count toward the accuracy.
    pub total: usize,
    /// Recall per true label, for labels that occur.
    pub per_label: BTreeMap<String, LabelAccuracy>,
    /// Row and column order of `confusion`.
    pub labels: Vec<String>,
    /// `confusion[true][predicted]` over successfully classified rooms.
    pub confusion: Vec<Vec<usize>>,
    pub failures: Vec<FailureRow>,
    /// Failures were counted as wrong answers rather than excluded.
    pub strict: bool,
    pub seed: Option<u64>,
    pub config: Option<serde_json::Value>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn write_confusion_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.confusion) {
            let mut record = vec![label.clone()];
            record.extend(row.iter().map(usize::to_string));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_per_label_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["room_label", "correct", "total", "accuracy"])?;
        for (label, acc) in &self.per_label {
            w.write_record([
                label.clone(),
                acc.correct.to_string(),
                acc.total.to_string(),
                format!("{:.6}", acc.accuracy),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOptions {
    pub split: String,
    pub strict: bool,
    pub seed: Option<u64>,
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    /// Successful predictions in input order.
    pub predictions: Vec<ClassificationResult>,
}

/// Classify every room in parallel and tally the results in input order.
pub fn evaluate(
    classifier: &dyn RoomClassifier,
    rooms: &[RoomSample],
    room_labels: &[String],
    options: &EvalOptions,
) -> Result<EvalOutcome, EvalError> {
    let label_pos: HashMap<&str, usize> = room_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut truths = Vec::with_capacity(rooms.len());
    for room in rooms {
        let label = room
            .label
            .as_deref()
            .ok_or_else(|| EvalError::Unlabeled(room.room_id.clone()))?;
        let &pos = label_pos.get(label).ok_or_else(|| EvalError::UnknownRoomLabel {
            room_id: room.room_id.clone(),
            label: label.to_string(),
        })?;
        truths.push(pos);
    }

    let outcomes: Vec<Result<ClassificationResult, ClassifyError>> =
        rooms.par_iter().map(|room| classifier.classify(room)).collect();

    let n = room_labels.len();
    let mut confusion = vec![vec![0usize; n]; n];
    let mut per_label = vec![(0usize, 0usize); n];
    let mut failures = Vec::new();
    let mut predictions = Vec::new();
    for ((room, truth), outcome) in rooms.iter().zip(truths).zip(outcomes) {
        match outcome {
            Ok(result) => {
                let &predicted =
                    label_pos
                        .get(result.predicted.as_str())
                        .ok_or_else(|| EvalError::UnknownRoomLabel {
                            room_id: room.room_id.clone(),
                            label: result.predicted.clone(),
                        })?;
                confusion[truth][predicted] += 1;
                per_label[truth].1 += 1;
                per_label[truth].0 += usize::from(truth == predicted);
                predictions.push(result);
            }
            Err(err) => {
                if options.strict {
                    per_label[truth].1 += 1;
                }
                failures.push(FailureRow {
                    room_id: room.room_id.clone(),
                    true_label: room_labels[truth].clone(),
                    error: err.to_string(),
                });
            }
        }
    }
    let correct: usize = per_label.iter().map(|p| p.0).sum();
    let total: usize = per_label.iter().map(|p| p.1).sum();
    if total == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let report = EvalReport {
        method: classifier.method().to_string(),
        split: options.split.clone(),
        overall_accuracy: correct as f64 / total as f64,
        correct,
        total,
        per_label: room_labels
            .iter()
            .zip(&per_label)
            .filter(|(_, p)| p.1 > 0)
            .map(|(l, &(c, t))| (l.clone(), LabelAccuracy::new(c, t)))
            .collect(),
        labels: room_labels.to_vec(),
        confusion,
        failures,
        strict: options.strict,
        seed: options.seed,
        config: options.config.clone(),
    };
    Ok(EvalOutcome { report, predictions })
}

/// Bootstrap, train and classify with the embedding head.
pub struct EmbeddingPipeline<'a> {
    pub embedder: &'a dyn TextEmbedder,
    pub selection: SelectionConfig,
    pub schedule: Vec<(usize, usize)>,
    pub train: TrainConfig,
}

impl<'a> EmbeddingPipeline<'a> {
    pub fn new(embedder: &'a dyn TextEmbedder, train: TrainConfig) -> Self {
        EmbeddingPipeline {
            embedder,
            selection: SelectionConfig::default(),
            schedule: DEFAULT_BOOTSTRAP_SCHEDULE.to_vec(),
            train,
        }
    }

    pub fn bootstrap(
        &self,
        rooms: &[RoomSample],
        index: &InformativenessIndex,
    ) -> Result<Vec<BootstrapRow>, EvalError> {
        let mut rows = Vec::new();
        for room in rooms {
            rows.extend(bootstrap_queries(
                room,
                index,
                &self.schedule,
                self.selection.tie_break,
            )?);
        }
        Ok(rows)
    }

    pub fn fit(
        &self,
        train_rows: &[BootstrapRow],
        val_rows: &[BootstrapRow],
        room_labels: &[String],
    ) -> Result<(TrainedHead, TrainingCurve), EvalError> {
        if train_rows.is_empty() {
            return Err(EvalError::NoTrainingRows);
        }
        Ok(crate::classifiers::train_embedding_head(
            train_rows,
            val_rows,
            self.embedder,
            room_labels,
            &self.train,
        )?)
    }

    pub fn classifier<'b>(&'b self, head: &'b TrainedHead, index: &'b InformativenessIndex) -> EmbeddingClassifier<'b> {
        EmbeddingClassifier {
            embedder: self.embedder,
            head,
            index,
            selection: self.selection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub holdout: Vec<String>,
    pub removed_training_rows: usize,
    pub training_rows: usize,
    pub overall: EvalReport,
    /// Accuracy over held-out rooms whose query mentions each label.
    pub per_object: BTreeMap<String, LabelAccuracy>,
}

fn mentions(objects: &[String], holdout: &BTreeSet<&str>) -> bool {
    objects.iter().any(|o| holdout.contains(o.as_str()))
}

/// Hold out every room whose query mentions a holdout label, train on the
/// rest without any row mentioning one, and evaluate on the held-out rooms.
///
/// Membership is by exact object label, not substring.
pub fn holdout_experiment(
    rooms: &[RoomSample],
    spec: &SplitSpec,
    holdout: &[String],
    space: &LabelSpace,
    index: &InformativenessIndex,
    pipeline: &EmbeddingPipeline<'_>,
) -> Result<HoldoutReport, EvalError> {
    for label in holdout {
        if space.object_index(label).is_none() {
            return Err(EvalError::UnknownHoldoutLabel(label.clone()));
        }
    }
    let held_set: BTreeSet<&str> = holdout.iter().map(String::as_str).collect();
    let mut held = Vec::new();
    let mut held_objects = Vec::new();
    let mut rest = Vec::new();
    for room in rooms {
        if room.object_labels.is_empty() {
            continue;
        }
        let query_objects = select_informative(&room.object_labels, index, &pipeline.selection)?;
        if mentions(&query_objects, &held_set) {
            held.push(room.clone());
            held_objects.push(query_objects);
        } else {
            rest.push(room.clone());
        }
    }
    if held.is_empty() {
        return Err(EvalError::EmptyHoldout);
    }

    let parts = split(&rest, spec)?;
    let keep = |rows: Vec<BootstrapRow>| -> (Vec<BootstrapRow>, usize) {
        let before = rows.len();
        let kept: Vec<BootstrapRow> = rows.into_iter().filter(|r| !mentions(&r.objects, &held_set)).collect();
        let removed = before - kept.len();
        (kept, removed)
    };
    let (train_rows, removed_train) = keep(pipeline.bootstrap(&parts.train, index)?);
    let (val_rows, removed_val) = keep(pipeline.bootstrap(&parts.val, index)?);
    let room_labels = space.room_labels.clone();
    let (head, _) = pipeline.fit(&train_rows, &val_rows, &room_labels)?;
    let classifier = pipeline.classifier(&head, index);
    let options = EvalOptions {
        split: format!("holdout:{}", holdout.join("+")),
        seed: Some(spec.seed),
        ..Default::default()
    };
    let outcome = evaluate(&classifier, &held, &room_labels, &options)?;

    let truth: HashMap<&str, Option<&str>> = held.iter().map(|r| (r.room_id.as_str(), r.label.as_deref())).collect();
    let correct_by_room: HashMap<&str, bool> = outcome
        .predictions
        .iter()
        .map(|p| {
            (
                p.room_id.as_str(),
                truth[p.room_id.as_str()] == Some(p.predicted.as_str()),
            )
        })
        .collect();
    let mut per_object = BTreeMap::new();
    for label in holdout {
        let (mut correct, mut total) = (0, 0);
        for (room, objects) in held.iter().zip(&held_objects) {
            if !objects.contains(label) {
                continue;
            }
            if let Some(&ok) = correct_by_room.get(room.room_id.as_str()) {
                total += 1;
                correct += usize::from(ok);
            }
        }
        per_object.insert(label.clone(), LabelAccuracy::new(correct, total));
    }
    Ok(HoldoutReport {
        holdout: holdout.to_vec(),
        removed_training_rows: removed_train + removed_val,
        training_rows: train_rows.len(),
        overall: outcome.report,
        per_object,
    })
}

/// Inputs for one side of a transfer experiment.
pub struct TransferSide<'a> {
    pub rooms: &'a [RoomSample],
    pub space: &'a LabelSpace,
    pub index: &'a InformativenessIndex,
}

/// Train on rooms described in the source object vocabulary and evaluate on
/// rooms described in the target one. Source rooms are divided by `spec`
/// into training and validation parts; all target rooms are evaluated.
pub fn transfer_experiment(
    source: &TransferSide<'_>,
    target: &TransferSide<'_>,
    spec: &SplitSpec,
    pipeline: &EmbeddingPipeline<'_>,
) -> Result<EvalOutcome, EvalError> {
    let same_rooms = source.space.room_labels.iter().collect::<BTreeSet<_>>()
        == target.space.room_labels.iter().collect::<BTreeSet<_>>();
    if !same_rooms {
        return Err(EvalError::LabelSpaceMismatch(
            source.space.name.clone(),
            target.space.name.clone(),
        ));
    }
    let parts = split(source.rooms, spec)?;
    let train_rows = pipeline.bootstrap(&parts.train, source.index)?;
    let val_rows = pipeline.bootstrap(&parts.val, source.index)?;
    let room_labels = source.space.room_labels.clone();
    let (head, _) = pipeline.fit(&train_rows, &val_rows, &room_labels)?;
    let classifier = pipeline.classifier(&head, target.index);
    let options = EvalOptions {
        split: format!("transfer:{}->{}", source.space.name, target.space.name),
        seed: Some(spec.seed),
        ..Default::default()
    };
    evaluate(&classifier, target.rooms, &room_labels, &options)
}
