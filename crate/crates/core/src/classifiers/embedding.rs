//! Embedding-head classification: embed a room description, run the head,
//! take the largest logit.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{train_mlp, Dataset, MlpHead, TrainConfig, TrainingCurve};
use super::{argmax, ClassificationResult, ClassifyError, Method, RoomClassifier};
use crate::cooccurrence::{select_informative, InformativenessIndex, SelectionConfig};
use crate::lm_backend::TextEmbedder;
use crate::query::{embedding_query, BootstrapRow};
use crate::scene_graph::RoomSample;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderInfo {
    pub name: String,
    pub dimension: usize,
}

/// A trained head together with what it needs at inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedHead {
    #[serde(flatten)]
    pub head: MlpHead,
    pub embedder: EmbedderInfo,
    /// Room label for each output unit.
    pub label_order: Vec<String>,
}

impl TrainedHead {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        self.head.validate()?;
        if self.head.input_dim() != self.embedder.dimension {
            return Err(ClassifyError::Format(format!(
                "head input {} does not match embedder dimension {}",
                self.head.input_dim(),
                self.embedder.dimension
            )));
        }
        if self.head.output_dim() != self.label_order.len() {
            return Err(ClassifyError::Format(format!(
                "head has {} outputs for {} labels",
                self.head.output_dim(),
                self.label_order.len()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("head serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifyError> {
        let head: TrainedHead = serde_json::from_str(text).map_err(|e| ClassifyError::Format(e.to_string()))?;
        head.validate()?;
        Ok(head)
    }

    pub fn from_path(path: &Path) -> Result<Self, ClassifyError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ClassifyError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Logits keyed by room label.
    pub fn scores(&self, vector: &[f64]) -> Result<BTreeMap<String, f64>, ClassifyError> {
        if vector.len() != self.head.input_dim() {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.head.input_dim(),
                got: vector.len(),
            });
        }
        let logits = self.head.forward(vector)?;
        Ok(self.label_order.iter().cloned().zip(logits).collect())
    }
}

/// Embed each distinct text once.
fn embed_texts(embedder: &dyn TextEmbedder, texts: &[&str]) -> Result<Vec<Vec<f64>>, ClassifyError> {
    let mut unique: Vec<String> = texts.iter().map(|t| t.to_string()).collect();
    unique.sort();
    unique.dedup();
    let vectors = embedder.batch_embed(&unique)?;
    let lookup: HashMap<&str, &Vec<f64>> = unique.iter().map(String::as_str).zip(&vectors).collect();
    Ok(texts.iter().map(|t| lookup[t].clone()).collect())
}

fn encode_rows(
    rows: &[BootstrapRow],
    embedder: &dyn TextEmbedder,
    label_index: &HashMap<&str, usize>,
) -> Result<(Vec<Vec<f64>>, Vec<usize>), ClassifyError> {
    let labels = rows
        .iter()
        .map(|r| {
            label_index
                .get(r.label.as_str())
                .copied()
                .ok_or_else(|| ClassifyError::UnknownLabel(r.label.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let texts: Vec<&str> = rows.iter().map(|r| r.text.as_str()).collect();
    Ok((embed_texts(embedder, &texts)?, labels))
}

/// Train a head on bootstrap rows. Output units follow `room_labels`.
pub fn train_embedding_head(
    rows: &[BootstrapRow],
    validation: &[BootstrapRow],
    embedder: &dyn TextEmbedder,
    room_labels: &[String],
    cfg: &TrainConfig,
) -> Result<(TrainedHead, TrainingCurve), ClassifyError> {
    if rows.is_empty() {
        return Err(ClassifyError::Train(super::TrainError::EmptyDataset));
    }
    if room_labels.is_empty() {
        return Err(ClassifyError::NoLabels);
    }
    let label_index: HashMap<&str, usize> = room_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let (train_x, train_y) = encode_rows(rows, embedder, &label_index)?;
    let (val_x, val_y) = encode_rows(validation, embedder, &label_index)?;
    let dimension = train_x[0].len();
    if let Some(expected) = embedder.dimension() {
        if expected != dimension {
            return Err(ClassifyError::DimensionMismatch {
                expected,
                got: dimension,
            });
        }
    }
    let val = (!val_x.is_empty()).then_some(Dataset {
        inputs: &val_x,
        labels: &val_y,
    });
    let (head, curve) = train_mlp(
        Dataset {
            inputs: &train_x,
            labels: &train_y,
        },
        val,
        room_labels.len(),
        cfg,
    )?;
    let trained = TrainedHead {
        head,
        embedder: EmbedderInfo {
            name: embedder.name(),
            dimension,
        },
        label_order: room_labels.to_vec(),
    };
    Ok((trained, curve))
}

/// Embed the room's most informative objects and take the best logit.
pub fn classify_embedding(
    room: &RoomSample,
    embedder: &dyn TextEmbedder,
    head: &TrainedHead,
    index: &InformativenessIndex,
    cfg: &SelectionConfig,
) -> Result<ClassificationResult, ClassifyError> {
    if room.object_labels.is_empty() {
        return Err(ClassifyError::EmptyRoom(room.room_id.clone()));
    }
    let objects = select_informative(&room.object_labels, index, cfg)?;
    let vector = embedder.embed(&embedding_query(&objects))?;
    let scores = head.scores(&vector)?;
    let (predicted, tie) = argmax(&room.room_id, &scores)?;
    Ok(ClassificationResult {
        room_id: room.room_id.clone(),
        method: Method::Embedding,
        predicted,
        scores,
        objects_used: objects,
        tie,
    })
}

pub struct EmbeddingClassifier<'a> {
    pub embedder: &'a dyn TextEmbedder,
    pub head: &'a TrainedHead,
    pub index: &'a InformativenessIndex,
    pub selection: SelectionConfig,
}

impl RoomClassifier for EmbeddingClassifier<'_> {
    fn method(&self) -> Method {
        Method::Embedding
    }

    fn classify(&self, room: &RoomSample) -> Result<ClassificationResult, ClassifyError> {
        classify_embedding(room, self.embedder, self.head, self.index, &self.selection)
    }
}
