//! Deterministic backends for tests and offline runs.

use std::collections::HashMap;

use super::{BackendError, LmScorer, ScoreSemantics, ScorerMetadata, TextEmbedder};
use crate::cooccurrence::CooccurrenceTable;
use crate::query::parse_zero_shot;

/// Exact-match lookup table. Misses fall back to `default_score` for scoring
/// and to the seeded hash embedding for vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MockTable {
    pub scores: HashMap<String, f64>,
    pub vectors: HashMap<String, Vec<f64>>,
    pub default_score: f64,
    pub hash: HashEmbedder,
}

impl MockTable {
    pub fn new(default_score: f64) -> Self {
        MockTable {
            scores: HashMap::new(),
            vectors: HashMap::new(),
            default_score,
            hash: HashEmbedder::new(64, 0),
        }
    }

    pub fn with_score(mut self, text: impl Into<String>, score: f64) -> Self {
        self.scores.insert(text.into(), score);
        self
    }

    pub fn with_vector(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.vectors.insert(text.into(), vector);
        self
    }

    pub fn with_hash(mut self, dimension: usize, seed: u64) -> Self {
        self.hash = HashEmbedder::new(dimension, seed);
        self
    }
}

impl LmScorer for MockTable {
    fn batch_score(&self, texts: &[String]) -> Result<Vec<f64>, BackendError> {
        Ok(texts
            .iter()
            .map(|t| self.scores.get(t).copied().unwrap_or(self.default_score))
            .collect())
    }

    fn metadata(&self) -> ScorerMetadata {
        ScorerMetadata {
            model: "mock-table".into(),
            semantics: ScoreSemantics::Mock,
        }
    }
}

impl TextEmbedder for MockTable {
    fn batch_embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        texts
            .iter()
            .map(|t| match self.vectors.get(t) {
                Some(v) if v.len() == self.hash.dimension => Ok(v.clone()),
                Some(v) => Err(BackendError::Config(format!(
                    "mock vector for {t:?} has length {}, expected {}",
                    v.len(),
                    self.hash.dimension
                ))),
                None => Ok(self.hash.embed_one(t)),
            })
            .collect()
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.hash.dimension)
    }

    fn name(&self) -> String {
        "mock-table".into()
    }
}

/// Scores zero-shot queries as `sum_i ln p(r | o_i)` under a fixed table.
///
/// With this scorer the zero-shot argmax coincides with the naive-Bayes
/// baseline on the same table. Terms are summed in lexicographic object order
/// so the value does not depend on how the query ordered its objects.
#[derive(Debug, Clone)]
pub struct ConditionalScorer {
    room_index: HashMap<String, usize>,
    log_rows: HashMap<String, Vec<f64>>,
    uniform_log: Vec<f64>,
    default_score: f64,
    strict: bool,
}

/// Build a [`ConditionalScorer`]. In strict mode strings that do not parse as
/// a zero-shot query (or name unknown rooms) are errors; otherwise they get
/// `default_score`.
pub fn mock_scorer_from_conditionals(table: &CooccurrenceTable, default_score: f64, strict: bool) -> ConditionalScorer {
    let room_index = table
        .room_labels()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.clone(), i))
        .collect();
    let log_rows = table
        .object_labels()
        .iter()
        .map(|o| (o.clone(), table.conditional(o).iter().map(|p| p.ln()).collect()))
        .collect();
    let n = table.room_labels().len();
    ConditionalScorer {
        room_index,
        log_rows,
        uniform_log: vec![(1.0 / n as f64).ln(); n],
        default_score,
        strict,
    }
}

impl ConditionalScorer {
    fn score_one(&self, text: &str) -> Result<f64, BackendError> {
        let parsed = parse_zero_shot(text, |s| self.log_rows.contains_key(s))
            .or_else(|| parse_zero_shot(text, |_| true).filter(|p| p.objects.len() == 1));
        let Some(parsed) = parsed else {
            return self.miss(text);
        };
        let Some(&r) = self.room_index.get(&parsed.room_label) else {
            return self.miss(text);
        };
        let mut objects = parsed.objects;
        objects.sort();
        Ok(objects
            .iter()
            .map(|o| self.log_rows.get(o).unwrap_or(&self.uniform_log)[r])
            .sum())
    }

    fn miss(&self, text: &str) -> Result<f64, BackendError> {
        if self.strict {
            Err(BackendError::Unparseable(text.to_string()))
        } else {
            Ok(self.default_score)
        }
    }
}

impl LmScorer for ConditionalScorer {
    fn batch_score(&self, texts: &[String]) -> Result<Vec<f64>, BackendError> {
        texts.iter().map(|t| self.score_one(t)).collect()
    }

    fn metadata(&self) -> ScorerMetadata {
        ScorerMetadata {
            model: "mock-conditionals".into(),
            semantics: ScoreSemantics::Mock,
        }
    }
}

/// Feature-hashing embedder over lowercase word unigrams and bigrams,
/// L2-normalized. Stands in for a sentence encoder when no model is around.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

pub fn hash_embedder(dimension: usize, seed: u64) -> HashEmbedder {
    HashEmbedder::new(dimension, seed)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix64 finalizer
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

impl HashEmbedder {
    /// # Panics
    /// If `dimension` is zero.
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension >= 1, "embedding dimension must be positive");
        HashEmbedder { dimension, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let tokens: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut features: Vec<String> = tokens.iter().map(|t| format!("u:{t}")).collect();
        features.extend(tokens.windows(2).map(|w| format!("b:{} {}", w[0], w[1])));
        if features.is_empty() {
            features.push("<empty>".into());
        }
        let mut v = vec![0.0; self.dimension];
        for feature in &features {
            let h = fnv1a(self.seed, feature.as_bytes());
            let slot = (h % self.dimension as u64) as usize;
            v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Every feature cancelled out; fall back to a seeded basis vector.
            let slot = (fnv1a(self.seed, b"<cancelled>") % self.dimension as u64) as usize;
            v[slot] = 1.0;
            return v;
        }
        v.iter().map(|x| x / norm).collect()
    }
}

impl TextEmbedder for HashEmbedder {
    fn batch_embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn name(&self) -> String {
        format!("hash-{}-{}", self.dimension, self.seed)
    }
}
