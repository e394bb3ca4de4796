//! Model access: string scoring and text embedding behind two small traits.
//!
//! Offline work and tests use the deterministic mocks in [`mock`]; real runs
//! talk to an external inference service through [`http`].

pub mod http;
pub mod mock;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{http_embedder, http_scorer, HttpConfig, HttpEmbedder, HttpScorer, API_KEY_ENV};
pub use mock::{hash_embedder, mock_scorer_from_conditionals, ConditionalScorer, HashEmbedder, MockTable};

/// Identifies the HTTP request (or mock lookup) an error came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestInfo {
    pub id: String,
    /// First text of the failing batch.
    pub first_text: String,
}

impl fmt::Display for RequestInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} starting with {:?}", self.id, self.first_text)
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("authentication rejected with HTTP {status} (request {request})")]
    Auth { status: u16, request: RequestInfo },
    #[error("HTTP {status} (request {request}): {body}")]
    Http {
        status: u16,
        request: RequestInfo,
        body: String,
    },
    #[error("transport failure after {attempts} attempt(s) (request {request}): {message}")]
    Transport {
        attempts: u32,
        request: RequestInfo,
        message: String,
    },
    #[error("protocol error (request {request}): {message}")]
    Protocol { request: RequestInfo, message: String },
    #[error("query does not match a known template: {0:?}")]
    Unparseable(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// The query text the failure is attributable to, when known.
    pub fn query(&self) -> Option<&str> {
        match self {
            BackendError::Auth { request, .. }
            | BackendError::Http { request, .. }
            | BackendError::Transport { request, .. }
            | BackendError::Protocol { request, .. } => Some(&request.first_text),
            BackendError::Unparseable(q) => Some(q),
            BackendError::Config(_) => None,
        }
    }
}

/// What a scorer's numbers mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSemantics {
    /// Sum of natural-log token probabilities over the whole string.
    SummedLogProb,
    /// Summed log-probability divided by the token count.
    TokenNormalizedLogProb,
    /// Masked-LM pseudo-log-likelihood. Declared for completeness; no backend
    /// in this crate produces it.
    PseudoLogLikelihood,
    /// Synthetic scores from a mock.
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerMetadata {
    pub model: String,
    pub semantics: ScoreSemantics,
}

/// A string scorer returning log-probability-like values; higher means more
/// probable.
pub trait LmScorer: Send + Sync {
    /// Scores for `texts`, in order.
    fn batch_score(&self, texts: &[String]) -> Result<Vec<f64>, BackendError>;

    fn score(&self, text: &str) -> Result<f64, BackendError> {
        let scores = self.batch_score(&[text.to_string()])?;
        Ok(scores[0])
    }

    fn metadata(&self) -> ScorerMetadata;
}

/// Maps text to a fixed-dimension vector.
pub trait TextEmbedder: Send + Sync {
    fn batch_embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let mut out = self.batch_embed(&[text.to_string()])?;
        Ok(out.remove(0))
    }

    /// Output dimension, once known. HTTP embedders learn it from the first
    /// response.
    fn dimension(&self) -> Option<usize>;

    fn name(&self) -> String;
}

macro_rules! forward_impls {
    ($($wrapper:ty),*) => {$(
        impl<T: LmScorer + ?Sized> LmScorer for $wrapper {
            fn batch_score(&self, texts: &[String]) -> Result<Vec<f64>, BackendError> {
                (**self).batch_score(texts)
            }
            fn score(&self, text: &str) -> Result<f64, BackendError> {
                (**self).score(text)
            }
            fn metadata(&self) -> ScorerMetadata {
                (**self).metadata()
            }
        }
    )*};
}
forward_impls!(&T, Box<T>, Arc<T>);

impl<T: TextEmbedder + ?Sized> TextEmbedder for &T {
    fn batch_embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).batch_embed(texts)
    }
    fn dimension(&self) -> Option<usize> {
        (**self).dimension()
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

impl<T: TextEmbedder + ?Sized> TextEmbedder for Box<T> {
    fn batch_embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).batch_embed(texts)
    }
    fn dimension(&self) -> Option<usize> {
        (**self).dimension()
    }
    fn name(&self) -> String {
        (**self).name()
    }
}
