//! Blocking HTTP client for an external scoring/embedding service.
//!
//! Wire protocol:
//!
//! ```text
//! POST {endpoint}/score  {"model": str, "prompts": [str]} -> {"scores": [float]}
//! POST {endpoint}/embed  {"model": str, "texts": [str]}   -> {"embeddings": [[float]]}
//! ```
//!
//! Scores are summed natural-log token probabilities. Texts are split into
//! requests of at most `batch_size`; at most `max_in_flight` requests are
//! outstanding at any moment. Transient failures (connection errors, 408,
//! 429, 5xx) are retried with exponential backoff; 401/403 are not.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, LmScorer, RequestInfo, ScoreSemantics, ScorerMetadata, TextEmbedder};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "SCENESENSE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Bearer token. Never serialized.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: f64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub batch_size: usize,
    /// Divide each score by its token count. Requires the service to return
    /// `token_counts` alongside `scores`.
    pub normalize_by_tokens: bool,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://127.0.0.1:8080".into(),
            model: String::new(),
            api_key: None,
            timeout_secs: 60.0,
            max_attempts: 3,
            backoff_ms: 200,
            max_in_flight: 4,
            batch_size: 32,
            normalize_by_tokens: false,
        }
    }
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            ..Default::default()
        }
    }

    /// Fill `api_key` from [`API_KEY_ENV`] if set.
    pub fn with_env_api_key(mut self) -> Self {
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_attempts == 0 || self.max_in_flight == 0 || self.batch_size == 0 {
            return Err(BackendError::Config(
                "max_attempts, max_in_flight and batch_size must be positive".into(),
            ));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

type Slot<T> = Mutex<Option<Result<Vec<T>, BackendError>>>;

/// Shared transport: agent, retry policy, request numbering.
#[derive(Debug)]
struct Transport {
    agent: ureq::Agent,
    config: HttpConfig,
    counter: AtomicU64,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(BackendError),
}

impl Transport {
    fn new(config: HttpConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .build()
            .new_agent();
        Ok(Transport {
            agent,
            config,
            counter: AtomicU64::new(0),
        })
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{route}", self.config.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, url: &str, body: &serde_json::Value, info: &RequestInfo) -> Attempt {
        let mut request = self
            .agent
            .post(url)
            .header("content-type", "application/json")
            .header("x-request-id", &info.id);
        if let Some(key) = &self.config.api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        match request.send_json(body) {
            Ok(mut response) => {
                let status = response.status().as_u16();
                let text = response.body_mut().read_to_string().unwrap_or_default();
                match status {
                    200..=299 => Attempt::Done(text),
                    401 | 403 => Attempt::Fail(BackendError::Auth {
                        status,
                        request: info.clone(),
                    }),
                    408 | 429 | 500..=599 => Attempt::Retry(format!("HTTP {status}: {text}")),
                    _ => Attempt::Fail(BackendError::Http {
                        status,
                        request: info.clone(),
                        body: text,
                    }),
                }
            }
            Err(ureq::Error::BadUri(uri)) => {
                Attempt::Fail(BackendError::Config(format!("invalid endpoint URI {uri:?}")))
            }
            Err(err) => Attempt::Retry(err.to_string()),
        }
    }

    /// POST `body` to `route`, retrying transient failures.
    fn post(&self, route: &str, body: serde_json::Value, first_text: &str) -> Result<String, BackendError> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let info = RequestInfo {
            id: format!("{route}-{n}"),
            first_text: first_text.to_string(),
        };
        let url = self.url(route);
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(&url, &body, &info) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(err) => return Err(err),
                Attempt::Retry(message) => last = message,
            }
            if attempt < self.config.max_attempts {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
        }
        Err(BackendError::Transport {
            attempts: self.config.max_attempts,
            request: info,
            message: last,
        })
    }

    /// Split `texts` into batches and run `call` on each with bounded
    /// concurrency. Results come back in input order; on failure the error
    /// of the earliest failing batch is returned.
    fn dispatch<T: Send>(
        &self,
        texts: &[String],
        call: impl Fn(&[String]) -> Result<Vec<T>, BackendError> + Sync,
    ) -> Result<Vec<T>, BackendError> {
        let chunks: Vec<&[String]> = texts.chunks(self.config.batch_size).collect();
        let slots: Vec<Slot<T>> = chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let workers = self.config.max_in_flight.min(chunks.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if failed.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= chunks.len() {
                        break;
                    }
                    let result = call(chunks[i]);
                    if result.is_err() {
                        failed.store(true, Ordering::Relaxed);
                    }
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for slot in slots {
            match slot.into_inner().expect("slot lock") {
                Some(Ok(values)) => out.extend(values),
                Some(Err(err)) => return Err(err),
                // Skipped after another batch failed; that error is reported
                // from its own slot.
                None => continue,
            }
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
    #[serde(default)]
    token_counts: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

fn protocol(first_text: &str, message: impl Into<String>) -> BackendError {
    BackendError::Protocol {
        request: RequestInfo {
            id: "response".into(),
            first_text: first_text.to_string(),
        },
        message: message.into(),
    }
}

#[derive(Debug)]
pub struct HttpScorer {
    transport: Transport,
}

/// Scorer backed by `POST {endpoint}/score`.
pub fn http_scorer(config: HttpConfig) -> Result<HttpScorer, BackendError> {
    HttpScorer::new(config)
}

impl HttpScorer {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        Ok(HttpScorer {
            transport: Transport::new(config)?,
        })
    }

    fn score_batch(&self, batch: &[String]) -> Result<Vec<f64>, BackendError> {
        let cfg = &self.transport.config;
        let body = serde_json::json!({ "model": cfg.model, "prompts": batch });
        let text = self.transport.post("score", body, &batch[0])?;
        let parsed: ScoreResponse =
            serde_json::from_str(&text).map_err(|e| protocol(&batch[0], format!("malformed score response: {e}")))?;
        if parsed.scores.len() != batch.len() {
            return Err(protocol(
                &batch[0],
                format!("expected {} scores, got {}", batch.len(), parsed.scores.len()),
            ));
        }
        if !cfg.normalize_by_tokens {
            return Ok(parsed.scores);
        }
        let counts = parsed
            .token_counts
            .filter(|c| c.len() == batch.len())
            .ok_or_else(|| protocol(&batch[0], "token_counts missing or wrong length"))?;
        if counts.iter().any(|&c| c <= 0.0) {
            return Err(protocol(&batch[0], "token counts must be positive"));
        }
        Ok(parsed.scores.iter().zip(counts).map(|(s, c)| s / c).collect())
    }
}

impl LmScorer for HttpScorer {
    fn batch_score(&self, texts: &[String]) -> Result<Vec<f64>, BackendError> {
        self.transport.dispatch(texts, |batch| self.score_batch(batch))
    }

    fn metadata(&self) -> ScorerMetadata {
        let cfg = &self.transport.config;
        ScorerMetadata {
            model: cfg.model.clone(),
            semantics: if cfg.normalize_by_tokens {
                ScoreSemantics::TokenNormalizedLogProb
            } else {
                ScoreSemantics::SummedLogProb
            },
        }
    }
}

/// Embedder backed by `POST {endpoint}/embed`. The first response fixes the
/// dimension; later responses of another length are protocol errors.
#[derive(Debug)]
pub struct HttpEmbedder {
    transport: Transport,
    dimension: OnceLock<usize>,
}

pub fn http_embedder(config: HttpConfig) -> Result<HttpEmbedder, BackendError> {
    HttpEmbedder::new(config)
}

impl HttpEmbedder {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        Ok(HttpEmbedder {
            transport: Transport::new(config)?,
            dimension: OnceLock::new(),
        })
    }

    fn embed_batch(&self, batch: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let body = serde_json::json!({ "model": self.transport.config.model, "texts": batch });
        let text = self.transport.post("embed", body, &batch[0])?;
        let parsed: EmbedResponse =
            serde_json::from_str(&text).map_err(|e| protocol(&batch[0], format!("malformed embed response: {e}")))?;
        if parsed.embeddings.len() != batch.len() {
            return Err(protocol(
                &batch[0],
                format!("expected {} embeddings, got {}", batch.len(), parsed.embeddings.len()),
            ));
        }
        for v in &parsed.embeddings {
            if v.is_empty() {
                return Err(protocol(&batch[0], "empty embedding"));
            }
            let dim = *self.dimension.get_or_init(|| v.len());
            if v.len() != dim {
                return Err(protocol(
                    &batch[0],
                    format!("embedding has length {}, expected {dim}", v.len()),
                ));
            }
        }
        Ok(parsed.embeddings)
    }
}

impl TextEmbedder for HttpEmbedder {
    fn batch_embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        self.transport.dispatch(texts, |batch| self.embed_batch(batch))
    }

    fn dimension(&self) -> Option<usize> {
        self.dimension.get().copied()
    }

    fn name(&self) -> String {
        format!("http:{}", self.transport.config.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let bad = HttpConfig {
            max_in_flight: 0,
            ..HttpConfig::new("http://x", "m")
        };
        assert!(HttpScorer::new(bad).is_err());
        assert!(HttpScorer::new(HttpConfig::new("http://x", "m")).is_ok());
    }

    #[test]
    fn config_file_defaults_fill_in() {
        let cfg: HttpConfig = serde_json::from_str(r#"{"endpoint": "http://h:1", "model": "gpt-j"}"#).unwrap();
        assert_eq!(cfg.max_attempts, 3);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.max_in_flight, 4);
        assert!(!cfg.normalize_by_tokens);
    }

    #[test]
    fn empty_batch_issues_no_requests() {
        let scorer = HttpScorer::new(HttpConfig::new("http://127.0.0.1:9", "m")).unwrap();
        assert!(scorer.batch_score(&[]).unwrap().is_empty());
    }
}
