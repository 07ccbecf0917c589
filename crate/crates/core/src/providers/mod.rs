//! Embedding and chat-completion clients.
//!
//! Both speak the OpenAI-compatible JSON endpoints, or run against
//! deterministic in-process mocks so the whole pipeline works offline.

mod cache;
mod client;
mod mock;
mod transport;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::{cache_key, EmbeddingCache};
pub use client::{ChatClient, EmbeddingClient};
pub use mock::{MockChat, MockEmbedder, MOCK_EMBEDDING_DIM};
pub use transport::{HttpTransport, Transport, TransportError};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Embedding,
    Chat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    OpenAi,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 20_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub backend: Backend,
    /// Base URL, e.g. `https://api.openai.com/v1`.
    #[serde(default)]
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Upper bound on concurrent requests from one client.
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Mock chat only: keywords the classification heuristic looks for.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mock_keywords: Vec<String>,
}

fn default_max_batch() -> usize {
    64
}

fn default_timeout() -> f64 {
    60.0
}

fn default_in_flight() -> usize {
    4
}

impl ProviderConfig {
    pub fn mock_embedding(model_id: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Embedding,
            backend: Backend::Mock,
            endpoint: String::new(),
            model_id: model_id.into(),
            api_key_env: None,
            max_batch: default_max_batch(),
            temperature: 0.0,
            timeout_secs: default_timeout(),
            retry: RetryPolicy::default(),
            max_in_flight: default_in_flight(),
            mock_keywords: Vec::new(),
        }
    }

    pub fn mock_chat(model_id: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Chat,
            ..Self::mock_embedding(model_id)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_batch == 0 {
            return Err(Error::Config(format!("{}: max_batch must be >= 1", self.model_id)));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config(format!(
                "{}: max_in_flight must be >= 1",
                self.model_id
            )));
        }
        if self.model_id.is_empty() {
            return Err(Error::Config("model_id is empty".into()));
        }
        if self.backend == Backend::OpenAi && self.endpoint.is_empty() {
            return Err(Error::Config(format!("{}: endpoint is empty", self.model_id)));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(Error::Config(format!("{}: timeout must be positive", self.model_id)));
        }
        Ok(())
    }

    /// Evaluation-role chat providers must be deterministic.
    pub fn require_zero_temperature(&self) -> Result<()> {
        if self.temperature != 0.0 {
            return Err(Error::Config(format!(
                "evaluation provider {} must use temperature 0, got {}",
                self.model_id, self.temperature
            )));
        }
        Ok(())
    }

    pub(crate) fn resolve_api_key(&self) -> Result<Option<String>> {
        match &self.api_key_env {
            None => Ok(None),
            Some(name) => match std::env::var(name) {
                Ok(v) if !v.trim().is_empty() => Ok(Some(v)),
                _ => Err(Error::Config(format!(
                    "{}: environment variable {name} is not set",
                    self.model_id
                ))),
            },
        }
    }
}

/// Unit-length embedding tagged with the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Arc<[f32]>,
    model_id: Arc<str>,
    /// Exact f64 norm of the stored f32 values; within ~1e-7 of 1.
    norm: f64,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit length. Fails on non-finite or zero input.
    pub fn normalized(values: Vec<f32>, model_id: Arc<str>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "embedding from {model_id} is empty or not finite"
            )));
        }
        let norm = values.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput(format!("zero embedding from {model_id}")));
        }
        let values: Vec<f32> = values.iter().map(|&v| (v as f64 / norm) as f32).collect();
        Ok(Self::from_unit(values.into(), model_id))
    }

    pub(crate) fn from_unit(values: Arc<[f32]>, model_id: Arc<str>) -> Self {
        let norm = dot(&values, &values).sqrt();
        EmbeddingVector { values, model_id, norm }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }
}

/// Cosine similarity, divided by the exact stored norms so that f32
/// rounding of the unit vectors does not leak into the result.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::LengthMismatch(a.dim(), b.dim()));
    }
    Ok((dot(a.values(), b.values()) / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}
