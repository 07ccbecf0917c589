use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::cache::{cache_key, CacheKey, EmbeddingCache};
use super::mock::{MockChat, MockEmbedder};
use super::transport::{join_url, HttpTransport, Transport, TransportError};
use super::{Backend, EmbeddingVector, ProviderConfig, ProviderKind};
use crate::error::{Error, Result};

static REQUEST_SEQ: AtomicU64 = AtomicU64::new(1);

fn next_request_id() -> String {
    format!("req-{:08}", REQUEST_SEQ.fetch_add(1, Ordering::Relaxed))
}

enum Remote {
    Http {
        transport: Arc<dyn Transport>,
        api_key: Option<String>,
    },
    MockEmbed(MockEmbedder),
    MockChat(MockChat),
}

impl Remote {
    fn build(config: &ProviderConfig, transport: Option<Arc<dyn Transport>>) -> Result<Self> {
        config.validate()?;
        Ok(match (config.backend, config.kind) {
            (Backend::Mock, ProviderKind::Embedding) => Remote::MockEmbed(MockEmbedder),
            (Backend::Mock, ProviderKind::Chat) => {
                Remote::MockChat(MockChat::new(&config.mock_keywords))
            }
            (Backend::OpenAi, _) => {
                // Key resolution precedes any network activity.
                let api_key = config.resolve_api_key()?;
                let transport = match transport {
                    Some(t) => t,
                    None => Arc::new(HttpTransport::new().map_err(|e| Error::Config(e.message))?),
                };
                Remote::Http { transport, api_key }
            }
        })
    }
}

/// Batching, retrying, caching embedding client.
pub struct EmbeddingClient {
    config: ProviderConfig,
    model_id: Arc<str>,
    remote: Remote,
    cache: EmbeddingCache,
    requests: AtomicU64,
    retries: AtomicU64,
}

impl EmbeddingClient {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Self::build(config, None)
    }

    /// Uses `transport` instead of the default HTTP client.
    pub fn with_transport(config: ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        Self::build(config, Some(transport))
    }

    fn build(config: ProviderConfig, transport: Option<Arc<dyn Transport>>) -> Result<Self> {
        if config.kind != ProviderKind::Embedding {
            return Err(Error::Config(format!("{} is not an embedding provider", config.model_id)));
        }
        let remote = Remote::build(&config, transport)?;
        Ok(EmbeddingClient {
            model_id: config.model_id.as_str().into(),
            cache: EmbeddingCache::in_memory(&config.model_id),
            config,
            remote,
            requests: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        })
    }

    /// Backs the client with the on-disk cache file for its model.
    pub fn with_cache_dir(mut self, dir: impl AsRef<Path>) -> Result<Self> {
        self.cache = EmbeddingCache::open(dir, &self.config.model_id)?;
        Ok(self)
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Backend calls made so far (mock calls included).
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self.embed_texts(&[text.to_string()])?.remove(0))
    }

    /// Embeds `texts`, preserving order. Cached texts are served locally;
    /// misses are deduplicated and sent in batches of `max_batch`.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if let Some(i) = texts.iter().position(|t| t.is_empty()) {
            return Err(Error::InvalidInput(format!("text {i} is empty")));
        }
        let keys: Vec<CacheKey> = texts.iter().map(|t| cache_key(&self.model_id, t)).collect();

        let mut miss_order: Vec<CacheKey> = Vec::new();
        let mut miss_text: HashMap<CacheKey, &str> = HashMap::new();
        let mut miss_positions: HashMap<CacheKey, Vec<usize>> = HashMap::new();
        for (i, key) in keys.iter().enumerate() {
            if self.cache.get(key).is_some() {
                continue;
            }
            if miss_text.insert(*key, &texts[i]).is_none() {
                miss_order.push(*key);
            }
            miss_positions.entry(*key).or_default().push(i);
        }

        let batches: Vec<&[CacheKey]> = miss_order.chunks(self.config.max_batch).collect();
        let mut failed: Vec<usize> = Vec::new();
        let mut last_error = String::new();
        for wave in batches.chunks(self.config.max_in_flight) {
            let outcomes: Vec<Result<()>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| {
                        let batch_texts: Vec<&str> = batch.iter().map(|k| miss_text[k]).collect();
                        s.spawn(move || self.fetch_batch(batch, &batch_texts))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("embedding worker panicked")).collect()
            });
            for (batch, outcome) in wave.iter().zip(outcomes) {
                match outcome {
                    Ok(()) => {}
                    Err(e @ Error::DimensionMismatch { .. }) => return Err(e),
                    Err(e) => {
                        last_error = e.to_string();
                        for k in batch.iter() {
                            failed.extend(&miss_positions[k]);
                        }
                    }
                }
            }
        }
        if !failed.is_empty() {
            failed.sort_unstable();
            return Err(Error::EmbeddingFailed {
                failed_indices: failed,
                message: last_error,
            });
        }

        keys.iter()
            .map(|k| {
                let values = self.cache.get(k).expect("embedding present after fetch");
                Ok(EmbeddingVector::from_unit(values, self.model_id.clone()))
            })
            .collect()
    }

    fn fetch_batch(&self, keys: &[CacheKey], texts: &[&str]) -> Result<()> {
        let raw = self.call_with_retry(texts)?;
        if raw.len() != texts.len() {
            return Err(Error::InvalidInput(format!(
                "provider returned {} embeddings for {} inputs",
                raw.len(),
                texts.len()
            )));
        }
        let mut items = Vec::with_capacity(raw.len());
        for (key, values) in keys.iter().zip(raw) {
            let v = EmbeddingVector::normalized(values, self.model_id.clone())?;
            items.push((*key, Arc::<[f32]>::from(v.values())));
        }
        self.cache.insert_batch(items)
    }

    fn call_with_retry(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let policy = &self.config.retry;
        let mut attempt = 0;
        loop {
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self.call(texts) {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable && attempt < policy.max_retries => {
                    tracing::warn!(
                        "embedding batch on {} failed ({}), retry {}",
                        self.model_id,
                        e.message,
                        attempt + 1
                    );
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    std::thread::sleep(policy.backoff(attempt));
                    attempt += 1;
                }
                Err(e) => {
                    return Err(Error::EmbeddingFailed {
                        failed_indices: Vec::new(),
                        message: e.message,
                    })
                }
            }
        }
    }

    fn call(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, TransportError> {
        match &self.remote {
            Remote::MockEmbed(m) => Ok(texts.iter().map(|t| m.embed(t)).collect()),
            Remote::Http { transport, api_key } => {
                let body = json!({ "model": self.config.model_id, "input": texts });
                let url = join_url(&self.config.endpoint, "embeddings");
                let resp = transport.post_json(
                    &url,
                    api_key.as_deref(),
                    &body,
                    Duration::from_secs_f64(self.config.timeout_secs),
                )?;
                parse_embeddings(&resp, texts.len())
            }
            Remote::MockChat(_) => unreachable!("embedding client with chat backend"),
        }
    }
}

fn parse_embeddings(resp: &Value, n: usize) -> Result<Vec<Vec<f32>>, TransportError> {
    let bad = |m: &str| TransportError {
        message: format!("malformed embeddings response: {m}"),
        retryable: false,
    };
    let data = resp["data"].as_array().ok_or_else(|| bad("missing data"))?;
    let mut out: Vec<Option<Vec<f32>>> = vec![None; n];
    for (pos, item) in data.iter().enumerate() {
        let index = item["index"].as_u64().map(|i| i as usize).unwrap_or(pos);
        if index >= n {
            return Err(bad("index out of range"));
        }
        let values = item["embedding"]
            .as_array()
            .ok_or_else(|| bad("missing embedding"))?
            .iter()
            .map(|v| v.as_f64().map(|f| f as f32))
            .collect::<Option<Vec<f32>>>()
            .ok_or_else(|| bad("non-numeric value"))?;
        out[index] = Some(values);
    }
    out.into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| bad("missing entries"))
}

/// Chat-completion client.
pub struct ChatClient {
    config: ProviderConfig,
    remote: Remote,
    requests: AtomicU64,
    retries: AtomicU64,
}

impl ChatClient {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Self::build(config, None)
    }

    pub fn with_transport(config: ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        Self::build(config, Some(transport))
    }

    fn build(config: ProviderConfig, transport: Option<Arc<dyn Transport>>) -> Result<Self> {
        if config.kind != ProviderKind::Chat {
            return Err(Error::Config(format!("{} is not a chat provider", config.model_id)));
        }
        let remote = Remote::build(&config, transport)?;
        Ok(ChatClient {
            config,
            remote,
            requests: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    /// Sends `prompt` as a single user message and returns the raw
    /// completion text.
    pub fn chat_complete(&self, prompt: &str) -> Result<String> {
        let request_id = next_request_id();
        let policy = &self.config.retry;
        let mut attempt = 0;
        let text = loop {
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self.call(prompt) {
                Ok(text) => break text,
                Err(e) if e.retryable && attempt < policy.max_retries => {
                    tracing::warn!(
                        "chat request {request_id} on {} failed ({}), retry {}",
                        self.config.model_id,
                        e.message,
                        attempt + 1
                    );
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    std::thread::sleep(policy.backoff(attempt));
                    attempt += 1;
                }
                Err(e) => {
                    return Err(Error::Chat {
                        request_id,
                        message: e.message,
                    })
                }
            }
        };
        if text.trim().is_empty() {
            return Err(Error::Chat {
                request_id,
                message: "empty completion".into(),
            });
        }
        Ok(text)
    }

    fn call(&self, prompt: &str) -> Result<String, TransportError> {
        match &self.remote {
            Remote::MockChat(m) => Ok(m.complete(prompt)),
            Remote::Http { transport, api_key } => {
                let body = json!({
                    "model": self.config.model_id,
                    "messages": [{ "role": "user", "content": prompt }],
                    "temperature": self.config.temperature,
                });
                let url = join_url(&self.config.endpoint, "chat/completions");
                let resp = transport.post_json(
                    &url,
                    api_key.as_deref(),
                    &body,
                    Duration::from_secs_f64(self.config.timeout_secs),
                )?;
                resp["choices"][0]["message"]["content"]
                    .as_str()
                    .map(str::to_string)
                    .ok_or_else(|| TransportError {
                        message: "malformed chat response: missing choices[0].message.content"
                            .into(),
                        retryable: false,
                    })
            }
            Remote::MockEmbed(_) => unreachable!("chat client with embedding backend"),
        }
    }
}
