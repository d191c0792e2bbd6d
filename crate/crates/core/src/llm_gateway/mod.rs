//! The single boundary to external models.
//!
//! A [`Gateway`] wraps a chat backend and an optional embedding backend with
//! retry, exponential backoff, and a bound on concurrent requests. Backends are
//! either the HTTP client in [`http`] or the deterministic mocks in [`mock`].

pub mod http;
pub mod mock;

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::text::truncate_head;

/// Where and how to reach one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointProfile {
    pub name: String,
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub retry_limit: u32,
    pub timeout_secs: f64,
    /// Head-first truncation budget for embedding inputs, in whitespace tokens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_input_tokens: Option<usize>,
}

impl EndpointProfile {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        let name = name.into();
        EndpointProfile {
            api_key_env: api_key_env_for(&name),
            name,
            base_url: base_url.into(),
            model_name: model_name.into(),
            max_in_flight: 4,
            retry_limit: 3,
            timeout_secs: 300.0,
            max_input_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

/// `SEA_API_KEY_<NAME>` with the endpoint name upper-cased and non-alphanumerics
/// replaced by underscores.
pub fn api_key_env_for(endpoint: &str) -> String {
    let suffix: String = endpoint
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("SEA_API_KEY_{suffix}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_new_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: 0.0,
            max_new_tokens: 2048,
            seed: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::Config("temperature must be non-negative".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(GatewayError::Config("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// A finite, non-empty embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::Protocol("embedding has zero dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::Protocol("embedding contains a non-finite value".into()));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let na = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = other.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = GatewayError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("model returned an empty completion")]
    EmptyResponse,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("no embedding backend configured for endpoint `{0}`")]
    NoEmbeddingBackend(String),
}

pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub config: &'a GenerationConfig,
}

/// One attempt at a chat completion. Retries happen in the [`Gateway`].
pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, BackendError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;
}

/// Anything that turns texts into embeddings, in order.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;
}

/// Counting semaphore bounding concurrent backend calls.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        InFlightLimiter {
            max: max.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.max {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.limiter.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.limiter.freed.notify_one();
    }
}

/// Delay before retry `n` (1-based) is `base * 2^(n-1)`, capped at `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            base: Duration::from_millis(500),
            max: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    pub const NONE: Backoff = Backoff {
        base: Duration::ZERO,
        max: Duration::ZERO,
    };

    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.base.saturating_mul(factor).min(self.max)
    }
}

const EMBED_BATCH: usize = 16;

#[derive(Clone)]
pub struct Gateway {
    profile: EndpointProfile,
    chat: Arc<dyn ChatBackend>,
    embedder: Option<Arc<dyn EmbeddingBackend>>,
    limiter: Arc<InFlightLimiter>,
    backoff: Backoff,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("profile", &self.profile)
            .field("has_embedder", &self.embedder.is_some())
            .field("backoff", &self.backoff)
            .finish()
    }
}

impl Gateway {
    pub fn new(profile: EndpointProfile, chat: Arc<dyn ChatBackend>) -> Result<Self, GatewayError> {
        profile.validate()?;
        Ok(Gateway {
            limiter: Arc::new(InFlightLimiter::new(profile.max_in_flight)),
            profile,
            chat,
            embedder: None,
            backoff: Backoff::default(),
        })
    }

    /// HTTP gateway for an OpenAI-compatible server. The API key, if the
    /// profile's variable is set, is read once here.
    pub fn http(profile: EndpointProfile) -> Result<Self, GatewayError> {
        let backend = Arc::new(http::OpenAiCompatible::from_profile(&profile)?);
        Ok(Gateway::new(profile, backend.clone())?.with_embedder(backend))
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn EmbeddingBackend>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn profile(&self) -> &EndpointProfile {
        &self.profile
    }

    pub fn max_in_flight(&self) -> usize {
        self.limiter.max()
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, BackendError>) -> Result<T, GatewayError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.limiter.acquire();
                call()
            };
            match result {
                Ok(value) => return Ok(value),
                Err(BackendError::Fatal(message)) => return Err(GatewayError::Rejected(message)),
                Err(BackendError::Transient(message)) => {
                    if attempt > self.profile.retry_limit {
                        return Err(GatewayError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    log::debug!("endpoint `{}` attempt {attempt} failed: {message}", self.profile.name);
                    thread::sleep(self.backoff.delay(attempt));
                }
            }
        }
    }

    /// One chat completion. Transient failures are retried up to the profile's
    /// `retry_limit` (so at most `retry_limit + 1` attempts).
    pub fn complete(&self, config: &GenerationConfig, prompt: &str) -> Result<String, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::Precondition("prompt is empty".into()));
        }
        config.validate()?;
        let request = ChatRequest {
            model: &self.profile.model_name,
            prompt,
            config,
        };
        let text = self.with_retries(|| self.chat.chat(&request))?;
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        Ok(text)
    }

    fn embed_inputs(&self, texts: &[String]) -> Result<Vec<String>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::Precondition("no texts to embed".into()));
        }
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.trim().is_empty() {
                    return Err(GatewayError::Precondition(format!("text {i} is empty")));
                }
                Ok(match self.profile.max_input_tokens {
                    Some(budget) => truncate_head(t, budget).text.to_string(),
                    None => t.clone(),
                })
            })
            .collect()
    }

    fn embed_batches(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let backend = self
            .embedder
            .as_ref()
            .ok_or_else(|| GatewayError::NoEmbeddingBackend(self.profile.name.clone()))?;
        let batches: Vec<&[String]> = inputs.chunks(EMBED_BATCH).collect();
        let mut results: Vec<Option<Result<Vec<Vec<f64>>, GatewayError>>> = vec![None; batches.len()];
        thread::scope(|scope| {
            let handles: Vec<_> = batches
                .iter()
                .map(|batch| {
                    scope.spawn(|| {
                        let out = self.with_retries(|| backend.embed(&self.profile.model_name, batch))?;
                        if out.len() != batch.len() {
                            return Err(GatewayError::Protocol(format!(
                                "asked for {} embeddings, got {}",
                                batch.len(),
                                out.len()
                            )));
                        }
                        Ok(out)
                    })
                })
                .collect();
            for (slot, handle) in results.iter_mut().zip(handles) {
                *slot = Some(
                    handle
                        .join()
                        .unwrap_or_else(|_| Err(GatewayError::Protocol("embedding worker panicked".into()))),
                );
            }
        });
        let mut flat = Vec::with_capacity(inputs.len());
        for result in results.into_iter().flatten() {
            flat.extend(result?);
        }
        Ok(flat)
    }
}

impl Embedder for Gateway {
    /// One vector per text, in input order, all of the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let inputs = self.embed_inputs(texts)?;
        let raw = self.embed_batches(&inputs)?;
        let vectors = raw
            .into_iter()
            .map(EmbeddingVector::new)
            .collect::<Result<Vec<_>, _>>()?;
        let dim = vectors[0].dim();
        if let Some(bad) = vectors.iter().position(|v| v.dim() != dim) {
            return Err(GatewayError::Protocol(format!(
                "embedding {bad} has dimension {} but the batch uses {dim}",
                vectors[bad].dim()
            )));
        }
        Ok(vectors)
    }
}
