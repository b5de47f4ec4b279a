//! Chat-completion and embedding access.
//!
//! Every network call in the crate goes through [`Gateway`], which wraps a
//! [`ChatModel`] and an [`Embedder`] with retries, per-attempt timeouts and a
//! bound on in-flight requests. Offline substitutes live in [`stub`].

pub mod gemini;
pub mod stub;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

pub use gemini::{GeminiChat, GeminiEmbedder};
pub use stub::{HashingEmbedder, ScriptEntry, ScriptedChat, ScriptedFailure, ScriptedReply};

pub const DEFAULT_DIMENSION: usize = 768;
pub const DEFAULT_CHAT_MODEL: &str = "gemini-2.0-flash";
pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-004";
pub const DEFAULT_BASE_URL: &str = "https://generativelanguage.googleapis.com";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    /// JSON schema the response should follow; `None` for free text.
    pub schema_hint: Option<serde_json::Value>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            schema_hint: None,
            temperature: 0.0,
        }
    }

    pub fn with_schema(mut self, schema: serde_json::Value) -> Self {
        self.schema_hint = Some(schema);
        self
    }

    fn check(&self) -> Result<(), GatewayError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompts must be non-empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// A finite, not-all-zero real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VectorError {
    #[error("vector is empty")]
    Empty,
    #[error("vector contains a non-finite value at position {0}")]
    NonFinite(usize),
    #[error("vector is all zeros")]
    Zero,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(pos));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(VectorError::Zero);
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = VectorError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {message}")]
    Provider { status: u16, message: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<GatewayError>,
    },
    #[error("embedding has {got} dimensions, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid embedding: {0}")]
    InvalidVector(#[from] VectorError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("no scripted reply matches the request")]
    Unscripted,
}

impl GatewayError {
    /// Transport failures, timeouts and 5xx statuses are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Timeout(_) | GatewayError::Transport(_) => true,
            GatewayError::Provider { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[async_trait]
pub trait ChatModel: Send + Sync {
    /// Returns the raw model text.
    async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

#[async_trait]
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    async fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, failed_attempts: u32) -> Duration {
        let factor = 1u32 << failed_attempts.saturating_sub(1).min(16);
        self.initial_backoff.saturating_mul(factor)
    }
}

/// Settings read from the environment or a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub chat_model: String,
    pub embedding_model: String,
    pub chat_base_url: String,
    pub embedding_base_url: String,
    pub api_key: Option<String>,
    pub dimension: usize,
    pub retry_limit: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// Use the hashing embedder and scripted chat instead of the remote API.
    pub stub: bool,
    /// Script of canned chat replies used when `stub` is on.
    pub stub_script: Option<std::path::PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            chat_model: DEFAULT_CHAT_MODEL.into(),
            embedding_model: DEFAULT_EMBEDDING_MODEL.into(),
            chat_base_url: DEFAULT_BASE_URL.into(),
            embedding_base_url: DEFAULT_BASE_URL.into(),
            api_key: None,
            dimension: DEFAULT_DIMENSION,
            retry_limit: 3,
            backoff_ms: 500,
            timeout_secs: 60,
            max_in_flight: 8,
            stub: false,
            stub_script: None,
        }
    }
}

impl GatewayConfig {
    /// Overlays `SCALESMITH_*` environment variables onto `self`.
    pub fn apply_env(mut self) -> Self {
        self.apply_vars(|key| std::env::var(key).ok());
        self
    }

    fn apply_vars(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("SCALESMITH_CHAT_MODEL") {
            self.chat_model = v;
        }
        if let Some(v) = get("SCALESMITH_EMBEDDING_MODEL") {
            self.embedding_model = v;
        }
        if let Some(v) = get("SCALESMITH_CHAT_BASE_URL") {
            self.chat_base_url = v;
        }
        if let Some(v) = get("SCALESMITH_EMBEDDING_BASE_URL") {
            self.embedding_base_url = v;
        }
        if let Some(v) = get("SCALESMITH_API_KEY").or_else(|| get("GEMINI_API_KEY")) {
            self.api_key = Some(v);
        }
        if let Some(v) = get("SCALESMITH_DIMENSION").and_then(|v| v.parse().ok()) {
            self.dimension = v;
        }
        if let Some(v) = get("SCALESMITH_RETRY_LIMIT").and_then(|v| v.parse().ok()) {
            self.retry_limit = v;
        }
        if let Some(v) = get("SCALESMITH_TIMEOUT_SECS").and_then(|v| v.parse().ok()) {
            self.timeout_secs = v;
        }
        if let Some(v) = get("SCALESMITH_STUB") {
            self.stub = matches!(v.as_str(), "1" | "true" | "yes" | "on");
        }
        if let Some(v) = get("SCALESMITH_STUB_SCRIPT") {
            self.stub_script = Some(v.into());
        }
    }

    /// Builds a gateway for this configuration.
    pub fn build(&self) -> Result<Gateway, GatewayError> {
        let (chat, embedder): (Arc<dyn ChatModel>, Arc<dyn Embedder>) = if self.stub {
            let chat = match &self.stub_script {
                Some(path) => ScriptedChat::from_file(path)?,
                None => ScriptedChat::default(),
            };
            (Arc::new(chat), Arc::new(HashingEmbedder::new(self.dimension)))
        } else {
            let key = self.api_key.clone().ok_or_else(|| {
                GatewayError::InvalidRequest(
                    "no API key configured (set SCALESMITH_API_KEY or enable stub mode)".into(),
                )
            })?;
            (
                Arc::new(GeminiChat::new(&self.chat_base_url, &self.chat_model, &key)),
                Arc::new(GeminiEmbedder::new(
                    &self.embedding_base_url,
                    &self.embedding_model,
                    &key,
                    self.dimension,
                )),
            )
        };
        Ok(Gateway::new(chat, embedder)
            .with_retry(RetryPolicy {
                max_attempts: self.retry_limit.max(1),
                initial_backoff: Duration::from_millis(self.backoff_ms),
            })
            .with_timeout(Duration::from_secs(self.timeout_secs.max(1)))
            .with_max_in_flight(self.max_in_flight))
    }
}

/// Retrying, rate-bounded front for a chat model and an embedder.
#[derive(Clone)]
pub struct Gateway {
    chat: Arc<dyn ChatModel>,
    embedder: Arc<dyn Embedder>,
    retry: RetryPolicy,
    timeout: Duration,
    permits: Arc<Semaphore>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("dimension", &self.embedder.dimension())
            .field("retry", &self.retry)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(chat: Arc<dyn ChatModel>, embedder: Arc<dyn Embedder>) -> Self {
        Self {
            chat,
            embedder,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(60),
            permits: Arc::new(Semaphore::new(8)),
        }
    }

    /// Fully offline gateway: hashing embedder plus the given scripted chat.
    pub fn stub(chat: ScriptedChat, dimension: usize) -> Self {
        Self::new(Arc::new(chat), Arc::new(HashingEmbedder::new(dimension)))
            .with_retry(RetryPolicy {
                max_attempts: 3,
                initial_backoff: Duration::ZERO,
            })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.permits = Arc::new(Semaphore::new(n.max(1)));
        self
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    /// Sends a chat request and returns the model text exactly as received.
    pub async fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        request.check()?;
        self.with_retries(|| self.chat.complete(request)).await
    }

    pub async fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("cannot embed empty text".into()));
        }
        let values = self.with_retries(|| self.embedder.embed(text)).await?;
        let expected = self.embedder.dimension();
        if values.len() != expected {
            return Err(GatewayError::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(EmbeddingVector::new(values)?)
    }

    async fn with_retries<'a, T, F, Fut>(&'a self, mut call: F) -> Result<T, GatewayError>
    where
        F: FnMut() -> Fut,
        Fut: std::future::Future<Output = Result<T, GatewayError>> + 'a,
    {
        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self
                    .permits
                    .acquire()
                    .await
                    .map_err(|_| GatewayError::Transport("gateway shut down".into()))?;
                match tokio::time::timeout(self.timeout, call()).await {
                    Ok(result) => result,
                    Err(_) => Err(GatewayError::Timeout(self.timeout)),
                }
            };
            match outcome {
                Ok(value) => return Ok(value),
                Err(err) if !err.is_retryable() => return Err(err),
                Err(err) if attempt >= max_attempts => {
                    return Err(GatewayError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(err),
                    })
                }
                Err(err) => {
                    let delay = self.retry.backoff(attempt);
                    tracing::warn!(attempt, ?delay, error = %err, "retrying gateway call");
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }
}
