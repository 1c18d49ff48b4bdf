//! Uniform access to chat completion and text embedding.
//!
//! Every model call in the pipeline goes through [`ChatBackend`] or
//! [`Embedder`]. Two families of backends are provided: deterministic ones
//! ([`ScriptedBackend`], [`ReplayBackend`], [`HashedBigramEmbedder`]) for
//! offline runs and tests, and [`HttpBackend`] for OpenAI-compatible
//! providers.

mod embed;
mod http;
mod replay;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use embed::{HashedBigramEmbedder, DEFAULT_EMBED_DIM};
pub use http::{HttpBackend, HttpConfig, TokenBucket};
pub use replay::{RecordedExchange, RecordingBackend, ReplayBackend};
pub use scripted::{Matcher, ScriptedBackend, ScriptedBackendSpec, ScriptedEntry};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("no scripted entry matches prompt starting {0:?}")]
    NoScriptMatch(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("no texts to embed")]
    EmptyInput,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("http error after {attempts} attempts (status {status:?}): {message}")]
    Http { status: Option<u16>, attempts: u32, message: String },
    #[error("invalid backend spec: {0}")]
    InvalidSpec(String),
    #[error("no recorded exchange for prompt starting {0:?}")]
    ReplayMiss(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// A single system/user prompt pair and, once completed, its response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system: String,
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_id: Option<String>,
}

impl ChatExchange {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self { system: system.into(), user: user.into(), response: None, backend_id: None }
    }

    pub fn response_text(&self) -> &str {
        self.response.as_deref().unwrap_or("")
    }
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Raw completion. Callers normally go through [`ChatBackend::chat`].
    fn complete(&self, system: &str, user: &str) -> Result<String, GatewayError>;

    fn chat(&self, exchange: ChatExchange) -> Result<ChatExchange, GatewayError> {
        if exchange.system.trim().is_empty() || exchange.user.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let response = self.complete(&exchange.system, &exchange.user)?;
        if response.trim().is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        Ok(ChatExchange { response: Some(response), backend_id: Some(self.id().to_string()), ..exchange })
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, system: &str, user: &str) -> Result<String, GatewayError> {
        (**self).complete(system, user)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, system: &str, user: &str) -> Result<String, GatewayError> {
        (**self).complete(system, user)
    }
}

/// Chat helper mirroring the free-function form used throughout the pipeline.
pub fn chat(exchange: ChatExchange, backend: &dyn ChatBackend) -> Result<ChatExchange, GatewayError> {
    backend.chat(exchange)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    normalized: bool,
}

impl EmbeddingVector {
    /// Wraps raw values without normalizing.
    pub fn raw(values: Vec<f64>) -> Self {
        Self { values, normalized: false }
    }

    /// L2-normalizes `values`; an all-zero vector is kept as is and flagged
    /// as not normalized.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Self { values, normalized: false };
        }
        for v in &mut values {
            *v /= norm;
        }
        Self { values, normalized: true }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * factor).collect(), normalized: false }
    }
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        let out: Vec<_> = texts.iter().map(|t| self.embed_one(t)).collect::<Result<_, _>>()?;
        let dim = out[0].dim();
        if let Some(bad) = out.iter().find(|v| v.dim() != dim) {
            return Err(GatewayError::DimensionMismatch { left: dim, right: bad.dim() });
        }
        Ok(out)
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        (**self).embed_one(text)
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        (**self).embed(texts)
    }
}

/// Cosine similarity plus a flag set when either side is the zero vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub value: f64,
    pub degenerate: bool,
}

pub fn cosine_with_flag(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<Similarity, GatewayError> {
    if u.dim() != v.dim() {
        return Err(GatewayError::DimensionMismatch { left: u.dim(), right: v.dim() });
    }
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (a, b) in u.values.iter().zip(&v.values) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok(Similarity { value: 0.0, degenerate: true });
    }
    let value = (dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0);
    Ok(Similarity { value, degenerate: false })
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, GatewayError> {
    cosine_with_flag(u, v).map(|s| s.value)
}

/// 64-bit FNV-1a. Used wherever a seedless, process-stable hash is needed.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}
