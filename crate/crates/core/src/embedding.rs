//! Text embedding providers.
//!
//! Every provider returns unit-norm vectors so cosine similarity is a plain
//! dot product. The mock provider is a pure function of
//! `(provider_id, dimension, text bytes)`; the remote provider speaks the
//! common `{"input": [...], "model": ...}` embeddings API.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{Endpoint, HttpFailure, JsonPoster};
use crate::retry::RetryPolicy;

pub const MIN_DIMENSION: usize = 8;
pub const DEFAULT_MOCK_DIMENSION: usize = 64;
pub const DEFAULT_MOCK_ID: &str = "mock-embed-v1";
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("embedding provider unavailable after {attempts} attempt(s): {message}")]
    ProviderUnavailable { attempts: u32, message: String },
    #[error("text at position {0} is empty")]
    EmptyText(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("malformed provider reply: {0}")]
    MalformedReply(String),
    #[error("invalid provider spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    Remote,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mock => "mock",
            Self::Remote => "remote",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingProviderSpec {
    pub provider_id: String,
    pub dimension: usize,
    pub kind: ProviderKind,
}

impl EmbeddingProviderSpec {
    pub fn mock(provider_id: impl Into<String>, dimension: usize) -> Self {
        Self {
            provider_id: provider_id.into(),
            dimension,
            kind: ProviderKind::Mock,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dimension < MIN_DIMENSION {
            return Err(EmbedError::InvalidSpec(format!(
                "dimension {} is below the minimum of {MIN_DIMENSION}",
                self.dimension
            )));
        }
        if self.provider_id.is_empty() {
            return Err(EmbedError::InvalidSpec("provider_id is empty".into()));
        }
        Ok(())
    }
}

impl Default for EmbeddingProviderSpec {
    fn default() -> Self {
        Self::mock(DEFAULT_MOCK_ID, DEFAULT_MOCK_DIMENSION)
    }
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Scales `values` to unit length. Returns `None` for a zero or
    /// non-finite vector.
    pub fn normalized(mut values: Vec<f64>) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Some(Self(values))
    }

    /// Wraps values as-is. Used when decoding vectors that were normalized
    /// before they were stored.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }
}

impl std::ops::Neg for &EmbeddingVector {
    type Output = EmbeddingVector;

    fn neg(self) -> EmbeddingVector {
        EmbeddingVector(self.0.iter().map(|v| -v).collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dimension() != b.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    Ok(dot(a.values(), b.values()).clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbeddingProviderSpec;

    /// Embeds every text, preserving order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        Ok(out.pop().expect("one vector per text"))
    }
}

fn check_batch(texts: &[String]) -> Result<(), EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::EmptyBatch);
    }
    if let Some(i) = texts.iter().position(|t| t.is_empty()) {
        return Err(EmbedError::EmptyText(i));
    }
    Ok(())
}

/// Deterministic provider: standard-normal draws seeded from a SHA-256 of the
/// provider id and text, normalized onto the unit sphere.
#[derive(Debug, Clone, Default)]
pub struct MockEmbedder {
    spec: EmbeddingProviderSpec,
}

impl MockEmbedder {
    pub fn new(provider_id: impl Into<String>, dimension: usize) -> Result<Self, EmbedError> {
        let spec = EmbeddingProviderSpec::mock(provider_id, dimension);
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn seed_for(&self, text: &str) -> u64 {
        seed_for(&self.spec.provider_id, text)
    }

    fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed_for(text));
        loop {
            let draws: Vec<f64> = (0..self.spec.dimension)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            if let Some(v) = EmbeddingVector::normalized(draws) {
                return v;
            }
        }
    }
}

/// Stable 64-bit seed of `(provider_id, text)`. The id is length-prefixed so
/// distinct pairs never hash the same byte string.
pub fn seed_for(provider_id: &str, text: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update((provider_id.len() as u64).to_le_bytes());
    hasher.update(provider_id.as_bytes());
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

impl Embedder for MockEmbedder {
    fn spec(&self) -> &EmbeddingProviderSpec {
        &self.spec
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        check_batch(texts)?;
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

pub const DEFAULT_EMBED_IN_FLIGHT: usize = 4;

#[derive(Serialize)]
struct EmbedRequestBody<'a> {
    input: &'a [String],
    model: &'a str,
}

#[derive(Deserialize)]
struct EmbedReplyBody {
    data: Vec<EmbedReplyItem>,
}

#[derive(Deserialize)]
struct EmbedReplyItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// HTTP embeddings client with retry and an in-flight cap.
pub struct RemoteEmbedder {
    spec: EmbeddingProviderSpec,
    poster: JsonPoster,
}

impl RemoteEmbedder {
    pub fn new(
        model: impl Into<String>,
        dimension: usize,
        endpoint: Endpoint,
        retry: RetryPolicy,
        max_in_flight: usize,
    ) -> Result<Self, EmbedError> {
        let spec = EmbeddingProviderSpec {
            provider_id: model.into(),
            dimension,
            kind: ProviderKind::Remote,
        };
        spec.validate()?;
        let poster = JsonPoster::new(endpoint, retry, max_in_flight).map_err(EmbedError::InvalidSpec)?;
        Ok(Self { spec, poster })
    }

    /// Endpoint from `EMBED_API_URL`, token from `EMBED_API_KEY`.
    pub fn from_env(model: impl Into<String>, dimension: usize) -> Result<Self, EmbedError> {
        let endpoint = Endpoint::from_env("EMBED_API_URL", "EMBED_API_KEY")
            .ok_or_else(|| EmbedError::InvalidSpec("EMBED_API_URL is not set".into()))?;
        Self::new(
            model,
            dimension,
            endpoint,
            RetryPolicy::default(),
            DEFAULT_EMBED_IN_FLIGHT,
        )
    }
}

impl Embedder for RemoteEmbedder {
    fn spec(&self) -> &EmbeddingProviderSpec {
        &self.spec
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        check_batch(texts)?;
        let body = EmbedRequestBody {
            input: texts,
            model: &self.spec.provider_id,
        };
        let value = self.poster.post(&body).map_err(|(failure, attempts)| match failure {
            HttpFailure::Transient(m) | HttpFailure::Rejected(m) => EmbedError::ProviderUnavailable {
                attempts,
                message: format!("{}: {m}", self.poster.url()),
            },
            HttpFailure::BadBody(m) => EmbedError::MalformedReply(m),
        })?;
        let reply: EmbedReplyBody =
            serde_json::from_value(value).map_err(|e| EmbedError::MalformedReply(e.to_string()))?;
        if reply.data.len() != texts.len() {
            return Err(EmbedError::MalformedReply(format!(
                "{} vectors for {} texts",
                reply.data.len(),
                texts.len()
            )));
        }
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        for (pos, item) in reply.data.into_iter().enumerate() {
            let idx = item.index.unwrap_or(pos);
            if idx >= slots.len() || slots[idx].is_some() {
                return Err(EmbedError::MalformedReply(format!("bad or repeated index {idx}")));
            }
            if item.embedding.len() != self.spec.dimension {
                return Err(EmbedError::DimensionMismatch {
                    expected: self.spec.dimension,
                    actual: item.embedding.len(),
                });
            }
            slots[idx] = Some(
                EmbeddingVector::normalized(item.embedding)
                    .ok_or_else(|| EmbedError::MalformedReply(format!("zero vector at index {idx}")))?,
            );
        }
        Ok(slots.into_iter().map(|v| v.expect("all slots filled")).collect())
    }
}
