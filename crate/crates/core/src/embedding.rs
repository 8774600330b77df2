//! Semantic similarity: embedding providers and cosine similarity.
//!
//! Vectors are L2-normalized at construction, so cosine similarity is a
//! plain dot product. Two providers ship here:
//!
//! * [`DeterministicEmbedder`] hashes each token (after [`tokenize`]) into
//!   one of `dim` buckets with seeded 64-bit FNV-1a and counts occurrences.
//!   It is fully offline and stable across platforms and releases. Texts
//!   that share more tokens get a higher cosine; token-disjoint texts are
//!   orthogonal unless two of their tokens collide in a bucket.
//! * [`HttpEmbedder`] posts `{"model": .., "input": [..]}` to an endpoint and
//!   accepts either `{"embeddings": [[..], ..]}` or the OpenAI-style
//!   `{"data": [{"embedding": [..], "index": i}, ..]}`.
//!
//! [`CachedEmbedder`] memoizes any provider keyed by provider, model and a
//! SHA-256 of the text.

use std::collections::HashMap;
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::textsim::tokenize;

/// Endpoint value selecting the offline hashing embedder.
pub const DETERMINISTIC_TEST_ENDPOINT: &str = "deterministic-test";

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding batch is empty")]
    EmptyBatch,
    #[error("embedding provider unreachable: {0}")]
    Unreachable(String),
    #[error("embedding provider rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("embedding provider returned a zero or non-finite vector for input {index}")]
    ZeroVector { index: usize },
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("malformed embedding response: {0}")]
    MalformedResponse(String),
    #[error("invalid embedding provider config: {0}")]
    InvalidConfig(String),
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
}

impl EmbeddingError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbeddingError::Unreachable(_))
    }
}

/// A unit-length embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit length. Zero, empty and non-finite
    /// vectors are rejected.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if values.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(EmbeddingError::ZeroVector { index: 0 });
        }
        let values = if (norm - 1.0).abs() <= f64::EPSILON {
            values
        } else {
            values.into_iter().map(|v| v / norm).collect()
        };
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }
}

impl std::ops::Neg for &EmbeddingVector {
    type Output = EmbeddingVector;

    fn neg(self) -> EmbeddingVector {
        EmbeddingVector {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if u.dim() != v.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingProviderConfig {
    /// URL, or `deterministic-test` for the offline hashing embedder.
    pub endpoint: String,
    pub model: String,
    pub batch_size: usize,
    pub timeout_secs: f64,
    /// Name of the environment variable holding the API key, if any.
    pub credential_env: Option<String>,
    /// Maximum concurrent batch requests.
    pub parallelism: usize,
    pub max_retries: u32,
    /// Bucket count for the deterministic embedder.
    pub dim: usize,
    /// Hash seed for the deterministic embedder.
    pub seed: u64,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: DETERMINISTIC_TEST_ENDPOINT.to_string(),
            model: "fnv-hash".to_string(),
            batch_size: 32,
            timeout_secs: 30.0,
            credential_env: None,
            parallelism: 4,
            max_retries: 2,
            dim: 1024,
            seed: 0,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.batch_size == 0 {
            return Err(EmbeddingError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(EmbeddingError::InvalidConfig("timeout_secs must be > 0".into()));
        }
        if self.parallelism == 0 {
            return Err(EmbeddingError::InvalidConfig("parallelism must be >= 1".into()));
        }
        if self.endpoint == DETERMINISTIC_TEST_ENDPOINT && self.dim == 0 {
            return Err(EmbeddingError::InvalidConfig("dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

pub trait Embedder: Send + Sync {
    /// Identifies the provider in cache keys.
    fn provider_id(&self) -> &str;

    fn model(&self) -> &str;

    /// One unit vector per text, in input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }

    fn model(&self) -> &str {
        (**self).model()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
}

/// Builds the provider named by `cfg.endpoint`.
pub fn provider_from_config(cfg: &EmbeddingProviderConfig) -> Result<Box<dyn Embedder>, EmbeddingError> {
    cfg.validate()?;
    if cfg.endpoint == DETERMINISTIC_TEST_ENDPOINT {
        Ok(Box::new(DeterministicEmbedder::new(cfg.dim, cfg.seed)))
    } else {
        Ok(Box::new(HttpEmbedder::new(cfg.clone())?))
    }
}

/// Embeds `texts` with the provider described by `cfg`.
pub fn embed_batch(texts: &[&str], cfg: &EmbeddingProviderConfig) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    provider_from_config(cfg)?.embed_batch(texts)
}

fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Offline bag-of-tokens embedder (feature hashing with FNV-1a).
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dim: usize,
    seed: u64,
}

impl DeterministicEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(self.seed, token.as_bytes()) % self.dim as u64) as usize
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut values = vec![0.0; self.dim];
        for token in tokenize(text).iter() {
            values[self.bucket(token)] += 1.0;
        }
        EmbeddingVector::new(values)
    }
}

impl Default for DeterministicEmbedder {
    fn default() -> Self {
        let cfg = EmbeddingProviderConfig::default();
        Self::new(cfg.dim, cfg.seed)
    }
}

impl Embedder for DeterministicEmbedder {
    fn provider_id(&self) -> &str {
        DETERMINISTIC_TEST_ENDPOINT
    }

    fn model(&self) -> &str {
        "fnv-hash"
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::EmptyBatch);
        }
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.embed_one(t)
                    .map_err(|_| EmbeddingError::ZeroVector { index })
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EmbedResponse {
    Plain { embeddings: Vec<Vec<f64>> },
    OpenAi { data: Vec<OpenAiItem> },
}

#[derive(Deserialize)]
struct OpenAiItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl EmbedResponse {
    fn into_rows(self) -> Vec<Vec<f64>> {
        match self {
            EmbedResponse::Plain { embeddings } => embeddings,
            EmbedResponse::OpenAi { mut data } => {
                if data.iter().all(|d| d.index.is_some()) {
                    data.sort_by_key(|d| d.index);
                }
                data.into_iter().map(|d| d.embedding).collect()
            }
        }
    }
}

/// Blocking HTTP embedding client. Must not be called from inside an async
/// runtime.
pub struct HttpEmbedder {
    cfg: EmbeddingProviderConfig,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpEmbedder")
            .field("endpoint", &self.cfg.endpoint)
            .field("model", &self.cfg.model)
            .finish_non_exhaustive()
    }
}

impl HttpEmbedder {
    pub fn new(cfg: EmbeddingProviderConfig) -> Result<Self, EmbeddingError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| EmbeddingError::InvalidConfig(e.to_string()))?;
        Ok(Self { cfg, client })
    }

    fn request_once(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut req = self.client.post(&self.cfg.endpoint).json(&EmbedRequest {
            model: &self.cfg.model,
            input: texts,
        });
        if let Some(var) = &self.cfg.credential_env {
            let key = std::env::var(var).map_err(|_| EmbeddingError::MissingCredential(var.clone()))?;
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| EmbeddingError::Unreachable(e.without_url().to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(EmbeddingError::Unreachable(format!("HTTP {}", status.as_u16())));
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(EmbeddingError::Rejected {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: EmbedResponse = resp
            .json()
            .map_err(|e| EmbeddingError::MalformedResponse(e.without_url().to_string()))?;
        Ok(parsed.into_rows())
    }

    fn request_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut attempt = 0;
        loop {
            match self.request_once(texts) {
                Err(e) if e.is_retryable() && attempt < self.cfg.max_retries => {
                    std::thread::sleep(Duration::from_millis(100 << attempt.min(6)));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

impl Embedder for HttpEmbedder {
    fn provider_id(&self) -> &str {
        &self.cfg.endpoint
    }

    fn model(&self) -> &str {
        &self.cfg.model
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::EmptyBatch);
        }
        let chunks: Vec<&[&str]> = texts.chunks(self.cfg.batch_size).collect();
        let mut rows: Vec<Result<Vec<Vec<f64>>, EmbeddingError>> = Vec::with_capacity(chunks.len());
        for wave in chunks.chunks(self.cfg.parallelism) {
            let results = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|chunk| s.spawn(move || self.request_batch(chunk)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding worker panicked"))
                    .collect::<Vec<_>>()
            });
            rows.extend(results);
        }

        let mut out = Vec::with_capacity(texts.len());
        let mut dim = None;
        for (chunk, result) in chunks.iter().zip(rows) {
            let result = result?;
            if result.len() != chunk.len() {
                return Err(EmbeddingError::MalformedResponse(format!(
                    "expected {} vectors, got {}",
                    chunk.len(),
                    result.len()
                )));
            }
            for row in result {
                let index = out.len();
                let v = EmbeddingVector::new(row).map_err(|_| EmbeddingError::ZeroVector { index })?;
                match dim {
                    None => dim = Some(v.dim()),
                    Some(d) if d != v.dim() => {
                        return Err(EmbeddingError::DimensionMismatch { left: d, right: v.dim() })
                    }
                    _ => {}
                }
                out.push(v);
            }
        }
        Ok(out)
    }
}

type CacheKey = [u8; 32];

/// Memoizing wrapper; safe to share across threads.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: RwLock<HashMap<CacheKey, EmbeddingVector>>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.read().expect("embedding cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(&self, text: &str) -> CacheKey {
        let mut h = Sha256::new();
        h.update(self.inner.provider_id().as_bytes());
        h.update([0]);
        h.update(self.inner.model().as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        h.finalize().into()
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn model(&self) -> &str {
        self.inner.model()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::EmptyBatch);
        }
        let keys: Vec<CacheKey> = texts.iter().map(|t| self.key(t)).collect();
        let mut found: Vec<Option<EmbeddingVector>> = {
            let cache = self.cache.read().expect("embedding cache poisoned");
            keys.iter().map(|k| cache.get(k).cloned()).collect()
        };

        // first position of each distinct missing text
        let mut pending: HashMap<CacheKey, usize> = HashMap::new();
        let mut miss_positions = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            if found[i].is_none() && !pending.contains_key(k) {
                pending.insert(*k, miss_positions.len());
                miss_positions.push(i);
            }
        }
        if !miss_positions.is_empty() {
            let miss_texts: Vec<&str> = miss_positions.iter().map(|&i| texts[i]).collect();
            let fresh = self.inner.embed_batch(&miss_texts).map_err(|e| match e {
                EmbeddingError::ZeroVector { index } => EmbeddingError::ZeroVector {
                    index: miss_positions[index],
                },
                other => other,
            })?;
            let mut cache = self.cache.write().expect("embedding cache poisoned");
            for (pos, v) in miss_positions.iter().zip(&fresh) {
                cache.insert(keys[*pos], v.clone());
            }
            for (i, k) in keys.iter().enumerate() {
                if found[i].is_none() {
                    found[i] = Some(fresh[pending[k]].clone());
                }
            }
        }
        Ok(found.into_iter().map(|v| v.expect("filled above")).collect())
    }
}
