//! Fixed-dimension unit-norm text embeddings and the cosine primitive.
//!
//! Two backends: a remote embedding service (OpenAI-style wire format) and a
//! deterministic local fallback that feature-hashes character 3-grams. All
//! embeddings are L2-normalized at construction, so cosine similarity reduces
//! to a dot product everywhere downstream.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Norm tolerance for vectors that claim to be unit-length.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text must be nonempty")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector norm {norm} is too small to normalize")]
    ZeroNorm { norm: f64 },
    #[error("vector norm {norm} is not within {UNIT_NORM_TOL} of 1")]
    NonUnitEmbedding { norm: f64 },
    #[error("remote embedding service unavailable after {attempts} attempts: {last_error}")]
    RemoteUnavailable { attempts: u32, last_error: String },
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
    #[error("cache i/o: {0}")]
    CacheIo(#[from] std::io::Error),
}

/// An L2-normalized real vector. The unit-norm invariant is established at
/// construction and relied on by every similarity computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Normalizes `values` to unit length.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = l2_norm(&values);
        if norm < 1e-12 {
            return Err(EmbedError::ZeroNorm { norm });
        }
        let values = values.into_iter().map(|v| v / norm).collect();
        Ok(Self { values })
    }

    /// Accepts a vector that is already unit-norm (within [`UNIT_NORM_TOL`]).
    pub fn from_unit(values: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(EmbedError::NonUnitEmbedding { norm });
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cosine similarity of two unit vectors: a plain dot product.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(dot(a.values(), b.values()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedBackend {
    Remote,
    LocalDeterministic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub backend: EmbedBackend,
    pub dim: usize,
    /// Remote endpoint URL; ignored by the local backend.
    pub endpoint: Option<String>,
    /// Remote model name sent in the request body.
    pub model: Option<String>,
    /// Environment variable holding the API key; the key itself is never logged.
    pub api_key_env: String,
    pub cache_path: Option<PathBuf>,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl EmbedderConfig {
    pub fn local(dim: usize) -> Self {
        Self {
            backend: EmbedBackend::LocalDeterministic,
            dim,
            endpoint: None,
            model: None,
            api_key_env: "DEDUCT_API_KEY".to_string(),
            cache_path: None,
            timeout_ms: 30_000,
            max_retries: 2,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < 8 {
            return Err(EmbedError::InvalidConfig(format!(
                "dim must be >= 8, got {}",
                self.dim
            )));
        }
        if self.max_retries > 5 {
            return Err(EmbedError::InvalidConfig(format!(
                "max_retries must be <= 5, got {}",
                self.max_retries
            )));
        }
        if self.backend == EmbedBackend::Remote && self.endpoint.is_none() {
            return Err(EmbedError::InvalidConfig(
                "remote backend requires an endpoint".to_string(),
            ));
        }
        Ok(())
    }
}

/// Text embedder over one of the configured backends. The remote path caches
/// results by content hash when `cache_path` is set; the cache tolerates
/// concurrent readers, writes are serialized through a mutex.
pub struct Embedder {
    cfg: EmbedderConfig,
    cache: Option<Mutex<()>>,
    http: Option<reqwest::blocking::Client>,
}

impl Embedder {
    pub fn new(cfg: EmbedderConfig) -> Result<Self, EmbedError> {
        cfg.validate()?;
        let http = match cfg.backend {
            EmbedBackend::Remote => Some(
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_millis(cfg.timeout_ms))
                    .build()
                    .map_err(|e| EmbedError::InvalidConfig(e.to_string()))?,
            ),
            EmbedBackend::LocalDeterministic => None,
        };
        let cache = cfg.cache_path.as_ref().map(|_| Mutex::new(()));
        Ok(Self { cfg, cache, http })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    pub fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        match self.cfg.backend {
            EmbedBackend::LocalDeterministic => local_hash_embedding(text, self.cfg.dim),
            EmbedBackend::Remote => {
                if let Some(hit) = self.cache_lookup(text)? {
                    return Ok(hit);
                }
                let emb = self.embed_remote(text)?;
                self.cache_store(text, &emb)?;
                Ok(emb)
            }
        }
    }

    fn embed_remote(&self, text: &str) -> Result<Embedding, EmbedError> {
        let endpoint = self.cfg.endpoint.as_deref().expect("validated");
        let http = self.http.as_ref().expect("remote backend");
        let api_key = std::env::var(&self.cfg.api_key_env).unwrap_or_default();
        let body = serde_json::json!({
            "input": [text],
            "model": self.cfg.model.as_deref().unwrap_or("text-embedding-ada-002"),
        });

        let mut last_error = String::new();
        let attempts = self.cfg.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = Duration::from_millis(250 * (1 << (attempt - 1)));
                std::thread::sleep(backoff);
            }
            let mut req = http.post(endpoint).json(&body);
            if !api_key.is_empty() {
                req = req.bearer_auth(&api_key);
            }
            match req.send().and_then(|r| r.error_for_status()) {
                Ok(resp) => {
                    let parsed: RemoteEmbedResponse =
                        resp.json().map_err(|e| EmbedError::RemoteUnavailable {
                            attempts: attempt + 1,
                            last_error: format!("malformed response: {e}"),
                        })?;
                    let values = parsed
                        .data
                        .into_iter()
                        .next()
                        .ok_or_else(|| EmbedError::RemoteUnavailable {
                            attempts: attempt + 1,
                            last_error: "response contained no embeddings".to_string(),
                        })?
                        .embedding;
                    if values.len() != self.cfg.dim {
                        return Err(EmbedError::DimensionMismatch {
                            expected: self.cfg.dim,
                            got: values.len(),
                        });
                    }
                    return Embedding::new(values);
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(EmbedError::RemoteUnavailable {
            attempts,
            last_error,
        })
    }

    fn cache_lookup(&self, text: &str) -> Result<Option<Embedding>, EmbedError> {
        let Some(path) = &self.cfg.cache_path else {
            return Ok(None);
        };
        if !path.exists() {
            return Ok(None);
        }
        let key = sha256_hex(text);
        let file = std::fs::File::open(path)?;
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let Ok(rec) = serde_json::from_str::<CacheRecord>(&line) else {
                continue;
            };
            if rec.sha256 == key && rec.dim == self.cfg.dim {
                return Ok(Some(Embedding::new(rec.values)?));
            }
        }
        Ok(None)
    }

    fn cache_store(&self, text: &str, emb: &Embedding) -> Result<(), EmbedError> {
        let Some(path) = &self.cfg.cache_path else {
            return Ok(());
        };
        let _guard = self.cache.as_ref().expect("cache mutex").lock().unwrap();
        let rec = CacheRecord {
            sha256: sha256_hex(text),
            dim: emb.dim(),
            values: emb.values().to_vec(),
        };
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(file, "{}", serde_json::to_string(&rec).expect("serialize"))?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct RemoteEmbedResponse {
    data: Vec<RemoteEmbedItem>,
}

#[derive(Deserialize)]
struct RemoteEmbedItem {
    embedding: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    sha256: String,
    dim: usize,
    values: Vec<f64>,
}

pub(crate) fn sha256_hex(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Seed constant mixed into the n-gram hash; part of the local embedder's
/// deterministic contract.
const LOCAL_HASH_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Deterministic local embedding: signed feature hashing of character 3-grams
/// of the lowercased text into `dim` buckets, then L2 normalization. A pure
/// function of (text, dim, seed constant).
pub fn local_hash_embedding(text: &str, dim: usize) -> Result<Embedding, EmbedError> {
    if text.is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut acc = vec![0.0f64; dim];
    let bump = |gram: &str, acc: &mut [f64]| {
        let h = fnv1a(gram.as_bytes(), LOCAL_HASH_SEED);
        let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
        let bucket = ((h >> 1) % dim as u64) as usize;
        acc[bucket] += sign;
    };
    if chars.len() < 3 {
        bump(&lowered, &mut acc);
    } else {
        for window in chars.windows(3) {
            let gram: String = window.iter().collect();
            bump(&gram, &mut acc);
        }
    }
    // Opposite-sign grams can cancel in every bucket; fall back to a single
    // whole-text feature so the result is always normalizable.
    if l2_norm(&acc) < 1e-12 {
        acc.iter_mut().for_each(|v| *v = 0.0);
        bump(&lowered, &mut acc);
    }
    Embedding::new(acc)
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_embedding_is_deterministic() {
        let a = local_hash_embedding("a", 16).unwrap();
        let b = local_hash_embedding("a", 16).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn local_embedding_is_unit_norm() {
        for text in ["alpha", "x", "the quick brown fox", "数学 定理"] {
            let e = local_hash_embedding(text, 32).unwrap();
            assert!((e.norm() - 1.0).abs() < UNIT_NORM_TOL, "text {text:?}");
        }
    }

    #[test]
    fn distinct_texts_are_not_identical_directions() {
        let a = local_hash_embedding("alpha", 64).unwrap();
        let b = local_hash_embedding("beta", 64).unwrap();
        assert!(cosine(&a, &b).unwrap() < 1.0 - 1e-6);
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(
            local_hash_embedding("", 16),
            Err(EmbedError::EmptyText)
        ));
    }

    #[test]
    fn cosine_identity_orthogonal_antipodal() {
        let v = Embedding::new(vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);

        let e1 = Embedding::new(vec![1.0, 0.0]).unwrap();
        let e2 = Embedding::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);

        let neg = Embedding::new(v.values().iter().map(|x| -x).collect()).unwrap();
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let a = Embedding::new(vec![1.0, 0.0]).unwrap();
        let b = Embedding::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cosine(&a, &b),
            Err(EmbedError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embedder_rejects_small_dim_and_many_retries() {
        assert!(Embedder::new(EmbedderConfig::local(4)).is_err());
        let mut cfg = EmbedderConfig::local(16);
        cfg.max_retries = 6;
        assert!(Embedder::new(cfg).is_err());
    }

    #[test]
    fn embedder_local_roundtrip() {
        let emb = Embedder::new(EmbedderConfig::local(64)).unwrap();
        let a = emb.embed_text("hello world").unwrap();
        let b = emb.embed_text("hello world").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 64);
    }
}
