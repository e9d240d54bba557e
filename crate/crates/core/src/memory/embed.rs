//! Text embedders.

use serde_json::json;

use super::MemoryError;
use crate::llm::{Transport, TransportError};

pub const DEFAULT_DIM: usize = 256;

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, MemoryError>;
}

/// Scales `v` to unit length. Returns `false` when `v` is zero or not finite.
pub fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Deterministic offline embedder: signed feature hashing of lowercase word
/// unigrams and bigrams, falling back to character trigrams for text without
/// word characters.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM, 0)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    fn add_feature(&self, v: &mut [f64], feature: &str, weight: f64) {
        let h = fnv1a(self.seed, feature.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign * weight;
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, MemoryError> {
        if text.trim().is_empty() {
            return Err(MemoryError::EmptyText);
        }
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let mut v = vec![0.0; self.dim];
        if words.is_empty() {
            let chars: Vec<char> = lower.chars().filter(|c| !c.is_whitespace()).collect();
            for w in chars.windows(3.min(chars.len())) {
                self.add_feature(&mut v, &w.iter().collect::<String>(), 1.0);
            }
        } else {
            for w in &words {
                self.add_feature(&mut v, w, 1.0);
            }
            for pair in words.windows(2) {
                self.add_feature(&mut v, &format!("{} {}", pair[0], pair[1]), 0.5);
            }
        }
        if !normalize(&mut v) {
            // Features cancelled out exactly; fall back to a single bucket.
            self.add_feature(&mut v, &lower, 1.0);
            normalize(&mut v);
        }
        Ok(v)
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    transport: Box<dyn Transport>,
    url: String,
    api_key: Option<String>,
    model: String,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(
        transport: Box<dyn Transport>,
        base_url: &str,
        api_key: Option<String>,
        model: &str,
        dim: usize,
    ) -> Self {
        Self {
            transport,
            url: format!("{}/embeddings", base_url.trim_end_matches('/')),
            api_key,
            model: model.to_string(),
            dim,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, MemoryError> {
        if text.trim().is_empty() {
            return Err(MemoryError::EmptyText);
        }
        let body = json!({ "model": self.model, "input": text });
        let resp = self
            .transport
            .post_json(&self.url, self.api_key.as_deref(), &body)
            .map_err(|e: TransportError| MemoryError::Provider {
                retryable: e.is_retryable(),
                message: e.to_string(),
            })?;
        let values = resp
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| MemoryError::Provider {
                retryable: false,
                message: "response has no data[0].embedding".into(),
            })?;
        let mut v: Vec<f64> = values.iter().filter_map(|x| x.as_f64()).collect();
        if v.len() != self.dim || v.len() != values.len() {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if !normalize(&mut v) {
            return Err(MemoryError::Provider {
                retryable: false,
                message: "zero embedding".into(),
            });
        }
        Ok(v)
    }
}
