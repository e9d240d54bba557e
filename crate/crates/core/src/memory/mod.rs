//! Vector memory with three namespaces (market intelligence, low-level and
//! high-level reflection) and typed diversified retrieval.
//!
//! Retrieval is an exact cosine scan. A record is only visible to queries dated
//! strictly after it.

mod embed;
mod store;

pub use embed::{cosine, normalize, Embedder, HashEmbedder, RemoteEmbedder, DEFAULT_DIM};
pub use store::{Memory, MemoryStore, Retrieved, FORMAT_NAME, FORMAT_VERSION};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MemoryError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("duplicate record id `{id}` in {namespace}")]
    DuplicateId { namespace: Namespace, id: String },
    #[error("embedding dimension {got}, store expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("record `{0}` embedding is not unit norm")]
    NotNormalized(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("embedding provider: {message}")]
    Provider { retryable: bool, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Io(String),
}

impl MemoryError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            MemoryError::Provider {
                retryable: true,
                ..
            }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Namespace {
    #[serde(rename = "MI")]
    MarketIntelligence,
    #[serde(rename = "LLR")]
    LowLevelReflection,
    #[serde(rename = "HLR")]
    HighLevelReflection,
}

impl Namespace {
    pub const ALL: [Namespace; 3] = [
        Namespace::MarketIntelligence,
        Namespace::LowLevelReflection,
        Namespace::HighLevelReflection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::MarketIntelligence => "MI",
            Namespace::LowLevelReflection => "LLR",
            Namespace::HighLevelReflection => "HLR",
        }
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Namespace {
    type Err = MemoryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Namespace::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| MemoryError::InvalidQuery(format!("unknown namespace `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RetrievalType {
    ShortTerm,
    MediumTerm,
    LongTerm,
    Untyped,
}

impl RetrievalType {
    /// The horizon-typed kinds emitted by the market-intelligence templates.
    pub const HORIZONS: [RetrievalType; 3] = [
        RetrievalType::ShortTerm,
        RetrievalType::MediumTerm,
        RetrievalType::LongTerm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalType::ShortTerm => "SHORT_TERM",
            RetrievalType::MediumTerm => "MEDIUM_TERM",
            RetrievalType::LongTerm => "LONG_TERM",
            RetrievalType::Untyped => "UNTYPED",
        }
    }

    /// `short`, `medium` or `long` for horizon types.
    pub fn horizon(self) -> Option<&'static str> {
        match self {
            RetrievalType::ShortTerm => Some("short"),
            RetrievalType::MediumTerm => Some("medium"),
            RetrievalType::LongTerm => Some("long"),
            RetrievalType::Untyped => None,
        }
    }
}

impl fmt::Display for RetrievalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: String,
    pub namespace: Namespace,
    pub date: NaiveDate,
    pub summary: String,
    pub query: String,
    pub retrieval_type: RetrievalType,
    pub embedding: Vec<f64>,
}

impl MemoryRecord {
    /// Builds a record, normalizing `embedding`.
    pub fn new(
        namespace: Namespace,
        id: impl Into<String>,
        date: NaiveDate,
        summary: impl Into<String>,
        query: impl Into<String>,
        retrieval_type: RetrievalType,
        mut embedding: Vec<f64>,
    ) -> Self {
        normalize(&mut embedding);
        Self {
            id: id.into(),
            namespace,
            date,
            summary: summary.into(),
            query: query.into(),
            retrieval_type,
            embedding,
        }
    }

    pub fn is_unit_norm(&self) -> bool {
        let n = self.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n - 1.0).abs() <= 1e-6
    }
}

/// One query text per retrieval type with `k` results each.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversifiedQuery {
    pub queries: BTreeMap<RetrievalType, String>,
    pub k: usize,
}

impl DiversifiedQuery {
    pub fn new(queries: BTreeMap<RetrievalType, String>, k: usize) -> Result<Self, MemoryError> {
        if queries.is_empty() {
            return Err(MemoryError::InvalidQuery("no query types".into()));
        }
        if k == 0 {
            return Err(MemoryError::InvalidQuery("k must be at least 1".into()));
        }
        Ok(Self { queries, k })
    }
}
