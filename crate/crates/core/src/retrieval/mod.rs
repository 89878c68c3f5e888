//! Similarity search over chunks.
//!
//! Two backends share one ranking convention: results are [`ScoredChunk`]s
//! sorted ascending by score, so lower is always better. Vector backends
//! report a distance; the lexical backend reports the negated BM25 score.
//! Equal scores are ordered by `(doc_id, ordinal)`.

mod bm25;
mod embed;
mod index;

pub use bm25::{bm25_rank, bm25_scores, tokenize, Bm25Params, LexicalIndex};
pub use embed::{Embedder, HashEmbedder, HttpEmbedder};
pub use index::{
    build_index, query_index, IndexEntry, IndexSnapshot, RetrievalIndex, VectorRetriever,
    SNAPSHOT_FORMAT,
};

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chunk, SourceKind};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("cosine distance is undefined for a zero vector")]
    DegenerateVector,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("cannot build an index from zero chunks")]
    EmptyInput,
    #[error("no entries in partition {0:?}")]
    EmptyPartition(Option<SourceKind>),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("failed to embed chunk {doc_id}#{ordinal}: {message}")]
    IndexBuild {
        doc_id: String,
        ordinal: usize,
        message: String,
    },
    #[error("embedding backend error: {0}")]
    Embed(String),
    #[error("embedding endpoint unreachable: {0}")]
    Unavailable(String),
    #[error("invalid BM25 parameters: k1 {k1}, b {b}")]
    InvalidParams { k1: f64, b: f64 },
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

/// A fixed-length vector of finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::Dimension { left: 0, right: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn scaled(&self, factor: f32) -> Result<Self, RetrievalError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = RetrievalError;

    fn try_from(values: Vec<f32>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f32> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    L2Squared,
    CosineDistance,
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::L2Squared => "l2squared",
            DistanceMetric::CosineDistance => "cosine",
        })
    }
}

impl FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "l2squared" | "l2_squared" | "squared_l2" => Ok(DistanceMetric::L2Squared),
            "cosine" | "cosine_distance" => Ok(DistanceMetric::CosineDistance),
            other => Err(format!("unknown distance metric {other:?}")),
        }
    }
}

/// Distance between two vectors, accumulated in `f64`.
///
/// `L2Squared` is the sum of squared differences. `CosineDistance` is
/// `1 - a·b / (|a| |b|)` and rejects zero vectors.
pub fn distance(
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    metric: DistanceMetric,
) -> Result<f64, RetrievalError> {
    if a.dims() != b.dims() {
        return Err(RetrievalError::Dimension {
            left: a.dims(),
            right: b.dims(),
        });
    }
    let pairs = a.values().iter().zip(b.values()).map(|(x, y)| (*x as f64, *y as f64));
    match metric {
        DistanceMetric::L2Squared => Ok(pairs.map(|(x, y)| (x - y) * (x - y)).sum()),
        DistanceMetric::CosineDistance => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in pairs {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                return Err(RetrievalError::DegenerateVector);
            }
            let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
            Ok(1.0 - cos)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
}

impl ScoredChunk {
    /// Ascending score, then `(doc_id, ordinal)`.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        rank_order(self.score, &self.chunk, other.score, &other.chunk)
    }
}

pub(crate) fn rank_order(sa: f64, a: &Chunk, sb: f64, b: &Chunk) -> Ordering {
    sa.total_cmp(&sb)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
        .then_with(|| a.ordinal.cmp(&b.ordinal))
}

/// Anything that can rank chunks for a retrieval key.
pub trait Retriever: Send + Sync {
    fn retrieve(
        &self,
        key_text: &str,
        k: usize,
        filter: Option<SourceKind>,
    ) -> Result<Vec<ScoredChunk>, RetrievalError>;
}
