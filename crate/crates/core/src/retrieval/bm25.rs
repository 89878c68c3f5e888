//! Okapi BM25 over chunk text.
//!
//! score(D, Q) = Σ_{t ∈ Q} idf(t) · tf(t, D)·(k1 + 1) / (tf(t, D) + k1·(1 − b + b·|D|/avgdl))
//! idf(t)      = ln((N − n(t) + 0.5) / (n(t) + 0.5) + 1)
//!
//! Query terms are deduplicated before summing.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{rank_order, RetrievalError, Retriever, ScoredChunk};
use crate::corpus::{Chunk, SourceKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, RetrievalError> {
        if !(k1 > 0.0 && k1.is_finite()) || !(0.0..=1.0).contains(&b) {
            return Err(RetrievalError::InvalidParams { k1, b });
        }
        Ok(Bm25Params { k1, b })
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Raw BM25 score of every chunk, in input order.
pub fn bm25_scores(chunks: &[Chunk], key_text: &str, params: Bm25Params) -> Vec<f64> {
    let docs: Vec<HashMap<String, usize>> = chunks
        .iter()
        .map(|c| {
            let mut tf = HashMap::new();
            for token in tokenize(&c.text) {
                *tf.entry(token).or_insert(0) += 1;
            }
            tf
        })
        .collect();
    let lengths: Vec<f64> = docs.iter().map(|d| d.values().sum::<usize>() as f64).collect();
    let n_docs = chunks.len() as f64;
    let avgdl = if chunks.is_empty() {
        0.0
    } else {
        lengths.iter().sum::<f64>() / n_docs
    };

    let terms: BTreeSet<String> = tokenize(key_text).collect();
    let idf: Vec<(String, f64)> = terms
        .into_iter()
        .map(|t| {
            let n = docs.iter().filter(|d| d.contains_key(&t)).count() as f64;
            let idf = ((n_docs - n + 0.5) / (n + 0.5) + 1.0).ln();
            (t, idf)
        })
        .collect();

    docs.iter()
        .zip(&lengths)
        .map(|(tf, &len)| {
            let norm = if avgdl > 0.0 {
                1.0 - params.b + params.b * len / avgdl
            } else {
                1.0
            };
            idf.iter()
                .map(|(t, idf)| match tf.get(t) {
                    Some(&f) => {
                        let f = f as f64;
                        idf * f * (params.k1 + 1.0) / (f + params.k1 * norm)
                    }
                    None => 0.0,
                })
                .sum()
        })
        .collect()
}

/// Top `k` chunks by BM25, reported with `score = -bm25` so that lower ranks
/// first, like the vector backends.
pub fn bm25_rank(
    chunks: &[Chunk],
    key_text: &str,
    k: usize,
    params: Bm25Params,
) -> Vec<ScoredChunk> {
    let scores = bm25_scores(chunks, key_text, params);
    let mut ranked: Vec<(f64, &Chunk)> = scores
        .into_iter()
        .zip(chunks)
        .map(|(s, c)| (if s == 0.0 { 0.0 } else { -s }, c))
        .collect();
    ranked.sort_by(|(sa, a), (sb, b)| rank_order(*sa, a, *sb, b));
    ranked
        .into_iter()
        .take(k)
        .map(|(score, chunk)| ScoredChunk {
            chunk: chunk.clone(),
            score,
        })
        .collect()
}

/// Lexical counterpart of a vector index: the chunks plus BM25 parameters.
/// Statistics are computed per query over the selected partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalIndex {
    pub params: Bm25Params,
    chunks: Vec<Chunk>,
}

impl LexicalIndex {
    pub fn new(chunks: Vec<Chunk>, params: Bm25Params) -> Result<Self, RetrievalError> {
        if chunks.is_empty() {
            return Err(RetrievalError::EmptyInput);
        }
        Ok(LexicalIndex { params, chunks })
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn partition_size(&self, kind: SourceKind) -> usize {
        self.chunks.iter().filter(|c| c.source_kind == kind).count()
    }
}

impl Retriever for LexicalIndex {
    fn retrieve(
        &self,
        key_text: &str,
        k: usize,
        filter: Option<SourceKind>,
    ) -> Result<Vec<ScoredChunk>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        let hits = match filter {
            Some(kind) => {
                let subset: Vec<Chunk> = self
                    .chunks
                    .iter()
                    .filter(|c| c.source_kind == kind)
                    .cloned()
                    .collect();
                if subset.is_empty() {
                    return Err(RetrievalError::EmptyPartition(filter));
                }
                bm25_rank(&subset, key_text, k, self.params)
            }
            None => bm25_rank(&self.chunks, key_text, k, self.params),
        };
        Ok(hits)
    }
}
