use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bm25::LexicalIndex;
use super::{
    distance, rank_order, DistanceMetric, Embedder, EmbeddingVector, RetrievalError, Retriever,
    ScoredChunk,
};
use crate::corpus::{Chunk, SourceKind};

/// Identifies snapshot files written by [`IndexSnapshot::save`].
pub const SNAPSHOT_FORMAT: &str = "rag-repair-index/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
}

/// Exact in-memory vector index, partitioned by source collection.
/// Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIndex")]
pub struct RetrievalIndex {
    metric: DistanceMetric,
    dims: usize,
    entries: Vec<IndexEntry>,
    #[serde(skip)]
    partitions: BTreeMap<SourceKind, Vec<usize>>,
}

#[derive(Deserialize)]
struct RawIndex {
    metric: DistanceMetric,
    dims: usize,
    entries: Vec<IndexEntry>,
}

impl TryFrom<RawIndex> for RetrievalIndex {
    type Error = RetrievalError;

    fn try_from(raw: RawIndex) -> Result<Self, Self::Error> {
        RetrievalIndex::from_entries(raw.entries, raw.metric, Some(raw.dims))
    }
}

impl RetrievalIndex {
    /// Assembles an index from pre-computed entries. Every vector must share
    /// one width (`dims` when given).
    pub fn from_entries(
        entries: Vec<IndexEntry>,
        metric: DistanceMetric,
        dims: Option<usize>,
    ) -> Result<Self, RetrievalError> {
        let first = entries.first().ok_or(RetrievalError::EmptyInput)?;
        let dims = dims.unwrap_or(first.vector.dims());
        let mut partitions: BTreeMap<SourceKind, Vec<usize>> = BTreeMap::new();
        for (i, entry) in entries.iter().enumerate() {
            if entry.vector.dims() != dims {
                return Err(RetrievalError::Dimension {
                    left: entry.vector.dims(),
                    right: dims,
                });
            }
            partitions.entry(entry.chunk.source_kind).or_default().push(i);
        }
        Ok(RetrievalIndex {
            metric,
            dims,
            entries,
            partitions,
        })
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn partition_size(&self, kind: SourceKind) -> usize {
        self.partitions.get(&kind).map_or(0, Vec::len)
    }

    /// The `k` entries nearest to `key`, optionally restricted to one
    /// partition.
    pub fn query_vector(
        &self,
        key: &EmbeddingVector,
        k: usize,
        filter: Option<SourceKind>,
    ) -> Result<Vec<ScoredChunk>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        let candidates: Box<dyn Iterator<Item = &IndexEntry>> = match filter {
            Some(kind) => match self.partitions.get(&kind) {
                Some(ids) => Box::new(ids.iter().map(|&i| &self.entries[i])),
                None => return Err(RetrievalError::EmptyPartition(filter)),
            },
            None => Box::new(self.entries.iter()),
        };

        // Max-heap of the best k seen so far; the root is the current worst.
        let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
        for entry in candidates {
            let score = distance(key, &entry.vector, self.metric)?;
            let candidate = Candidate { score, entry };
            if heap.len() < k {
                heap.push(candidate);
            } else if let Some(worst) = heap.peek() {
                if candidate.cmp(worst) == Ordering::Less {
                    heap.pop();
                    heap.push(candidate);
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| ScoredChunk {
                chunk: c.entry.chunk.clone(),
                score: c.score,
            })
            .collect())
    }
}

struct Candidate<'a> {
    score: f64,
    entry: &'a IndexEntry,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(self.score, &self.entry.chunk, other.score, &other.entry.chunk)
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

/// Embeds every chunk and builds an index over them. Embedding runs in
/// parallel; a failure names the offending chunk.
pub fn build_index(
    chunks: &[Chunk],
    embedder: &dyn Embedder,
    metric: DistanceMetric,
) -> Result<RetrievalIndex, RetrievalError> {
    if chunks.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }
    let dims = embedder.dims();
    let entries: Result<Vec<IndexEntry>, RetrievalError> = chunks
        .par_iter()
        .map(|chunk| {
            let vector = embedder.embed(&chunk.text).map_err(|e| match e {
                RetrievalError::Unavailable(_) => e,
                other => RetrievalError::IndexBuild {
                    doc_id: chunk.doc_id.clone(),
                    ordinal: chunk.ordinal,
                    message: other.to_string(),
                },
            })?;
            if vector.dims() != dims {
                return Err(RetrievalError::IndexBuild {
                    doc_id: chunk.doc_id.clone(),
                    ordinal: chunk.ordinal,
                    message: format!("embedder returned {} dims, expected {dims}", vector.dims()),
                });
            }
            Ok(IndexEntry {
                chunk: chunk.clone(),
                vector,
            })
        })
        .collect();
    RetrievalIndex::from_entries(entries?, metric, Some(dims))
}

/// Embeds `key_text` and returns the `k` nearest chunks.
pub fn query_index(
    index: &RetrievalIndex,
    embedder: &dyn Embedder,
    key_text: &str,
    k: usize,
    filter: Option<SourceKind>,
) -> Result<Vec<ScoredChunk>, RetrievalError> {
    let key = embedder.embed(key_text)?;
    index.query_vector(&key, k, filter)
}

/// A vector index paired with the embedder that produced it.
pub struct VectorRetriever<'a> {
    pub index: &'a RetrievalIndex,
    pub embedder: &'a dyn Embedder,
}

impl Retriever for VectorRetriever<'_> {
    fn retrieve(
        &self,
        key_text: &str,
        k: usize,
        filter: Option<SourceKind>,
    ) -> Result<Vec<ScoredChunk>, RetrievalError> {
        query_index(self.index, self.embedder, key_text, k, filter)
    }
}

/// On-disk form of an index, tagged by backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum IndexSnapshot {
    Vector(RetrievalIndex),
    Lexical(LexicalIndex),
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    format: String,
    #[serde(flatten)]
    snapshot: IndexSnapshot,
}

impl IndexSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&SnapshotFile {
            format: SNAPSHOT_FORMAT.to_string(),
            snapshot: self.clone(),
        })
        .expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RetrievalError> {
        let file: SnapshotFile =
            serde_json::from_str(text).map_err(|e| RetrievalError::Snapshot(e.to_string()))?;
        if file.format != SNAPSHOT_FORMAT {
            return Err(RetrievalError::Snapshot(format!(
                "unsupported snapshot format {:?}",
                file.format
            )));
        }
        Ok(file.snapshot)
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        fs::write(path, self.to_json())
            .map_err(|e| RetrievalError::Snapshot(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text = fs::read_to_string(path)
            .map_err(|e| RetrievalError::Snapshot(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        match self {
            IndexSnapshot::Vector(index) => index.len(),
            IndexSnapshot::Lexical(index) => index.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::HashEmbedder;

    fn chunk(doc: &str, ordinal: usize, kind: SourceKind, text: &str) -> Chunk {
        Chunk {
            doc_id: doc.into(),
            ordinal,
            source_kind: kind,
            text: text.into(),
        }
    }

    struct LengthEmbedder;

    impl Embedder for LengthEmbedder {
        fn dims(&self) -> usize {
            2
        }

        fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
            EmbeddingVector::new(vec![text.chars().count() as f32, 0.0])
        }
    }

    struct FailingEmbedder;

    impl Embedder for FailingEmbedder {
        fn dims(&self) -> usize {
            2
        }

        fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
            if text.contains("boom") {
                Err(RetrievalError::Embed("rejected".into()))
            } else {
                EmbeddingVector::new(vec![1.0, 1.0])
            }
        }
    }

    fn fixture() -> Vec<Chunk> {
        vec![
            chunk("man/a", 0, SourceKind::Manual, "get pods"),
            chunk("man/a", 1, SourceKind::Manual, "describe"),
            chunk("man/b", 0, SourceKind::Manual, "logs"),
            chunk("ts/1", 0, SourceKind::Troubleshooting, "crashloop backoff"),
            chunk("ts/2", 0, SourceKind::Troubleshooting, "pending"),
        ]
    }

    #[test]
    fn partitions_by_source() {
        let index = build_index(&fixture(), &HashEmbedder::new(8), DistanceMetric::L2Squared).unwrap();
        assert_eq!(index.partition_size(SourceKind::Manual), 3);
        assert_eq!(index.partition_size(SourceKind::Troubleshooting), 2);
    }

    #[test]
    fn length_stub_vectors() {
        // "get pods" = 8 chars, "describe" = 8, "logs" = 4.
        let index = build_index(&fixture()[..3], &LengthEmbedder, DistanceMetric::L2Squared).unwrap();
        let firsts: Vec<f32> = index.entries().iter().map(|e| e.vector.values()[0]).collect();
        assert_eq!(firsts, vec![8.0, 8.0, 4.0]);
        assert!(index.entries().iter().all(|e| e.vector.values()[1] == 0.0));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            build_index(&[], &LengthEmbedder, DistanceMetric::L2Squared),
            Err(RetrievalError::EmptyInput)
        ));
    }

    #[test]
    fn embed_failure_names_chunk() {
        let mut chunks = fixture();
        chunks[2].text = "boom".into();
        match build_index(&chunks, &FailingEmbedder, DistanceMetric::L2Squared) {
            Err(RetrievalError::IndexBuild { doc_id, ordinal, .. }) => {
                assert_eq!((doc_id.as_str(), ordinal), ("man/b", 0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn saturation_and_ties() {
        let index = build_index(&fixture(), &LengthEmbedder, DistanceMetric::L2Squared).unwrap();
        let hits = query_index(&index, &LengthEmbedder, "12345678", 10, Some(SourceKind::Manual)).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| (h.chunk.doc_id.as_str(), h.chunk.ordinal, h.score)).collect();
        assert_eq!(ids, vec![("man/a", 0, 0.0), ("man/a", 1, 0.0), ("man/b", 0, 16.0)]);
    }

    #[test]
    fn filter_isolates_partition() {
        let index = build_index(&fixture(), &HashEmbedder::new(8), DistanceMetric::CosineDistance).unwrap();
        let hits = query_index(&index, &HashEmbedder::new(8), "pods", 5, Some(SourceKind::Troubleshooting)).unwrap();
        assert_eq!(hits.len(), 2);
        assert!(hits.iter().all(|h| h.chunk.source_kind == SourceKind::Troubleshooting));
    }

    #[test]
    fn empty_partition_and_zero_k() {
        let index = build_index(&fixture()[..3], &LengthEmbedder, DistanceMetric::L2Squared).unwrap();
        assert!(matches!(
            query_index(&index, &LengthEmbedder, "x", 1, Some(SourceKind::Troubleshooting)),
            Err(RetrievalError::EmptyPartition(_))
        ));
        assert!(matches!(
            query_index(&index, &LengthEmbedder, "x", 0, None),
            Err(RetrievalError::ZeroK)
        ));
    }

    #[test]
    fn snapshot_round_trip() {
        let index = build_index(&fixture(), &HashEmbedder::new(8), DistanceMetric::CosineDistance).unwrap();
        let snap = IndexSnapshot::Vector(index.clone());
        let json = snap.to_json();
        assert!(json.contains("\"backend\":\"vector\""));
        assert!(json.contains("\"format\":\"rag-repair-index/1\""));
        match IndexSnapshot::from_json(&json).unwrap() {
            IndexSnapshot::Vector(loaded) => {
                assert_eq!(loaded, index);
                assert_eq!(loaded.partition_size(SourceKind::Manual), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(IndexSnapshot::from_json(&json.replace("index/1", "index/9")).is_err());
    }

    #[test]
    fn snapshot_rejects_mixed_dims() {
        let json = r#"{"format":"rag-repair-index/1","backend":"vector","metric":"l2_squared","dims":2,
            "entries":[{"chunk":{"doc_id":"a","ordinal":0,"source_kind":"Manual","text":"x"},"vector":[1.0]}]}"#;
        assert!(IndexSnapshot::from_json(json).is_err());
    }
}
