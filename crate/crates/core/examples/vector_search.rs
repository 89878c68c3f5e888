//! Exact top-k vector search over a small index, under both metrics, plus a
//! snapshot round trip.

use rag_repair::corpus::{Chunk, SourceKind};
use rag_repair::retrieval::{build_index, DistanceMetric, HashEmbedder, IndexSnapshot, Retriever, VectorRetriever};

fn chunk(doc: &str, kind: SourceKind, text: &str) -> Chunk {
    Chunk { doc_id: doc.into(), ordinal: 0, source_kind: kind, text: text.into() }
}

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let chunks = vec![
        chunk("man/get", SourceKind::Manual, "kubectl get pods --all-namespaces lists pods in every namespace"),
        chunk("man/logs", SourceKind::Manual, "kubectl logs prints container logs, --tail limits lines"),
        chunk("ts/00001", SourceKind::Troubleshooting, "unknown flag --all-namespace: the flag is spelled --all-namespaces"),
        chunk("ts/00002", SourceKind::Troubleshooting, "pods pending because of insufficient cpu"),
    ];
    let embedder = HashEmbedder::new(64);
    let key = "list pods\nkubectl get pods --all-namespace\nerror: unknown flag: --all-namespace";

    let mut out = String::new();
    for metric in [DistanceMetric::L2Squared, DistanceMetric::CosineDistance] {
        let index = build_index(&chunks, &embedder, metric)?;
        let retriever = VectorRetriever { index: &index, embedder: &embedder };
        out += &format!("{metric}:\n");
        for kind in SourceKind::ALL {
            for hit in retriever.retrieve(key, 1, Some(kind))? {
                out += &format!("  {:<16} {:<10} {:.4}\n", hit.chunk.doc_id, kind.label(), hit.score);
            }
        }
        let snapshot = IndexSnapshot::Vector(index);
        assert_eq!(IndexSnapshot::from_json(&snapshot.to_json())?, snapshot);
    }
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
