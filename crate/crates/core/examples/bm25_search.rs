//! Lexical retrieval with BM25; scores are negated so lower ranks first.

use rag_repair::corpus::{Chunk, SourceKind};
use rag_repair::retrieval::{bm25_scores, Bm25Params, LexicalIndex, Retriever};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let chunks: Vec<Chunk> = [
        "kubectl logs prints the logs for a container in a pod",
        "kubectl get lists resources; use -n to pick the namespace",
        "kubectl describe shows events and details for a pod",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| Chunk { doc_id: format!("man/{i}"), ordinal: 0, source_kind: SourceKind::Manual, text: t.to_string() })
    .collect();
    let key = "kubectl log cart\nerror: unknown command \"log\" for \"kubectl\" logs";

    let mut out = String::from("raw BM25:\n");
    for (c, s) in chunks.iter().zip(bm25_scores(&chunks, key, Bm25Params::default())) {
        out += &format!("  {} {s:.4}\n", c.doc_id);
    }
    let index = LexicalIndex::new(chunks, Bm25Params::default())?;
    out += "ranked:\n";
    for hit in index.retrieve(key, 3, Some(SourceKind::Manual))? {
        out += &format!("  {} {:.4}\n", hit.chunk.doc_id, hit.score);
    }
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
