//! Load the sample manual pages and Q&A records, filter, chunk, and write
//! the chunk export.

use std::path::Path;

use rag_repair::corpus::{
    chunk_corpus, filter_troubleshooting, load_manual_corpus, load_qa_records, read_chunks, valid_commands,
    write_chunks, ChunkingPolicy, DEFAULT_MIN_SCORE,
};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let sample = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample");
    let manual = load_manual_corpus(&sample.join("manual"))?;
    let records = load_qa_records(&sample.join("troubleshooting.jsonl"))?;
    let valid = valid_commands(&manual.documents);
    let troubleshooting = filter_troubleshooting(&records, DEFAULT_MIN_SCORE, &valid);

    let policy = ChunkingPolicy::new(500, 100)?;
    let mut chunks = chunk_corpus(&manual.documents, &policy)?;
    chunks.extend(chunk_corpus(&troubleshooting, &policy)?);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("chunks.jsonl");
    write_chunks(&path, &chunks)?;
    assert_eq!(read_chunks(&path)?, chunks);

    let mut out = format!("valid commands: {}\n", valid.iter().cloned().collect::<Vec<_>>().join(", "));
    out += &format!("Manual: {} docs\n", manual.documents.len());
    out += &format!("Troubleshooting: {} of {} records kept\n", troubleshooting.len(), records.len());
    for doc in &troubleshooting {
        out += &format!("  {} score {:?} {}\n", doc.doc_id, doc.score, doc.title);
    }
    out += &format!("{} chunks of at most {} chars\n", chunks.len(), policy.chunk_size());
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
