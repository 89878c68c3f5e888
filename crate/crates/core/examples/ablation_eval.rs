//! The four-condition ablation on the bundled 20-case fixture: scripted
//! model, replayed cluster, vector index over the sample corpus.

use std::path::Path;

use rag_repair::corpus::{chunk_corpus, filter_troubleshooting, load_manual_corpus, load_qa_records, valid_commands, ChunkingPolicy};
use rag_repair::evalharness::{
    ablation_table, load_dataset, render_report, run_experiment, DatasetOptions, ExperimentSettings, ReportFormat,
    DEFAULT_HIGHLIGHT_THRESHOLD,
};
use rag_repair::executor::{Executor, ReplayFixture};
use rag_repair::repair::ScriptedLlm;
use rag_repair::retrieval::{build_index, DistanceMetric, HashEmbedder, VectorRetriever};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let sample = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample");
    let manual = load_manual_corpus(&sample.join("manual"))?;
    let ts = filter_troubleshooting(
        &load_qa_records(&sample.join("troubleshooting.jsonl"))?,
        5,
        &valid_commands(&manual.documents),
    );
    let policy = ChunkingPolicy::default();
    let mut chunks = chunk_corpus(&manual.documents, &policy)?;
    chunks.extend(chunk_corpus(&ts, &policy)?);
    let embedder = HashEmbedder::new(256);
    let index = build_index(&chunks, &embedder, DistanceMetric::L2Squared)?;
    let retriever = VectorRetriever { index: &index, embedder: &embedder };

    let dataset = load_dataset(&sample.join("dataset.jsonl"), DatasetOptions::default())?;
    let llm = ScriptedLlm::load_rules("scripted-sample", &sample.join("script.jsonl"))?;
    let executor = Executor::replay(ReplayFixture::load(&sample.join("replay.jsonl"))?);
    let settings = ExperimentSettings { jobs: 4, ..Default::default() };
    let experiment = run_experiment(&dataset.cases, &llm, &executor, Some(&retriever), &settings)?;

    let table = ablation_table(&experiment.records, DEFAULT_HIGHLIGHT_THRESHOLD)?;
    let mut out = format!("{} cases ({} excluded), {} records\n", dataset.len(), dataset.excluded, experiment.records.len());
    out += &render_report(std::slice::from_ref(&table), ReportFormat::Markdown);
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
