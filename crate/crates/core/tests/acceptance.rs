//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero on any failure other than a documented, exactly
//! matching known gap.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rag_repair::corpus::{
    chunk_document, chunk_corpus, filter_troubleshooting, load_manual_corpus, load_qa_records, valid_commands, Chunk,
    ChunkingPolicy, SourceDocument, SourceKind,
};
use rag_repair::evalharness::{
    ablation_table, delta_table_from_rates, load_dataset, pass_rate, render_report, run_experiment, weighted_kappa,
    AnnotationSet, CorrectnessLabel, DatasetOptions, EvalRecord, ExperimentSettings, KappaWeights, ReportFormat,
    DEFAULT_HIGHLIGHT_THRESHOLD,
};
use rag_repair::executor::{
    system_spawn_count, ExecError, ExecutionResult, Executor, ExecutorMode, LiveConfig, ReplayFixture, SafetyPolicy,
    SpawnOutput, SpawnRequest, Spawner,
};
use rag_repair::repair::{
    parse_repair_response, render_prompt, Attempt, AttemptOutcome, FailingCall, PromptPair, RepairCondition,
    RepairContext, ScriptedLlm, TemplateKind,
};
use rag_repair::retrieval::{
    build_index, distance, Bm25Params, DistanceMetric, EmbeddingVector, HashEmbedder, IndexEntry, LexicalIndex,
    RetrievalIndex, Retriever, ScoredChunk, VectorRetriever,
};

/// Published delta that no pair of the published rates reproduces.
const KNOWN_DELTA_GAP: &str = "Phi4: published 0.017 computed 0.020";

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn sample() -> PathBuf {
    manifest().join("data/sample")
}

struct Outcome {
    ok: bool,
    /// The failure is exactly a documented gap and nothing else.
    known_gap: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome { ok: true, known_gap: false, detail: detail.into() }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome { ok: false, known_gap: false, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// 1

fn oracle_top_k(index: &RetrievalIndex, key: &EmbeddingVector, k: usize, filter: Option<SourceKind>) -> Vec<ScoredChunk> {
    let mut all: Vec<ScoredChunk> = index
        .entries()
        .iter()
        .filter(|e| filter.is_none_or(|f| e.chunk.source_kind == f))
        .map(|e| ScoredChunk { chunk: e.chunk.clone(), score: distance(key, &e.vector, index.metric()).unwrap() })
        .collect();
    all.sort_by(|a, b| {
        a.score
            .partial_cmp(&b.score)
            .unwrap_or(Ordering::Equal)
            .then(a.chunk.doc_id.cmp(&b.chunk.doc_id))
            .then(a.chunk.ordinal.cmp(&b.chunk.ordinal))
    });
    all.truncate(k);
    all
}

fn random_vector(rng: &mut ChaCha8Rng, dims: usize) -> EmbeddingVector {
    loop {
        // Small integers make exact ties common.
        let values: Vec<f32> = (0..dims).map(|_| rng.gen_range(-2i32..=2) as f32).collect();
        if values.iter().any(|v| *v != 0.0) {
            return EmbeddingVector::new(values).unwrap();
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut queries = 0;
    for round in 0..200 {
        let metric = if round % 2 == 0 { DistanceMetric::L2Squared } else { DistanceMetric::CosineDistance };
        let dims = rng.gen_range(1..=32);
        let n = rng.gen_range(1..=500);
        let entries: Vec<IndexEntry> = (0..n)
            .map(|i| IndexEntry {
                chunk: Chunk {
                    doc_id: format!("d{}", rng.gen_range(0..40)),
                    ordinal: i,
                    source_kind: if rng.gen_bool(0.5) { SourceKind::Manual } else { SourceKind::Troubleshooting },
                    text: String::new(),
                },
                vector: random_vector(&mut rng, dims),
            })
            .collect();
        let index = RetrievalIndex::from_entries(entries, metric, Some(dims)).unwrap();
        for _ in 0..3 {
            let key = random_vector(&mut rng, dims);
            let k = rng.gen_range(1..=25);
            let filter = match rng.gen_range(0..3) {
                0 => None,
                1 => Some(SourceKind::Manual),
                _ => Some(SourceKind::Troubleshooting),
            };
            let expected = oracle_top_k(&index, &key, k, filter);
            match index.query_vector(&key, k, filter) {
                Ok(got) if got == expected => {}
                Ok(got) => {
                    return fail(format!("round {round}: got {} results, differs from brute force ({} expected)", got.len(), expected.len()))
                }
                Err(_) if expected.is_empty() => {}
                Err(e) => return fail(format!("round {round}: {e}")),
            }
            queries += 1;
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(10) {
        return fail(format!("took {elapsed:?}"));
    }
    pass(format!("200 indexes, {queries} queries identical to brute force in {:.2?}", elapsed))
}

// ---------------------------------------------------------------------------
// 2

fn criterion_2() -> Outcome {
    let mut runner = TestRunner::new(PropConfig { cases: 1200, failure_persistence: None, ..PropConfig::default() });
    let strategy = (prop::sample::select(vec![500usize, 800, 1500]), "[a-zé漢 \n.]{1,5000}");
    let result = runner.run(&strategy, |(size, body)| {
        let doc = SourceDocument {
            doc_id: "d".into(),
            source_kind: SourceKind::Manual,
            title: String::new(),
            uri: String::new(),
            body: body.clone(),
            score: None,
            commands_mentioned: Vec::new(),
        };
        let chunks = chunk_document(&doc, &ChunkingPolicy::new(size, 0).unwrap()).unwrap();
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
        prop_assert_eq!(&joined, &body);
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.ordinal, i);
            let len = c.text.chars().count();
            if i + 1 < chunks.len() {
                prop_assert_eq!(len, size);
            } else {
                prop_assert!(len >= 1 && len <= size);
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => pass("1200 random documents, sizes {500, 800, 1500}: round trip and exact widths hold"),
        Err(e) => fail(e.to_string()),
    }
}

// ---------------------------------------------------------------------------
// 3

/// Independent predicate: the token after some `kubectl` token is a valid
/// command.
fn mentions_valid(text: &str, valid: &BTreeSet<String>) -> bool {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower.split(|c: char| !(c.is_ascii_alphanumeric() || c == '-')).filter(|t| !t.is_empty()).collect();
    tokens.windows(2).any(|w| w[0] == "kubectl" && valid.contains(&format!("kubectl {}", w[1])))
}

fn criterion_3() -> Outcome {
    let manual = load_manual_corpus(&sample().join("manual")).unwrap();
    let valid = valid_commands(&manual.documents);
    let records = load_qa_records(&sample().join("troubleshooting.jsonl")).unwrap();
    if records.len() != 10 {
        return fail(format!("fixture has {} records", records.len()));
    }
    let expected: Vec<String> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.score >= 5 && mentions_valid(&format!("{}\n{}", r.title, r.body), &valid))
        .map(|(i, _)| format!("ts/{i:05}"))
        .collect();
    let got: Vec<String> = filter_troubleshooting(&records, 5, &valid).into_iter().map(|d| d.doc_id).collect();
    if got == expected && got.len() == 3 {
        pass(format!("kept {got:?} of 10, matching per-record predicate"))
    } else {
        fail(format!("kept {got:?}, predicate says {expected:?}"))
    }
}

// ---------------------------------------------------------------------------
// 4

fn criterion_4() -> Outcome {
    let prompts = PromptPair::original();
    let sentinel = |name: &str| Some(format!("<<{}>>", name.to_uppercase()));
    for (template, golden) in [(&prompts.rag, "rag_repair_rendered.txt"), (&prompts.baseline, "baseline_rendered.txt")] {
        let expected = std::fs::read_to_string(manifest().join("tests/golden").join(golden)).unwrap();
        let got = template.fill(sentinel).unwrap();
        if got != expected {
            return fail(format!("{golden} differs"));
        }
    }
    if prompts.baseline.kind() != TemplateKind::Baseline {
        return fail("baseline template kind");
    }
    let evidence = |kind, text: &str| ScoredChunk {
        chunk: Chunk { doc_id: "x".into(), ordinal: 0, source_kind: kind, text: text.into() },
        score: 0.0,
    };
    let context = RepairContext {
        failing: FailingCall::new("q", "kubectl get pod", "error: e").unwrap(),
        manual_evidence: vec![evidence(SourceKind::Manual, "MANUAL-EVIDENCE-TEXT")],
        troubleshooting_evidence: vec![evidence(SourceKind::Troubleshooting, "TS-EVIDENCE-TEXT")],
        condition: RepairCondition::NoDocs,
        scratchpad: String::new(),
    };
    let baseline = render_prompt(&context, &prompts).unwrap();
    if baseline.contains("EVIDENCE-TEXT") {
        return fail("baseline render contains retrieved text");
    }
    let full = render_prompt(&RepairContext { condition: RepairCondition::Full, ..context }, &prompts).unwrap();
    if !(full.contains("MANUAL-EVIDENCE-TEXT") && full.contains("TS-EVIDENCE-TEXT")) {
        return fail("full render lacks evidence");
    }
    pass("both renders byte-identical to golden files; baseline carries no document text")
}

// ---------------------------------------------------------------------------
// 5

fn criterion_5() -> Outcome {
    let cases: [(&str, Option<(&str, bool)>); 12] = [
        ("Command: kubectl get pods", Some(("kubectl get pods", false))),
        ("Command: `kubectl get pods -A`\n- reason", Some(("kubectl get pods -A", false))),
        ("**Command:** kubectl logs cart --tail=20", Some(("kubectl logs cart --tail=20", false))),
        (
            "Reflection: the flag was misspelled.\nCommand: kubectl get pods --all-namespaces\n- Use the plural flag.",
            Some(("kubectl get pods --all-namespaces", false)),
        ),
        ("```\nkubectl describe pod frontend\n```", Some(("kubectl describe pod frontend", true))),
        ("I suggest running:\nkubectl get events -n shop\nThis lists events.", Some(("kubectl get events -n shop", true))),
        ("$ kubectl get svc", Some(("kubectl get svc", true))),
        ("Command: kubectl get pods\nCommand: kubectl get svc", Some(("kubectl get pods", false))),
        ("Command: list the pods\nkubectl get pods -n shop", Some(("kubectl get pods -n shop", true))),
        ("Sorry, I cannot help with that.", None),
        ("", None),
        ("Command: kubectlx get pods", None),
    ];
    let mut correct = 0;
    let mut wrong = Vec::new();
    for (i, (raw, expected)) in cases.iter().enumerate() {
        let got = parse_repair_response(raw, "kubectl");
        let ok = match (&got, expected) {
            (Ok(o), Some((cmd, fallback))) => o.repaired_command == *cmd && o.fallback == *fallback,
            (Err(_), None) => true,
            _ => false,
        };
        if ok {
            correct += 1;
        } else {
            wrong.push(i);
        }
    }
    if correct == cases.len() {
        pass(format!("{correct}/12 parse cases"))
    } else {
        fail(format!("{correct}/12, wrong: {wrong:?}"))
    }
}

// ---------------------------------------------------------------------------
// 6

fn e2e_csv() -> (Vec<(RepairCondition, f64)>, String) {
    let dir = sample();
    let manual = load_manual_corpus(&dir.join("manual")).unwrap();
    let ts = filter_troubleshooting(&load_qa_records(&dir.join("troubleshooting.jsonl")).unwrap(), 5, &valid_commands(&manual.documents));
    let policy = ChunkingPolicy::default();
    let mut chunks = chunk_corpus(&manual.documents, &policy).unwrap();
    chunks.extend(chunk_corpus(&ts, &policy).unwrap());
    let embedder = HashEmbedder::new(256);
    let index = build_index(&chunks, &embedder, DistanceMetric::L2Squared).unwrap();
    let retriever = VectorRetriever { index: &index, embedder: &embedder };
    let dataset = load_dataset(&dir.join("dataset.jsonl"), DatasetOptions::default()).unwrap();
    let llm = ScriptedLlm::load_rules("scripted-sample", &dir.join("script.jsonl")).unwrap();
    let executor = Executor::replay(ReplayFixture::load(&dir.join("replay.jsonl")).unwrap());
    let settings = ExperimentSettings { jobs: 4, ..Default::default() };
    let exp = run_experiment(&dataset.cases, &llm, &executor, Some(&retriever), &settings).unwrap();
    let rates = RepairCondition::ALL.iter().map(|c| (*c, pass_rate(&exp.for_condition(*c)).unwrap())).collect();
    let table = ablation_table(&exp.records, DEFAULT_HIGHLIGHT_THRESHOLD).unwrap();
    (rates, render_report(&[table], ReportFormat::Csv))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let (rates, first) = e2e_csv();
    let (_, second) = e2e_csv();
    let elapsed = start.elapsed();
    // Passing cases per condition, by construction of the script.
    let designed = [(RepairCondition::NoDocs, 8), (RepairCondition::ManualOnly, 9), (RepairCondition::TroubleshootingOnly, 12), (RepairCondition::Full, 11)];
    for ((c, rate), (dc, passes)) in rates.iter().zip(designed) {
        if *c != dc || *rate != passes as f64 / 20.0 {
            return fail(format!("{c}: rate {rate}, designed {passes}/20"));
        }
    }
    if first != second {
        return fail("CSV differs between runs");
    }
    if elapsed > Duration::from_secs(5) {
        return fail(format!("took {elapsed:?}"));
    }
    let summary: Vec<String> = rates.iter().map(|(c, r)| format!("{c} {r:.2}")).collect();
    pass(format!("{}; identical CSV across runs; {:.2?} for two runs", summary.join(", "), elapsed))
}

// ---------------------------------------------------------------------------
// 7

fn fixed3(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" { "0.000".into() } else { s }
}

fn record(i: usize, passed: bool) -> EvalRecord {
    EvalRecord {
        case_id: format!("c{i}"),
        condition: RepairCondition::Full,
        model_id: "m".into(),
        attempts: vec![Attempt {
            attempt: 1,
            prompt: String::new(),
            outcome: AttemptOutcome::LlmFailed { message: String::new() },
            execution: ExecutionResult { return_code: if passed { 0 } else { 1 }, ..ExecutionResult::not_executed("") },
        }],
        passed,
        correctness: None,
    }
}

fn criterion_7() -> Outcome {
    let text = std::fs::read_to_string(manifest().join("data/pass_rates.csv")).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    let rates: Vec<(String, f64, f64)> = rows.iter().map(|r| (r[0].clone(), r[1].parse().unwrap(), r[2].parse().unwrap())).collect();
    let table = delta_table_from_rates(&rates, DEFAULT_HIGHLIGHT_THRESHOLD);

    let mut delta_mismatch = Vec::new();
    let mut highlight_mismatch = Vec::new();
    for (row, published) in table.rows.iter().zip(&rows) {
        if fixed3(row.delta) != published[3] {
            delta_mismatch.push(format!("{}: published {} computed {}", row.model_id, published[3], fixed3(row.delta)));
        }
        if row.highlight != (published[4] == "1") {
            highlight_mismatch.push(row.model_id.clone());
        }
    }
    let llama = &table.rows[0];
    let mixtral = table.rows.iter().find(|r| r.model_id == "Mixtral 8x22b").unwrap();
    let spot = fixed3(llama.delta) == "0.070" && llama.highlight && fixed3(mixtral.delta) == "-0.007" && !mixtral.highlight;

    let records: Vec<EvalRecord> = (0..772).map(|i| record(i, i < 484)).collect();
    let rate = pass_rate(&records).unwrap();
    let rate_ok = format!("{rate:.3}") == "0.627";

    let detail = format!(
        "{}/11 deltas reproduced, highlights {}, spot checks {}, pass_rate(484/772) = {rate:.3}",
        11 - delta_mismatch.len(),
        if highlight_mismatch.is_empty() { "identical".to_string() } else { format!("differ at {highlight_mismatch:?}") },
        if spot { "ok" } else { "wrong" },
    );
    let rest_ok = highlight_mismatch.is_empty() && spot && rate_ok;
    if delta_mismatch.is_empty() && rest_ok {
        pass(detail)
    } else {
        Outcome {
            ok: false,
            known_gap: rest_ok && delta_mismatch == [KNOWN_DELTA_GAP],
            detail: format!("{detail}; mismatched deltas: {}", delta_mismatch.join("; ")),
        }
    }
}

// ---------------------------------------------------------------------------
// 8

fn set_from(labels: &[usize], id: &str) -> AnnotationSet {
    labels.iter().enumerate().fold(AnnotationSet::new(id), |s, (i, l)| s.with(format!("case-{i:02}"), CorrectnessLabel::ALL[*l]))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let n = rng.gen_range(2..40);
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let (sa, sb) = (set_from(&a, "a"), set_from(&b, "b"));
        for w in [KappaWeights::Linear, KappaWeights::Quadratic] {
            let ab = weighted_kappa(&sa, &sb, w).unwrap();
            let ba = weighted_kappa(&sb, &sa, w).unwrap();
            if (ab - ba).abs() > 1e-12 {
                return fail(format!("asymmetric: {ab} vs {ba}"));
            }
            if weighted_kappa(&sa, &sa, w).unwrap() != 1.0 {
                return fail("self agreement is not 1");
            }
        }
    }
    // Six cases, two disagreements each one category apart. Label counts
    // A = [2,1,1,1,1], B = [1,2,1,0,2]. Linear: observed Σ|i-j| = 2,
    // expected Σ A_i B_j |i-j| = 62, so κ = 1 - (2/6)/(62/36) = 25/31.
    // Quadratic: expected Σ A_i B_j (i-j)² = 168, κ = 1 - 12/168 = 13/14.
    let a = set_from(&[0, 0, 1, 2, 3, 4], "a");
    let b = set_from(&[0, 1, 1, 2, 4, 4], "b");
    let linear = weighted_kappa(&a, &b, KappaWeights::Linear).unwrap();
    let quadratic = weighted_kappa(&a, &b, KappaWeights::Quadratic).unwrap();
    if (linear - 25.0 / 31.0).abs() > 1e-9 || (quadratic - 13.0 / 14.0).abs() > 1e-9 {
        return fail(format!("6-case fixture: linear {linear}, quadratic {quadratic}"));
    }
    pass(format!("symmetry and self-agreement on 100 random pairs; 6-case fixture linear {linear:.6} quadratic {quadratic:.6}"))
}

// ---------------------------------------------------------------------------
// 9

fn toy(id: &str, text: &str) -> Chunk {
    Chunk { doc_id: id.into(), ordinal: 0, source_kind: SourceKind::Manual, text: text.into() }
}

fn criterion_9() -> Outcome {
    // d0 "pods crash pods" (len 3), d1 "logs for pods" (len 3), d2 "events"
    // (len 1); avgdl 7/3; query "pods logs". "pods" is in 2 of 3 docs, "logs"
    // in 1.
    let chunks = vec![toy("d0", "pods crash pods"), toy("d1", "logs for pods"), toy("d2", "events")];
    let (k1, b) = (1.2_f64, 0.75_f64);
    let avgdl = 7.0 / 3.0;
    let idf_pods = (1.5_f64 / 2.5 + 1.0).ln();
    let idf_logs = (2.5_f64 / 1.5 + 1.0).ln();
    let norm3 = 1.0 - b + b * 3.0 / avgdl;
    let term = |idf: f64, f: f64, norm: f64| idf * f * (k1 + 1.0) / (f + k1 * norm);
    let expected = [term(idf_pods, 2.0, norm3), term(idf_pods, 1.0, norm3) + term(idf_logs, 1.0, norm3), 0.0];

    let index = LexicalIndex::new(chunks, Bm25Params::new(k1, b).unwrap()).unwrap();
    let hits = index.retrieve("pods logs", 3, Some(SourceKind::Manual)).unwrap();
    for hit in &hits {
        let i: usize = hit.chunk.doc_id[1..].parse().unwrap();
        if (-hit.score - expected[i]).abs() > 1e-9 {
            return fail(format!("{}: {} vs hand {}", hit.chunk.doc_id, -hit.score, expected[i]));
        }
    }
    if hits.len() != 3 {
        return fail("expected 3 hits");
    }

    // Monotonicity: one more occurrence of term t in a chunk never lowers
    // that chunk's score for t.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vocab = ["pods", "logs", "events", "namespace", "crash", "deploy"];
    for round in 0..100 {
        let n = rng.gen_range(1..8);
        let chunks: Vec<Chunk> = (0..n)
            .map(|i| {
                let len = rng.gen_range(1..12);
                let words: Vec<&str> = (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect();
                toy(&format!("c{i}"), &words.join(" "))
            })
            .collect();
        let target = rng.gen_range(0..n);
        let term = vocab[rng.gen_range(0..vocab.len())];
        let mut perturbed = chunks.clone();
        perturbed[target].text.push(' ');
        perturbed[target].text.push_str(term);
        let params = Bm25Params::default();
        let before = rag_repair::retrieval::bm25_scores(&chunks, term, params)[target];
        let after = rag_repair::retrieval::bm25_scores(&perturbed, term, params)[target];
        if after < before - 1e-12 {
            return fail(format!("round {round}: {before} -> {after} after adding {term:?}"));
        }
    }
    pass("toy corpus within 1e-9 of hand computation; monotone over 100 perturbations")
}

// ---------------------------------------------------------------------------
// 10

#[derive(Default)]
struct CountingSpawner(AtomicUsize);

impl Spawner for CountingSpawner {
    fn spawn(&self, _: &SpawnRequest) -> std::io::Result<SpawnOutput> {
        self.0.fetch_add(1, AtomicOrdering::SeqCst);
        Ok(SpawnOutput { return_code: 0, stdout: Vec::new(), stderr: Vec::new() })
    }
}

fn criterion_10() -> Outcome {
    let spawner = Arc::new(CountingSpawner::default());
    let deny = Executor::with_spawner(ExecutorMode::Deny, SafetyPolicy::default(), spawner.clone());
    for cmd in ["kubectl get pods", "kubectl delete ns shop", "kubectl logs x | grep err"] {
        let r = deny.execute(cmd).unwrap();
        if r.return_code != 126 {
            return fail(format!("deny returned {}", r.return_code));
        }
    }
    let live = Executor::with_spawner(ExecutorMode::Live(LiveConfig::default()), SafetyPolicy::default(), spawner.clone());
    if !matches!(live.execute("kubectl get pods"), Err(ExecError::LiveNotEnabled)) {
        return fail("live ran without opt-in");
    }
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "[executor]\nmode = \"live\"\nunsafe_live_ack = true\n").unwrap();
    let code = rag_repair::cli::run([
        "rag-repair",
        "--config",
        config.to_str().unwrap(),
        "repair",
        "--condition",
        "none",
        "--query",
        "q",
        "--cmd",
        "kubectl get pod",
        "--error",
        "e",
    ]);
    if code != 2 {
        return fail(format!("CLI live without --unsafe-live-exec exited {code}"));
    }
    let counted = spawner.0.load(AtomicOrdering::SeqCst);
    let system = system_spawn_count();
    if counted != 0 || system != 0 {
        return fail(format!("launches: double {counted}, system {system}"));
    }
    pass("deny and refused live runs recorded 0 launches; no process spawned in this run")
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "retrieval oracle equivalence", criterion_1),
        (2, "chunker round trip", criterion_2),
        (3, "troubleshooting filter", criterion_3),
        (4, "prompt golden files", criterion_4),
        (5, "response parsing", criterion_5),
        (6, "end-to-end determinism", criterion_6),
        (7, "pass-rate delta arithmetic", criterion_7),
        (8, "weighted kappa", criterion_8),
        (9, "bm25 correctness", criterion_9),
        (10, "execution safety", criterion_10),
    ];
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        let outcome = check();
        let status = if outcome.ok { "PASS" } else { "FAIL" };
        println!("{status} [{id}] {name}: {}", outcome.detail);
        if !outcome.ok {
            if outcome.known_gap {
                println!("     [{id}] known gap: the published delta is not the difference of the published rates");
            } else {
                unexpected += 1;
            }
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} acceptance criteria failed");
        std::process::exit(1);
    }
}
