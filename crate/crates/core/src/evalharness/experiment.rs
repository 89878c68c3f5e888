use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CorrectnessLabel, EvalCase, EvalError};
use crate::executor::{is_pass, ExecutionResult, Executor};
use crate::repair::{
    repair_loop, write_transcript, Attempt, AttemptOutcome, LlmClient, RepairCondition, RepairSettings,
    TranscriptRecord,
};
use crate::retrieval::Retriever;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub case_id: String,
    pub condition: RepairCondition,
    pub model_id: String,
    pub attempts: Vec<Attempt>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness: Option<CorrectnessLabel>,
}

impl EvalRecord {
    pub fn final_command(&self) -> Option<&str> {
        self.attempts.last().and_then(|a| a.outcome.repaired_command())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSettings {
    pub conditions: Vec<RepairCondition>,
    /// Template for every run; its `condition` is replaced per run.
    pub repair: RepairSettings,
    pub jobs: usize,
    pub transcript: Option<PathBuf>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            conditions: RepairCondition::ALL.to_vec(),
            repair: RepairSettings::default(),
            jobs: 1,
            transcript: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    /// Condition-major: every case under the first condition, then the next.
    pub records: Vec<EvalRecord>,
    pub transcript: Vec<TranscriptRecord>,
}

impl Experiment {
    pub fn for_condition(&self, condition: RepairCondition) -> Vec<EvalRecord> {
        self.records.iter().filter(|r| r.condition == condition).cloned().collect()
    }
}

fn run_case(
    case: &EvalCase,
    condition: RepairCondition,
    llm: &dyn LlmClient,
    executor: &Executor,
    retriever: Option<&dyn Retriever>,
    settings: &RepairSettings,
) -> EvalRecord {
    let settings = RepairSettings { condition, ..settings.clone() };
    let attempts = match repair_loop(&case.failing, llm, executor, retriever, &settings) {
        Ok(run) => run.attempts,
        Err(e) => {
            log::warn!("case {} under {condition}: {e}", case.case_id);
            let message = e.to_string();
            vec![Attempt {
                attempt: 1,
                prompt: String::new(),
                outcome: AttemptOutcome::Aborted { message: message.clone() },
                execution: ExecutionResult::not_executed(message),
            }]
        }
    };
    let passed = attempts.last().is_some_and(|a| is_pass(&a.execution));
    EvalRecord {
        case_id: case.case_id.clone(),
        condition,
        model_id: llm.model_id().to_string(),
        attempts,
        passed,
        correctness: None,
    }
}

/// Runs every case under every condition. Cases run on `settings.jobs`
/// threads; record order is independent of scheduling.
pub fn run_experiment(
    cases: &[EvalCase],
    llm: &dyn LlmClient,
    executor: &Executor,
    retriever: Option<&dyn Retriever>,
    settings: &ExperimentSettings,
) -> Result<Experiment, EvalError> {
    if retriever.is_none() {
        if let Some(c) = settings.conditions.iter().find(|c| c.needs_index()) {
            return Err(EvalError::MissingIndex(*c));
        }
    }
    let pairs: Vec<(RepairCondition, &EvalCase)> = settings
        .conditions
        .iter()
        .flat_map(|c| cases.iter().map(move |case| (*c, case)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs.max(1))
        .build()
        .map_err(|e| EvalError::Io(std::io::Error::other(e)))?;
    let records: Vec<EvalRecord> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(condition, case)| run_case(case, *condition, llm, executor, retriever, &settings.repair))
            .collect()
    });
    let transcript: Vec<TranscriptRecord> = records
        .iter()
        .flat_map(|r| TranscriptRecord::from_attempts(&r.case_id, r.condition, &r.attempts))
        .collect();
    if let Some(path) = &settings.transcript {
        write_transcript(path, &transcript)?;
    }
    Ok(Experiment { records, transcript })
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for record in records {
        writeln!(out, "{}", serde_json::to_string(record).expect("record serializes"))?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let load_err = |line: usize, message: String| EvalError::Load {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = fs::File::open(path).map_err(|e| load_err(0, e.to_string()))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| load_err(idx + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord = serde_json::from_str(&line).map_err(|e| load_err(idx + 1, e.to_string()))?;
        if record.attempts.is_empty() {
            return Err(load_err(idx + 1, "record has no attempts".into()));
        }
        records.push(record);
    }
    Ok(records)
}
