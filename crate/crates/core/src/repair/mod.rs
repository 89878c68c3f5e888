//! Retrieval-augmented repair of a failing tool call.
//!
//! A failing call (query, command, error) becomes a retrieval key, the
//! nearest manual and troubleshooting chunks are gathered according to the
//! [`RepairCondition`], and the filled reflection prompt goes to an LLM. The
//! command parsed from its reply is executed; on failure the reply and the
//! new error are appended to the scratchpad and the loop tries again.

mod llm;
mod parse;
mod prompt;

pub use llm::{HttpLlmClient, HttpLlmConfig, LlmClient, LlmError, ScriptRule, ScriptedLlm};
pub use parse::{parse_repair_response, ParseError, RepairOutcome};
pub use prompt::{
    render_prompt, PromptPair, PromptTemplate, TemplateError, TemplateKind, NO_DOCUMENT,
    PLACEHOLDERS,
};

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::SourceKind;
use crate::executor::{is_pass, ExecutionResult, Executor, DEFAULT_TOOL};
use crate::retrieval::{RetrievalError, Retriever, ScoredChunk};

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("failing call needs a non-empty {0}")]
    InvalidCall(&'static str),
    #[error("condition {0} needs a retrieval index")]
    MissingIndex(RepairCondition),
    #[error("max_attempts must be at least 1")]
    ZeroAttempts,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailingCall {
    pub query: String,
    pub command: String,
    pub error_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_model: Option<String>,
}

impl FailingCall {
    pub fn new(
        query: impl Into<String>,
        command: impl Into<String>,
        error_text: impl Into<String>,
    ) -> Result<Self, RepairError> {
        let call = FailingCall {
            query: query.into(),
            command: command.into(),
            error_text: error_text.into(),
            origin_model: None,
        };
        call.validate()?;
        Ok(call)
    }

    pub fn validate(&self) -> Result<(), RepairError> {
        if self.command.trim().is_empty() {
            return Err(RepairError::InvalidCall("command"));
        }
        if self.error_text.trim().is_empty() {
            return Err(RepairError::InvalidCall("error"));
        }
        Ok(())
    }

    /// Query, command and error joined by newlines.
    pub fn retrieval_key(&self) -> String {
        format!("{}\n{}\n{}", self.query, self.command, self.error_text)
    }
}

/// Which document collections feed the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RepairCondition {
    /// Self-reflection only, no retrieval.
    NoDocs,
    ManualOnly,
    TroubleshootingOnly,
    Full,
}

impl RepairCondition {
    /// Column order used in reports.
    pub const ALL: [RepairCondition; 4] = [
        RepairCondition::NoDocs,
        RepairCondition::ManualOnly,
        RepairCondition::TroubleshootingOnly,
        RepairCondition::Full,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RepairCondition::NoDocs => "None",
            RepairCondition::ManualOnly => "Man",
            RepairCondition::TroubleshootingOnly => "TS",
            RepairCondition::Full => "Full",
        }
    }

    pub fn uses(self, kind: SourceKind) -> bool {
        matches!(
            (self, kind),
            (RepairCondition::Full, _)
                | (RepairCondition::ManualOnly, SourceKind::Manual)
                | (RepairCondition::TroubleshootingOnly, SourceKind::Troubleshooting)
        )
    }

    pub fn needs_index(self) -> bool {
        self != RepairCondition::NoDocs
    }
}

impl fmt::Display for RepairCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RepairCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "nodocs" | "baseline" => Ok(RepairCondition::NoDocs),
            "man" | "manual" | "manualonly" => Ok(RepairCondition::ManualOnly),
            "ts" | "troubleshooting" | "troubleshootingonly" => Ok(RepairCondition::TroubleshootingOnly),
            "full" | "rag" => Ok(RepairCondition::Full),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairContext {
    pub failing: FailingCall,
    pub manual_evidence: Vec<ScoredChunk>,
    pub troubleshooting_evidence: Vec<ScoredChunk>,
    pub condition: RepairCondition,
    pub scratchpad: String,
}

/// Retrieves up to `k_per_collection` chunks from each collection the
/// condition uses. `NoDocs` never touches the retriever.
pub fn build_repair_context(
    failing: &FailingCall,
    retriever: Option<&dyn Retriever>,
    condition: RepairCondition,
    k_per_collection: usize,
) -> Result<RepairContext, RepairError> {
    failing.validate()?;
    let mut context = RepairContext {
        failing: failing.clone(),
        manual_evidence: Vec::new(),
        troubleshooting_evidence: Vec::new(),
        condition,
        scratchpad: String::new(),
    };
    if !condition.needs_index() {
        return Ok(context);
    }
    let retriever = retriever.ok_or(RepairError::MissingIndex(condition))?;
    let key = failing.retrieval_key();
    if condition.uses(SourceKind::Manual) {
        context.manual_evidence = retriever.retrieve(&key, k_per_collection, Some(SourceKind::Manual))?;
    }
    if condition.uses(SourceKind::Troubleshooting) {
        context.troubleshooting_evidence =
            retriever.retrieve(&key, k_per_collection, Some(SourceKind::Troubleshooting))?;
    }
    Ok(context)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairSettings {
    pub condition: RepairCondition,
    pub k_per_collection: usize,
    pub max_attempts: usize,
    pub tool_name: String,
    pub prompts: PromptPair,
}

impl Default for RepairSettings {
    fn default() -> Self {
        RepairSettings {
            condition: RepairCondition::Full,
            k_per_collection: 1,
            max_attempts: 1,
            tool_name: DEFAULT_TOOL.to_string(),
            prompts: PromptPair::original(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AttemptOutcome {
    Repaired(RepairOutcome),
    LlmFailed { message: String },
    Unparsed { raw_response: String, message: String },
    /// The round could not start, e.g. retrieval failed.
    Aborted { message: String },
}

impl AttemptOutcome {
    pub fn raw_response(&self) -> Option<&str> {
        match self {
            AttemptOutcome::Repaired(o) => Some(&o.raw_response),
            AttemptOutcome::Unparsed { raw_response, .. } => Some(raw_response),
            AttemptOutcome::LlmFailed { .. } | AttemptOutcome::Aborted { .. } => None,
        }
    }

    pub fn repaired_command(&self) -> Option<&str> {
        match self {
            AttemptOutcome::Repaired(o) => Some(&o.repaired_command),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt: usize,
    pub prompt: String,
    pub outcome: AttemptOutcome,
    pub execution: ExecutionResult,
}

impl Attempt {
    pub fn passed(&self) -> bool {
        is_pass(&self.execution)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRun {
    pub context: RepairContext,
    pub attempts: Vec<Attempt>,
}

impl RepairRun {
    pub fn passed(&self) -> bool {
        self.attempts.last().is_some_and(Attempt::passed)
    }
}

fn scratchpad_entry(attempt: &Attempt) -> String {
    let response = attempt.outcome.raw_response().unwrap_or("(no response)");
    let error = match &attempt.outcome {
        AttemptOutcome::LlmFailed { message }
        | AttemptOutcome::Unparsed { message, .. }
        | AttemptOutcome::Aborted { message } => message.clone(),
        AttemptOutcome::Repaired(_) if attempt.execution.stderr.trim().is_empty() => {
            format!("return code {}", attempt.execution.return_code)
        }
        AttemptOutcome::Repaired(_) => attempt.execution.stderr.trim().to_string(),
    };
    format!("Attempt {}:\n{}\nError: {}", attempt.attempt, response.trim(), error)
}

/// Runs up to `settings.max_attempts` repair rounds, stopping at the first
/// command that executes with return code 0. LLM failures and unparseable
/// replies count as failed attempts; the loop continues.
pub fn repair_loop(
    failing: &FailingCall,
    llm: &dyn LlmClient,
    executor: &Executor,
    retriever: Option<&dyn Retriever>,
    settings: &RepairSettings,
) -> Result<RepairRun, RepairError> {
    if settings.max_attempts == 0 {
        return Err(RepairError::ZeroAttempts);
    }
    let mut context = build_repair_context(failing, retriever, settings.condition, settings.k_per_collection)?;
    let mut attempts: Vec<Attempt> = Vec::new();

    for n in 1..=settings.max_attempts {
        context.scratchpad = attempts.iter().map(scratchpad_entry).collect::<Vec<_>>().join("\n");
        let prompt = render_prompt(&context, &settings.prompts)?;
        let (outcome, execution) = match llm.generate(&prompt) {
            Err(e) => {
                let message = e.to_string();
                (AttemptOutcome::LlmFailed { message: message.clone() }, ExecutionResult::not_executed(message))
            }
            Ok(raw) => match parse_repair_response(&raw, &settings.tool_name) {
                Err(e) => {
                    let message = e.to_string();
                    (
                        AttemptOutcome::Unparsed { raw_response: raw, message: message.clone() },
                        ExecutionResult::not_executed(message),
                    )
                }
                Ok(mut outcome) => {
                    outcome.attempt = n;
                    let execution = executor
                        .execute(&outcome.repaired_command)
                        .unwrap_or_else(|e| ExecutionResult {
                            command: outcome.repaired_command.clone(),
                            ..ExecutionResult::not_executed(e.to_string())
                        });
                    (AttemptOutcome::Repaired(outcome), execution)
                }
            },
        };
        let attempt = Attempt { attempt: n, prompt, outcome, execution };
        let passed = attempt.passed();
        attempts.push(attempt);
        if passed {
            break;
        }
    }
    context.scratchpad.clear();
    Ok(RepairRun { context, attempts })
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One line of the repair transcript log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub case_id: String,
    pub attempt: usize,
    pub condition: RepairCondition,
    pub prompt_hash: String,
    pub raw_response: Option<String>,
    pub repaired_command: Option<String>,
    pub return_code: i32,
}

impl TranscriptRecord {
    pub fn from_attempts(case_id: &str, condition: RepairCondition, attempts: &[Attempt]) -> Vec<Self> {
        attempts
            .iter()
            .map(|a| TranscriptRecord {
                case_id: case_id.to_string(),
                attempt: a.attempt,
                condition,
                prompt_hash: prompt_hash(&a.prompt),
                raw_response: a.outcome.raw_response().map(str::to_string),
                repaired_command: a.outcome.repaired_command().map(str::to_string),
                return_code: a.execution.return_code,
            })
            .collect()
    }
}

pub fn write_transcript(path: &Path, records: &[TranscriptRecord]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for record in records {
        writeln!(out, "{}", serde_json::to_string(record).expect("transcript serializes"))?;
    }
    out.flush()
}
