use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use thiserror::Error;

use super::{RepairCondition, RepairContext};
use crate::retrieval::ScoredChunk;

/// Substituted for a document slot whose collection is not in use.
pub const NO_DOCUMENT: &str = "(no document retrieved)";

const RAG_REPAIR_TEXT: &str = include_str!("../../assets/prompts/rag_repair.txt");
const BASELINE_TEXT: &str = include_str!("../../assets/prompts/baseline.txt");
const RAG_REPAIR_CORRECTED_TEXT: &str = include_str!("../../assets/prompts/rag_repair_corrected.txt");
const BASELINE_CORRECTED_TEXT: &str = include_str!("../../assets/prompts/baseline_corrected.txt");

pub const PLACEHOLDERS: [&str; 6] = [
    "rag_man_result",
    "rag_result",
    "query",
    "cmd",
    "error",
    "agent_scratchpad",
];
const DOCUMENT_PLACEHOLDERS: [&str; 2] = ["rag_man_result", "rag_result"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("{kind:?} template is missing {{{placeholder}}}")]
    MissingPlaceholder {
        kind: TemplateKind,
        placeholder: &'static str,
    },
    #[error("baseline template must not reference {{{0}}}")]
    DocumentInBaseline(&'static str),
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    RagRepair,
    Baseline,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: TemplateKind,
    text: String,
}

impl PromptTemplate {
    /// Checks the placeholder set: only known names, `{cmd}` and `{error}`
    /// always present, both document slots in a RAG template and neither in
    /// a baseline one.
    pub fn new(kind: TemplateKind, text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        let found: BTreeSet<&str> = placeholder_re()
            .captures_iter(&text)
            .map(|c| c.get(1).unwrap().as_str())
            .collect();
        if let Some(unknown) = found.iter().find(|p| !PLACEHOLDERS.contains(p)) {
            return Err(TemplateError::UnknownPlaceholder(unknown.to_string()));
        }
        for required in ["cmd", "error"] {
            if !found.contains(required) {
                return Err(TemplateError::MissingPlaceholder {
                    kind,
                    placeholder: required,
                });
            }
        }
        for doc in DOCUMENT_PLACEHOLDERS {
            match kind {
                TemplateKind::RagRepair if !found.contains(doc) => {
                    return Err(TemplateError::MissingPlaceholder {
                        kind,
                        placeholder: doc,
                    })
                }
                TemplateKind::Baseline if found.contains(doc) => {
                    return Err(TemplateError::DocumentInBaseline(doc))
                }
                _ => {}
            }
        }
        Ok(PromptTemplate { kind, text })
    }

    pub fn from_file(kind: TemplateKind, path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::new(kind, text)
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Single-pass substitution; inserted values are never re-scanned, so
    /// retrieved text containing braces is safe.
    pub fn fill(&self, lookup: impl Fn(&str) -> Option<String>) -> Result<String, TemplateError> {
        let mut missing = None;
        let out = placeholder_re().replace_all(&self.text, |caps: &Captures<'_>| {
            let name = &caps[1];
            lookup(name).unwrap_or_else(|| {
                missing.get_or_insert_with(|| name.to_string());
                String::new()
            })
        });
        match missing {
            Some(name) => Err(TemplateError::UnknownPlaceholder(name)),
            None => Ok(out.into_owned()),
        }
    }
}

/// The RAG and baseline templates used together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPair {
    pub rag: PromptTemplate,
    pub baseline: PromptTemplate,
}

impl Default for PromptPair {
    fn default() -> Self {
        Self::original()
    }
}

impl PromptPair {
    /// The reflection prompts exactly as originally published, typos
    /// included.
    pub fn original() -> Self {
        PromptPair {
            rag: PromptTemplate::new(TemplateKind::RagRepair, RAG_REPAIR_TEXT).expect("bundled template"),
            baseline: PromptTemplate::new(TemplateKind::Baseline, BASELINE_TEXT).expect("bundled template"),
        }
    }

    /// Same prompts with spelling fixed ("reflection", "kubectl command").
    pub fn corrected() -> Self {
        PromptPair {
            rag: PromptTemplate::new(TemplateKind::RagRepair, RAG_REPAIR_CORRECTED_TEXT)
                .expect("bundled template"),
            baseline: PromptTemplate::new(TemplateKind::Baseline, BASELINE_CORRECTED_TEXT)
                .expect("bundled template"),
        }
    }

    pub fn for_condition(&self, condition: RepairCondition) -> &PromptTemplate {
        match condition {
            RepairCondition::NoDocs => &self.baseline,
            _ => &self.rag,
        }
    }
}

fn join_evidence(evidence: &[ScoredChunk]) -> String {
    if evidence.is_empty() {
        return NO_DOCUMENT.to_string();
    }
    evidence
        .iter()
        .map(|e| e.chunk.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Renders the prompt for `context`: the baseline template for `NoDocs`,
/// the RAG template otherwise.
pub fn render_prompt(context: &RepairContext, prompts: &PromptPair) -> Result<String, TemplateError> {
    let template = prompts.for_condition(context.condition);
    template.fill(|name| {
        Some(match name {
            "rag_man_result" => join_evidence(&context.manual_evidence),
            "rag_result" => join_evidence(&context.troubleshooting_evidence),
            "query" => context.failing.query.clone(),
            "cmd" => context.failing.command.clone(),
            "error" => context.failing.error_text.clone(),
            "agent_scratchpad" => context.scratchpad.clone(),
            _ => return None,
        })
    })
}
