//! Experiment harness: datasets of failing calls, ablation runs over repair
//! conditions, pass-rate and correctness summaries, annotator agreement and
//! report rendering.

mod annotation;
mod dataset;
mod experiment;
mod metrics;
mod report;

pub use annotation::{
    confusion_matrix, load_annotations, weighted_kappa, AnnotationSet, CorrectnessLabel,
    KappaWeights,
};
pub use dataset::{load_dataset, parse_dataset, sample_cases, Dataset, DatasetOptions, EvalCase};
pub use experiment::{
    load_records, run_experiment, write_records, EvalRecord, Experiment, ExperimentSettings,
};
pub use metrics::{
    ablation_table, correctness_mismatches, correctness_rates, delta_table,
    delta_table_from_rates, pass_rate, CorrectnessRates, ReportRow, ReportTable,
    DEFAULT_HIGHLIGHT_THRESHOLD,
};
pub use report::{render_correctness, render_report, ReportFormat};

use std::path::PathBuf;

use thiserror::Error;

use crate::repair::RepairCondition;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}:{line}: {message}")]
    Load {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate case id {0:?}")]
    DuplicateCase(String),
    #[error("no records to aggregate")]
    Empty,
    #[error("record {0:?} has no correctness label")]
    Unlabeled(String),
    #[error("model {0:?} appears on only one side of the comparison")]
    UnmatchedModel(String),
    #[error("model {0:?} has different case sets in baseline and treatment")]
    CaseSetMismatch(String),
    #[error("annotation case sets differ: only in first {only_a:?}, only in second {only_b:?}")]
    AnnotationMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },
    #[error("kappa needs at least 2 cases, got {0}")]
    TooFewCases(usize),
    #[error("annotations reference unknown cases {0:?}")]
    UnknownCases(Vec<String>),
    #[error("condition {0} needs a retrieval index")]
    MissingIndex(RepairCondition),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
