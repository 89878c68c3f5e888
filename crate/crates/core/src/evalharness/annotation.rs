use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Ordinal correctness scale for a repaired command, best first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CorrectnessLabel {
    Correct,
    Partial,
    Adjacent,
    Incorrect,
    Error,
}

impl CorrectnessLabel {
    pub const ALL: [CorrectnessLabel; 5] = [
        CorrectnessLabel::Correct,
        CorrectnessLabel::Partial,
        CorrectnessLabel::Adjacent,
        CorrectnessLabel::Incorrect,
        CorrectnessLabel::Error,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            CorrectnessLabel::Correct => "Correct",
            CorrectnessLabel::Partial => "Partial",
            CorrectnessLabel::Adjacent => "Adjacent",
            CorrectnessLabel::Incorrect => "Incorrect",
            CorrectnessLabel::Error => "Error",
        }
    }
}

impl fmt::Display for CorrectnessLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorrectnessLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .collect();
        match norm.as_str() {
            "correct" | "c" => Ok(CorrectnessLabel::Correct),
            "partial" | "partiallycorrect" | "p" => Ok(CorrectnessLabel::Partial),
            "adjacent" | "a" => Ok(CorrectnessLabel::Adjacent),
            "incorrect" | "i" => Ok(CorrectnessLabel::Incorrect),
            "error" | "e" => Ok(CorrectnessLabel::Error),
            _ => Err(format!("unknown correctness label {s:?}")),
        }
    }
}

impl TryFrom<String> for CorrectnessLabel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<CorrectnessLabel> for String {
    fn from(label: CorrectnessLabel) -> Self {
        label.name().to_string()
    }
}

/// One annotator's labels keyed by case id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub annotator_id: String,
    pub labels: BTreeMap<String, CorrectnessLabel>,
}

impl AnnotationSet {
    pub fn new(annotator_id: impl Into<String>) -> Self {
        AnnotationSet {
            annotator_id: annotator_id.into(),
            labels: BTreeMap::new(),
        }
    }

    pub fn with(mut self, case_id: impl Into<String>, label: CorrectnessLabel) -> Self {
        self.labels.insert(case_id.into(), label);
        self
    }

    /// Fails with the labeled ids that are not in `known`.
    pub fn validate_against<'a>(
        &self,
        known: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), EvalError> {
        let known: BTreeSet<&str> = known.into_iter().collect();
        let unknown: Vec<String> = self
            .labels
            .keys()
            .filter(|id| !known.contains(id.as_str()))
            .cloned()
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(EvalError::UnknownCases(unknown))
        }
    }
}

#[derive(Deserialize)]
struct AnnotationRecord {
    annotator_id: String,
    case_id: String,
    label: CorrectnessLabel,
}

/// Reads `{annotator_id, case_id, label}` lines, grouped by annotator in
/// order of first appearance.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationSet>, EvalError> {
    let load_err = |line: usize, message: String| EvalError::Load {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = fs::File::open(path).map_err(|e| load_err(0, e.to_string()))?;
    let mut sets: Vec<AnnotationSet> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| load_err(idx + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| load_err(idx + 1, e.to_string()))?;
        let set = match sets.iter_mut().position(|s| s.annotator_id == record.annotator_id) {
            Some(i) => &mut sets[i],
            None => {
                sets.push(AnnotationSet::new(record.annotator_id.clone()));
                sets.last_mut().unwrap()
            }
        };
        if set.labels.insert(record.case_id.clone(), record.label).is_some() {
            return Err(load_err(
                idx + 1,
                format!("case {:?} labeled twice by {:?}", record.case_id, record.annotator_id),
            ));
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaWeights {
    #[default]
    Linear,
    Quadratic,
}

impl FromStr for KappaWeights {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(KappaWeights::Linear),
            "quadratic" => Ok(KappaWeights::Quadratic),
            other => Err(format!("unknown kappa weights {other:?}")),
        }
    }
}

impl KappaWeights {
    fn weight(self, i: usize, j: usize, categories: usize) -> f64 {
        let d = i.abs_diff(j) as f64 / (categories - 1) as f64;
        match self {
            KappaWeights::Linear => d,
            KappaWeights::Quadratic => d * d,
        }
    }
}

fn check_case_sets(a: &AnnotationSet, b: &AnnotationSet) -> Result<(), EvalError> {
    let only_a: Vec<String> = a.labels.keys().filter(|k| !b.labels.contains_key(*k)).cloned().collect();
    let only_b: Vec<String> = b.labels.keys().filter(|k| !a.labels.contains_key(*k)).cloned().collect();
    if only_a.is_empty() && only_b.is_empty() {
        Ok(())
    } else {
        Err(EvalError::AnnotationMismatch { only_a, only_b })
    }
}

/// Counts indexed `[label of a][label of b]` over the shared cases.
pub fn confusion_matrix(a: &AnnotationSet, b: &AnnotationSet) -> Result<[[usize; 5]; 5], EvalError> {
    check_case_sets(a, b)?;
    let mut counts = [[0usize; 5]; 5];
    for (case, la) in &a.labels {
        let lb = b.labels[case];
        counts[la.ordinal()][lb.ordinal()] += 1;
    }
    Ok(counts)
}

/// Weighted Cohen's kappa over the five-point correctness scale:
/// `1 - Σ w·observed / Σ w·expected`, with disagreement weights
/// `|i-j|/(m-1)` (linear) or its square (quadratic). When no disagreement is
/// expected at all (both annotators use one identical label) the result is 1.
pub fn weighted_kappa(
    a: &AnnotationSet,
    b: &AnnotationSet,
    weights: KappaWeights,
) -> Result<f64, EvalError> {
    let counts = confusion_matrix(a, b)?;
    let n = a.labels.len();
    if n < 2 {
        return Err(EvalError::TooFewCases(n));
    }
    let m = CorrectnessLabel::ALL.len();
    let total = n as f64;
    let rows: Vec<f64> = (0..m).map(|i| counts[i].iter().sum::<usize>() as f64 / total).collect();
    let cols: Vec<f64> = (0..m).map(|j| (0..m).map(|i| counts[i][j]).sum::<usize>() as f64 / total).collect();

    let (mut observed, mut expected) = (0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            let w = weights.weight(i, j, m);
            observed += w * counts[i][j] as f64 / total;
            expected += w * rows[i] * cols[j];
        }
    }
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - observed / expected)
}
