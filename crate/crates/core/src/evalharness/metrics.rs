use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CorrectnessLabel, EvalError, EvalRecord};
use crate::repair::RepairCondition;

pub const DEFAULT_HIGHLIGHT_THRESHOLD: f64 = 0.05;

/// Absorbs float noise so that a difference printed as exactly the
/// threshold is not highlighted.
const HIGHLIGHT_EPSILON: f64 = 1e-9;

/// Passed over total.
pub fn pass_rate(records: &[EvalRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let passed = records.iter().filter(|r| r.passed).count();
    Ok(passed as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_id: String,
    /// One rate per table column.
    pub rates: Vec<f64>,
    /// Last column minus first.
    pub delta: f64,
    pub highlight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub threshold: f64,
}

impl ReportTable {
    pub fn new(columns: Vec<String>, threshold: f64) -> Self {
        ReportTable { columns, rows: Vec::new(), threshold }
    }

    /// Appends a row; the delta and highlight are derived from the rates.
    pub fn push(&mut self, model_id: impl Into<String>, rates: Vec<f64>) {
        assert_eq!(rates.len(), self.columns.len(), "row width must match the columns");
        let delta = match (rates.first(), rates.last()) {
            (Some(first), Some(last)) => last - first,
            _ => 0.0,
        };
        self.rows.push(ReportRow {
            model_id: model_id.into(),
            rates,
            delta,
            highlight: is_highlighted(delta, self.threshold),
        });
    }

    pub fn highlighted(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.highlight).map(|r| r.model_id.as_str()).collect()
    }
}

fn is_highlighted(delta: f64, threshold: f64) -> bool {
    delta.abs() > threshold + HIGHLIGHT_EPSILON
}

fn group_by_model(records: &[EvalRecord]) -> Vec<(String, Vec<&EvalRecord>)> {
    let mut groups: Vec<(String, Vec<&EvalRecord>)> = Vec::new();
    for record in records {
        match groups.iter_mut().find(|(m, _)| *m == record.model_id) {
            Some((_, group)) => group.push(record),
            None => groups.push((record.model_id.clone(), vec![record])),
        }
    }
    groups
}

fn case_set<'a>(records: &[&'a EvalRecord]) -> BTreeSet<&'a str> {
    records.iter().map(|r| r.case_id.as_str()).collect()
}

/// Baseline versus treatment pass rate per model, in baseline order.
pub fn delta_table(
    baseline: &[EvalRecord],
    treatment: &[EvalRecord],
    threshold: f64,
) -> Result<ReportTable, EvalError> {
    let base = group_by_model(baseline);
    let treat = group_by_model(treatment);
    if let Some((m, _)) = treat.iter().find(|(m, _)| !base.iter().any(|(b, _)| b == m)) {
        return Err(EvalError::UnmatchedModel(m.clone()));
    }
    let mut rows = Vec::new();
    for (model, b) in &base {
        let t = treat
            .iter()
            .find(|(m, _)| m == model)
            .map(|(_, t)| t)
            .ok_or_else(|| EvalError::UnmatchedModel(model.clone()))?;
        if case_set(b) != case_set(t) {
            return Err(EvalError::CaseSetMismatch(model.clone()));
        }
        let rate = |rs: &[&EvalRecord]| rs.iter().filter(|r| r.passed).count() as f64 / rs.len() as f64;
        rows.push((model.clone(), rate(b), rate(t)));
    }
    Ok(delta_table_from_rates(&rows, threshold))
}

/// Same table shape from precomputed `(model, baseline, treatment)` rates.
pub fn delta_table_from_rates(rows: &[(String, f64, f64)], threshold: f64) -> ReportTable {
    let mut table = ReportTable::new(vec!["Baseline".into(), "RAG".into()], threshold);
    for (model, base, treat) in rows {
        table.push(model.clone(), vec![*base, *treat]);
    }
    table
}

/// One column per condition present in the records, in the standard
/// condition order; the delta compares the last column with the first.
pub fn ablation_table(records: &[EvalRecord], threshold: f64) -> Result<ReportTable, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let present: Vec<RepairCondition> = RepairCondition::ALL
        .into_iter()
        .filter(|c| records.iter().any(|r| r.condition == *c))
        .collect();
    let mut table = ReportTable::new(present.iter().map(|c| c.label().to_string()).collect(), threshold);
    for (model, group) in group_by_model(records) {
        let mut rates = Vec::with_capacity(present.len());
        let mut reference: Option<BTreeSet<&str>> = None;
        for condition in &present {
            let subset: Vec<&EvalRecord> = group.iter().copied().filter(|r| r.condition == *condition).collect();
            if subset.is_empty() {
                return Err(EvalError::CaseSetMismatch(model.clone()));
            }
            let ids = case_set(&subset);
            match &reference {
                Some(r) if *r != ids => return Err(EvalError::CaseSetMismatch(model.clone())),
                Some(_) => {}
                None => reference = Some(ids),
            }
            rates.push(subset.iter().filter(|r| r.passed).count() as f64 / subset.len() as f64);
        }
        table.push(model, rates);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessRates {
    /// Indexed by [`CorrectnessLabel::ordinal`].
    pub counts: [usize; 5],
    pub total: usize,
}

impl CorrectnessRates {
    pub fn rate(&self, label: CorrectnessLabel) -> f64 {
        self.counts[label.ordinal()] as f64 / self.total as f64
    }

    pub fn rates(&self) -> [f64; 5] {
        CorrectnessLabel::ALL.map(|l| self.rate(l))
    }
}

pub fn correctness_rates(records: &[EvalRecord]) -> Result<CorrectnessRates, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = [0usize; 5];
    for record in records {
        let label = record.correctness.ok_or_else(|| EvalError::Unlabeled(record.case_id.clone()))?;
        counts[label.ordinal()] += 1;
    }
    Ok(CorrectnessRates { counts, total: records.len() })
}

/// Labeled records where the label disagrees with execution: `Error` on a
/// pass, or any other label on a failure.
pub fn correctness_mismatches(records: &[EvalRecord]) -> Vec<&str> {
    records
        .iter()
        .filter(|r| r.correctness.is_some_and(|l| (l == CorrectnessLabel::Error) == r.passed))
        .map(|r| r.case_id.as_str())
        .collect()
}

/// Counts per `(model, condition)` pair, for the correctness table.
pub(crate) fn correctness_by_group(
    records: &[EvalRecord],
) -> Result<BTreeMap<(String, RepairCondition), CorrectnessRates>, EvalError> {
    let mut groups: BTreeMap<(String, RepairCondition), Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.model_id.clone(), r.condition)).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(k, v)| correctness_rates(&v).map(|rates| (k, rates)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::ExecutionResult;
    use crate::repair::{Attempt, AttemptOutcome};
    use proptest::prelude::*;

    fn record(case: &str, model: &str, condition: RepairCondition, passed: bool) -> EvalRecord {
        let execution = ExecutionResult { return_code: if passed { 0 } else { 1 }, ..ExecutionResult::not_executed("") };
        EvalRecord {
            case_id: case.into(),
            condition,
            model_id: model.into(),
            attempts: vec![Attempt {
                attempt: 1,
                prompt: String::new(),
                outcome: AttemptOutcome::LlmFailed { message: String::new() },
                execution,
            }],
            passed,
            correctness: None,
        }
    }

    fn records(model: &str, condition: RepairCondition, passes: &[bool]) -> Vec<EvalRecord> {
        passes.iter().enumerate().map(|(i, p)| record(&format!("c{i}"), model, condition, *p)).collect()
    }

    #[test]
    fn rates() {
        let r = records("m", RepairCondition::Full, &[true, false, true, true]);
        assert_eq!(pass_rate(&r).unwrap(), 0.75);
        assert_eq!(pass_rate(&r[..1]).unwrap(), 1.0);
        assert!(matches!(pass_rate(&[]), Err(EvalError::Empty)));
    }

    #[test]
    fn deltas_and_highlights() {
        let base = records("m", RepairCondition::NoDocs, &[true, false, false, false]);
        let treat = records("m", RepairCondition::Full, &[true, true, false, false]);
        let table = delta_table(&base, &treat, DEFAULT_HIGHLIGHT_THRESHOLD).unwrap();
        assert_eq!(table.rows[0].delta, 0.25);
        assert!(table.rows[0].highlight);
        let same = delta_table(&base, &base, DEFAULT_HIGHLIGHT_THRESHOLD).unwrap();
        assert_eq!(same.rows[0].delta, 0.0);
        assert!(!same.rows[0].highlight);
    }

    #[test]
    fn unmatched_models() {
        let base = records("a", RepairCondition::NoDocs, &[true]);
        let treat = records("b", RepairCondition::Full, &[true]);
        assert!(matches!(delta_table(&base, &treat, 0.05), Err(EvalError::UnmatchedModel(m)) if m == "b"));
        let short = records("a", RepairCondition::Full, &[true, true]);
        assert!(matches!(delta_table(&base, &short, 0.05), Err(EvalError::CaseSetMismatch(_))));
    }

    #[test]
    fn ablation_columns_follow_condition_order() {
        let mut all = records("m", RepairCondition::Full, &[true, true]);
        all.extend(records("m", RepairCondition::NoDocs, &[false, true]));
        let table = ablation_table(&all, 0.05).unwrap();
        assert_eq!(table.columns, vec!["None", "Full"]);
        assert_eq!(table.rows[0].rates, vec![0.5, 1.0]);
        assert_eq!(table.rows[0].delta, 0.5);
    }

    #[test]
    fn correctness_fractions() {
        use CorrectnessLabel::*;
        let labels = [Correct, Correct, Partial, Incorrect, Error];
        let mut rs = records("m", RepairCondition::Full, &[true, true, true, true, false]);
        for (r, l) in rs.iter_mut().zip(labels) {
            r.correctness = Some(l);
        }
        let rates = correctness_rates(&rs).unwrap();
        assert_eq!(rates.rates(), [0.4, 0.2, 0.0, 0.2, 0.2]);
        assert!(correctness_mismatches(&rs).is_empty());
        rs[0].passed = false;
        assert_eq!(correctness_mismatches(&rs), vec!["c0"]);
        rs[1].correctness = None;
        assert!(matches!(correctness_rates(&rs), Err(EvalError::Unlabeled(id)) if id == "c1"));
    }

    proptest! {
        #[test]
        fn swapping_sides_negates_delta(a in proptest::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
            let b: Vec<bool> = a.iter().enumerate().map(|(i, p)| p ^ ((seed >> (i % 64)) & 1 == 1)).collect();
            let ra = records("m", RepairCondition::NoDocs, &a);
            let rb = records("m", RepairCondition::Full, &b);
            let fwd = delta_table(&ra, &rb, 0.05).unwrap();
            let rev = delta_table(&rb, &ra, 0.05).unwrap();
            prop_assert_eq!(fwd.rows[0].delta, -rev.rows[0].delta);
            prop_assert_eq!(fwd.rows[0].highlight, rev.rows[0].highlight);
        }

        #[test]
        fn correctness_sums_to_one(labels in proptest::collection::vec(0usize..5, 1..60)) {
            let mut rs = records("m", RepairCondition::Full, &vec![true; labels.len()]);
            for (r, l) in rs.iter_mut().zip(&labels) {
                r.correctness = Some(CorrectnessLabel::ALL[*l]);
            }
            let total: f64 = correctness_rates(&rs).unwrap().rates().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
