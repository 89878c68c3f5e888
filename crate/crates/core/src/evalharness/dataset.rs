use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;
use crate::executor::is_excluded_error;
use crate::repair::FailingCall;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub case_id: String,
    pub failing: FailingCall,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DatasetOptions {
    /// Keep records whose error text would normally be excluded.
    pub keep_excluded: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub cases: Vec<EvalCase>,
    /// Records dropped by the error-text filter.
    pub excluded: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.cases.iter().map(|c| c.case_id.as_str())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRecord {
    case_id: Option<String>,
    query: String,
    command: String,
    error: String,
    origin_model: Option<String>,
    #[serde(default)]
    tags: BTreeSet<String>,
}

fn content_id(query: &str, command: &str, error: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [query, command, error] {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    format!("case-{}", &hex::encode(hasher.finalize())[..12])
}

/// Parses line-delimited `{case_id?, query, command, error, origin_model?,
/// tags?}` records. `origin` names the source in error messages.
pub fn parse_dataset(text: &str, origin: &Path, options: DatasetOptions) -> Result<Dataset, EvalError> {
    let load_err = |line: usize, message: String| EvalError::Load {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut dataset = Dataset::default();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(line).map_err(|e| load_err(idx + 1, e.to_string()))?;
        let failing = FailingCall {
            query: record.query,
            command: record.command,
            error_text: record.error,
            origin_model: record.origin_model,
        };
        failing.validate().map_err(|e| load_err(idx + 1, e.to_string()))?;
        if !options.keep_excluded && is_excluded_error(&failing.error_text) {
            dataset.excluded += 1;
            continue;
        }
        let case_id = record
            .case_id
            .unwrap_or_else(|| content_id(&failing.query, &failing.command, &failing.error_text));
        if !seen.insert(case_id.clone()) {
            return Err(EvalError::DuplicateCase(case_id));
        }
        dataset.cases.push(EvalCase {
            case_id,
            failing,
            tags: record.tags,
        });
    }
    if dataset.is_empty() {
        log::warn!("dataset {} has no usable cases", origin.display());
    }
    if dataset.excluded > 0 {
        log::info!("dataset {}: excluded {} records", origin.display(), dataset.excluded);
    }
    Ok(dataset)
}

pub fn load_dataset(path: &Path, options: DatasetOptions) -> Result<Dataset, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Load {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_dataset(&text, path, options)
}

/// Draws `n` distinct cases (all of them if `n` exceeds the dataset),
/// keeping dataset order. The same seed always yields the same subset.
pub fn sample_cases(cases: &[EvalCase], n: usize, seed: u64) -> Vec<EvalCase> {
    let n = n.min(cases.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, cases.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| cases[i].clone()).collect()
}
