//! Document collections that ground repair: kubectl manual pages and
//! community troubleshooting Q&A, normalized to plain text and cut into
//! fixed-width character chunks.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default score threshold for troubleshooting questions.
pub const DEFAULT_MIN_SCORE: i64 = 5;

/// Default chunk width in characters.
pub const DEFAULT_CHUNK_SIZE: usize = 1500;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus directory {0} contains no documents")]
    EmptyCorpus(PathBuf),
    #[error("document {0} has an empty body")]
    EmptyDocument(String),
    #[error("invalid chunking policy: chunk_size {chunk_size}, overlap {overlap}")]
    InvalidPolicy { chunk_size: usize, overlap: usize },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceKind {
    Manual,
    Troubleshooting,
}

impl SourceKind {
    pub const ALL: [SourceKind; 2] = [SourceKind::Manual, SourceKind::Troubleshooting];

    pub fn label(self) -> &'static str {
        match self {
            SourceKind::Manual => "Manual",
            SourceKind::Troubleshooting => "Troubleshooting",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub source_kind: SourceKind,
    pub title: String,
    pub uri: String,
    /// Plain text with markup stripped. Never empty.
    pub body: String,
    /// Question score; present exactly for troubleshooting documents.
    pub score: Option<i64>,
    /// Canonical `kubectl <verb>` strings found in the document.
    pub commands_mentioned: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub ordinal: usize,
    pub source_kind: SourceKind,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingPolicy {
    chunk_size: usize,
    overlap: usize,
}

impl Default for ChunkingPolicy {
    fn default() -> Self {
        ChunkingPolicy {
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: 0,
        }
    }
}

impl ChunkingPolicy {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, CorpusError> {
        if chunk_size == 0 || overlap >= chunk_size {
            return Err(CorpusError::InvalidPolicy {
                chunk_size,
                overlap,
            });
        }
        Ok(ChunkingPolicy {
            chunk_size,
            overlap,
        })
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// A per-file failure while loading a directory of manual pages.
#[derive(Debug)]
pub struct IngestFailure {
    pub path: PathBuf,
    pub error: CorpusError,
}

/// Manual documents that loaded, plus the files that did not.
#[derive(Debug, Default)]
pub struct ManualCorpus {
    pub documents: Vec<SourceDocument>,
    pub failures: Vec<IngestFailure>,
}

const MANUAL_EXTENSIONS: [&str; 4] = ["md", "markdown", "html", "txt"];

/// Loads every `.md`, `.html` and `.txt` file in `dir` (non-recursive) as a
/// manual page. Files that cannot be read or strip to nothing are reported
/// in [`ManualCorpus::failures`] without affecting the others.
pub fn load_manual_corpus(dir: &Path) -> Result<ManualCorpus, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CorpusError::io(dir, e))?;
        let path = entry.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| MANUAL_EXTENSIONS.contains(&e.as_str())) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(CorpusError::EmptyCorpus(dir.to_path_buf()));
    }
    paths.sort();

    let results: Vec<_> = paths
        .par_iter()
        .map(|path| (path.clone(), load_manual_page(path)))
        .collect();

    let mut corpus = ManualCorpus::default();
    for (path, result) in results {
        match result {
            Ok(doc) => corpus.documents.push(doc),
            Err(error) => corpus.failures.push(IngestFailure { path, error }),
        }
    }
    Ok(corpus)
}

fn load_manual_page(path: &Path) -> Result<SourceDocument, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = path
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name.clone());
    let doc_id = format!("man/{file_name}");
    let body = strip_markup(&raw);
    if body.is_empty() {
        return Err(CorpusError::EmptyDocument(doc_id));
    }
    let title = derive_title(&raw).unwrap_or(stem);
    Ok(SourceDocument {
        doc_id,
        source_kind: SourceKind::Manual,
        title,
        uri: path.display().to_string(),
        commands_mentioned: extract_commands(&raw),
        body,
        score: None,
    })
}

fn derive_title(raw: &str) -> Option<String> {
    static TITLE: OnceLock<Regex> = OnceLock::new();
    let re = TITLE.get_or_init(|| {
        Regex::new(r"(?is)<title[^>]*>(.*?)</title>|<h1[^>]*>(.*?)</h1>|(?m:^#[ \t]+(.+)$)")
            .unwrap()
    });
    let caps = re.captures(raw)?;
    let text = caps.get(1).or(caps.get(2)).or(caps.get(3))?.as_str();
    let title = collapse_whitespace(&decode_entities(&strip_tags(text)));
    (!title.is_empty()).then_some(title)
}

/// Every `kubectl <word>` occurrence, lowercased, deduplicated and sorted.
pub fn extract_commands(text: &str) -> Vec<String> {
    static CMD: OnceLock<Regex> = OnceLock::new();
    let re = CMD.get_or_init(|| Regex::new(r"\bkubectl\s+([a-z][a-z0-9-]*)").unwrap());
    let lowered = text.to_lowercase();
    let set: BTreeSet<String> = re
        .captures_iter(&lowered)
        .map(|c| format!("kubectl {}", &c[1]))
        .collect();
    set.into_iter().collect()
}

/// Raw community Q&A record before filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub title: String,
    pub body: String,
    pub score: i64,
}

/// Reads line-delimited JSON `{title, body, score}` records. Blank lines are
/// skipped.
pub fn load_qa_records(path: &Path) -> Result<Vec<QaRecord>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CorpusError::Record {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// The union of commands mentioned across manual documents.
pub fn valid_commands(manual: &[SourceDocument]) -> BTreeSet<String> {
    manual
        .iter()
        .flat_map(|d| d.commands_mentioned.iter().cloned())
        .collect()
}

/// Keeps records scoring at least `min_score` whose title or body mentions a
/// command from `valid_commands`. Record `i` (0-based input position) becomes
/// document `ts/{i:05}`, so ids stay stable regardless of which records pass.
pub fn filter_troubleshooting(
    records: &[QaRecord],
    min_score: i64,
    valid_commands: &BTreeSet<String>,
) -> Vec<SourceDocument> {
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.score >= min_score)
        .filter_map(|(i, r)| {
            let mentioned = extract_commands(&format!("{}\n{}", r.title, r.body));
            if !mentioned.iter().any(|c| valid_commands.contains(c)) {
                return None;
            }
            let title = collapse_whitespace(&decode_entities(&strip_tags(&r.title)));
            let body_text = strip_markup(&r.body);
            let body = match (title.is_empty(), body_text.is_empty()) {
                (true, true) => return None,
                (false, true) => title.clone(),
                (true, false) => body_text,
                (false, false) => format!("{title}\n{body_text}"),
            };
            let doc_id = format!("ts/{i:05}");
            Some(SourceDocument {
                uri: doc_id.clone(),
                doc_id,
                source_kind: SourceKind::Troubleshooting,
                title,
                body,
                score: Some(r.score),
                commands_mentioned: mentioned,
            })
        })
        .collect()
}

/// Cuts `doc.body` into windows of `chunk_size` characters starting at every
/// multiple of `chunk_size - overlap`. Windows running past the end are
/// truncated.
pub fn chunk_document(
    doc: &SourceDocument,
    policy: &ChunkingPolicy,
) -> Result<Vec<Chunk>, CorpusError> {
    if doc.body.is_empty() {
        return Err(CorpusError::EmptyDocument(doc.doc_id.clone()));
    }
    // Byte offsets of every char boundary, plus the end.
    let mut bounds: Vec<usize> = doc.body.char_indices().map(|(i, _)| i).collect();
    let n_chars = bounds.len();
    bounds.push(doc.body.len());

    // One window per stride offset below the body length, so with overlap
    // the tail can appear in more than one chunk.
    let chunks = (0..n_chars)
        .step_by(policy.stride())
        .enumerate()
        .map(|(ordinal, start)| {
            let end = (start + policy.chunk_size).min(n_chars);
            Chunk {
                doc_id: doc.doc_id.clone(),
                ordinal,
                source_kind: doc.source_kind,
                text: doc.body[bounds[start]..bounds[end]].to_string(),
            }
        })
        .collect();
    Ok(chunks)
}

/// Chunks a whole collection, preserving document order.
pub fn chunk_corpus(
    docs: &[SourceDocument],
    policy: &ChunkingPolicy,
) -> Result<Vec<Chunk>, CorpusError> {
    let per_doc: Result<Vec<Vec<Chunk>>, _> =
        docs.par_iter().map(|d| chunk_document(d, policy)).collect();
    Ok(per_doc?.into_iter().flatten().collect())
}

pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<(), CorpusError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| CorpusError::io(path, e))?);
    for chunk in chunks {
        let line = serde_json::to_string(chunk).expect("chunk serializes");
        writeln!(out, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut chunks = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        chunks.push(serde_json::from_str(&line).map_err(|e| CorpusError::Record {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(chunks)
}

// ---------------------------------------------------------------------------
// Markup normalization

enum Segment<'a> {
    Prose(&'a str),
    Code(String),
}

/// Strips HTML tags and markdown fences to plain text. Prose whitespace runs
/// collapse to one space; fenced and `<pre>` code blocks keep their lines.
pub fn strip_markup(raw: &str) -> String {
    let mut parts: Vec<String> = Vec::new();
    for segment in split_code_blocks(raw) {
        match segment {
            Segment::Prose(text) => {
                let text = collapse_whitespace(&decode_entities(&strip_tags(text)));
                if !text.is_empty() {
                    parts.push(text);
                }
            }
            Segment::Code(code) => {
                let code = code.trim_matches('\n');
                if !code.trim().is_empty() {
                    parts.push(code.to_string());
                }
            }
        }
    }
    parts.join("\n")
}

fn split_code_blocks(raw: &str) -> Vec<Segment<'_>> {
    static BLOCK: OnceLock<Regex> = OnceLock::new();
    let re = BLOCK.get_or_init(|| {
        Regex::new(r"(?s)(?m:^[ \t]*```[^\n]*\n)(.*?)(?m:^[ \t]*```[ \t]*$)|<pre[^>]*>(.*?)</pre>")
            .unwrap()
    });
    let mut segments = Vec::new();
    let mut last = 0;
    for caps in re.captures_iter(raw) {
        let whole = caps.get(0).unwrap();
        segments.push(Segment::Prose(&raw[last..whole.start()]));
        let code = match (caps.get(1), caps.get(2)) {
            (Some(fenced), _) => fenced.as_str().to_string(),
            (None, Some(pre)) => decode_entities(&remove_tags(pre.as_str())),
            _ => String::new(),
        };
        segments.push(Segment::Code(code));
        last = whole.end();
    }
    segments.push(Segment::Prose(&raw[last..]));
    segments
}

fn strip_tags(text: &str) -> String {
    static TAG: OnceLock<Regex> = OnceLock::new();
    let re = TAG.get_or_init(|| {
        Regex::new(r"(?is)<(script|style)[^>]*>.*?</(script|style)>|<!--.*?-->|</?[a-zA-Z][^>]*>")
            .unwrap()
    });
    re.replace_all(text, " ").into_owned()
}

fn remove_tags(text: &str) -> String {
    static TAG: OnceLock<Regex> = OnceLock::new();
    let re = TAG.get_or_init(|| Regex::new(r"</?[a-zA-Z][^>]*>").unwrap());
    re.replace_all(text, "").into_owned()
}

fn decode_entities(text: &str) -> String {
    if !text.contains('&') {
        return text.to_string();
    }
    text.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&nbsp;", " ")
        .replace("&amp;", "&")
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
