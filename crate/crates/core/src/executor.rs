//! Command execution with three modes.
//!
//! * `Live` spawns the real binary. It must be enabled explicitly and, by
//!   default, only read-only verbs are allowed.
//! * `Replay` looks the command up in a fixture of recorded results.
//! * `Deny` never runs anything and answers with return code 126.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DENIED_RETURN_CODE: i32 = 126;
pub const DENIED_STDERR: &str = "execution denied by policy";
pub const DEFAULT_TOOL: &str = "kubectl";
pub const DEFAULT_LIVE_TIMEOUT: Duration = Duration::from_secs(30);

/// Verbs permitted in live mode unless mutating commands are explicitly
/// allowed.
pub const READ_ONLY_VERBS: [&str; 9] = [
    "get",
    "describe",
    "logs",
    "version",
    "api-versions",
    "api-resources",
    "explain",
    "top",
    "events",
];

/// Programs allowed after a `|` in live mode.
pub const PIPE_TOOLS: [&str; 5] = ["grep", "head", "tail", "wc", "sort"];

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("policy violation: {0}")]
    PolicyViolation(String),
    #[error("live execution is disabled; pass the explicit unsafe opt-in to enable it")]
    LiveNotEnabled,
    #[error("failed to spawn {program}: {detail}")]
    Spawn { program: String, detail: String },
    #[error(transparent)]
    Parse(#[from] CommandParseError),
    #[error("{path}:{line}: {message}")]
    Fixture {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub command: String,
    pub return_code: i32,
    pub stdout: String,
    pub stderr: String,
    #[serde(default)]
    pub duration: Duration,
}

impl ExecutionResult {
    /// Placeholder for an attempt that never reached the executor.
    pub fn not_executed(reason: impl Into<String>) -> Self {
        ExecutionResult {
            command: String::new(),
            return_code: -1,
            stdout: String::new(),
            stderr: reason.into(),
            duration: Duration::ZERO,
        }
    }
}

/// A command passes when it exits with return code 0.
pub fn is_pass(result: &ExecutionResult) -> bool {
    result.return_code == 0
}

/// Errors mentioning "not found" (any case) describe missing resources in
/// the environment rather than a broken command, so they are dropped from
/// evaluation data.
pub fn is_excluded_error(error_text: &str) -> bool {
    error_text.to_lowercase().contains("not found")
}

pub fn normalize_whitespace(command: &str) -> String {
    command.split_whitespace().collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------
// Replay fixtures

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub return_code: i32,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
}

#[derive(Debug, Clone, Deserialize)]
struct ReplayRecord {
    command: String,
    return_code: i32,
    #[serde(default)]
    stdout: String,
    #[serde(default)]
    stderr: String,
}

/// Recorded `command → result` pairs, matched exactly after whitespace
/// normalization. Unknown commands get `default`, which always fails.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayFixture {
    mapping: HashMap<String, ReplayEntry>,
    default: ReplayEntry,
}

impl Default for ReplayFixture {
    fn default() -> Self {
        ReplayFixture {
            mapping: HashMap::new(),
            default: ReplayEntry {
                return_code: 1,
                stdout: String::new(),
                stderr: "error: command not recorded in replay fixture".into(),
            },
        }
    }
}

impl ReplayFixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, default: ReplayEntry) -> Result<Self, ExecError> {
        if default.return_code == 0 {
            return Err(ExecError::PolicyViolation(
                "replay default result must have a non-zero return code".into(),
            ));
        }
        self.default = default;
        Ok(self)
    }

    pub fn insert(&mut self, command: &str, entry: ReplayEntry) {
        self.mapping.insert(normalize_whitespace(command), entry);
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn lookup(&self, command: &str) -> ExecutionResult {
        let entry = self
            .mapping
            .get(&normalize_whitespace(command))
            .unwrap_or(&self.default);
        ExecutionResult {
            command: command.to_string(),
            return_code: entry.return_code,
            stdout: entry.stdout.clone(),
            stderr: entry.stderr.clone(),
            duration: Duration::ZERO,
        }
    }

    /// Reads line-delimited `{command, return_code, stdout, stderr}` records.
    /// Later records override earlier ones for the same command.
    pub fn load(path: &Path) -> Result<Self, ExecError> {
        let fixture_err = |line: usize, message: String| ExecError::Fixture {
            path: path.to_path_buf(),
            line,
            message,
        };
        let file = fs::File::open(path).map_err(|e| fixture_err(0, e.to_string()))?;
        let mut fixture = ReplayFixture::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| fixture_err(idx + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ReplayRecord =
                serde_json::from_str(&line).map_err(|e| fixture_err(idx + 1, e.to_string()))?;
            fixture.insert(
                &record.command,
                ReplayEntry {
                    return_code: record.return_code,
                    stdout: record.stdout,
                    stderr: record.stderr,
                },
            );
        }
        Ok(fixture)
    }
}

// ---------------------------------------------------------------------------
// Process spawning

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpawnRequest {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub stdin: Option<Vec<u8>>,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpawnOutput {
    pub return_code: i32,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

/// Launches OS processes. Swapped out in tests to observe launches.
pub trait Spawner: Send + Sync {
    fn spawn(&self, request: &SpawnRequest) -> std::io::Result<SpawnOutput>;
}

static SYSTEM_SPAWNS: AtomicUsize = AtomicUsize::new(0);

/// Number of processes launched by [`SystemSpawner`] in this process.
pub fn system_spawn_count() -> usize {
    SYSTEM_SPAWNS.load(Ordering::SeqCst)
}

/// Spawns real processes via `std::process::Command`.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemSpawner;

impl Spawner for SystemSpawner {
    fn spawn(&self, request: &SpawnRequest) -> std::io::Result<SpawnOutput> {
        let mut child = Command::new(&request.program)
            .args(&request.args)
            .stdin(if request.stdin.is_some() {
                Stdio::piped()
            } else {
                Stdio::null()
            })
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        SYSTEM_SPAWNS.fetch_add(1, Ordering::SeqCst);

        if let (Some(input), Some(mut stdin)) = (request.stdin.clone(), child.stdin.take()) {
            std::thread::spawn(move || {
                let _ = stdin.write_all(&input);
            });
        }
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let started = Instant::now();
        let mut timed_out = false;
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if started.elapsed() >= request.timeout {
                let _ = child.kill();
                timed_out = true;
                break child.wait()?;
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let stdout = out_reader.join().unwrap_or_default();
        let mut stderr = err_reader.join().unwrap_or_default();
        let return_code = if timed_out {
            stderr.extend_from_slice(
                format!("\ntimed out after {:?}", request.timeout).as_bytes(),
            );
            124
        } else {
            exit_code(status)
        };
        Ok(SpawnOutput {
            return_code,
            stdout,
            stderr,
        })
    }
}

#[cfg(unix)]
fn exit_code(status: std::process::ExitStatus) -> i32 {
    use std::os::unix::process::ExitStatusExt;
    status
        .code()
        .or_else(|| status.signal().map(|s| 128 + s))
        .unwrap_or(-1)
}

#[cfg(not(unix))]
fn exit_code(status: std::process::ExitStatus) -> i32 {
    status.code().unwrap_or(-1)
}

/// Counting semaphore bounding concurrent live executions.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Gate {
            free: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GatePermit(self)
    }
}

struct GatePermit<'a>(&'a Gate);

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

// ---------------------------------------------------------------------------
// Executor

#[derive(Debug, Clone, PartialEq)]
pub struct LiveConfig {
    pub binary: PathBuf,
    pub kubeconfig: Option<PathBuf>,
    pub timeout: Duration,
    /// Concurrent live executions allowed; 1 serializes access to the cluster.
    pub parallelism: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            binary: PathBuf::from(DEFAULT_TOOL),
            kubeconfig: None,
            timeout: DEFAULT_LIVE_TIMEOUT,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExecutorMode {
    Live(LiveConfig),
    Replay(ReplayFixture),
    Deny,
}

impl ExecutorMode {
    pub fn name(&self) -> &'static str {
        match self {
            ExecutorMode::Live(_) => "live",
            ExecutorMode::Replay(_) => "replay",
            ExecutorMode::Deny => "deny",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyPolicy {
    pub tool_name: String,
    /// Explicit opt-in required before any process is spawned.
    pub live_enabled: bool,
    /// Lift the read-only verb allowlist in live mode.
    pub allow_mutating: bool,
}

impl Default for SafetyPolicy {
    fn default() -> Self {
        SafetyPolicy {
            tool_name: DEFAULT_TOOL.to_string(),
            live_enabled: false,
            allow_mutating: false,
        }
    }
}

pub struct Executor {
    mode: ExecutorMode,
    policy: SafetyPolicy,
    spawner: Arc<dyn Spawner>,
    gate: Gate,
}

impl Executor {
    pub fn new(mode: ExecutorMode, policy: SafetyPolicy) -> Self {
        Self::with_spawner(mode, policy, Arc::new(SystemSpawner))
    }

    pub fn with_spawner(mode: ExecutorMode, policy: SafetyPolicy, spawner: Arc<dyn Spawner>) -> Self {
        let permits = match &mode {
            ExecutorMode::Live(cfg) => cfg.parallelism,
            _ => 1,
        };
        Executor {
            mode,
            policy,
            spawner,
            gate: Gate::new(permits),
        }
    }

    pub fn replay(fixture: ReplayFixture) -> Self {
        Self::new(ExecutorMode::Replay(fixture), SafetyPolicy::default())
    }

    pub fn deny() -> Self {
        Self::new(ExecutorMode::Deny, SafetyPolicy::default())
    }

    pub fn mode(&self) -> &ExecutorMode {
        &self.mode
    }

    pub fn policy(&self) -> &SafetyPolicy {
        &self.policy
    }

    pub fn execute(&self, command: &str) -> Result<ExecutionResult, ExecError> {
        match &self.mode {
            ExecutorMode::Deny => Ok(ExecutionResult {
                command: command.to_string(),
                return_code: DENIED_RETURN_CODE,
                stdout: String::new(),
                stderr: DENIED_STDERR.to_string(),
                duration: Duration::ZERO,
            }),
            ExecutorMode::Replay(fixture) => {
                self.check_tool(command)?;
                Ok(fixture.lookup(command))
            }
            ExecutorMode::Live(cfg) => {
                if !self.policy.live_enabled {
                    return Err(ExecError::LiveNotEnabled);
                }
                self.execute_live(command, cfg)
            }
        }
    }

    fn check_tool(&self, command: &str) -> Result<(), ExecError> {
        let first = command.split_whitespace().next().unwrap_or("");
        if first != self.policy.tool_name {
            return Err(ExecError::PolicyViolation(format!(
                "command must start with {:?}, got {:?}",
                self.policy.tool_name, first
            )));
        }
        Ok(())
    }

    fn execute_live(&self, command: &str, cfg: &LiveConfig) -> Result<ExecutionResult, ExecError> {
        let parsed = parse_command(command)?;
        if parsed.tool != self.policy.tool_name {
            return Err(ExecError::PolicyViolation(format!(
                "tool {:?} is not allowed",
                parsed.tool
            )));
        }
        if !self.policy.allow_mutating {
            let verb = parsed.verb.as_deref().unwrap_or("");
            if !READ_ONLY_VERBS.contains(&verb) {
                return Err(ExecError::PolicyViolation(format!(
                    "verb {verb:?} is not in the read-only allowlist"
                )));
            }
        }
        let (head, tail) = split_pipeline(command)?;
        let tail_tokens = match &tail {
            Some(tail) => {
                let tokens = shell_split(tail)?;
                let program = tokens.first().map(String::as_str).unwrap_or("");
                if !PIPE_TOOLS.contains(&program) {
                    return Err(ExecError::PolicyViolation(format!(
                        "pipeline stage {program:?} is not allowed"
                    )));
                }
                Some(tokens)
            }
            None => None,
        };

        let mut args: Vec<String> = head[1..].to_vec();
        if let Some(kubeconfig) = &cfg.kubeconfig {
            args.push("--kubeconfig".into());
            args.push(kubeconfig.display().to_string());
        }

        let _permit = self.gate.acquire();
        let started = Instant::now();
        let first = self.spawn(&SpawnRequest {
            program: cfg.binary.clone(),
            args,
            stdin: None,
            timeout: cfg.timeout,
        })?;
        let output = match tail_tokens {
            None => first,
            Some(tokens) => {
                let second = self.spawn(&SpawnRequest {
                    program: PathBuf::from(&tokens[0]),
                    args: tokens[1..].to_vec(),
                    stdin: Some(first.stdout),
                    timeout: cfg.timeout,
                })?;
                let mut stderr = first.stderr;
                stderr.extend_from_slice(&second.stderr);
                SpawnOutput {
                    return_code: second.return_code,
                    stdout: second.stdout,
                    stderr,
                }
            }
        };
        Ok(ExecutionResult {
            command: command.to_string(),
            return_code: output.return_code,
            stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
            duration: started.elapsed(),
        })
    }

    fn spawn(&self, request: &SpawnRequest) -> Result<SpawnOutput, ExecError> {
        self.spawner.spawn(request).map_err(|e| ExecError::Spawn {
            program: request.program.display().to_string(),
            detail: e.to_string(),
        })
    }
}

// ---------------------------------------------------------------------------
// Command parsing

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandParseError {
    #[error("empty command")]
    Empty,
    #[error("unbalanced {0} quote")]
    UnbalancedQuote(char),
    #[error("trailing backslash")]
    TrailingEscape,
    #[error("unsupported shell construct {0:?}")]
    Unsupported(String),
    #[error("empty pipeline stage")]
    EmptyStage,
}

/// A tool invocation split into its parts. Flags keep their order and may
/// repeat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCommand {
    pub tool: String,
    pub verb: Option<String>,
    pub args: Vec<String>,
    pub flags: Vec<(String, Option<String>)>,
    /// Everything after a single `|`, verbatim.
    pub pipeline_tail: Option<String>,
}

/// Flags that never take a separate value.
const BOOLEAN_FLAGS: [&str; 17] = [
    "-A",
    "--all-namespaces",
    "-w",
    "--watch",
    "--watch-only",
    "--force",
    "--ignore-daemonsets",
    "--delete-emptydir-data",
    "--show-labels",
    "--no-headers",
    "--previous",
    "-i",
    "-t",
    "-it",
    "--all",
    "--help",
    "-h",
];

impl ParsedCommand {
    pub fn flag(&self, name: &str) -> Option<&Option<String>> {
        self.flags.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Renders the command without its pipeline tail: tool, verb, positional
    /// args, flags, then anything after a `--` separator.
    pub fn render(&self) -> String {
        let mut out = vec![quote(&self.tool)];
        out.extend(self.verb.iter().map(|v| quote(v)));
        let split = self.args.iter().position(|a| a == "--").unwrap_or(self.args.len());
        out.extend(self.args[..split].iter().map(|a| quote(a)));
        for (name, value) in &self.flags {
            match value {
                None => out.push(quote(name)),
                Some(v) if v.starts_with('-') || BOOLEAN_FLAGS.contains(&name.as_str()) => {
                    out.push(quote(&format!("{name}={v}")))
                }
                Some(v) => {
                    out.push(quote(name));
                    out.push(quote(v));
                }
            }
        }
        out.extend(self.args[split..].iter().map(|a| quote(a)));
        out.join(" ")
    }
}

fn is_flag(token: &str) -> bool {
    token.len() > 1 && token.starts_with('-') && token != "--"
}

/// Splits a command by shell quoting rules into a structured form. One
/// unquoted `|` is allowed; `;`, `&`, redirections, backticks and `$(`
/// are rejected.
pub fn parse_command(command: &str) -> Result<ParsedCommand, CommandParseError> {
    let (tokens, pipeline_tail) = split_pipeline(command)?;
    let mut iter = tokens.into_iter().peekable();
    let tool = iter.next().ok_or(CommandParseError::Empty)?;
    let mut verb = None;
    let mut args = Vec::new();
    let mut flags = Vec::new();
    while let Some(token) = iter.next() {
        if token == "--" {
            args.push(token);
            args.extend(iter.by_ref());
            break;
        }
        if is_flag(&token) {
            if let Some((name, value)) = token.split_once('=') {
                flags.push((name.to_string(), Some(value.to_string())));
            } else if BOOLEAN_FLAGS.contains(&token.as_str()) {
                flags.push((token, None));
            } else {
                let value = iter.next_if(|next| !next.starts_with('-'));
                flags.push((token, value));
            }
        } else if verb.is_none() {
            verb = Some(token);
        } else {
            args.push(token);
        }
    }
    Ok(ParsedCommand {
        tool,
        verb,
        args,
        flags,
        pipeline_tail,
    })
}

/// Tokens of the first pipeline stage and the verbatim remainder after `|`.
pub fn split_pipeline(command: &str) -> Result<(Vec<String>, Option<String>), CommandParseError> {
    let lexed = lex(command)?;
    if lexed.tokens.is_empty() {
        return Err(CommandParseError::Empty);
    }
    let tail = match lexed.pipe_at {
        Some(pos) => {
            let tail = command[pos + 1..].trim();
            if tail.is_empty() {
                return Err(CommandParseError::EmptyStage);
            }
            Some(tail.to_string())
        }
        None => None,
    };
    Ok((lexed.tokens, tail))
}

fn shell_split(text: &str) -> Result<Vec<String>, CommandParseError> {
    let lexed = lex(text)?;
    if lexed.pipe_at.is_some() {
        return Err(CommandParseError::Unsupported("|".into()));
    }
    Ok(lexed.tokens)
}

struct Lexed {
    /// Tokens before the pipe (or all tokens when there is none).
    tokens: Vec<String>,
    pipe_at: Option<usize>,
}

fn lex(text: &str) -> Result<Lexed, CommandParseError> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_token = false;
    let mut pipe_at = None;
    let mut chars = text.char_indices().peekable();

    while let Some((pos, c)) = chars.next() {
        match c {
            c if c.is_whitespace() => {
                if in_token {
                    tokens.push(std::mem::take(&mut current));
                    in_token = false;
                }
            }
            '\'' => {
                in_token = true;
                loop {
                    match chars.next() {
                        Some((_, '\'')) => break,
                        Some((_, ch)) => current.push(ch),
                        None => return Err(CommandParseError::UnbalancedQuote('\'')),
                    }
                }
            }
            '"' => {
                in_token = true;
                loop {
                    match chars.next() {
                        Some((_, '"')) => break,
                        Some((_, '\\')) => match chars.next() {
                            Some((_, ch @ ('"' | '\\' | '$' | '`'))) => current.push(ch),
                            Some((_, ch)) => {
                                current.push('\\');
                                current.push(ch);
                            }
                            None => return Err(CommandParseError::UnbalancedQuote('"')),
                        },
                        Some((_, ch)) => current.push(ch),
                        None => return Err(CommandParseError::UnbalancedQuote('"')),
                    }
                }
            }
            '\\' => match chars.next() {
                Some((_, ch)) => {
                    in_token = true;
                    current.push(ch);
                }
                None => return Err(CommandParseError::TrailingEscape),
            },
            '|' => {
                if matches!(chars.peek(), Some((_, '|'))) {
                    return Err(CommandParseError::Unsupported("||".into()));
                }
                if pipe_at.is_some() {
                    return Err(CommandParseError::Unsupported("multi-stage pipeline".into()));
                }
                if in_token {
                    tokens.push(std::mem::take(&mut current));
                    in_token = false;
                }
                pipe_at = Some(pos);
                // Lex the remainder only to validate it.
                let rest = lex(&text[pos + 1..])?;
                if rest.pipe_at.is_some() {
                    return Err(CommandParseError::Unsupported("multi-stage pipeline".into()));
                }
                if rest.tokens.is_empty() {
                    return Err(CommandParseError::EmptyStage);
                }
                break;
            }
            ';' | '&' | '>' | '<' | '`' => {
                return Err(CommandParseError::Unsupported(c.to_string()));
            }
            '$' if matches!(chars.peek(), Some((_, '('))) => {
                return Err(CommandParseError::Unsupported("$(".into()));
            }
            _ => {
                in_token = true;
                current.push(c);
            }
        }
    }
    if in_token {
        tokens.push(current);
    }
    Ok(Lexed { tokens, pipe_at })
}

fn quote(token: &str) -> String {
    let safe = !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_alphanumeric() || "-_./:=,@%+^{}[]".contains(c));
    if safe {
        token.to_string()
    } else {
        format!("'{}'", token.replace('\'', r"'\''"))
    }
}
