use serde::{Deserialize, Serialize};
use thiserror::Error;

const COMMAND_PREFIX: &str = "Command:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairOutcome {
    /// Single line, starting with the tool name.
    pub repaired_command: String,
    pub reasoning: String,
    pub raw_response: String,
    pub attempt: usize,
    /// Set when no `Command:` line was usable and the first line starting
    /// with the tool name was taken instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no {tool_name} command found in response")]
pub struct ParseError {
    pub tool_name: String,
    pub raw: String,
}

fn clean_line(line: &str) -> &str {
    let mut s = line.trim();
    for prefix in ["- ", "* ", "$ ", "> "] {
        s = s.strip_prefix(prefix).unwrap_or(s).trim_start();
    }
    let s = s.trim_start_matches('*').trim();
    let s = s.strip_prefix("```").unwrap_or(s);
    let s = s.strip_suffix("```").unwrap_or(s);
    let s = s.trim();
    let s = match (s.strip_prefix('`'), s.ends_with('`')) {
        (Some(inner), true) if !inner.is_empty() => &inner[..inner.len() - 1],
        _ => s,
    };
    s.trim()
}

fn starts_with_tool(candidate: &str, tool_name: &str) -> bool {
    candidate == tool_name
        || candidate
            .strip_prefix(tool_name)
            .is_some_and(|rest| rest.starts_with(char::is_whitespace))
}

fn reasoning_without(raw: &str, skip: usize) -> String {
    raw.lines()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, l)| l)
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

/// Extracts the repaired command from an LLM response.
///
/// The command is whatever follows the first `Command:` marker on its line.
/// If that is missing or does not start with `tool_name`, the first line
/// that does start with `tool_name` is used and `fallback` is set.
pub fn parse_repair_response(raw: &str, tool_name: &str) -> Result<RepairOutcome, ParseError> {
    let fail = || ParseError {
        tool_name: tool_name.to_string(),
        raw: raw.to_string(),
    };
    if raw.trim().is_empty() {
        return Err(fail());
    }
    let lines: Vec<&str> = raw.lines().collect();

    let marked = lines
        .iter()
        .enumerate()
        .find_map(|(i, line)| line.find(COMMAND_PREFIX).map(|at| (i, &line[at + COMMAND_PREFIX.len()..])));
    if let Some((i, rest)) = marked {
        let candidate = clean_line(rest);
        if starts_with_tool(candidate, tool_name) {
            return Ok(RepairOutcome {
                repaired_command: candidate.to_string(),
                reasoning: reasoning_without(raw, i),
                raw_response: raw.to_string(),
                attempt: 1,
                fallback: false,
            });
        }
    }

    lines
        .iter()
        .enumerate()
        .find_map(|(i, line)| {
            let candidate = clean_line(line);
            starts_with_tool(candidate, tool_name).then(|| RepairOutcome {
                repaired_command: candidate.to_string(),
                reasoning: reasoning_without(raw, i),
                raw_response: raw.to_string(),
                attempt: 1,
                fallback: true,
            })
        })
        .ok_or_else(fail)
}
