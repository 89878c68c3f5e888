use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("LLM endpoint unreachable: {0}")]
    Unavailable(String),
    #[error("LLM request failed: {0}")]
    Request(String),
    #[error("LLM returned an empty response")]
    Empty,
    #[error("scripted LLM has no response for this prompt")]
    ScriptExhausted,
    #[error("invalid script {path}:{line}: {message}")]
    Script {
        path: String,
        line: usize,
        message: String,
    },
}

/// Text generation backend. Implementations must be usable from several
/// repair loops at once.
pub trait LlmClient: Send + Sync {
    fn model_id(&self) -> &str;

    fn generate(&self, prompt: &str) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Debug, Clone)]
pub struct HttpLlmConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
}

/// Completion endpoint speaking `POST {model, prompt, temperature,
/// max_tokens}` → `{text}`.
pub struct HttpLlmClient {
    config: HttpLlmConfig,
    client: reqwest::blocking::Client,
}

impl HttpLlmClient {
    pub fn new(config: HttpLlmConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Request(e.to_string()))?;
        Ok(HttpLlmClient { config, client })
    }
}

impl LlmClient for HttpLlmClient {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        let body = GenerateRequest {
            model: &self.config.model,
            prompt,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let mut request = self.client.post(&self.config.url).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_connect() || e.is_timeout() {
                LlmError::Unavailable(e.to_string())
            } else {
                LlmError::Request(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(LlmError::Request(format!("endpoint returned {status}")));
        }
        let parsed: GenerateResponse = response
            .json()
            .map_err(|e| LlmError::Request(format!("malformed response: {e}")))?;
        if parsed.text.trim().is_empty() {
            return Err(LlmError::Empty);
        }
        Ok(parsed.text)
    }
}

/// One scripted reply, chosen when every `contains` string occurs in the
/// prompt and no `absent` string does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub absent: Vec<String>,
    pub response: String,
}

impl ScriptRule {
    fn matches(&self, prompt: &str) -> bool {
        self.contains.iter().all(|s| prompt.contains(s.as_str()))
            && !self.absent.iter().any(|s| prompt.contains(s.as_str()))
    }
}

enum Script {
    Sequence(Mutex<VecDeque<Result<String, LlmError>>>),
    Rules(Vec<ScriptRule>),
}

/// Deterministic stand-in for a model: either a fixed queue of replies or
/// prompt-matching rules (first match wins).
pub struct ScriptedLlm {
    model_id: String,
    script: Script,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedLlm {
    pub fn sequence(
        model_id: impl Into<String>,
        replies: impl IntoIterator<Item = Result<String, LlmError>>,
    ) -> Self {
        ScriptedLlm {
            model_id: model_id.into(),
            script: Script::Sequence(Mutex::new(replies.into_iter().collect())),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn rules(model_id: impl Into<String>, rules: Vec<ScriptRule>) -> Self {
        ScriptedLlm {
            model_id: model_id.into(),
            script: Script::Rules(rules),
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Loads line-delimited [`ScriptRule`] records.
    pub fn load_rules(model_id: impl Into<String>, path: &Path) -> Result<Self, LlmError> {
        let script_err = |line: usize, message: String| LlmError::Script {
            path: path.display().to_string(),
            line,
            message,
        };
        let file = fs::File::open(path).map_err(|e| script_err(0, e.to_string()))?;
        let mut rules = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| script_err(idx + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            rules.push(serde_json::from_str(&line).map_err(|e| script_err(idx + 1, e.to_string()))?);
        }
        Ok(Self::rules(model_id, rules))
    }

    /// Every prompt received so far, in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl LlmClient for ScriptedLlm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        match &self.script {
            Script::Sequence(queue) => queue
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or(Err(LlmError::ScriptExhausted)),
            Script::Rules(rules) => rules
                .iter()
                .find(|r| r.matches(prompt))
                .map(|r| r.response.clone())
                .ok_or(LlmError::ScriptExhausted),
        }
    }
}
