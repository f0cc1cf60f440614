//! Prompt rendering and conclusion generation over a pluggable backend.
//!
//! The remote backend speaks the chat-completion wire format; the scripted
//! backend replays canned responses (sequentially or keyed by prompt hash)
//! and makes the whole engine loop deterministic for tests.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::sha256_hex;

/// Sentinel the backend is instructed to emit when a conclusion settles the
/// question; loop termination is detected by scanning for it.
pub const ANSWER_MARKER: &str = "ANSWER:";

/// Hard cap on prompt size; oversize inputs error rather than truncate.
pub const MAX_PROMPT_BYTES: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt must be nonempty")]
    EmptyPrompt,
    #[error("prompt is {got} bytes, over the {MAX_PROMPT_BYTES}-byte limit")]
    PromptTooLarge { got: usize },
    #[error("prompt spec requires at least one premise and a nonempty theorem statement")]
    InvalidPromptSpec,
    #[error("scripted backend exhausted after {served} responses")]
    ScriptExhausted { served: usize },
    #[error("scripted backend has no response for this prompt (hash {hash})")]
    ScriptMiss { hash: String },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("remote backend unavailable after {attempts} attempts: {last_error}")]
    RemoteUnavailable { attempts: u32, last_error: String },
    #[error("invalid llm config: {0}")]
    InvalidConfig(String),
    #[error("script file: {0}")]
    Io(#[from] std::io::Error),
    #[error("script json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub premise_texts: Vec<String>,
    pub theorem_statement: String,
}

/// Renders the step prompt. Byte-deterministic: premises joined by `"; "` in
/// list order, followed by the theorem statement and the final-answer
/// instruction.
pub fn render_prompt(spec: &PromptSpec) -> Result<String, LlmError> {
    if spec.premise_texts.is_empty()
        || spec.theorem_statement.is_empty()
        || spec.premise_texts.iter().any(|p| p.is_empty())
    {
        return Err(LlmError::InvalidPromptSpec);
    }
    let joined = spec.premise_texts.join("; ");
    let prompt = format!(
        "Given conditions: {joined}; and Theorem: {statement}, derive the next conclusion. \
If this yields the final answer, end with \"ANSWER: <answer>\".",
        statement = spec.theorem_statement
    );
    if prompt.len() > MAX_PROMPT_BYTES {
        return Err(LlmError::PromptTooLarge { got: prompt.len() });
    }
    Ok(prompt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conclusion {
    pub text: String,
    /// True iff the text contains [`ANSWER_MARKER`].
    pub is_final: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteLlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub api_key_env: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ScriptConfig {
    /// Responses returned in order; one per call.
    Sequential(Vec<String>),
    /// Responses keyed by sha256 hex of the exact prompt.
    Keyed(HashMap<String, String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LlmBackendConfig {
    Remote(RemoteLlmConfig),
    Scripted(ScriptConfig),
}

impl LlmBackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        match self {
            LlmBackendConfig::Scripted(ScriptConfig::Sequential(s)) if s.is_empty() => Err(
                LlmError::InvalidConfig("scripted backend requires a nonempty script".into()),
            ),
            LlmBackendConfig::Scripted(ScriptConfig::Keyed(m)) if m.is_empty() => Err(
                LlmError::InvalidConfig("scripted backend requires a nonempty script".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Loads a script file: a JSON array of strings (sequential mode) or a JSON
/// object mapping prompt-hash to response (keyed mode).
pub fn load_script(path: &Path) -> Result<ScriptConfig, LlmError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value {
        serde_json::Value::Array(_) => Ok(ScriptConfig::Sequential(serde_json::from_value(value)?)),
        serde_json::Value::Object(_) => Ok(ScriptConfig::Keyed(serde_json::from_value(value)?)),
        _ => Err(LlmError::InvalidConfig(
            "script file must be a JSON array or object".into(),
        )),
    }
}

/// Hash used as the lookup key for keyed scripts.
pub fn prompt_key(prompt: &str) -> String {
    sha256_hex(prompt)
}

enum BackendState {
    Remote {
        cfg: RemoteLlmConfig,
        http: reqwest::blocking::Client,
    },
    Sequential {
        responses: Vec<String>,
        cursor: usize,
    },
    Keyed(HashMap<String, String>),
}

/// A constructed backend. The sequential scripted variant is stateful (call
/// order is part of its contract), hence `generate(&mut self, ..)`.
pub struct LlmClient {
    state: BackendState,
}

impl LlmClient {
    pub fn new(cfg: &LlmBackendConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let state = match cfg {
            LlmBackendConfig::Remote(remote) => BackendState::Remote {
                http: reqwest::blocking::Client::builder()
                    .timeout(Duration::from_millis(remote.timeout_ms))
                    .build()
                    .map_err(|e| LlmError::InvalidConfig(e.to_string()))?,
                cfg: remote.clone(),
            },
            LlmBackendConfig::Scripted(ScriptConfig::Sequential(responses)) => {
                BackendState::Sequential {
                    responses: responses.clone(),
                    cursor: 0,
                }
            }
            LlmBackendConfig::Scripted(ScriptConfig::Keyed(map)) => {
                BackendState::Keyed(map.clone())
            }
        };
        Ok(Self { state })
    }

    pub fn generate(&mut self, prompt: &str) -> Result<Conclusion, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        if prompt.len() > MAX_PROMPT_BYTES {
            return Err(LlmError::PromptTooLarge { got: prompt.len() });
        }
        let text = match &mut self.state {
            BackendState::Sequential { responses, cursor } => {
                if *cursor >= responses.len() {
                    return Err(LlmError::ScriptExhausted { served: *cursor });
                }
                let text = responses[*cursor].clone();
                *cursor += 1;
                text
            }
            BackendState::Keyed(map) => {
                let key = prompt_key(prompt);
                map.get(&key)
                    .cloned()
                    .ok_or(LlmError::ScriptMiss { hash: key })?
            }
            BackendState::Remote { cfg, http } => remote_generate(cfg, http, prompt)?,
        };
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(LlmError::EmptyResponse);
        }
        let is_final = text.contains(ANSWER_MARKER);
        Ok(Conclusion { text, is_final })
    }
}

fn remote_generate(
    cfg: &RemoteLlmConfig,
    http: &reqwest::blocking::Client,
    prompt: &str,
) -> Result<String, LlmError> {
    let api_key = std::env::var(&cfg.api_key_env).unwrap_or_default();
    let body = serde_json::json!({
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    });
    let mut last_error = String::new();
    let attempts = cfg.max_retries + 1;
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(250 * (1 << (attempt - 1))));
        }
        let mut req = http.post(&cfg.endpoint).json(&body);
        if !api_key.is_empty() {
            req = req.bearer_auth(&api_key);
        }
        match req.send().and_then(|r| r.error_for_status()) {
            Ok(resp) => {
                let parsed: ChatResponse =
                    resp.json().map_err(|e| LlmError::RemoteUnavailable {
                        attempts: attempt + 1,
                        last_error: format!("malformed response: {e}"),
                    })?;
                return parsed
                    .choices
                    .into_iter()
                    .next()
                    .map(|c| c.message.content)
                    .ok_or(LlmError::EmptyResponse);
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(LlmError::RemoteUnavailable {
        attempts,
        last_error,
    })
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_prompt_exact_template() {
        let spec = PromptSpec {
            premise_texts: vec!["a=1".into(), "b=2".into()],
            theorem_statement: "sum rule".into(),
        };
        let prompt = render_prompt(&spec).unwrap();
        assert_eq!(
            prompt,
            "Given conditions: a=1; b=2; and Theorem: sum rule, derive the next conclusion. \
If this yields the final answer, end with \"ANSWER: <answer>\"."
        );
    }

    #[test]
    fn single_premise_has_no_join_separator() {
        let spec = PromptSpec {
            premise_texts: vec!["a=1".into()],
            theorem_statement: "t".into(),
        };
        let prompt = render_prompt(&spec).unwrap();
        assert!(prompt.starts_with("Given conditions: a=1; and Theorem: t,"));
    }

    #[test]
    fn render_is_injective_on_premise_order() {
        let a = render_prompt(&PromptSpec {
            premise_texts: vec!["x".into(), "y".into()],
            theorem_statement: "t".into(),
        })
        .unwrap();
        let b = render_prompt(&PromptSpec {
            premise_texts: vec!["y".into(), "x".into()],
            theorem_statement: "t".into(),
        })
        .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn sequential_script_in_order_then_exhausted() {
        let cfg = LlmBackendConfig::Scripted(ScriptConfig::Sequential(vec![
            "one".into(),
            "two".into(),
            "three".into(),
        ]));
        let mut client = LlmClient::new(&cfg).unwrap();
        assert_eq!(client.generate("p1").unwrap().text, "one");
        assert_eq!(client.generate("p2").unwrap().text, "two");
        assert_eq!(client.generate("p3").unwrap().text, "three");
        assert!(matches!(
            client.generate("p4"),
            Err(LlmError::ScriptExhausted { served: 3 })
        ));
    }

    #[test]
    fn final_marker_detection() {
        let cfg = LlmBackendConfig::Scripted(ScriptConfig::Sequential(vec![
            "thus x=7. ANSWER: 7".into(),
            "still thinking".into(),
        ]));
        let mut client = LlmClient::new(&cfg).unwrap();
        assert!(client.generate("p").unwrap().is_final);
        assert!(!client.generate("p").unwrap().is_final);
    }

    #[test]
    fn keyed_script_lookup_and_miss() {
        let prompt = "the exact prompt";
        let mut map = HashMap::new();
        map.insert(prompt_key(prompt), "resp".to_string());
        let cfg = LlmBackendConfig::Scripted(ScriptConfig::Keyed(map));
        let mut client = LlmClient::new(&cfg).unwrap();
        assert_eq!(client.generate(prompt).unwrap().text, "resp");
        assert!(matches!(
            client.generate("other"),
            Err(LlmError::ScriptMiss { .. })
        ));
    }

    #[test]
    fn empty_script_rejected() {
        let cfg = LlmBackendConfig::Scripted(ScriptConfig::Sequential(vec![]));
        assert!(LlmClient::new(&cfg).is_err());
    }

    #[test]
    fn oversize_prompt_rejected() {
        let cfg = LlmBackendConfig::Scripted(ScriptConfig::Sequential(vec!["r".into()]));
        let mut client = LlmClient::new(&cfg).unwrap();
        let big = "x".repeat(MAX_PROMPT_BYTES + 1);
        assert!(matches!(
            client.generate(&big),
            Err(LlmError::PromptTooLarge { .. })
        ));
    }

    #[test]
    fn remote_retries_then_unavailable() {
        let cfg = LlmBackendConfig::Remote(RemoteLlmConfig {
            endpoint: "http://127.0.0.1:1/v1/chat/completions".into(),
            model: "test".into(),
            temperature: 0.0,
            timeout_ms: 200,
            max_retries: 2,
            api_key_env: "DEDUCT_TEST_KEY".into(),
        });
        let mut client = LlmClient::new(&cfg).unwrap();
        match client.generate("prompt") {
            Err(LlmError::RemoteUnavailable { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected RemoteUnavailable, got {other:?}"),
        }
    }

    #[test]
    fn script_file_loading_both_modes() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("seq.json");
        std::fs::write(&seq, r#"["a","b"]"#).unwrap();
        assert!(matches!(
            load_script(&seq).unwrap(),
            ScriptConfig::Sequential(v) if v.len() == 2
        ));
        let keyed = dir.path().join("keyed.json");
        std::fs::write(&keyed, r#"{"abc":"resp"}"#).unwrap();
        assert!(matches!(
            load_script(&keyed).unwrap(),
            ScriptConfig::Keyed(m) if m.len() == 1
        ));
    }
}
