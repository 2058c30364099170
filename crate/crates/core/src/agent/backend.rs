//! Backends that choose tool calls: a replayed script and a remote
//! chat-completions endpoint.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::prompt::DrivenSignal;
use super::ToolCall;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("script step {step}: expected block `{expected}`, presented `{presented}`")]
    ScriptMismatch {
        step: usize,
        expected: String,
        presented: String,
    },
    #[error("config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    System(String),
    User(String),
    Assistant { text: Option<String>, calls: Vec<(String, ToolCall)> },
    Tool { id: String, content: String },
}

impl Message {
    pub fn char_len(&self) -> usize {
        match self {
            Message::System(s) | Message::User(s) => s.len(),
            Message::Assistant { text, calls } => {
                text.as_deref().map_or(0, str::len)
                    + calls
                        .iter()
                        .map(|(id, c)| id.len() + serde_json::to_string(c).map_or(0, |s| s.len()))
                        .sum::<usize>()
            }
            Message::Tool { id, content } => id.len() + content.len(),
        }
    }
}

/// What the orchestrator is currently showing.
#[derive(Debug, Clone, PartialEq)]
pub struct StateView {
    pub block_id: String,
    pub cycle: i64,
    pub traced: Vec<String>,
    pub driven: Vec<DrivenSignal>,
    /// States queued after this one.
    pub pending: usize,
}

pub struct TurnRequest<'a> {
    pub messages: &'a [Message],
    pub tools: &'a Value,
    pub state: &'a StateView,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Turn {
    pub text: Option<String>,
    pub calls: Vec<ToolCall>,
}

pub trait Backend {
    fn next_turn(&mut self, req: &TurnRequest) -> Result<Turn, BackendError>;

    /// Whether one instance may serve several runs at once.
    fn shareable(&self) -> bool;
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScriptEntry {
    pub expect_block: String,
    pub tool_calls: Vec<ToolCall>,
}

/// Replays a fixed list of turns; each must be presented its expected block.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    step: usize,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        ScriptedBackend { entries, step: 0 }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.as_ref().display())))?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&text).map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(ScriptedBackend::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.step
    }
}

impl Backend for ScriptedBackend {
    fn next_turn(&mut self, req: &TurnRequest) -> Result<Turn, BackendError> {
        let Some(e) = self.entries.get(self.step) else {
            return Ok(Turn::default());
        };
        if e.expect_block != req.state.block_id {
            return Err(BackendError::ScriptMismatch {
                step: self.step,
                expected: e.expect_block.clone(),
                presented: req.state.block_id.clone(),
            });
        }
        self.step += 1;
        Ok(Turn {
            text: None,
            calls: e.tool_calls.clone(),
        })
    }

    fn shareable(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct RemoteProfile {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_key_env() -> String {
    "RTLFL_API_KEY".into()
}
fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    2
}

#[derive(Debug, Deserialize)]
struct ProfileFile {
    profiles: BTreeMap<String, RemoteProfile>,
}

impl RemoteProfile {
    /// Reads `[profiles.<name>]` from a TOML file. `RTLFL_ENDPOINT` and
    /// `RTLFL_MODEL` override the file.
    pub fn load(path: impl AsRef<Path>, name: &str) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.as_ref().display())))?;
        let file: ProfileFile = toml::from_str(&text).map_err(|e| BackendError::Config(e.to_string()))?;
        let mut p = file
            .profiles
            .get(name)
            .cloned()
            .ok_or_else(|| BackendError::Config(format!("no profile `{name}`")))?;
        if let Ok(v) = std::env::var("RTLFL_ENDPOINT") {
            p.endpoint = v;
        }
        if let Ok(v) = std::env::var("RTLFL_MODEL") {
            p.model = v;
        }
        Ok(p)
    }
}

pub struct RemoteBackend {
    profile: RemoteProfile,
    key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(profile: RemoteProfile) -> Self {
        let key = std::env::var(&profile.api_key_env).ok();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(profile.timeout_secs)))
            .build()
            .into();
        RemoteBackend { profile, key, agent }
    }

    pub fn request_body(&self, req: &TurnRequest) -> Value {
        let mut body = json!({
            "model": self.profile.model,
            "messages": req.messages.iter().map(wire_message).collect::<Vec<_>>(),
            "tools": req.tools,
        });
        if let Some(t) = self.profile.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let mut last = String::new();
        for attempt in 0..=self.profile.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(500 << attempt));
            }
            let mut r = self.agent.post(&self.profile.endpoint).header("Content-Type", "application/json");
            if let Some(k) = &self.key {
                r = r.header("Authorization", &format!("Bearer {k}"));
            }
            match r.send_json(body) {
                Ok(mut resp) => {
                    return resp
                        .body_mut()
                        .read_json::<Value>()
                        .map_err(|e| BackendError::Protocol(e.to_string()));
                }
                Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                    last = format!("HTTP {code}");
                }
                Err(ureq::Error::StatusCode(code)) => return Err(BackendError::Transport(format!("HTTP {code}"))),
                Err(e) => last = e.to_string(),
            }
        }
        Err(BackendError::Transport(last))
    }
}

fn wire_message(m: &Message) -> Value {
    match m {
        Message::System(s) => json!({"role": "system", "content": s}),
        Message::User(s) => json!({"role": "user", "content": s}),
        Message::Assistant { text, calls } => {
            let mut v = json!({"role": "assistant", "content": text});
            if !calls.is_empty() {
                v["tool_calls"] = Value::Array(
                    calls
                        .iter()
                        .map(|(id, c)| {
                            let (name, args) = c.wire();
                            json!({"id": id, "type": "function",
                                   "function": {"name": name, "arguments": args.to_string()}})
                        })
                        .collect(),
                );
            }
            v
        }
        Message::Tool { id, content } => json!({"role": "tool", "tool_call_id": id, "content": content}),
    }
}

/// Parses the assistant message of a chat-completions response. Malformed
/// tool calls become `ToolCall::Invalid` so they cost a retry rather than
/// aborting the run.
pub fn parse_response(v: &Value) -> Result<Turn, BackendError> {
    let msg = v
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Protocol("response has no choices[0].message".into()))?;
    let text = msg.get("content").and_then(Value::as_str).map(str::to_string);
    let mut calls = Vec::new();
    if let Some(arr) = msg.get("tool_calls").and_then(Value::as_array) {
        for tc in arr {
            let name = tc.pointer("/function/name").and_then(Value::as_str).unwrap_or("");
            let args = tc.pointer("/function/arguments").and_then(Value::as_str).unwrap_or("{}");
            calls.push(ToolCall::from_wire(name, args));
        }
    }
    Ok(Turn { text, calls })
}

impl Backend for RemoteBackend {
    fn next_turn(&mut self, req: &TurnRequest) -> Result<Turn, BackendError> {
        let body = self.request_body(req);
        let resp = self.post(&body)?;
        parse_response(&resp)
    }

    fn shareable(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(id: &str) -> StateView {
        StateView {
            block_id: id.into(),
            cycle: 0,
            traced: vec![],
            driven: vec![],
            pending: 0,
        }
    }

    #[test]
    fn script_checks_block() {
        let mut b = ScriptedBackend::new(vec![ScriptEntry {
            expect_block: "a".into(),
            tool_calls: vec![ToolCall::AppendBlock { rationale: None }],
        }]);
        let tools = json!([]);
        let sv = view("b");
        let r = b.next_turn(&TurnRequest { messages: &[], tools: &tools, state: &sv });
        assert!(matches!(r, Err(BackendError::ScriptMismatch { step: 0, .. })));
        let sv = view("a");
        let r = b.next_turn(&TurnRequest { messages: &[], tools: &tools, state: &sv }).unwrap();
        assert_eq!(r.calls.len(), 1);
        let r = b.next_turn(&TurnRequest { messages: &[], tools: &tools, state: &sv }).unwrap();
        assert!(r.calls.is_empty());
    }

    #[test]
    fn parses_tool_calls() {
        let v = json!({"choices": [{"message": {"role": "assistant", "content": null, "tool_calls": [
            {"id": "1", "type": "function", "function": {"name": "check_signals", "arguments": "{\"names\": [\"a\"]}"}},
            {"id": "2", "type": "function", "function": {"name": "exit", "arguments": "{\"scores\": {\"b\": 0.5}}"}},
            {"id": "3", "type": "function", "function": {"name": "check_signals", "arguments": "{oops"}}
        ]}}]});
        let t = parse_response(&v).unwrap();
        assert_eq!(t.calls[0], ToolCall::CheckSignals { names: vec!["a".into()] });
        assert!(matches!(&t.calls[1], ToolCall::Exit { scores } if scores["b"] == 0.5));
        assert!(matches!(&t.calls[2], ToolCall::Invalid { .. }));
        assert!(parse_response(&json!({})).is_err());
    }

    #[test]
    fn wire_round_trip() {
        let m = Message::Assistant {
            text: None,
            calls: vec![("c0".into(), ToolCall::ReadValues { queries: vec![] })],
        };
        let w = wire_message(&m);
        assert_eq!(w["tool_calls"][0]["function"]["name"], "read_values");
    }

    #[test]
    fn unreachable_endpoint() {
        let mut b = RemoteBackend::new(RemoteProfile {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model: "m".into(),
            api_key_env: "RTLFL_TEST_NO_KEY".into(),
            temperature: None,
            timeout_secs: 2,
            retries: 0,
        });
        let tools = json!([]);
        let sv = view("a");
        let r = b.next_turn(&TurnRequest { messages: &[], tools: &tools, state: &sv });
        assert!(matches!(r, Err(BackendError::Transport(_))));
    }
}
