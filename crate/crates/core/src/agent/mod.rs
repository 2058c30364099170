//! The debugging loop: show one (block, cycle) state at a time to a backend,
//! apply its tool calls, and rank the blocks it flags.

pub mod backend;
pub mod policy;
pub mod prompt;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::blocks::BlockSet;
use crate::hdl::elab::DesignHierarchy;
use crate::slice::{ExecPath, PathNode};
use crate::wave::Waveform;

use backend::{Backend, BackendError, Message, StateView, TurnRequest};
use prompt::{build_prompt, tool_schemas, DrivenSignal, SYSTEM_PROMPT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub instruction: String,
    #[serde(default)]
    pub pc: Option<String>,
    pub signal: String,
    pub cycle: i64,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueQuery {
    pub signal: String,
    pub cycle: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolCall {
    AppendBlock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rationale: Option<String>,
    },
    CheckSignals {
        names: Vec<String>,
    },
    ReadValues {
        queries: Vec<ValueQuery>,
    },
    Exit {
        #[serde(default)]
        scores: BTreeMap<String, f64>,
    },
    /// A call the backend produced but that could not be decoded.
    Invalid {
        name: String,
        reason: String,
    },
}

impl ToolCall {
    pub fn name(&self) -> &str {
        match self {
            ToolCall::AppendBlock { .. } => "append_block",
            ToolCall::CheckSignals { .. } => "check_signals",
            ToolCall::ReadValues { .. } => "read_values",
            ToolCall::Exit { .. } => "exit",
            ToolCall::Invalid { name, .. } => name,
        }
    }

    /// Function name and argument object for the chat wire format.
    pub fn wire(&self) -> (String, Value) {
        let mut v = serde_json::to_value(self).unwrap();
        if let Some(o) = v.as_object_mut() {
            o.remove("tool");
        }
        (self.name().to_string(), v)
    }

    pub fn from_wire(name: &str, args: &str) -> ToolCall {
        let parsed: Result<Value, _> = serde_json::from_str(args);
        let invalid = |reason: String| ToolCall::Invalid {
            name: name.to_string(),
            reason,
        };
        let mut v = match parsed {
            Ok(Value::Object(o)) => Value::Object(o),
            Ok(_) => return invalid("arguments are not an object".into()),
            Err(e) => return invalid(format!("arguments are not JSON: {e}")),
        };
        if !matches!(name, "append_block" | "check_signals" | "read_values" | "exit") {
            return invalid(format!("unknown tool `{name}`"));
        }
        v["tool"] = json!(name);
        serde_json::from_value(v).unwrap_or_else(|e| invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_tool_calls: usize,
    pub max_tokens: Option<usize>,
    /// Invalid calls tolerated on one state before moving on.
    pub retries_per_state: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_tool_calls: 60,
            max_tokens: None,
            retries_per_state: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuspiciousEntry {
    pub block_id: String,
    pub cycle: i64,
    pub confidence: Option<f64>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToolError {
    #[error("`{0}` is not in the driven-signal list of this block")]
    InvalidSignalName(String),
    #[error("signal `{0}` is not recorded in the waveform")]
    UnknownSignal(String),
    #[error("cycle {cycle} is outside the waveform (0..{count})")]
    CycleOutOfRange { cycle: i64, count: usize },
    #[error("block `{0}` was never inspected")]
    UnknownBlock(String),
    #[error("confidence {1} for `{0}` is not within [0, 1]")]
    InvalidScore(String, f64),
    #[error("malformed `{name}` call: {reason}")]
    Malformed { name: String, reason: String },
    #[error("{0} needs at least one argument")]
    Empty(&'static str),
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("the execution path has no root")]
    EmptyPath,
}

#[derive(Debug, Clone, Default)]
pub struct AgentState {
    pub current: Option<PathNode>,
    pub pending: VecDeque<PathNode>,
    pub visited: BTreeSet<PathNode>,
    pub suspicious: Vec<SuspiciousEntry>,
    pub transcript: Vec<Value>,
    pub tool_calls: usize,
    pub tokens: usize,
    pub retries: u32,
}

/// Immutable inputs of one localization run.
pub struct Session<'a> {
    pub design: &'a DesignHierarchy,
    pub blocks: &'a BlockSet,
    pub path: &'a ExecPath,
    pub wave: &'a Waveform,
    pub report: &'a TestReport,
}

impl Session<'_> {
    pub fn block_id(&self, n: PathNode) -> &str {
        &self.blocks.blocks[n.block].id
    }

    /// Driven-signal list of a node with the node each entry leads to.
    pub fn driven(&self, n: PathNode) -> Vec<(DrivenSignal, PathNode)> {
        self.path
            .driven_of(self.design, n)
            .into_iter()
            .map(|(s, src)| {
                (
                    DrivenSignal {
                        name: self.design.name(s).to_string(),
                        cycle: src.cycle,
                    },
                    src,
                )
            })
            .collect()
    }

    pub fn view(&self, n: PathNode) -> StateView {
        StateView {
            block_id: self.block_id(n).to_string(),
            cycle: n.cycle,
            traced: self
                .path
                .traced
                .get(&n)
                .map(|t| t.iter().map(|s| self.design.name(*s).to_string()).collect())
                .unwrap_or_default(),
            driven: self.driven(n).into_iter().map(|x| x.0).collect(),
            pending: 0,
        }
    }

    pub fn prompt(&self, n: PathNode) -> String {
        let v = self.view(n);
        let b = &self.blocks.blocks[n.block];
        build_prompt(
            self.report,
            &v.block_id,
            n.cycle,
            &v.traced,
            &self.blocks.source_text(self.design, b),
            &v.driven,
        )
    }
}

/// Effect of one successful tool call.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    /// The backend asked to move to newly queued states.
    pub advance: bool,
    pub exit: Option<BTreeMap<String, f64>>,
}

fn outcome(text: String) -> Outcome {
    Outcome {
        text,
        advance: false,
        exit: None,
    }
}

/// Applies one tool call. Errors leave `state` untouched.
pub fn handle_tool(call: &ToolCall, state: &mut AgentState, s: &Session) -> Result<Outcome, ToolError> {
    let node = state.current.expect("handle_tool needs a current state");
    match call {
        ToolCall::AppendBlock { rationale } => {
            let id = s.block_id(node);
            if state.suspicious.iter().any(|e| e.block_id == id) {
                return Ok(outcome(format!("{id} is already in the suspicious queue")));
            }
            state.suspicious.push(SuspiciousEntry {
                block_id: id.to_string(),
                cycle: node.cycle,
                confidence: None,
                rationale: rationale.clone().unwrap_or_default(),
            });
            Ok(outcome(format!(
                "appended {id}; suspicious queue has {} block(s)",
                state.suspicious.len()
            )))
        }
        ToolCall::CheckSignals { names } => {
            if names.is_empty() {
                return Err(ToolError::Empty("check_signals"));
            }
            let driven = s.driven(node);
            let mut targets = Vec::new();
            for n in names {
                let Some((d, src)) = driven.iter().find(|(d, _)| &d.name == n) else {
                    return Err(ToolError::InvalidSignalName(n.clone()));
                };
                targets.push((d.name.clone(), *src));
            }
            let mut lines = Vec::new();
            let mut fresh = Vec::new();
            for (name, src) in targets {
                let label = format!("{}@{}", s.block_id(src), src.cycle);
                if state.visited.contains(&src) || src == node {
                    lines.push(format!("{name}: {label} was already inspected"));
                } else if fresh.contains(&src) || state.pending.contains(&src) {
                    lines.push(format!("{name}: {label} is already queued"));
                } else {
                    lines.push(format!("{name}: queued {label}"));
                    fresh.push(src);
                }
            }
            for n in fresh.iter().rev() {
                state.pending.retain(|p| p != n);
                state.pending.push_front(*n);
            }
            Ok(Outcome {
                text: lines.join("\n"),
                advance: !fresh.is_empty(),
                exit: None,
            })
        }
        ToolCall::ReadValues { queries } => {
            if queries.is_empty() {
                return Err(ToolError::Empty("read_values"));
            }
            let count = s.wave.cycle_count();
            let mut lines = Vec::new();
            for q in queries {
                if !s.wave.has_signal(&q.signal) {
                    return Err(ToolError::UnknownSignal(q.signal.clone()));
                }
                if q.cycle < 0 || q.cycle as usize >= count {
                    return Err(ToolError::CycleOutOfRange { cycle: q.cycle, count });
                }
                let v = s.wave.value_at(&q.signal, q.cycle).expect("checked above");
                lines.push(format!(
                    "{}@{} = 0x{} ({}'b{})",
                    q.signal,
                    q.cycle,
                    v.to_hex_string(),
                    v.width(),
                    v.to_bin_string()
                ));
            }
            Ok(outcome(lines.join("\n")))
        }
        ToolCall::Exit { scores } => {
            let seen: BTreeSet<&str> = state.visited.iter().map(|n| s.block_id(*n)).collect();
            for (id, c) in scores {
                if !seen.contains(id.as_str()) && s.block_id(node) != id {
                    return Err(ToolError::UnknownBlock(id.clone()));
                }
                if !(0.0..=1.0).contains(c) {
                    return Err(ToolError::InvalidScore(id.clone(), *c));
                }
            }
            Ok(Outcome {
                text: "exiting".into(),
                advance: false,
                exit: Some(scores.clone()),
            })
        }
        ToolCall::Invalid { name, reason } => Err(ToolError::Malformed {
            name: name.clone(),
            reason: reason.clone(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub block_id: String,
    pub confidence: f64,
    pub rationale: String,
    pub file: String,
    pub lines: Vec<(u32, u32)>,
    /// Scored by append order because the backend gave no confidence.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub tool_calls: usize,
    pub tokens: usize,
    pub states_visited: usize,
    pub exit_called: bool,
    pub budget_exhausted: bool,
    pub abandoned_states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
    pub meta: RunMeta,
}

/// Stable sort by confidence, highest first; equal scores keep append order.
pub fn rank(suspicious: &[(String, f64)]) -> Vec<(String, f64)> {
    let mut v = suspicious.to_vec();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    v
}

pub fn fallback_score(append_index: usize) -> f64 {
    1.0 / (1.0 + append_index as f64)
}

fn estimate_tokens(chars: usize) -> usize {
    chars.div_ceil(4)
}

pub struct RunResult {
    pub ranking: RankedList,
    pub state: AgentState,
}

impl RunResult {
    pub fn transcript_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.state.transcript {
            s.push_str(&serde_json::to_string(r).unwrap());
            s.push('\n');
        }
        s
    }
}

pub fn run_localization(session: &Session, backend: &mut dyn Backend, budget: Budget) -> Result<RunResult, AgentError> {
    let root = session.path.root.ok_or(AgentError::EmptyPath)?;
    let tools = tool_schemas();
    let mut state = AgentState {
        pending: VecDeque::from([root]),
        ..Default::default()
    };
    let mut messages = vec![Message::System(SYSTEM_PROMPT.to_string())];
    let mut exit: Option<BTreeMap<String, f64>> = None;
    let mut exhausted = false;
    let mut abandoned = 0usize;
    let mut call_id = 0usize;

    'states: while let Some(node) = state.pending.pop_front() {
        if state.visited.contains(&node) {
            continue;
        }
        state.visited.insert(node);
        state.current = Some(node);
        state.retries = 0;
        let prompt = session.prompt(node);
        messages.push(Message::User(prompt.clone()));
        let mut view = session.view(node);
        let mut first = true;
        loop {
            view.pending = state.pending.len();
            if state.tool_calls >= budget.max_tool_calls || budget.max_tokens.is_some_and(|m| state.tokens >= m) {
                exhausted = true;
                break 'states;
            }
            let sent: usize = messages.iter().map(Message::char_len).sum();
            let turn = backend.next_turn(&TurnRequest {
                messages: &messages,
                tools: &tools,
                state: &view,
            })?;
            let ids: Vec<String> = turn
                .calls
                .iter()
                .map(|_| {
                    call_id += 1;
                    format!("call_{call_id}")
                })
                .collect();
            let reply = Message::Assistant {
                text: turn.text.clone(),
                calls: ids.iter().cloned().zip(turn.calls.iter().cloned()).collect(),
            };
            let prompt_tokens = estimate_tokens(sent);
            let completion_tokens = estimate_tokens(reply.char_len());
            state.tokens += prompt_tokens + completion_tokens;
            messages.push(reply);

            let mut observations = Vec::new();
            let mut advance = turn.calls.is_empty();
            let mut stop = false;
            for (id, call) in ids.iter().zip(&turn.calls) {
                if state.tool_calls >= budget.max_tool_calls {
                    exhausted = true;
                    stop = true;
                    break;
                }
                state.tool_calls += 1;
                let (ok, text) = match handle_tool(call, &mut state, session) {
                    Ok(o) => {
                        advance |= o.advance;
                        if o.exit.is_some() {
                            exit = o.exit;
                            stop = true;
                        }
                        (true, o.text)
                    }
                    Err(e) => {
                        state.retries += 1;
                        (false, format!("error: {e}"))
                    }
                };
                observations.push(json!({"id": id, "tool": call.name(), "ok": ok, "text": text}));
                messages.push(Message::Tool {
                    id: id.clone(),
                    content: text,
                });
                if stop {
                    break;
                }
                if state.retries >= budget.retries_per_state {
                    abandoned += 1;
                    advance = true;
                    break;
                }
            }
            let mut rec = json!({
                "turn": state.transcript.len(),
                "block": view.block_id,
                "cycle": node.cycle,
                "prompt_tokens": prompt_tokens,
                "completion_tokens": completion_tokens,
                "calls": turn.calls,
                "observations": observations,
            });
            if first {
                rec["prompt"] = json!(prompt);
                first = false;
            }
            if let Some(t) = &turn.text {
                rec["text"] = json!(t);
            }
            state.transcript.push(rec);
            if stop {
                break 'states;
            }
            if advance {
                break;
            }
        }
    }
    state.current = None;
    let ranking = finalize(session, &state, exit.as_ref(), exhausted, abandoned);
    Ok(RunResult { ranking, state })
}

fn finalize(
    session: &Session,
    state: &AgentState,
    exit: Option<&BTreeMap<String, f64>>,
    exhausted: bool,
    abandoned: usize,
) -> RankedList {
    let mut entries: Vec<SuspiciousEntry> = state.suspicious.clone();
    if let Some(scores) = exit {
        for id in scores.keys() {
            if !entries.iter().any(|e| &e.block_id == id) {
                let cycle = state
                    .visited
                    .iter()
                    .find(|n| session.block_id(**n) == id)
                    .map_or(0, |n| n.cycle);
                entries.push(SuspiciousEntry {
                    block_id: id.clone(),
                    cycle,
                    confidence: None,
                    rationale: String::new(),
                });
            }
        }
    }
    let mut fallback = Vec::new();
    let scored: Vec<(String, f64)> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| match exit.and_then(|m| m.get(&e.block_id)) {
            Some(c) => (e.block_id.clone(), *c),
            None => {
                if exit.is_some() {
                    log::warn!("exit omitted appended block {}; using fallback score", e.block_id);
                }
                fallback.push(e.block_id.clone());
                (e.block_id.clone(), fallback_score(i))
            }
        })
        .collect();
    let ranked = rank(&scored);
    let out = ranked
        .into_iter()
        .enumerate()
        .map(|(i, (id, c))| {
            let b = session.blocks.by_id(&id).expect("suspicious blocks come from the path");
            let e = entries.iter().find(|e| e.block_id == id).unwrap();
            RankedEntry {
                rank: i + 1,
                fallback: fallback.contains(&id),
                block_id: id,
                confidence: c,
                rationale: e.rationale.clone(),
                file: b.file.clone(),
                lines: b.line_ranges(),
            }
        })
        .collect();
    RankedList {
        entries: out,
        meta: RunMeta {
            tool_calls: state.tool_calls,
            tokens: state.tokens,
            states_visited: state.visited.len(),
            exit_called: exit.is_some(),
            budget_exhausted: exhausted,
            abandoned_states: abandoned,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_orders() {
        let r = rank(&[("A".into(), 0.5), ("B".into(), 0.9)]);
        assert_eq!(r[0].0, "B");
        let r = rank(&[("A".into(), 0.7), ("B".into(), 0.7)]);
        assert_eq!(r[0].0, "A");
        assert!(rank(&[]).is_empty());
    }

    #[test]
    fn tool_call_json() {
        let c: ToolCall = serde_json::from_str(r#"{"tool":"check_signals","names":["a","b"]}"#).unwrap();
        assert_eq!(c, ToolCall::CheckSignals { names: vec!["a".into(), "b".into()] });
        let c: ToolCall = serde_json::from_str(r#"{"tool":"append_block"}"#).unwrap();
        assert_eq!(c, ToolCall::AppendBlock { rationale: None });
        let (n, a) = ToolCall::Exit { scores: BTreeMap::from([("x".into(), 0.25)]) }.wire();
        assert_eq!(n, "exit");
        assert_eq!(ToolCall::from_wire(&n, &a.to_string()), ToolCall::Exit { scores: BTreeMap::from([("x".into(), 0.25)]) });
        assert!(matches!(ToolCall::from_wire("launch", "{}"), ToolCall::Invalid { .. }));
        assert!(matches!(ToolCall::from_wire("check_signals", "{\"names\": 3}"), ToolCall::Invalid { .. }));
    }

    #[test]
    fn fallback_decreases() {
        assert_eq!(fallback_score(0), 1.0);
        assert!(fallback_score(1) > fallback_score(2));
    }
}
