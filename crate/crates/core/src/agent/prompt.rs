//! Prompt rendering and tool schemas.

use serde_json::{json, Value};

use super::TestReport;

pub const SYSTEM_PROMPT: &str = "You are a hardware verification engineer debugging a processor design. \
A test has failed. You walk backwards along the execution path of the failing instruction, one code \
block at a time. Each block is shown at the clock cycle at which it computed the traced value. Decide \
whether the shown block could be the root cause and use the tools to continue.";

/// One entry of the driven-signal list shown for a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrivenSignal {
    pub name: String,
    pub cycle: i64,
}

pub fn driven_json(driven: &[DrivenSignal]) -> String {
    let arr: Vec<Value> = driven.iter().map(|d| json!({"name": d.name, "cycle": d.cycle})).collect();
    serde_json::to_string_pretty(&Value::Array(arr)).unwrap()
}

/// Renders the per-block user message.
pub fn build_prompt(
    report: &TestReport,
    block_id: &str,
    cycle: i64,
    traced: &[String],
    block_source: &str,
    driven: &[DrivenSignal],
) -> String {
    let mut s = String::new();
    s.push_str("## Test report\n");
    s.push_str(&format!("Instruction: {}\n", report.instruction));
    if let Some(pc) = &report.pc {
        s.push_str(&format!("Program counter: {pc}\n"));
    }
    s.push_str(&format!("Mismatching signal: {} at cycle {}\n", report.signal, report.cycle));
    s.push_str(&format!("Expected behavior: {}\n\n", report.expected));
    s.push_str(&format!("## Current block `{block_id}` at cycle {cycle}\n"));
    if !traced.is_empty() {
        s.push_str(&format!("Traced outputs: {}\n", traced.join(", ")));
    }
    s.push_str("```systemverilog\n");
    s.push_str(block_source);
    s.push_str("```\n\n");
    s.push_str("## Driven signals\n");
    s.push_str("Each entry is an input of this block together with the cycle at which its value was consumed.\n");
    s.push_str("```json\n");
    s.push_str(&driven_json(driven));
    s.push_str("\n```\n");
    if driven.is_empty() {
        s.push_str("The list is empty: every input of this block comes from a primary input or from before the first cycle, so no further tracing is possible from here.\n");
    }
    s.push_str("\n## Tools\n");
    s.push_str("- append_block: add the current block to the suspicious queue.\n");
    s.push_str("- check_signals: inspect the blocks that compute the given signals. Names must be chosen from the provided list.\n");
    s.push_str("- read_values: read signal values from the waveform at given cycles.\n");
    s.push_str("- exit: finish once the root cause is in the suspicious queue, giving each suspicious block a confidence between 0 and 1.\n");
    s
}

/// Tool declarations in the chat-completions function format.
pub fn tool_schemas() -> Value {
    json!([
        {"type": "function", "function": {
            "name": "append_block",
            "description": "Append the current block to the suspicious block queue.",
            "parameters": {"type": "object", "properties": {
                "rationale": {"type": "string", "description": "Why the block is suspicious."}
            }}
        }},
        {"type": "function", "function": {
            "name": "check_signals",
            "description": "Visit the blocks driving the named signals. Names must come from the driven-signal list.",
            "parameters": {"type": "object", "properties": {
                "names": {"type": "array", "items": {"type": "string"}}
            }, "required": ["names"]}
        }},
        {"type": "function", "function": {
            "name": "read_values",
            "description": "Read signal values at cycles.",
            "parameters": {"type": "object", "properties": {
                "queries": {"type": "array", "items": {"type": "object", "properties": {
                    "signal": {"type": "string"},
                    "cycle": {"type": "integer"}
                }, "required": ["signal", "cycle"]}}
            }, "required": ["queries"]}
        }},
        {"type": "function", "function": {
            "name": "exit",
            "description": "Stop and score every suspicious block.",
            "parameters": {"type": "object", "properties": {
                "scores": {"type": "object", "additionalProperties": {"type": "number"},
                           "description": "Map from block id to confidence in [0, 1]."}
            }, "required": ["scores"]}
        }}
    ])
}
