mod common;

use common::Fixture;
use rtlfl_core::agent::backend::{ScriptEntry, ScriptedBackend};
use rtlfl_core::agent::{handle_tool, run_localization, AgentState, Budget, RunResult, Session, TestReport, ToolCall, ToolError};
use rtlfl_core::coverage::CoverageSource;
use rtlfl_core::slice::{build_exec_path, ExecPath, PathNode, SliceLimits};
use serde_json::json;

const ROOT: &str = "rtl/top.sv:37:always@top";
const PC_ID_OUT: &str = "rtl/top.sv:34:out@top";
const PC_ID_REG: &str = "rtl/if_stage.sv:26:always@top.u_if";
const PC_IF_ASSIGN: &str = "rtl/if_stage.sv:13:assign@top.u_if";
const WE_ASSIGN: &str = "rtl/if_stage.sv:15:assign@top.u_if";

struct Env {
    f: Fixture,
    path: ExecPath,
    wave: rtlfl_core::wave::Waveform,
    report: TestReport,
}

fn env() -> Env {
    let f = Fixture::load("jump_scenario/manifest.toml");
    let wave = f.wave();
    let path = build_exec_path(
        &f.project.design,
        &f.project.blocks,
        f.sig("top.retired_pc"),
        19,
        &wave,
        &CoverageSource::Replay,
        SliceLimits::default(),
    )
    .unwrap();
    let report = serde_json::from_str(&std::fs::read_to_string(f.manifest.report.as_ref().unwrap()).unwrap()).unwrap();
    Env { f, path, wave, report }
}

impl Env {
    fn session(&self) -> Session<'_> {
        Session {
            design: &self.f.project.design,
            blocks: &self.f.project.blocks,
            path: &self.path,
            wave: &self.wave,
            report: &self.report,
        }
    }

    fn run(&self, script: serde_json::Value) -> (RunResult, usize) {
        let entries: Vec<ScriptEntry> = serde_json::from_value(script).unwrap();
        let mut b = ScriptedBackend::new(entries);
        let r = run_localization(&self.session(), &mut b, Budget::default()).unwrap();
        (r, b.remaining())
    }
}

fn to_reg() -> Vec<serde_json::Value> {
    vec![
        json!({"expect_block": ROOT, "tool_calls": [{"tool": "check_signals", "names": ["top.pc_id"]}]}),
        json!({"expect_block": PC_ID_OUT, "tool_calls": [{"tool": "check_signals", "names": ["top.u_if.pc_id_o"]}]}),
        json!({"expect_block": PC_ID_REG, "tool_calls": [
            {"tool": "check_signals", "names": ["top.u_if.pc_if_o", "top.u_if.if_id_pipe_reg_we"]}]}),
    ]
}

fn bad() -> serde_json::Value {
    json!({"tool": "check_signals", "names": ["top.u_alu.adder_result"]})
}

#[test]
fn rejected_name_leaves_state_untouched() {
    let e = env();
    let s = e.session();
    let reg = PathNode { block: e.f.block(PC_ID_REG), cycle: 18 };
    let mut st = AgentState {
        current: Some(reg),
        ..Default::default()
    };
    st.visited.insert(reg);
    let before = format!("{st:?}");
    let call = ToolCall::CheckSignals { names: vec!["top.u_if.pc_if_o".into(), "top.u_if.fetch_addr".into()] };
    assert_eq!(handle_tool(&call, &mut st, &s), Err(ToolError::InvalidSignalName("top.u_if.fetch_addr".into())));
    assert_eq!(format!("{st:?}"), before);
}

#[test]
fn three_rejections_move_on() {
    let e = env();
    let mut script = to_reg();
    for _ in 0..3 {
        script.push(json!({"expect_block": PC_IF_ASSIGN, "tool_calls": [bad()]}));
    }
    script.push(json!({"expect_block": WE_ASSIGN, "tool_calls": [{"tool": "append_block"}, {"tool": "exit", "scores": {WE_ASSIGN: 0.5}}]}));
    let (r, left) = e.run(json!(script));
    assert_eq!(left, 0);
    assert_eq!(r.ranking.meta.abandoned_states, 1);
    assert_eq!(r.ranking.meta.tool_calls, 3 + 3 + 2);
    assert_eq!(r.ranking.entries[0].block_id, WE_ASSIGN);
    // the rejected calls queued nothing
    assert_eq!(r.ranking.meta.states_visited, 5);
}

#[test]
fn each_rejection_costs_one_retry() {
    let e = env();
    let mut script = to_reg();
    script.push(json!({"expect_block": PC_IF_ASSIGN, "tool_calls": [bad()]}));
    script.push(json!({"expect_block": PC_IF_ASSIGN, "tool_calls": [bad(), {"tool": "append_block"}]}));
    script.push(json!({"expect_block": PC_IF_ASSIGN, "tool_calls": [{"tool": "exit", "scores": {PC_IF_ASSIGN: 0.8}}]}));
    let (r, left) = e.run(json!(script));
    assert_eq!(left, 0);
    assert_eq!(r.ranking.meta.abandoned_states, 0);
    assert_eq!(r.ranking.entries[0].block_id, PC_IF_ASSIGN);
    let oks: Vec<bool> = r
        .state
        .transcript
        .iter()
        .flat_map(|t| t["observations"].as_array().unwrap().iter().map(|o| o["ok"].as_bool().unwrap()))
        .collect();
    assert_eq!(oks, [true, true, true, false, false, true, true]);
}

#[test]
fn malformed_calls_count_as_retries() {
    let e = env();
    let script = json!([
        {"expect_block": ROOT, "tool_calls": [{"tool": "invalid", "name": "launch", "reason": "unknown tool"}]},
        {"expect_block": ROOT, "tool_calls": [{"tool": "read_values", "queries": [{"signal": "top.nope", "cycle": 3}]}]},
        {"expect_block": ROOT, "tool_calls": [{"tool": "read_values", "queries": [{"signal": "top.pc_id", "cycle": 99}]}]}
    ]);
    let (r, left) = e.run(script);
    assert_eq!(left, 0);
    assert_eq!(r.ranking.meta.abandoned_states, 1);
    assert!(r.ranking.entries.is_empty());
}

#[test]
fn budget_exhaustion_keeps_partial_results() {
    let e = env();
    let mut script = to_reg();
    script[0] = json!({"expect_block": ROOT, "tool_calls": [{"tool": "append_block"}, {"tool": "check_signals", "names": ["top.pc_id"]}]});
    let entries: Vec<ScriptEntry> = serde_json::from_value(json!(script)).unwrap();
    let mut b = ScriptedBackend::new(entries);
    let budget = Budget { max_tool_calls: 3, ..Budget::default() };
    let r = run_localization(&e.session(), &mut b, budget).unwrap();
    assert!(r.ranking.meta.budget_exhausted);
    assert_eq!(r.ranking.meta.tool_calls, 3);
    assert_eq!(r.ranking.entries.len(), 1);
    assert!(r.ranking.entries[0].fallback);
}

#[test]
fn silent_backend_walks_nothing() {
    let e = env();
    let (r, _) = e.run(json!([]));
    assert!(r.ranking.entries.is_empty());
    assert_eq!(r.ranking.meta.states_visited, 1);
    assert!(!r.ranking.meta.exit_called);
}

#[test]
fn script_mismatch_is_a_backend_error() {
    let e = env();
    let entries: Vec<ScriptEntry> = serde_json::from_value(json!([{"expect_block": WE_ASSIGN, "tool_calls": []}])).unwrap();
    let mut b = ScriptedBackend::new(entries);
    assert!(run_localization(&e.session(), &mut b, Budget::default()).is_err());
}
