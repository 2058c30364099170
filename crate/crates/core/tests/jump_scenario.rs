// A jump whose target is computed by a faulty adder: the register holding the
// decode-stage pc is either written from the fetch pc (covered) or holds its
// value because the pipe register enable is low (uncovered).

mod common;

use std::collections::BTreeSet;

use common::Fixture;
use rtlfl_core::agent::backend::ScriptedBackend;
use rtlfl_core::agent::prompt::{driven_json, DrivenSignal};
use rtlfl_core::agent::{handle_tool, run_localization, AgentState, Budget, Session, TestReport, ToolCall, ValueQuery};
use rtlfl_core::coverage::CoverageSource;
use rtlfl_core::dataflow::DataflowCache;
use rtlfl_core::slice::{build_exec_path, intra_block_analysis, ExecPath, PathNode, SliceLimits};

const PC_ID_REG: &str = "rtl/if_stage.sv:26:always@top.u_if";
const PC_IF_ASSIGN: &str = "rtl/if_stage.sv:13:assign@top.u_if";
const WE_ASSIGN: &str = "rtl/if_stage.sv:15:assign@top.u_if";
const ADDER: &str = "rtl/alu.sv:7:assign@top.u_alu";

fn analyze(f: &Fixture) -> (BTreeSet<String>, i64) {
    let b = &f.project.blocks.blocks[f.block(PC_ID_REG)];
    let d = intra_block_analysis(
        &f.project.design,
        b,
        f.sig("top.u_if.pc_id_o"),
        18,
        &f.wave(),
        &CoverageSource::Replay,
        &mut DataflowCache::default(),
    )
    .unwrap();
    (d.signals.iter().map(|s| f.project.design.name(*s).to_string()).collect(), d.cycle)
}

fn path(f: &Fixture) -> ExecPath {
    build_exec_path(
        &f.project.design,
        &f.project.blocks,
        f.sig("top.retired_pc"),
        19,
        &f.wave(),
        &CoverageSource::Replay,
        SliceLimits::default(),
    )
    .unwrap()
}

fn names(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn waveform_shows_the_wrong_jump() {
    let f = Fixture::load("jump_scenario/manifest.toml");
    let w = f.wave();
    let hex = |n: &str, t| w.value_at(n, t).unwrap().to_u64().unwrap();
    assert_eq!(hex("top.u_if.pc_if_o", 16), 0x0010_0080);
    assert_eq!(hex("top.u_if.pc_if_o", 17), 0x000f_5fc0);
    assert_eq!(hex("top.u_if.if_id_pipe_reg_we", 17), 1);
    assert_eq!(hex("top.retired_pc", 19), 0x000f_5fc0);
    let g = rtlfl_core::wave::Waveform::load(f.manifest.golden.as_ref().unwrap(), "top.clk").unwrap();
    assert_eq!(g.value_at("top.u_if.pc_if_o", 17).unwrap().to_u64(), Some(0x0010_a140));
}

#[test]
fn covered_register_follows_its_inputs() {
    let f = Fixture::load("jump_scenario/manifest.toml");
    assert_eq!(analyze(&f), (names(&["top.u_if.if_id_pipe_reg_we", "top.u_if.pc_if_o"]), 17));

    let p = path(&f);
    let reg18 = PathNode { block: f.block(PC_ID_REG), cycle: 18 };
    let pc17 = PathNode { block: f.block(PC_IF_ASSIGN), cycle: 17 };
    let we17 = PathNode { block: f.block(WE_ASSIGN), cycle: 17 };
    assert_ne!(pc17.block, we17.block, "the two assigns share no signal and stay separate blocks");
    assert!(p.edges.contains(&(pc17, reg18)));
    assert!(p.edges.contains(&(we17, reg18)));
    let into: BTreeSet<PathNode> = p.edges.iter().filter(|e| e.1 == reg18).map(|e| e.0).collect();
    assert_eq!(into, BTreeSet::from([pc17, we17]));
    assert!(p.blocks().len() < f.project.blocks.len());
}

#[test]
fn uncovered_register_holds() {
    let f = Fixture::load("jump_scenario/uncovered.toml");
    assert_eq!(f.wave().value_at("top.u_if.if_id_pipe_reg_we", 17).unwrap().to_u64(), Some(0));
    assert_eq!(analyze(&f), (names(&["top.u_if.pc_id_o"]), 17));

    let p = path(&f);
    let reg = f.block(PC_ID_REG);
    let (r17, r18) = (PathNode { block: reg, cycle: 17 }, PathNode { block: reg, cycle: 18 });
    assert!(p.contains(r17));
    assert!(p.edges.contains(&(r17, r18)));
    let into: Vec<_> = p.edges.iter().filter(|e| e.1 == r18).collect();
    assert_eq!(into.len(), 1);
}

#[test]
fn prompt_lists_both_drivers_and_values_are_readable() {
    let f = Fixture::load("jump_scenario/manifest.toml");
    let p = path(&f);
    let w = f.wave();
    let report: TestReport = serde_json::from_str(&std::fs::read_to_string(f.manifest.report.as_ref().unwrap()).unwrap()).unwrap();
    let s = Session {
        design: &f.project.design,
        blocks: &f.project.blocks,
        path: &p,
        wave: &w,
        report: &report,
    };
    let reg18 = PathNode { block: f.block(PC_ID_REG), cycle: 18 };
    let expected = driven_json(&[
        DrivenSignal { name: "top.u_if.if_id_pipe_reg_we".into(), cycle: 17 },
        DrivenSignal { name: "top.u_if.pc_if_o".into(), cycle: 17 },
    ]);
    assert!(s.prompt(reg18).contains(&expected));
    assert_eq!(s.view(reg18).driven.len(), 2);

    let mut st = AgentState { current: Some(reg18), ..Default::default() };
    let call = ToolCall::ReadValues { queries: vec![ValueQuery { signal: "top.u_if.pc_if_o".into(), cycle: 17 }] };
    let out = handle_tool(&call, &mut st, &s).unwrap();
    assert!(out.text.starts_with("top.u_if.pc_if_o@17 = 0x000f5fc0"), "{}", out.text);
}

#[test]
fn scripted_replay_ranks_the_adder_first() {
    let f = Fixture::load("jump_scenario/manifest.toml");
    let p = path(&f);
    let w = f.wave();
    let report: TestReport = serde_json::from_str(&std::fs::read_to_string(f.manifest.report.as_ref().unwrap()).unwrap()).unwrap();
    let s = Session {
        design: &f.project.design,
        blocks: &f.project.blocks,
        path: &p,
        wave: &w,
        report: &report,
    };
    let mut b = ScriptedBackend::load(f.manifest.root.join("script.json")).unwrap();
    let r = run_localization(&s, &mut b, Budget::default()).unwrap();
    assert_eq!(r.ranking.entries[0].block_id, ADDER);
    assert!(r.ranking.meta.exit_called);
    assert_eq!(b.remaining(), 0);
}
