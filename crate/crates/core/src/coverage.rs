//! Per-cycle assignment coverage for clocked blocks.
//!
//! Replay mode re-runs a block's guard tree on the values sampled at a cycle.
//! Blocking assignments inside the block update a local overlay so later
//! guards see them, as in simulation. A guard that evaluates to X covers
//! neither branch.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

use crate::blocks::{BlockSet, CodeBlock};
use crate::eval::{assign_lvalue, case_match, case_width, eval, Env, EvalError};
use crate::hdl::elab::{DesignHierarchy, EStmt, LValue, SignalId, TExpr};
use crate::logic::{Logic, LogicVec};
use crate::wave::{WaveError, Waveform};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoverageError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no coverage recorded for {file}:{line} at cycle {cycle}")]
    MissingCoverage { file: String, line: u32, cycle: i64 },
    #[error("coverage entry {file}:{line} is not inside any code block")]
    UnknownLine { file: String, line: u32 },
    #[error("cannot read coverage file: {0}")]
    Load(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct CoverageEntry {
    pub file: String,
    pub line: u32,
    /// Restricts the entry to one instance path when present.
    #[serde(default)]
    pub instance: Option<String>,
    pub cycles: Vec<u32>,
}

#[derive(Debug, Clone, Default)]
pub enum CoverageSource {
    #[default]
    Replay,
    ExternalFile(CoverageTable),
}

#[derive(Debug, Clone, Default)]
pub struct CoverageTable {
    entries: Vec<CoverageEntry>,
    by_line: HashMap<(String, u32), Vec<usize>>,
    horizon: Option<u32>,
}

impl CoverageTable {
    /// Builds a table, checking that every entry names a line owned by some
    /// block.
    pub fn new(entries: Vec<CoverageEntry>, blocks: &BlockSet) -> Result<Self, CoverageError> {
        let mut by_line: HashMap<(String, u32), Vec<usize>> = HashMap::new();
        let mut owned: BTreeSet<(&str, u32)> = BTreeSet::new();
        for b in &blocks.blocks {
            owned.extend(b.lines.iter().map(|l| (b.file.as_str(), *l)));
        }
        for (i, e) in entries.iter().enumerate() {
            if !owned.contains(&(e.file.as_str(), e.line)) {
                return Err(CoverageError::UnknownLine {
                    file: e.file.clone(),
                    line: e.line,
                });
            }
            by_line.entry((e.file.clone(), e.line)).or_default().push(i);
        }
        let horizon = entries.iter().flat_map(|e| e.cycles.iter().copied()).max();
        Ok(CoverageTable {
            entries,
            by_line,
            horizon,
        })
    }

    pub fn load(path: impl AsRef<Path>, blocks: &BlockSet) -> Result<Self, CoverageError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| CoverageError::Load(format!("{}: {e}", path.as_ref().display())))?;
        let entries: Vec<CoverageEntry> =
            serde_json::from_str(&text).map_err(|e| CoverageError::Load(e.to_string()))?;
        CoverageTable::new(entries, blocks)
    }

    fn covered(&self, file: &str, line: u32, instance: &str, cycle: u32) -> Option<bool> {
        let ids = self.by_line.get(&(file.to_string(), line))?;
        let mut seen = false;
        for &i in ids {
            let e = &self.entries[i];
            if e.instance.as_deref().is_some_and(|p| p != instance) {
                continue;
            }
            seen = true;
            if e.cycles.contains(&cycle) {
                return Some(true);
            }
        }
        seen.then_some(false)
    }
}

/// Value source reading design signals from a waveform at one cycle.
pub struct WaveEnv<'a> {
    pub design: &'a DesignHierarchy,
    pub wave: &'a Waveform,
    pub cycle: i64,
}

impl Env for WaveEnv<'_> {
    fn value(&self, s: SignalId) -> Result<LogicVec, EvalError> {
        let name = self.design.name(s);
        match self.wave.value_at(name, self.cycle) {
            Ok(v) => Ok(v.resize(self.design.signal(s).width)),
            Err(WaveError::CycleOutOfRange { cycle, count }) => Err(EvalError::CycleOutOfRange { cycle, count }),
            Err(_) => Err(EvalError::SignalNotRecorded(name.to_string())),
        }
    }
}

pub fn eval_expr(design: &DesignHierarchy, expr: &TExpr, w: &Waveform, t: i64) -> Result<LogicVec, EvalError> {
    eval(expr, 0, &WaveEnv { design, wave: w, cycle: t })
}

struct Overlay<'a> {
    base: WaveEnv<'a>,
    local: HashMap<SignalId, LogicVec>,
}

impl Env for Overlay<'_> {
    fn value(&self, s: SignalId) -> Result<LogicVec, EvalError> {
        match self.local.get(&s) {
            Some(v) => Ok(v.clone()),
            None => self.base.value(s),
        }
    }
}

/// Whether some assignment to `s` in block `b` executes at cycle `t`.
pub fn is_assignment_covered(
    design: &DesignHierarchy,
    b: &CodeBlock,
    s: SignalId,
    t: i64,
    w: &Waveform,
    src: &CoverageSource,
) -> Result<bool, CoverageError> {
    match src {
        CoverageSource::Replay => {
            let mut ov = Overlay {
                base: WaveEnv { design, wave: w, cycle: t },
                local: HashMap::new(),
            };
            let mut found = false;
            for &si in &b.statements {
                replay(design, &design.statements[si].body, s, true, &mut ov, &mut found)?;
            }
            Ok(found)
        }
        CoverageSource::ExternalFile(table) => {
            let mut spans = Vec::new();
            for &si in &b.statements {
                collect_assign_spans(&design.statements[si].body, s, &mut spans);
            }
            if t < 0 || table.horizon.is_none_or(|h| t as u64 > h as u64) {
                let line = spans.first().map_or(b.first_line(), |x| x.0);
                return Err(CoverageError::MissingCoverage {
                    file: b.file.clone(),
                    line,
                    cycle: t,
                });
            }
            let mut any_entry = false;
            for (a, z) in &spans {
                for l in *a..=*z {
                    match table.covered(&b.file, l, &b.instance_path, t as u32) {
                        Some(true) => return Ok(true),
                        Some(false) => any_entry = true,
                        None => {}
                    }
                }
            }
            if !any_entry {
                return Err(CoverageError::MissingCoverage {
                    file: b.file.clone(),
                    line: spans.first().map_or(b.first_line(), |x| x.0),
                    cycle: t,
                });
            }
            Ok(false)
        }
    }
}

fn collect_assign_spans(st: &EStmt, s: SignalId, out: &mut Vec<(u32, u32)>) {
    st.visit(&mut |x| {
        if let EStmt::Assign { lhs, span, .. } = x {
            if writes(lhs, s) {
                out.push((span.line, span.end_line));
            }
        }
    });
}

fn writes(lv: &LValue, s: SignalId) -> bool {
    let mut t = BTreeSet::new();
    lv.targets(&mut t);
    t.contains(&s)
}

/// Walks the statement tree; `live` is false under a guard that did not
/// evaluate to 1, where blocking writes only poison their targets.
fn replay(
    design: &DesignHierarchy,
    st: &EStmt,
    s: SignalId,
    live: bool,
    ov: &mut Overlay,
    found: &mut bool,
) -> Result<(), CoverageError> {
    match st {
        EStmt::Block(items) => {
            for i in items {
                replay(design, i, s, live, ov, found)?;
            }
        }
        EStmt::If { cond, then_, else_, .. } => {
            let c = if live { eval(cond, 0, ov)?.truthiness() } else { Logic::X };
            match c {
                Logic::One => replay(design, then_, s, true, ov, found)?,
                Logic::Zero => {
                    if let Some(e) = else_ {
                        replay(design, e, s, true, ov, found)?;
                    }
                }
                _ => {
                    replay(design, then_, s, false, ov, found)?;
                    if let Some(e) = else_ {
                        replay(design, e, s, false, ov, found)?;
                    }
                }
            }
        }
        EStmt::Case { kind, subject, items, .. } => {
            let mut live_here = live;
            let w = case_width(subject, items);
            let subj = if live { Some(eval(subject, w, ov)?) } else { None };
            for (labels, body) in items {
                if !live_here {
                    replay(design, body, s, false, ov, found)?;
                    continue;
                }
                let subj = subj.as_ref().unwrap();
                let m = if labels.is_empty() {
                    Logic::One
                } else {
                    let mut acc = Logic::Zero;
                    for l in labels {
                        let lv = eval(l, w, ov)?;
                        match case_match(*kind, subj, &lv) {
                            Logic::One => {
                                acc = Logic::One;
                                break;
                            }
                            Logic::Zero => {}
                            _ => acc = Logic::X,
                        }
                    }
                    acc
                };
                match m {
                    Logic::One => {
                        replay(design, body, s, true, ov, found)?;
                        // remaining items are skipped, not poisoned
                        break;
                    }
                    Logic::Zero => {}
                    _ => {
                        replay(design, body, s, false, ov, found)?;
                        live_here = false;
                    }
                }
            }
        }
        EStmt::Assign { lhs, rhs, blocking, .. } => {
            if live && writes(lhs, s) {
                *found = true;
            }
            if *blocking {
                let updates = if live {
                    let v = eval(rhs, lhs.width(&design.signals), ov)?;
                    assign_lvalue(lhs, &v, &design.signals, ov)?
                } else {
                    let mut t = BTreeSet::new();
                    lhs.targets(&mut t);
                    t.into_iter()
                        .map(|x| (x, LogicVec::unknown(design.signal(x).width)))
                        .collect()
                };
                for (x, v) in updates {
                    ov.local.insert(x, v);
                }
            }
        }
        EStmt::Null => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::blockize;
    use crate::hdl::{elaborate, parse_sources, SourceUnit};

    const SRC: &str = "module top(input logic clk, input logic we, input logic [3:0] d, output logic [3:0] q);\n  always_ff @(posedge clk) if (we) q <= d;\nendmodule\n";

    fn vcd(we: &[&str]) -> String {
        let mut s = String::from("$scope module top $end\n$var wire 1 ! clk $end\n$var wire 1 \" we $end\n$var wire 4 # d $end\n$var wire 4 $ q $end\n$upscope $end\n$enddefinitions $end\n#0\n0!\nb0 #\nb0 $\n");
        for (k, v) in we.iter().enumerate() {
            s.push_str(&format!("#{}\n1!\n{}\"\n#{}\n0!\n", 10 * (k + 1), v, 10 * (k + 1) + 5));
        }
        s
    }

    #[test]
    fn guard_decides_coverage() {
        let d = elaborate(&parse_sources(&[SourceUnit::new("t.sv", SRC)]).unwrap(), "top").unwrap();
        let bs = blockize(&d).unwrap();
        let w = Waveform::parse(&vcd(&["1", "0", "x"]), "top.clk").unwrap();
        let q = d.lookup("top.q").unwrap();
        let b = bs.find_driven_block(q).unwrap();
        let cov = |t| is_assignment_covered(&d, b, q, t, &w, &CoverageSource::Replay).unwrap();
        assert!(cov(0));
        assert!(!cov(1));
        assert!(!cov(2));
    }

    #[test]
    fn external_table() {
        let d = elaborate(&parse_sources(&[SourceUnit::new("t.sv", SRC)]).unwrap(), "top").unwrap();
        let bs = blockize(&d).unwrap();
        let w = Waveform::parse(&vcd(&["1", "0", "1"]), "top.clk").unwrap();
        let q = d.lookup("top.q").unwrap();
        let b = bs.find_driven_block(q).unwrap();
        let table = CoverageTable::new(
            vec![CoverageEntry {
                file: "t.sv".into(),
                line: 2,
                instance: None,
                cycles: vec![0, 2],
            }],
            &bs,
        )
        .unwrap();
        let src = CoverageSource::ExternalFile(table);
        assert!(is_assignment_covered(&d, b, q, 0, &w, &src).unwrap());
        assert!(!is_assignment_covered(&d, b, q, 1, &w, &src).unwrap());
        assert!(matches!(
            is_assignment_covered(&d, b, q, 3, &w, &src),
            Err(CoverageError::MissingCoverage { cycle: 3, .. })
        ));
        let bad = CoverageTable::new(
            vec![CoverageEntry {
                file: "t.sv".into(),
                line: 1,
                instance: None,
                cycles: vec![],
            }],
            &bs,
        );
        assert!(matches!(bad, Err(CoverageError::UnknownLine { line: 1, .. })));
    }
}
