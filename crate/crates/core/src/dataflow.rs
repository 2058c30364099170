//! Static cone of influence of a block output.
//!
//! Within an always block the body is walked once in program order. Blocking
//! assignments are substituted forward, so a read of a variable assigned
//! earlier on the same path contributes that assignment's dependencies
//! instead of the variable. Guard signals are added to every assignment they
//! dominate. At a branch join, a blocking variable left unassigned on one
//! side keeps its previous value and so depends on itself.

use std::collections::{BTreeSet, HashMap};

use crate::blocks::{BlockKind, CodeBlock};
use crate::hdl::elab::{DesignHierarchy, EStmt, LValue, SignalId, TExpr};

pub type Deps = BTreeSet<SignalId>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataflowError {
    #[error("combinational loop through {}", signals.join(", "))]
    CombinationalLoop { signals: Vec<String> },
}

/// Dependencies of every output of `b`.
pub fn block_dependencies(design: &DesignHierarchy, b: &CodeBlock) -> Result<HashMap<SignalId, Deps>, DataflowError> {
    let mut out = HashMap::new();
    match b.kind {
        BlockKind::ModInputBlock | BlockKind::ModOutputBlock => {
            for s in &b.v_out {
                out.insert(*s, b.v_in.clone());
            }
        }
        BlockKind::AlwaysBlock => {
            let st = &design.statements[b.statements[0]];
            let mut env = Env::default();
            walk(&st.body, &Deps::new(), &mut env);
            for s in &b.v_out {
                let mut d = Deps::new();
                if let Some(x) = env.nba.get(s) {
                    d.extend(x);
                }
                if let Some(x) = env.blk.get(s) {
                    d.extend(x);
                }
                d.retain(|x| !b.triggers.contains(x));
                out.insert(*s, d);
            }
        }
        BlockKind::AssignBlock => {
            let mut direct: HashMap<SignalId, Deps> = HashMap::new();
            for &si in &b.statements {
                let EStmt::Assign { lhs, rhs, .. } = &design.statements[si].body else {
                    continue;
                };
                let mut d = rhs.signal_set();
                lhs.index_reads(&mut d);
                let mut targets = Deps::new();
                lhs.targets(&mut targets);
                for t in targets {
                    direct.entry(t).or_default().extend(d.iter().copied());
                }
            }
            let mut done: HashMap<SignalId, Deps> = HashMap::new();
            for s in &b.v_out {
                let mut stack = Vec::new();
                collapse(design, *s, &direct, &mut done, &mut stack)?;
            }
            out = done;
            out.retain(|k, _| b.v_out.contains(k));
        }
    }
    Ok(out)
}

fn collapse(
    design: &DesignHierarchy,
    s: SignalId,
    direct: &HashMap<SignalId, Deps>,
    done: &mut HashMap<SignalId, Deps>,
    stack: &mut Vec<SignalId>,
) -> Result<Deps, DataflowError> {
    if let Some(d) = done.get(&s) {
        return Ok(d.clone());
    }
    if stack.contains(&s) {
        let from = stack.iter().position(|x| *x == s).unwrap();
        return Err(DataflowError::CombinationalLoop {
            signals: stack[from..].iter().map(|x| design.name(*x).to_string()).collect(),
        });
    }
    stack.push(s);
    let mut acc = Deps::new();
    for r in &direct[&s] {
        if direct.contains_key(r) {
            acc.extend(collapse(design, *r, direct, done, stack)?);
        } else {
            acc.insert(*r);
        }
    }
    stack.pop();
    done.insert(s, acc.clone());
    Ok(acc)
}

#[derive(Debug, Clone, Default)]
struct Env {
    /// Current dependencies of blocking-assigned variables on this path.
    blk: HashMap<SignalId, Deps>,
    /// Dependencies of the last nonblocking assignment on this path.
    nba: HashMap<SignalId, Deps>,
}

impl Env {
    fn reads(&self, e: &TExpr) -> Deps {
        let mut out = Deps::new();
        for r in e.signal_set() {
            match self.blk.get(&r) {
                Some(d) => out.extend(d),
                None => {
                    out.insert(r);
                }
            }
        }
        out
    }

    fn join(branches: Vec<Env>) -> Env {
        let mut out = Env::default();
        let blk_keys: BTreeSet<SignalId> = branches.iter().flat_map(|b| b.blk.keys().copied()).collect();
        for k in blk_keys {
            let mut d = Deps::new();
            for b in &branches {
                match b.blk.get(&k) {
                    Some(x) => d.extend(x),
                    None => {
                        d.insert(k);
                    }
                }
            }
            out.blk.insert(k, d);
        }
        let nba_keys: BTreeSet<SignalId> = branches.iter().flat_map(|b| b.nba.keys().copied()).collect();
        for k in nba_keys {
            let mut d = Deps::new();
            for b in &branches {
                if let Some(x) = b.nba.get(&k) {
                    d.extend(x);
                }
            }
            out.nba.insert(k, d);
        }
        out
    }
}

fn walk(s: &EStmt, ctrl: &Deps, env: &mut Env) {
    match s {
        EStmt::Block(items) => items.iter().for_each(|i| walk(i, ctrl, env)),
        EStmt::If { cond, then_, else_, .. } => {
            let mut c = ctrl.clone();
            c.extend(env.reads(cond));
            let mut t = env.clone();
            walk(then_, &c, &mut t);
            let mut f = env.clone();
            if let Some(e) = else_ {
                walk(e, &c, &mut f);
            }
            *env = Env::join(vec![t, f]);
        }
        EStmt::Case { subject, items, .. } => {
            let mut c = ctrl.clone();
            c.extend(env.reads(subject));
            for (labels, _) in items {
                labels.iter().for_each(|l| c.extend(env.reads(l)));
            }
            let mut branches = Vec::new();
            for (_, body) in items {
                let mut b = env.clone();
                walk(body, &c, &mut b);
                branches.push(b);
            }
            if !items.iter().any(|(l, _)| l.is_empty()) {
                branches.push(env.clone());
            }
            *env = Env::join(branches);
        }
        EStmt::Assign { lhs, rhs, blocking, .. } => {
            let mut d = env.reads(rhs);
            d.extend(ctrl.iter().copied());
            let mut idx = Deps::new();
            lhs.index_reads(&mut idx);
            for r in idx {
                match env.blk.get(&r) {
                    Some(x) => d.extend(x),
                    None => {
                        d.insert(r);
                    }
                }
            }
            for (target, whole) in lvalue_parts(lhs) {
                let mut nd = d.clone();
                let map = if *blocking { &mut env.blk } else { &mut env.nba };
                if !whole {
                    match map.get(&target) {
                        Some(prev) => nd.extend(prev),
                        None => {
                            nd.insert(target);
                        }
                    }
                }
                map.insert(target, nd);
            }
        }
        EStmt::Null => {}
    }
}

/// Targets of an assignment with whether each is written in full.
pub fn lvalue_parts(lv: &LValue) -> Vec<(SignalId, bool)> {
    match lv {
        LValue::Whole(s) => vec![(*s, true)],
        LValue::Bit { sig, .. } | LValue::Part { sig, .. } => vec![(*sig, false)],
        LValue::Concat(items) => items.iter().flat_map(lvalue_parts).collect(),
    }
}

/// Memoized per-block dependency tables.
#[derive(Default)]
pub struct DataflowCache {
    tables: HashMap<usize, HashMap<SignalId, Deps>>,
}

impl DataflowCache {
    pub fn deps(&mut self, design: &DesignHierarchy, b: &CodeBlock, s: SignalId) -> Result<Deps, DataflowError> {
        let t = match self.tables.entry(b.index) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(block_dependencies(design, b)?),
        };
        Ok(t.get(&s).cloned().unwrap_or_default())
    }
}

/// The driving inputs of output `s` within block `b`.
pub fn dataflow_analysis(design: &DesignHierarchy, b: &CodeBlock, s: SignalId) -> Result<Deps, DataflowError> {
    Ok(block_dependencies(design, b)?.remove(&s).unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::blockize;
    use crate::hdl::{elaborate, parse_sources, SourceUnit};

    fn deps_of(src: &str, out: &str) -> Vec<String> {
        let d = elaborate(&parse_sources(&[SourceUnit::new("t.sv", src)]).unwrap(), "top").unwrap();
        let bs = blockize(&d).unwrap();
        let s = d.lookup(out).unwrap();
        let b = bs.find_driven_block(s).unwrap();
        let mut v: Vec<String> = dataflow_analysis(&d, b, s).unwrap().iter().map(|x| d.name(*x).to_string()).collect();
        v.sort();
        v
    }

    #[test]
    fn enable_register() {
        let src = "module top(input logic clk, input logic we, input logic [3:0] pc_if_o, output logic [3:0] pc_id_o);\n  always_ff @(posedge clk) if (we) pc_id_o <= pc_if_o;\nendmodule\n";
        assert_eq!(deps_of(src, "top.pc_id_o"), vec!["top.pc_if_o", "top.we"]);
    }

    #[test]
    fn xor_assign() {
        let src = "module top(input logic a, input logic c, output logic y);\n  assign y = a ^ c;\nendmodule\n";
        assert_eq!(deps_of(src, "top.y"), vec!["top.a", "top.c"]);
    }

    #[test]
    fn merged_chain_collapses() {
        let src = "module top(input logic a, output logic c);\n  logic b;\n  assign b = ~a;\n  assign c = b;\nendmodule\n";
        assert_eq!(deps_of(src, "top.c"), vec!["top.a"]);
    }

    #[test]
    fn blocking_chain_and_branches() {
        let src = "module top(input logic s, input logic a, input logic b, input logic k, output logic y);\n  logic t;\n  always_comb begin\n    t = a & k;\n    if (s) y = t;\n    else y = b;\n  end\nendmodule\n";
        assert_eq!(deps_of(src, "top.y"), vec!["top.a", "top.b", "top.k", "top.s"]);
    }

    #[test]
    fn conditional_blocking_keeps_self() {
        let src = "module top(input logic clk, input logic e, input logic a, output logic q);\n  always_ff @(posedge clk) begin\n    if (e) q = a;\n  end\nendmodule\n";
        assert_eq!(deps_of(src, "top.q"), vec!["top.a", "top.e", "top.q"]);
    }

    #[test]
    fn loop_inside_assign_block() {
        let src = "module top(input logic a, output logic y);\n  logic z;\n  assign y = z & a;\n  assign z = y;\nendmodule\n";
        let d = elaborate(&parse_sources(&[SourceUnit::new("t.sv", src)]).unwrap(), "top").unwrap();
        let bs = blockize(&d).unwrap();
        let s = d.lookup("top.y").unwrap();
        assert!(dataflow_analysis(&d, bs.find_driven_block(s).unwrap(), s).is_err());
    }
}
