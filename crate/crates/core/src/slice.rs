//! Backward slicing over (block, cycle) pairs.
//!
//! Starting from a mismatching signal at a cycle, each traced signal is
//! attributed to its driving block. Combinational blocks are analyzed at the
//! same cycle; clocked blocks look one cycle back and either follow their
//! inputs (the assignment executed) or the register itself (it held).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use serde_json::json;

use crate::blocks::{BlockSet, CodeBlock};
use crate::coverage::{is_assignment_covered, CoverageError, CoverageSource};
use crate::dataflow::{DataflowCache, DataflowError};
use crate::hdl::elab::{DesignHierarchy, SignalId};
use crate::wave::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathNode {
    pub block: usize,
    pub cycle: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrivenSet {
    pub signals: BTreeSet<SignalId>,
    pub cycle: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceLimits {
    pub max_nodes: usize,
}

impl Default for SliceLimits {
    fn default() -> Self {
        SliceLimits { max_nodes: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SliceError {
    #[error("signal {0} has no driving block")]
    Undriven(String),
    #[error("cycle {cycle} outside waveform of {count} cycles")]
    CycleOutOfRange { cycle: i64, count: usize },
    #[error("combinational loop through blocks {}", blocks.join(", "))]
    CombinationalLoop { blocks: Vec<String> },
    #[error("slice exceeded {nodes} nodes")]
    LimitExceeded { nodes: usize },
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecPath {
    pub root: Option<PathNode>,
    pub nodes: BTreeSet<PathNode>,
    /// (from, to): `from` drives `to`.
    pub edges: BTreeSet<(PathNode, PathNode)>,
    /// For each node, the driving input signals that have a source node.
    pub driven: BTreeMap<PathNode, BTreeMap<SignalId, PathNode>>,
    /// Output signals of each node that the slice traced through it.
    pub traced: BTreeMap<PathNode, BTreeSet<SignalId>>,
    /// Inputs that reached a primary input or an undriven net.
    pub undriven: BTreeSet<(SignalId, i64)>,
}

impl ExecPath {
    pub fn blocks(&self) -> BTreeSet<usize> {
        self.nodes.iter().map(|n| n.block).collect()
    }

    pub fn contains(&self, n: PathNode) -> bool {
        self.nodes.contains(&n)
    }

    /// Driven inputs of `n` as (signal, source) in signal-name order.
    pub fn driven_of(&self, design: &DesignHierarchy, n: PathNode) -> Vec<(SignalId, PathNode)> {
        let mut v: Vec<(SignalId, PathNode)> = self
            .driven
            .get(&n)
            .map(|m| m.iter().map(|(s, p)| (*s, *p)).collect())
            .unwrap_or_default();
        v.sort_by(|a, b| design.name(a.0).cmp(design.name(b.0)));
        v
    }

    /// Nodes ordered latest cycle first, then by block order.
    pub fn ordered_nodes(&self) -> Vec<PathNode> {
        let mut v: Vec<PathNode> = self.nodes.iter().copied().collect();
        v.sort_by(|a, b| b.cycle.cmp(&a.cycle).then(a.block.cmp(&b.block)));
        v
    }

    pub fn to_json(&self, blocks: &BlockSet) -> serde_json::Value {
        let order = self.ordered_nodes();
        let pos: HashMap<PathNode, usize> = order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut edges: Vec<[usize; 2]> = self.edges.iter().map(|(a, b)| [pos[a], pos[b]]).collect();
        edges.sort();
        json!({
            "root": self.root.map(|r| pos[&r]),
            "nodes": order
                .iter()
                .map(|n| json!({"block": blocks.blocks[n.block].id, "cycle": n.cycle}))
                .collect::<Vec<_>>(),
            "edges": edges,
        })
    }

    pub fn to_dot(&self, blocks: &BlockSet) -> String {
        let order = self.ordered_nodes();
        let pos: HashMap<PathNode, usize> = order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut s = String::from("digraph exec_path {\n  rankdir=BT;\n");
        for (i, n) in order.iter().enumerate() {
            let b = &blocks.blocks[n.block];
            let shape = if b.is_sequential() { "box" } else { "ellipse" };
            let _ = writeln!(s, "  n{i} [label=\"{}@{}\", shape={shape}];", b.id.replace('"', "\\\""), n.cycle);
        }
        let mut edges: Vec<(usize, usize)> = self.edges.iter().map(|(a, b)| (pos[a], pos[b])).collect();
        edges.sort();
        for (a, b) in edges {
            let _ = writeln!(s, "  n{a} -> n{b};");
        }
        s.push_str("}\n");
        s
    }
}

fn map_dataflow(e: DataflowError) -> SliceError {
    match e {
        DataflowError::CombinationalLoop { signals } => SliceError::CombinationalLoop { blocks: signals },
    }
}

/// Drivers of `s` as computed inside block `b` at cycle `t`.
pub fn intra_block_analysis(
    design: &DesignHierarchy,
    b: &CodeBlock,
    s: SignalId,
    t: i64,
    w: &Waveform,
    src: &CoverageSource,
    cache: &mut DataflowCache,
) -> Result<DrivenSet, SliceError> {
    if !b.is_sequential() {
        let signals = cache.deps(design, b, s).map_err(map_dataflow)?;
        return Ok(DrivenSet { signals, cycle: t });
    }
    let prev = t - 1;
    // Before the first edge there is nothing to replay; the register holds its
    // initial value and the caller discards negative cycles anyway.
    if prev >= 0 && is_assignment_covered(design, b, s, prev, w, src)? {
        let signals = cache.deps(design, b, s).map_err(map_dataflow)?;
        Ok(DrivenSet { signals, cycle: prev })
    } else {
        Ok(DrivenSet {
            signals: BTreeSet::from([s]),
            cycle: prev,
        })
    }
}

pub fn build_exec_path(
    design: &DesignHierarchy,
    blocks: &BlockSet,
    sig: SignalId,
    t: i64,
    w: &Waveform,
    src: &CoverageSource,
    limits: SliceLimits,
) -> Result<ExecPath, SliceError> {
    if t < 0 || t as usize >= w.cycle_count() {
        return Err(SliceError::CycleOutOfRange {
            cycle: t,
            count: w.cycle_count(),
        });
    }
    let root_block = blocks
        .find_driven_block(sig)
        .ok_or_else(|| SliceError::Undriven(design.name(sig).to_string()))?;
    let root = PathNode {
        block: root_block.index,
        cycle: t,
    };
    let mut path = ExecPath {
        root: Some(root),
        ..Default::default()
    };
    path.nodes.insert(root);
    let mut cache = DataflowCache::default();
    let mut queue = VecDeque::from([(sig, t)]);
    let mut visited: HashSet<(SignalId, i64)> = HashSet::new();
    // same-cycle dependencies between traced signals, for loop detection
    let mut comb: HashMap<(SignalId, i64), Vec<SignalId>> = HashMap::new();

    while let Some((s, tc)) = queue.pop_front() {
        if tc < 0 || !visited.insert((s, tc)) {
            continue;
        }
        let Some(b) = blocks.find_driven_block(s) else {
            log::debug!("slice reached undriven signal {}@{tc}", design.name(s));
            path.undriven.insert((s, tc));
            continue;
        };
        let node = PathNode { block: b.index, cycle: tc };
        path.traced.entry(node).or_default().insert(s);
        let driven = intra_block_analysis(design, b, s, tc, w, src, &mut cache)?;
        let tp = driven.cycle;
        if tp == tc {
            comb.insert((s, tc), driven.signals.iter().copied().collect());
        }
        if tp < 0 {
            continue;
        }
        for si in driven.signals {
            let Some(bp) = blocks.find_driven_block(si) else {
                log::debug!("slice reached undriven signal {}@{tp}", design.name(si));
                path.undriven.insert((si, tp));
                continue;
            };
            let from = PathNode { block: bp.index, cycle: tp };
            path.nodes.insert(from);
            if path.nodes.len() > limits.max_nodes {
                return Err(SliceError::LimitExceeded { nodes: limits.max_nodes });
            }
            if from != node {
                path.edges.insert((from, node));
            }
            path.driven.entry(node).or_default().insert(si, from);
            queue.push_back((si, tp));
        }
    }

    if let Some(cycle) = find_cycle(&comb) {
        let mut ids: Vec<String> = cycle
            .iter()
            .filter_map(|s| blocks.find_driven_block(*s).map(|b| b.id.clone()))
            .collect();
        ids.dedup();
        return Err(SliceError::CombinationalLoop { blocks: ids });
    }
    Ok(path)
}

/// Returns the signals on one cycle of the same-cycle dependency graph.
fn find_cycle(g: &HashMap<(SignalId, i64), Vec<SignalId>>) -> Option<Vec<SignalId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut mark: HashMap<(SignalId, i64), Mark> = HashMap::new();
    let mut keys: Vec<&(SignalId, i64)> = g.keys().collect();
    keys.sort();
    for &start in keys {
        if mark.contains_key(&start) {
            continue;
        }
        // iterative DFS with an explicit path stack
        let mut stack: Vec<((SignalId, i64), usize)> = vec![(start, 0)];
        mark.insert(start, Mark::Active);
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            let succ = g.get(&v).map(|x| x.as_slice()).unwrap_or(&[]);
            if *i < succ.len() {
                let n = (succ[*i], v.1);
                *i += 1;
                match mark.get(&n) {
                    Some(Mark::Active) => {
                        let from = stack.iter().position(|(x, _)| *x == n).unwrap();
                        return Some(stack[from..].iter().map(|(x, _)| x.0).collect());
                    }
                    Some(Mark::Done) => {}
                    None => {
                        if g.contains_key(&n) {
                            mark.insert(n, Mark::Active);
                            stack.push((n, 0));
                        }
                    }
                }
            } else {
                mark.insert(v, Mark::Done);
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::blockize;
    use crate::hdl::{elaborate, parse_sources, SourceUnit};

    fn setup(src: &str, vcd: &str) -> (DesignHierarchy, BlockSet, Waveform) {
        let d = elaborate(&parse_sources(&[SourceUnit::new("t.sv", src)]).unwrap(), "top").unwrap();
        let bs = blockize(&d).unwrap();
        let w = Waveform::parse(vcd, "top.clk").unwrap();
        (d, bs, w)
    }

    fn clocked_vcd(n: usize) -> String {
        let mut s = String::from("$scope module top $end\n$var wire 1 ! clk $end\n$var wire 1 \" a $end\n$upscope $end\n$enddefinitions $end\n#0\n0!\n1\"\n");
        for k in 0..n {
            s.push_str(&format!("#{}\n1!\n#{}\n0!\n", 10 * (k + 1), 10 * (k + 1) + 5));
        }
        s
    }

    const CHAIN: &str = "module top(input logic clk, input logic a, output logic y);\n  logic r;\n  logic c;\n  assign c = ~a;\n  always_ff @(posedge clk) r <= c;\n  assign y = r;\nendmodule\n";

    #[test]
    fn chain_steps_back_once() {
        let (d, bs, w) = setup(CHAIN, &clocked_vcd(8));
        let y = d.lookup("top.y").unwrap();
        let p = build_exec_path(&d, &bs, y, 5, &w, &CoverageSource::Replay, SliceLimits::default()).unwrap();
        let cycles: Vec<i64> = p.ordered_nodes().iter().map(|n| n.cycle).collect();
        // y's assign, the register, then c's assign a cycle earlier; a is a
        // primary input with no block
        assert_eq!(cycles, vec![5, 5, 4]);
        assert_eq!(p.undriven.len(), 1);
        for (f, t) in &p.edges {
            let step = t.cycle - f.cycle;
            assert_eq!(step == 1, bs.blocks[t.block].is_sequential());
        }
    }

    #[test]
    fn root_at_cycle_zero_register() {
        let (d, bs, w) = setup(CHAIN, &clocked_vcd(3));
        let r = d.lookup("top.r").unwrap();
        let p = build_exec_path(&d, &bs, r, 0, &w, &CoverageSource::Replay, SliceLimits::default()).unwrap();
        assert_eq!(p.nodes.len(), 1);
        assert!(p.edges.is_empty());
    }

    #[test]
    fn out_of_range() {
        let (d, bs, w) = setup(CHAIN, &clocked_vcd(3));
        let y = d.lookup("top.y").unwrap();
        let e = build_exec_path(&d, &bs, y, 3, &w, &CoverageSource::Replay, SliceLimits::default());
        assert!(matches!(e, Err(SliceError::CycleOutOfRange { cycle: 3, count: 3 })));
    }

    #[test]
    fn comb_loop_detected() {
        let src = "module top(input logic clk, input logic a, output logic y);\n  logic z;\n  always_comb z = y | a;\n  always_comb y = z;\nendmodule\n";
        let (d, bs, w) = setup(src, &clocked_vcd(2));
        let y = d.lookup("top.y").unwrap();
        let e = build_exec_path(&d, &bs, y, 1, &w, &CoverageSource::Replay, SliceLimits::default());
        assert!(matches!(e, Err(SliceError::CombinationalLoop { .. })), "{e:?}");
    }

    #[test]
    fn limit() {
        let (d, bs, w) = setup(CHAIN, &clocked_vcd(8));
        let y = d.lookup("top.y").unwrap();
        let e = build_exec_path(&d, &bs, y, 5, &w, &CoverageSource::Replay, SliceLimits { max_nodes: 2 });
        assert!(matches!(e, Err(SliceError::LimitExceeded { nodes: 2 })));
    }
}
