//! Partitioning of an elaborated design into line-disjoint code blocks.
//!
//! Four kinds exist: one block per connected input or output port, one per
//! always block, and assign blocks formed by merging continuous assigns that
//! feed each other within one module instance.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::hdl::ast::{Direction, StatementKind};
use crate::hdl::elab::{Binding, DesignHierarchy, SignalId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum BlockKind {
    ModInputBlock,
    ModOutputBlock,
    AssignBlock,
    AlwaysBlock,
}

impl BlockKind {
    pub fn short(self) -> &'static str {
        match self {
            BlockKind::ModInputBlock => "in",
            BlockKind::ModOutputBlock => "out",
            BlockKind::AssignBlock => "assign",
            BlockKind::AlwaysBlock => "always",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlockError {
    #[error("signal `{signal}` has more than one driver: {}", blocks.join(", "))]
    MultiDriver { signal: String, blocks: Vec<String> },
    #[error("signal `{0}` has no driver")]
    UndrivenSignal(String),
    #[error("{file}:{line}: always block assigns no signal")]
    EmptyBlock { file: String, line: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBlock {
    /// Position in `BlockSet::blocks`.
    pub index: usize,
    /// Stable name derived from file, first line, kind and instance.
    pub id: String,
    pub kind: BlockKind,
    /// Instance whose source text holds the lines; for port blocks this is
    /// the parent that writes the connection.
    pub instance: usize,
    pub instance_path: String,
    pub file: String,
    pub lines: BTreeSet<u32>,
    pub v_in: BTreeSet<SignalId>,
    pub v_out: BTreeSet<SignalId>,
    pub clocked: bool,
    /// Edge events of a clocked block. Not part of `v_in`.
    pub triggers: BTreeSet<SignalId>,
    /// Indices into `DesignHierarchy::statements`.
    pub statements: Vec<usize>,
    /// Index into `DesignHierarchy::connections` for port blocks.
    pub connection: Option<usize>,
}

impl CodeBlock {
    pub fn first_line(&self) -> u32 {
        self.lines.first().copied().unwrap_or(0)
    }

    pub fn is_sequential(&self) -> bool {
        self.clocked
    }

    /// Contiguous runs of `lines` as inclusive ranges.
    pub fn line_ranges(&self) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> = Vec::new();
        for &l in &self.lines {
            match out.last_mut() {
                Some(r) if r.1 + 1 == l => r.1 = l,
                _ => out.push((l, l)),
            }
        }
        out
    }

    pub fn contains_line(&self, file: &str, line: u32) -> bool {
        self.file == file && self.lines.contains(&line)
    }
}

#[derive(Debug, Clone)]
pub struct BlockSet {
    pub blocks: Vec<CodeBlock>,
    pub driver_index: HashMap<SignalId, usize>,
    by_id: HashMap<String, usize>,
}

impl BlockSet {
    pub fn find_driven_block(&self, s: SignalId) -> Option<&CodeBlock> {
        self.driver_index.get(&s).map(|i| &self.blocks[*i])
    }

    pub fn driver(&self, design: &DesignHierarchy, s: SignalId) -> Result<&CodeBlock, BlockError> {
        self.find_driven_block(s)
            .ok_or_else(|| BlockError::UndrivenSignal(design.name(s).to_string()))
    }

    pub fn by_id(&self, id: &str) -> Option<&CodeBlock> {
        self.by_id.get(id).map(|i| &self.blocks[*i])
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Source text of a block's lines, prefixed with a location header.
    pub fn source_text(&self, design: &DesignHierarchy, b: &CodeBlock) -> String {
        let mut out = String::new();
        let Some(src) = design.source(&b.file) else {
            return out;
        };
        for (a, z) in b.line_ranges() {
            out.push_str(&format!("// {}:{}-{} ({})\n", b.file, a, z, b.instance_path));
            for l in a..=z {
                out.push_str(&format!("{l:>5} | {}\n", src.line(l)));
            }
        }
        out
    }

    /// Line counts of every block.
    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.lines.len()).collect()
    }

    pub fn to_json(&self, design: &DesignHierarchy) -> serde_json::Value {
        let names = |s: &BTreeSet<SignalId>| s.iter().map(|i| design.name(*i).to_string()).collect::<Vec<_>>();
        serde_json::Value::Array(
            self.blocks
                .iter()
                .map(|b| {
                    serde_json::json!({
                        "id": b.id,
                        "kind": b.kind,
                        "instance": b.instance_path,
                        "file": b.file,
                        "lines": b.line_ranges(),
                        "clocked": b.clocked,
                        "v_in": names(&b.v_in),
                        "v_out": names(&b.v_out),
                    })
                })
                .collect(),
        )
    }
}

/// A single continuous assign before merging.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignUnit {
    pub statement: usize,
    pub lines: BTreeSet<u32>,
    pub v_in: BTreeSet<SignalId>,
    pub v_out: BTreeSet<SignalId>,
}

/// Merges assigns until no block's outputs meet another block's inputs.
/// Each result carries the smallest statement index of its members.
pub fn merge_assign_blocks(units: &[AssignUnit]) -> Vec<AssignUnit> {
    merge_with_members(units).into_iter().map(|(_, u)| u).collect()
}

fn merge_with_members(units: &[AssignUnit]) -> Vec<(Vec<usize>, AssignUnit)> {
    let mut alive: Vec<Option<AssignUnit>> = units.iter().cloned().map(Some).collect();
    let mut members: Vec<Vec<usize>> = (0..units.len()).map(|i| vec![units[i].statement]).collect();
    let mut readers: HashMap<SignalId, BTreeSet<usize>> = HashMap::new();
    let mut writers: HashMap<SignalId, BTreeSet<usize>> = HashMap::new();
    for (i, u) in units.iter().enumerate() {
        u.v_in.iter().for_each(|s| {
            readers.entry(*s).or_default().insert(i);
        });
        u.v_out.iter().for_each(|s| {
            writers.entry(*s).or_default().insert(i);
        });
    }
    let mut work: Vec<usize> = (0..units.len()).rev().collect();
    while let Some(i) = work.pop() {
        let Some(cur) = alive[i].as_ref() else { continue };
        let partner = cur
            .v_out
            .iter()
            .flat_map(|s| readers.get(s).into_iter().flatten())
            .chain(cur.v_in.iter().flat_map(|s| writers.get(s).into_iter().flatten()))
            .copied()
            .find(|j| *j != i && alive[*j].is_some());
        let Some(j) = partner else { continue };
        let other = alive[j].take().unwrap();
        for s in &other.v_in {
            let r = readers.get_mut(s).unwrap();
            r.remove(&j);
            r.insert(i);
        }
        for s in &other.v_out {
            let w = writers.get_mut(s).unwrap();
            w.remove(&j);
            w.insert(i);
        }
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        let cur = alive[i].as_mut().unwrap();
        cur.lines.extend(other.lines);
        cur.v_in.extend(other.v_in);
        cur.v_out.extend(other.v_out);
        work.push(i);
    }
    let mut out: Vec<(Vec<usize>, AssignUnit)> = alive
        .into_iter()
        .zip(members)
        .filter_map(|(a, mut m)| {
            m.sort_unstable();
            a.map(|mut u| {
                u.statement = m[0];
                (m, u)
            })
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn blockize(design: &DesignHierarchy) -> Result<BlockSet, BlockError> {
    let mut blocks: Vec<CodeBlock> = Vec::new();
    let inst_path = |i: usize| design.instances[i].path.clone();

    for (ci, c) in design.connections.iter().enumerate() {
        let Some(binding) = &c.binding else { continue };
        let (kind, v_in, v_out) = match (c.direction, binding) {
            (Direction::Output, Binding::Output(lv)) => {
                let mut outs = BTreeSet::new();
                lv.targets(&mut outs);
                let mut ins = BTreeSet::from([c.port]);
                lv.index_reads(&mut ins);
                (BlockKind::ModOutputBlock, ins, outs)
            }
            (_, Binding::Input(e)) => (BlockKind::ModInputBlock, e.signal_set(), BTreeSet::from([c.port])),
            _ => unreachable!("output bindings are always lvalues"),
        };
        blocks.push(CodeBlock {
            index: 0,
            id: String::new(),
            kind,
            instance: c.parent,
            instance_path: inst_path(c.parent),
            file: c.file.clone(),
            lines: BTreeSet::from([c.line]),
            v_in,
            v_out,
            clocked: false,
            triggers: BTreeSet::new(),
            statements: Vec::new(),
            connection: Some(ci),
        });
    }

    let mut assigns: BTreeMap<usize, Vec<AssignUnit>> = BTreeMap::new();
    for (si, st) in design.statements.iter().enumerate() {
        let lines: BTreeSet<u32> = (st.line_span.0..=st.line_span.1).collect();
        match st.kind {
            StatementKind::ContinuousAssign => {
                let v_in = st.rhs.union(&st.cond).copied().collect();
                assigns.entry(st.instance).or_default().push(AssignUnit {
                    statement: si,
                    lines,
                    v_in,
                    v_out: st.lhs.clone(),
                });
            }
            StatementKind::AlwaysBlock => {
                if st.lhs.is_empty() {
                    return Err(BlockError::EmptyBlock {
                        file: st.file.clone(),
                        line: st.line_span.0,
                    });
                }
                let triggers: BTreeSet<SignalId> = if st.clocked {
                    st.triggers.iter().map(|t| t.1).collect()
                } else {
                    BTreeSet::new()
                };
                let v_in = st.rhs.union(&st.cond).filter(|s| !triggers.contains(s)).copied().collect();
                blocks.push(CodeBlock {
                    index: 0,
                    id: String::new(),
                    kind: BlockKind::AlwaysBlock,
                    instance: st.instance,
                    instance_path: inst_path(st.instance),
                    file: st.file.clone(),
                    lines,
                    v_in,
                    v_out: st.lhs.clone(),
                    clocked: st.clocked,
                    triggers,
                    statements: vec![si],
                    connection: None,
                });
            }
        }
    }
    for (inst, units) in assigns {
        for (stmts, m) in merge_with_members(&units) {
            blocks.push(CodeBlock {
                index: 0,
                id: String::new(),
                kind: BlockKind::AssignBlock,
                instance: inst,
                instance_path: inst_path(inst),
                file: design.statements[stmts[0]].file.clone(),
                lines: m.lines,
                v_in: m.v_in,
                v_out: m.v_out,
                clocked: false,
                triggers: BTreeSet::new(),
                statements: stmts,
                connection: None,
            });
        }
    }

    blocks.sort_by(|a, b| {
        (&a.instance_path, &a.file, a.first_line(), a.kind).cmp(&(&b.instance_path, &b.file, b.first_line(), b.kind))
    });
    let mut by_id = HashMap::new();
    for (i, b) in blocks.iter_mut().enumerate() {
        b.index = i;
        b.id = format!("{}:{}:{}@{}", b.file, b.first_line(), b.kind.short(), b.instance_path);
        by_id.insert(b.id.clone(), i);
    }

    let mut driver_index: HashMap<SignalId, usize> = HashMap::new();
    let mut conflicts: BTreeMap<SignalId, BTreeSet<usize>> = BTreeMap::new();
    for b in &blocks {
        for s in &b.v_out {
            if let Some(prev) = driver_index.insert(*s, b.index) {
                conflicts.entry(*s).or_default().extend([prev, b.index]);
            }
        }
    }
    if let Some((s, bs)) = conflicts.into_iter().next() {
        return Err(BlockError::MultiDriver {
            signal: design.name(s).to_string(),
            blocks: bs.into_iter().map(|i| blocks[i].id.clone()).collect(),
        });
    }
    Ok(BlockSet {
        blocks,
        driver_index,
        by_id,
    })
}
