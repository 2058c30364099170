//! Single-site source mutations for building bug benchmarks.
//!
//! Sites are collected from the syntax tree of assign and always statements
//! only, so every mutated line belongs to a code block. A mutation is a byte
//! range replacement and can be reverted exactly.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hdl::ast::{BinaryOp, DesignAst, Expr, ExprKind, Literal, ModuleDecl, Span, Stmt};
use crate::hdl::parser::parse_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MutationRule {
    BinaryOpSwap,
    UnaryNegateCondition,
    SignalReplace,
    ConstantPerturb,
    AssignmentDelete,
}

impl MutationRule {
    pub const ALL: [MutationRule; 5] = [
        MutationRule::BinaryOpSwap,
        MutationRule::UnaryNegateCondition,
        MutationRule::SignalReplace,
        MutationRule::ConstantPerturb,
        MutationRule::AssignmentDelete,
    ];

    pub fn parse(s: &str) -> Option<MutationRule> {
        let k: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        MutationRule::ALL
            .into_iter()
            .find(|r| format!("{r:?}").to_ascii_lowercase() == k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub rule: MutationRule,
    pub file: String,
    pub module: String,
    pub line: u32,
    pub end_line: u32,
    pub col: u32,
    /// Byte range of `original` in the unmutated file.
    pub start: usize,
    pub end: usize,
    pub original: String,
    pub mutated: String,
    pub seed: u64,
}

impl Mutation {
    pub fn apply(&self, text: &str) -> String {
        let mut s = String::with_capacity(text.len() + self.mutated.len());
        s.push_str(&text[..self.start]);
        s.push_str(&self.mutated);
        s.push_str(&text[self.end..]);
        s
    }

    pub fn revert(&self, mutated_text: &str) -> String {
        let mut s = String::with_capacity(mutated_text.len() + self.original.len());
        s.push_str(&mutated_text[..self.start]);
        s.push_str(&self.original);
        s.push_str(&mutated_text[self.start + self.mutated.len()..]);
        s
    }

    pub fn ground_truth_lines(&self) -> Vec<u32> {
        (self.line..=self.end_line).collect()
    }

    /// Applies the mutation to the matching file of a source list.
    pub fn apply_to_sources(&self, ast: &DesignAst) -> Vec<crate::hdl::SourceUnit> {
        ast.sources
            .iter()
            .map(|s| {
                if s.path == self.file {
                    crate::hdl::SourceUnit::new(s.path.clone(), self.apply(&s.text))
                } else {
                    s.clone()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MutateError {
    #[error("no applicable site for {0:?}")]
    NoApplicableSite(MutationRule),
}

/// A candidate edit before a seed picks one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub file: String,
    pub module: String,
    pub span: Span,
    pub original: String,
    pub mutated: String,
}

fn swap(op: BinaryOp) -> Option<BinaryOp> {
    use BinaryOp::*;
    Some(match op {
        Add => Sub,
        Sub => Add,
        And => Or,
        Or => And,
        Xor => And,
        Xnor => Xor,
        LogAnd => LogOr,
        LogOr => LogAnd,
        Eq => Ne,
        Ne => Eq,
        Lt => Ge,
        Ge => Lt,
        Gt => Le,
        Le => Gt,
        Shl => Shr,
        Shr => Shl,
        AShr => Shr,
        _ => return None,
    })
}

fn visit_expr<'a>(e: &'a Expr, f: &mut impl FnMut(&'a Expr)) {
    f(e);
    match &e.kind {
        ExprKind::Ident(_) | ExprKind::Literal(_) => {}
        ExprKind::Index { index, .. } => visit_expr(index, f),
        ExprKind::Range { msb, lsb, .. } => {
            visit_expr(msb, f);
            visit_expr(lsb, f);
        }
        ExprKind::Unary { arg, .. } => visit_expr(arg, f),
        ExprKind::Binary { lhs, rhs, .. } => {
            visit_expr(lhs, f);
            visit_expr(rhs, f);
        }
        ExprKind::Ternary { cond, then_, else_ } => {
            visit_expr(cond, f);
            visit_expr(then_, f);
            visit_expr(else_, f);
        }
        ExprKind::Concat(items) => items.iter().for_each(|i| visit_expr(i, f)),
        ExprKind::Replicate { count, items } => {
            visit_expr(count, f);
            items.iter().for_each(|i| visit_expr(i, f));
        }
    }
}

/// Expressions read by a statement tree, tagged with whether they are guard
/// conditions. Case labels are left out.
fn read_exprs<'a>(st: &'a Stmt, out: &mut Vec<(&'a Expr, bool)>) {
    st.visit(&mut |s| match s {
        Stmt::If { cond, .. } => out.push((cond, true)),
        Stmt::Case { subject, .. } => out.push((subject, false)),
        Stmt::Assign { rhs, .. } => out.push((rhs, false)),
        _ => {}
    });
}

fn range_text(m: &ModuleDecl, text: &str, name: &str) -> Option<String> {
    let r = m
        .ports
        .iter()
        .find(|p| p.name == name)
        .map(|p| &p.range)
        .or_else(|| m.nets.iter().find(|n| n.name == name).map(|n| &n.range))?;
    Some(match r {
        None => String::new(),
        Some(r) => format!("{}:{}", &text[r.msb.span.start..r.msb.span.end], &text[r.lsb.span.start..r.lsb.span.end]),
    })
}

fn literal_perturb(text: &str) -> Option<String> {
    let Literal::Value { value, sized } = parse_number(text)? else {
        return None;
    };
    let v = value.to_u64()?;
    let w = value.width();
    let flipped = v ^ 1;
    Some(if sized { format!("{w}'d{flipped}") } else { format!("{flipped}") })
}

/// Whether every path through `st` assigns `name`, not counting the
/// assignment at `skip`.
fn always_assigns(st: &Stmt, name: &str, skip: Span) -> bool {
    match st {
        Stmt::Block(items) => items.iter().any(|s| always_assigns(s, name, skip)),
        Stmt::If { then_, else_, .. } => {
            always_assigns(then_, name, skip) && else_.as_ref().is_some_and(|e| always_assigns(e, name, skip))
        }
        Stmt::Case { items, .. } => {
            items.iter().any(|i| i.labels.is_empty()) && items.iter().all(|i| always_assigns(&i.body, name, skip))
        }
        Stmt::Assign { lhs, span, .. } => {
            *span != skip && matches!(&lhs.kind, ExprKind::Ident(n) if n == name)
        }
        Stmt::Null => false,
    }
}

/// All sites for `rule`, in source order, skipping modules in `exclude`.
pub fn applicable_sites(ast: &DesignAst, rule: MutationRule, exclude: &[String]) -> Vec<Site> {
    let mut sites = Vec::new();
    for m in &ast.modules {
        if exclude.contains(&m.name) {
            continue;
        }
        let Some(src) = ast.sources.iter().find(|s| s.path == m.file) else {
            continue;
        };
        let text = src.text.as_str();
        let site = |span: Span, mutated: String| Site {
            file: m.file.clone(),
            module: m.name.clone(),
            span,
            original: text[span.start..span.end].to_string(),
            mutated,
        };
        for item in &m.items {
            let mut exprs = Vec::new();
            read_exprs(&item.body, &mut exprs);
            match rule {
                MutationRule::BinaryOpSwap => {
                    for (e, _) in &exprs {
                        visit_expr(e, &mut |x| {
                            if let ExprKind::Binary { op, op_span, .. } = &x.kind {
                                if let Some(n) = swap(*op) {
                                    sites.push(site(*op_span, n.symbol().to_string()));
                                }
                            }
                        });
                    }
                }
                MutationRule::UnaryNegateCondition => {
                    for (e, is_guard) in &exprs {
                        if *is_guard {
                            sites.push(site(e.span, format!("!({})", &text[e.span.start..e.span.end])));
                        }
                        visit_expr(e, &mut |x| {
                            if let ExprKind::Ternary { cond, .. } = &x.kind {
                                sites.push(site(cond.span, format!("!({})", &text[cond.span.start..cond.span.end])));
                            }
                        });
                    }
                }
                MutationRule::SignalReplace => {
                    // candidate replacements: same declared range, not written here
                    let mut by_range: BTreeMap<String, Vec<&str>> = BTreeMap::new();
                    for n in m.ports.iter().map(|p| p.name.as_str()).chain(m.nets.iter().map(|n| n.name.as_str())) {
                        if item.lhs_signals.contains(n) {
                            continue;
                        }
                        if let Some(r) = range_text(m, text, n) {
                            by_range.entry(r).or_default().push(n);
                        }
                    }
                    for (e, _) in &exprs {
                        visit_expr(e, &mut |x| {
                            if let ExprKind::Ident(name) = &x.kind {
                                let Some(r) = range_text(m, text, name) else {
                                    return;
                                };
                                for c in by_range.get(&r).into_iter().flatten() {
                                    if c != name {
                                        sites.push(site(x.span, c.to_string()));
                                    }
                                }
                            }
                        });
                    }
                }
                MutationRule::ConstantPerturb => {
                    for (e, _) in &exprs {
                        visit_expr(e, &mut |x| {
                            if let ExprKind::Literal(_) = &x.kind {
                                if let Some(n) = literal_perturb(&text[x.span.start..x.span.end]) {
                                    sites.push(site(x.span, n));
                                }
                            }
                        });
                    }
                }
                MutationRule::AssignmentDelete => {
                    if item.kind != crate::hdl::StatementKind::AlwaysBlock {
                        continue;
                    }
                    // only targets assigned more than once, so the block
                    // still drives every signal it drove before
                    let mut count: BTreeMap<String, usize> = BTreeMap::new();
                    let mut assigns = Vec::new();
                    item.body.visit(&mut |s| {
                        if let Stmt::Assign { lhs, span, .. } = s {
                            let mut w = Default::default();
                            let mut r = Default::default();
                            lhs.lvalue_idents(&mut w, &mut r);
                            for n in &w {
                                *count.entry(n.clone()).or_default() += 1;
                            }
                            assigns.push((w, *span));
                        }
                    });
                    for (w, span) in assigns {
                        // a combinational block must still assign the target
                        // on every path, or the deletion infers a latch
                        let still_driven = item.clocked || w.iter().all(|n| always_assigns(&item.body, n, span));
                        if still_driven && w.iter().all(|n| count[n] > 1) {
                            sites.push(site(span, ";".to_string()));
                        }
                    }
                }
            }
        }
    }
    sites.sort_by(|a, b| (&a.file, a.span.start, &a.mutated).cmp(&(&b.file, b.span.start, &b.mutated)));
    sites.dedup();
    sites
}

/// Picks one applicable site with a seeded generator.
pub fn inject_mutation(ast: &DesignAst, rule: MutationRule, seed: u64, exclude: &[String]) -> Result<Mutation, MutateError> {
    let sites = applicable_sites(ast, rule, exclude);
    if sites.is_empty() {
        return Err(MutateError::NoApplicableSite(rule));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = &sites[rng.gen_range(0..sites.len())];
    Ok(Mutation {
        rule,
        file: s.file.clone(),
        module: s.module.clone(),
        line: s.span.line,
        end_line: s.span.end_line,
        col: s.span.col,
        start: s.span.start,
        end: s.span.end,
        original: s.original.clone(),
        mutated: s.mutated.clone(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdl::{parse_sources, SourceUnit};

    const SRC: &str = "module top(input logic clk, input logic [3:0] a, input logic [3:0] b, output logic [3:0] y, output logic [3:0] q);\n  assign y = a + b;\n  always_ff @(posedge clk) begin\n    if (a == 4'd3) q <= b;\n    else q <= a;\n  end\nendmodule\n";

    fn ast() -> DesignAst {
        parse_sources(&[SourceUnit::new("t.sv", SRC)]).unwrap()
    }

    #[test]
    fn add_becomes_sub() {
        let a = ast();
        let sites = applicable_sites(&a, MutationRule::BinaryOpSwap, &[]);
        let add = sites.iter().find(|s| s.original == "+").unwrap();
        assert_eq!(add.mutated, "-");
        assert_eq!(add.span.line, 2);
    }

    #[test]
    fn deterministic_and_reversible() {
        let a = ast();
        for rule in MutationRule::ALL {
            for seed in 0..10 {
                let m = inject_mutation(&a, rule, seed, &[]).unwrap();
                assert_eq!(m, inject_mutation(&a, rule, seed, &[]).unwrap());
                let mutated = m.apply(SRC);
                assert_ne!(mutated, SRC);
                assert_eq!(m.revert(&mutated), SRC);
                parse_sources(&[SourceUnit::new("t.sv", mutated)]).unwrap();
            }
        }
    }

    #[test]
    fn negate_and_perturb() {
        let a = ast();
        let n = applicable_sites(&a, MutationRule::UnaryNegateCondition, &[]);
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].mutated, "!(a == 4'd3)");
        let c = applicable_sites(&a, MutationRule::ConstantPerturb, &[]);
        assert_eq!(c[0].mutated, "4'd2");
        let d = applicable_sites(&a, MutationRule::AssignmentDelete, &[]);
        assert_eq!(d.len(), 2);
        assert!(applicable_sites(&a, MutationRule::BinaryOpSwap, &["top".into()]).is_empty());
        assert!(matches!(
            inject_mutation(&a, MutationRule::BinaryOpSwap, 0, &["top".into()]),
            Err(MutateError::NoApplicableSite(MutationRule::BinaryOpSwap))
        ));
    }

    #[test]
    fn rule_names() {
        assert_eq!(MutationRule::parse("binary-op-swap"), Some(MutationRule::BinaryOpSwap));
        assert_eq!(MutationRule::parse("AssignmentDelete"), Some(MutationRule::AssignmentDelete));
        assert_eq!(MutationRule::parse("nope"), None);
    }
}
