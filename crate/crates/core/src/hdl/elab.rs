//! Hierarchy elaboration: instantiates modules from the top down, gives every
//! signal a dot-separated hierarchical name and resolves statement bodies to
//! signal ids with precomputed expression widths.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::ast::*;
use crate::logic::{Logic, LogicVec};

pub type SignalId = usize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ElabError {
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("recursive instantiation at `{0}`")]
    RecursiveInstantiation(String),
    #[error("unresolved identifier `{name}` in `{path}`")]
    UnresolvedIdentifier { path: String, name: String },
    #[error("`{path}` has no port named `{port}`")]
    UnknownPort { path: String, port: String },
    #[error("`{path}`: `{name}` is declared more than once")]
    DuplicateDeclaration { path: String, name: String },
    #[error("`{path}` line {line}: {what} must be a constant expression")]
    NonConstant { path: String, line: u32, what: String },
    #[error("`{path}` port `{port}`: {reason}")]
    InvalidConnection { path: String, port: String, reason: String },
    #[error("`{path}` line {line}: {reason}")]
    Invalid { path: String, line: u32, reason: String },
}

type EResult<T> = Result<T, ElabError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignalKind {
    Port(Direction),
    Net,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignalRef {
    pub hier_name: String,
    pub width: u32,
    /// Declared index of bit 0 (the `lsb` of `[msb:lsb]`).
    pub lsb: i64,
    pub instance: usize,
    pub local: String,
    pub kind: SignalKind,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    pub path: String,
    pub module: String,
    pub file: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Line of the instantiation in the parent, 0 for the top.
    pub line: u32,
    #[serde(skip)]
    pub params: BTreeMap<String, LogicVec>,
}

/// Expression with signal references resolved and its self-determined width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TExpr {
    pub kind: EExpr,
    pub width: u32,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EExpr {
    Sig(SignalId),
    Const(LogicVec),
    /// Unsized fill literal; takes the width of its context.
    Fill(Logic),
    /// Variable bit select; `lsb` is the declared offset to subtract.
    Bit { sig: SignalId, index: Box<TExpr>, lsb: i64 },
    /// Constant part select in storage offsets.
    Part { sig: SignalId, msb: u32, lsb: u32 },
    Unary { op: UnaryOp, arg: Box<TExpr> },
    Binary { op: BinaryOp, lhs: Box<TExpr>, rhs: Box<TExpr> },
    Ternary { cond: Box<TExpr>, then_: Box<TExpr>, else_: Box<TExpr> },
    Concat(Vec<TExpr>),
    Replicate { count: u32, items: Vec<TExpr> },
}

impl TExpr {
    pub fn signals(&self, out: &mut BTreeSet<SignalId>) {
        match &self.kind {
            EExpr::Sig(s) | EExpr::Part { sig: s, .. } => {
                out.insert(*s);
            }
            EExpr::Const(_) | EExpr::Fill(_) => {}
            EExpr::Bit { sig, index, .. } => {
                out.insert(*sig);
                index.signals(out);
            }
            EExpr::Unary { arg, .. } => arg.signals(out),
            EExpr::Binary { lhs, rhs, .. } => {
                lhs.signals(out);
                rhs.signals(out);
            }
            EExpr::Ternary { cond, then_, else_ } => {
                cond.signals(out);
                then_.signals(out);
                else_.signals(out);
            }
            EExpr::Concat(items) | EExpr::Replicate { items, .. } => items.iter().for_each(|e| e.signals(out)),
        }
    }

    pub fn signal_set(&self) -> BTreeSet<SignalId> {
        let mut s = BTreeSet::new();
        self.signals(&mut s);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LValue {
    Whole(SignalId),
    Bit { sig: SignalId, index: TExpr, lsb: i64 },
    Part { sig: SignalId, msb: u32, lsb: u32 },
    /// Most significant target first.
    Concat(Vec<LValue>),
}

impl LValue {
    pub fn width(&self, signals: &[SignalRef]) -> u32 {
        match self {
            LValue::Whole(s) => signals[*s].width,
            LValue::Bit { .. } => 1,
            LValue::Part { msb, lsb, .. } => msb - lsb + 1,
            LValue::Concat(items) => items.iter().map(|l| l.width(signals)).sum(),
        }
    }

    pub fn targets(&self, out: &mut BTreeSet<SignalId>) {
        match self {
            LValue::Whole(s) | LValue::Bit { sig: s, .. } | LValue::Part { sig: s, .. } => {
                out.insert(*s);
            }
            LValue::Concat(items) => items.iter().for_each(|l| l.targets(out)),
        }
    }

    /// Signals read while computing the target (select indices).
    pub fn index_reads(&self, out: &mut BTreeSet<SignalId>) {
        match self {
            LValue::Bit { index, .. } => index.signals(out),
            LValue::Concat(items) => items.iter().for_each(|l| l.index_reads(out)),
            _ => {}
        }
    }

    /// True when the target is a whole signal (no partial update).
    pub fn is_whole(&self) -> bool {
        matches!(self, LValue::Whole(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EStmt {
    Block(Vec<EStmt>),
    If {
        cond: TExpr,
        then_: Box<EStmt>,
        else_: Option<Box<EStmt>>,
        line: u32,
    },
    Case {
        kind: CaseKind,
        subject: TExpr,
        /// Items in match priority order; the default item (empty labels) is last.
        items: Vec<(Vec<TExpr>, EStmt)>,
        line: u32,
    },
    Assign {
        lhs: LValue,
        rhs: TExpr,
        blocking: bool,
        span: Span,
    },
    Null,
}

impl EStmt {
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a EStmt)) {
        f(self);
        match self {
            EStmt::Block(items) => items.iter().for_each(|s| s.visit(f)),
            EStmt::If { then_, else_, .. } => {
                then_.visit(f);
                if let Some(e) = else_ {
                    e.visit(f);
                }
            }
            EStmt::Case { items, .. } => items.iter().for_each(|(_, s)| s.visit(f)),
            EStmt::Assign { .. } | EStmt::Null => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElabStatement {
    pub instance: usize,
    pub kind: StatementKind,
    pub file: String,
    pub line_span: (u32, u32),
    pub clocked: bool,
    pub clock: Option<SignalId>,
    /// Every edge event, clock first.
    pub triggers: Vec<(Edge, SignalId)>,
    pub body: EStmt,
    pub lhs: BTreeSet<SignalId>,
    pub rhs: BTreeSet<SignalId>,
    pub cond: BTreeSet<SignalId>,
    /// The statement as parsed, with local names.
    pub node: StatementNode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    /// Parent expression feeding a child input.
    Input(TExpr),
    /// Parent target written by a child output.
    Output(LValue),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connection {
    pub parent: usize,
    pub child: usize,
    /// The child's port signal.
    pub port: SignalId,
    pub direction: Direction,
    /// `None` for an explicitly unconnected port.
    pub binding: Option<Binding>,
    pub file: String,
    pub line: u32,
}

impl Connection {
    pub fn parent_signals(&self) -> BTreeSet<SignalId> {
        let mut out = BTreeSet::new();
        match &self.binding {
            Some(Binding::Input(e)) => e.signals(&mut out),
            Some(Binding::Output(l)) => l.targets(&mut out),
            None => {}
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct DesignHierarchy {
    pub top: String,
    pub sources: Vec<SourceUnit>,
    pub instances: Vec<Instance>,
    pub signals: Vec<SignalRef>,
    pub statements: Vec<ElabStatement>,
    pub connections: Vec<Connection>,
    by_name: HashMap<String, SignalId>,
}

impl DesignHierarchy {
    pub fn lookup(&self, hier_name: &str) -> Option<SignalId> {
        self.by_name.get(hier_name).copied()
    }

    pub fn signal(&self, id: SignalId) -> &SignalRef {
        &self.signals[id]
    }

    pub fn name(&self, id: SignalId) -> &str {
        &self.signals[id].hier_name
    }

    pub fn source(&self, file: &str) -> Option<&SourceUnit> {
        self.sources.iter().find(|s| s.path == file)
    }

    /// Top-level input ports in declaration order.
    pub fn primary_inputs(&self) -> Vec<SignalId> {
        self.signals
            .iter()
            .enumerate()
            .filter(|(_, s)| s.instance == 0 && s.kind == SignalKind::Port(Direction::Input))
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn elaborate(ast: &DesignAst, top: &str) -> EResult<DesignHierarchy> {
    let module = ast.module(top).ok_or_else(|| ElabError::UnknownModule(top.to_string()))?;
    let mut e = Elaborator {
        ast,
        out: DesignHierarchy {
            top: top.to_string(),
            sources: ast.sources.clone(),
            instances: Vec::new(),
            signals: Vec::new(),
            statements: Vec::new(),
            connections: Vec::new(),
            by_name: HashMap::new(),
        },
    };
    let mut stack = vec![top.to_string()];
    e.instance(module, top.to_string(), &[], None, 0, &mut stack)?;
    Ok(e.out)
}

struct Scope {
    path: String,
    signals: HashMap<String, SignalId>,
    params: BTreeMap<String, LogicVec>,
}

struct Elaborator<'a> {
    ast: &'a DesignAst,
    out: DesignHierarchy,
}

impl<'a> Elaborator<'a> {
    fn instance(
        &mut self,
        m: &'a ModuleDecl,
        path: String,
        overrides: &[(String, LogicVec)],
        parent: Option<usize>,
        line: u32,
        stack: &mut Vec<String>,
    ) -> EResult<usize> {
        let mut params = BTreeMap::new();
        for p in &m.params {
            let v = literal_value(&p.value).ok_or_else(|| ElabError::NonConstant {
                path: path.clone(),
                line: p.line,
                what: format!("parameter `{}`", p.name),
            })?;
            if params.insert(p.name.clone(), v).is_some() {
                return Err(ElabError::DuplicateDeclaration {
                    path,
                    name: p.name.clone(),
                });
            }
        }
        for (name, v) in overrides {
            match m.params.iter().find(|p| &p.name == name) {
                Some(p) if !p.local => {
                    params.insert(name.clone(), v.clone());
                }
                Some(_) => {
                    return Err(ElabError::Invalid {
                        path,
                        line,
                        reason: format!("localparam `{name}` cannot be overridden"),
                    })
                }
                None => {
                    return Err(ElabError::UnresolvedIdentifier {
                        path,
                        name: name.clone(),
                    })
                }
            }
        }
        let id = self.out.instances.len();
        self.out.instances.push(Instance {
            path: path.clone(),
            module: m.name.clone(),
            file: m.file.clone(),
            parent,
            children: Vec::new(),
            line,
            params: params.clone(),
        });
        let mut scope = Scope {
            path: path.clone(),
            signals: HashMap::new(),
            params,
        };

        let decls = m
            .ports
            .iter()
            .map(|p| (&p.name, &p.range, SignalKind::Port(p.direction), p.line))
            .chain(m.nets.iter().map(|n| (&n.name, &n.range, SignalKind::Net, n.line)));
        for (name, range, kind, line) in decls {
            if scope.signals.contains_key(name) || scope.params.contains_key(name) {
                return Err(ElabError::DuplicateDeclaration {
                    path: path.clone(),
                    name: name.clone(),
                });
            }
            let (width, lsb) = match range {
                None => (1, 0),
                Some(r) => {
                    let msb = self.const_int(&r.msb, &scope, line, "range bound")?;
                    let lsb = self.const_int(&r.lsb, &scope, line, "range bound")?;
                    if msb < lsb {
                        return Err(ElabError::Invalid {
                            path: path.clone(),
                            line,
                            reason: format!("ascending range on `{name}` is not supported"),
                        });
                    }
                    ((msb - lsb + 1) as u32, lsb)
                }
            };
            let sid = self.out.signals.len();
            let hier_name = format!("{path}.{name}");
            self.out.signals.push(SignalRef {
                hier_name: hier_name.clone(),
                width,
                lsb,
                instance: id,
                local: name.clone(),
                kind,
                line,
            });
            self.out.by_name.insert(hier_name, sid);
            scope.signals.insert(name.clone(), sid);
        }

        for node in &m.items {
            let st = self.statement(node, &scope, id, &m.file)?;
            self.out.statements.push(st);
        }

        for inst in &m.instantiations {
            let child_path = format!("{path}.{}", inst.name);
            let child = self
                .ast
                .module(&inst.module)
                .ok_or_else(|| ElabError::UnknownModule(inst.module.clone()))?;
            if stack.contains(&inst.module) {
                return Err(ElabError::RecursiveInstantiation(child_path));
            }
            if self.out.instances[id].children.iter().any(|c| self.out.instances[*c].path == child_path)
                || scope.signals.contains_key(&inst.name)
            {
                return Err(ElabError::DuplicateDeclaration {
                    path: path.clone(),
                    name: inst.name.clone(),
                });
            }
            let mut ov = Vec::new();
            for (pname, pexpr) in &inst.params {
                let v = match &pexpr.kind {
                    ExprKind::Ident(n) => scope.params.get(n).cloned(),
                    _ => literal_value(pexpr),
                }
                .ok_or_else(|| ElabError::NonConstant {
                    path: path.clone(),
                    line: inst.line,
                    what: format!("override of `{pname}`"),
                })?;
                ov.push((pname.clone(), v));
            }
            stack.push(inst.module.clone());
            let cid = self.instance(child, child_path.clone(), &ov, Some(id), inst.line, stack)?;
            stack.pop();
            self.out.instances[id].children.push(cid);

            for conn in &inst.connections {
                let Some(port_decl) = child.ports.iter().find(|p| p.name == conn.port) else {
                    return Err(ElabError::UnknownPort {
                        path: child_path,
                        port: conn.port.clone(),
                    });
                };
                let port = self.out.by_name[&format!("{child_path}.{}", conn.port)];
                let binding = match &conn.expr {
                    None => None,
                    Some(e) => Some(match port_decl.direction {
                        Direction::Output => {
                            if !e.is_lvalue() {
                                return Err(ElabError::InvalidConnection {
                                    path: child_path,
                                    port: conn.port.clone(),
                                    reason: "output port must connect to an assignable expression".into(),
                                });
                            }
                            Binding::Output(self.lvalue(e, &scope)?)
                        }
                        _ => Binding::Input(self.expr(e, &scope)?),
                    }),
                };
                self.out.connections.push(Connection {
                    parent: id,
                    child: cid,
                    port,
                    direction: port_decl.direction,
                    binding,
                    file: m.file.clone(),
                    line: conn.line,
                });
            }
        }
        Ok(id)
    }

    fn statement(&self, node: &StatementNode, scope: &Scope, instance: usize, file: &str) -> EResult<ElabStatement> {
        let mut triggers = Vec::new();
        for (edge, name) in &node.sensitivity {
            triggers.push((*edge, self.resolve(name, scope)?));
        }
        let body = self.stmt(&node.body, scope)?;
        let ids = |names: &BTreeSet<String>| -> EResult<BTreeSet<SignalId>> {
            names.iter().map(|n| self.resolve(n, scope)).collect()
        };
        Ok(ElabStatement {
            instance,
            kind: node.kind,
            file: file.to_string(),
            line_span: node.line_span,
            clocked: node.clocked,
            clock: triggers.first().map(|t| t.1),
            triggers,
            body,
            lhs: ids(&node.lhs_signals)?,
            rhs: ids(&node.rhs_signals)?,
            cond: ids(&node.condition_signals)?,
            node: node.clone(),
        })
    }

    fn stmt(&self, s: &Stmt, scope: &Scope) -> EResult<EStmt> {
        Ok(match s {
            Stmt::Block(items) => EStmt::Block(items.iter().map(|i| self.stmt(i, scope)).collect::<EResult<_>>()?),
            Stmt::If { cond, then_, else_, span } => EStmt::If {
                cond: self.expr(cond, scope)?,
                then_: Box::new(self.stmt(then_, scope)?),
                else_: match else_ {
                    Some(e) => Some(Box::new(self.stmt(e, scope)?)),
                    None => None,
                },
                line: span.line,
            },
            Stmt::Case { kind, subject, items, span } => EStmt::Case {
                kind: *kind,
                subject: self.expr(subject, scope)?,
                items: items
                    .iter()
                    .map(|it| {
                        let labels = it.labels.iter().map(|l| self.expr(l, scope)).collect::<EResult<Vec<_>>>()?;
                        Ok((labels, self.stmt(&it.body, scope)?))
                    })
                    .collect::<EResult<_>>()?,
                line: span.line,
            },
            Stmt::Assign { lhs, rhs, blocking, span } => EStmt::Assign {
                lhs: self.lvalue(lhs, scope)?,
                rhs: self.expr(rhs, scope)?,
                blocking: *blocking,
                span: *span,
            },
            Stmt::Null => EStmt::Null,
        })
    }

    fn resolve(&self, name: &str, scope: &Scope) -> EResult<SignalId> {
        scope.signals.get(name).copied().ok_or_else(|| ElabError::UnresolvedIdentifier {
            path: scope.path.clone(),
            name: name.to_string(),
        })
    }

    fn const_int(&self, e: &Expr, scope: &Scope, line: u32, what: &str) -> EResult<i64> {
        const_eval(e, &scope.params).ok_or_else(|| ElabError::NonConstant {
            path: scope.path.clone(),
            line,
            what: what.to_string(),
        })
    }

    fn part_offsets(&self, sig: SignalId, msb: &Expr, lsb: &Expr, scope: &Scope, line: u32) -> EResult<(u32, u32)> {
        let s = &self.out.signals[sig];
        let m = self.const_int(msb, scope, line, "part-select bound")? - s.lsb;
        let l = self.const_int(lsb, scope, line, "part-select bound")? - s.lsb;
        if l < 0 || m < l || m >= s.width as i64 {
            return Err(ElabError::Invalid {
                path: scope.path.clone(),
                line,
                reason: format!("part-select out of range on `{}`", s.local),
            });
        }
        Ok((m as u32, l as u32))
    }

    fn lvalue(&self, e: &Expr, scope: &Scope) -> EResult<LValue> {
        let line = e.span.line;
        match &e.kind {
            ExprKind::Ident(n) => Ok(LValue::Whole(self.resolve(n, scope)?)),
            ExprKind::Index { base, index } => {
                let sig = self.resolve(base, scope)?;
                if let Some(i) = const_eval(index, &scope.params) {
                    let (m, l) = self.part_offsets_int(sig, i, i, scope, line)?;
                    return Ok(LValue::Part { sig, msb: m, lsb: l });
                }
                Ok(LValue::Bit {
                    sig,
                    index: self.expr(index, scope)?,
                    lsb: self.out.signals[sig].lsb,
                })
            }
            ExprKind::Range { base, msb, lsb } => {
                let sig = self.resolve(base, scope)?;
                let (m, l) = self.part_offsets(sig, msb, lsb, scope, line)?;
                Ok(LValue::Part { sig, msb: m, lsb: l })
            }
            ExprKind::Concat(items) => Ok(LValue::Concat(
                items.iter().map(|i| self.lvalue(i, scope)).collect::<EResult<_>>()?,
            )),
            _ => Err(ElabError::Invalid {
                path: scope.path.clone(),
                line,
                reason: "invalid assignment target".into(),
            }),
        }
    }

    fn part_offsets_int(&self, sig: SignalId, msb: i64, lsb: i64, scope: &Scope, line: u32) -> EResult<(u32, u32)> {
        let s = &self.out.signals[sig];
        let (m, l) = (msb - s.lsb, lsb - s.lsb);
        if l < 0 || m < l || m >= s.width as i64 {
            return Err(ElabError::Invalid {
                path: scope.path.clone(),
                line,
                reason: format!("select out of range on `{}`", s.local),
            });
        }
        Ok((m as u32, l as u32))
    }

    fn expr(&self, e: &Expr, scope: &Scope) -> EResult<TExpr> {
        let span = e.span;
        let line = span.line;
        let (kind, width) = match &e.kind {
            ExprKind::Ident(n) => {
                if let Some(v) = scope.params.get(n) {
                    (EExpr::Const(v.clone()), v.width())
                } else {
                    let s = self.resolve(n, scope)?;
                    (EExpr::Sig(s), self.out.signals[s].width)
                }
            }
            ExprKind::Literal(Literal::Value { value, .. }) => (EExpr::Const(value.clone()), value.width()),
            ExprKind::Literal(Literal::Fill(b)) => (EExpr::Fill(*b), 1),
            ExprKind::Index { base, index } => {
                if scope.params.contains_key(base) {
                    return Err(ElabError::Invalid {
                        path: scope.path.clone(),
                        line,
                        reason: format!("select on parameter `{base}`"),
                    });
                }
                let sig = self.resolve(base, scope)?;
                if let Some(i) = const_eval(index, &scope.params) {
                    let (m, l) = self.part_offsets_int(sig, i, i, scope, line)?;
                    (EExpr::Part { sig, msb: m, lsb: l }, 1)
                } else {
                    (
                        EExpr::Bit {
                            sig,
                            index: Box::new(self.expr(index, scope)?),
                            lsb: self.out.signals[sig].lsb,
                        },
                        1,
                    )
                }
            }
            ExprKind::Range { base, msb, lsb } => {
                let sig = self.resolve(base, scope)?;
                let (m, l) = self.part_offsets(sig, msb, lsb, scope, line)?;
                (EExpr::Part { sig, msb: m, lsb: l }, m - l + 1)
            }
            ExprKind::Unary { op, arg } => {
                let a = self.expr(arg, scope)?;
                let w = match op {
                    UnaryOp::Plus | UnaryOp::Neg | UnaryOp::Not => a.width,
                    _ => 1,
                };
                (EExpr::Unary { op: *op, arg: Box::new(a) }, w)
            }
            ExprKind::Binary { op, lhs, rhs, .. } => {
                let l = self.expr(lhs, scope)?;
                let r = self.expr(rhs, scope)?;
                let w = if op.is_relational() {
                    1
                } else if op.is_shift() || *op == BinaryOp::Pow {
                    l.width
                } else {
                    l.width.max(r.width)
                };
                (
                    EExpr::Binary {
                        op: *op,
                        lhs: Box::new(l),
                        rhs: Box::new(r),
                    },
                    w,
                )
            }
            ExprKind::Ternary { cond, then_, else_ } => {
                let c = self.expr(cond, scope)?;
                let t = self.expr(then_, scope)?;
                let f = self.expr(else_, scope)?;
                let w = t.width.max(f.width);
                (
                    EExpr::Ternary {
                        cond: Box::new(c),
                        then_: Box::new(t),
                        else_: Box::new(f),
                    },
                    w,
                )
            }
            ExprKind::Concat(items) => {
                let items: Vec<TExpr> = items.iter().map(|i| self.expr(i, scope)).collect::<EResult<_>>()?;
                let w = items.iter().map(|i| i.width).sum();
                (EExpr::Concat(items), w)
            }
            ExprKind::Replicate { count, items } => {
                let n = self.const_int(count, scope, line, "replication count")?;
                if n <= 0 {
                    return Err(ElabError::Invalid {
                        path: scope.path.clone(),
                        line,
                        reason: "replication count must be positive".into(),
                    });
                }
                let items: Vec<TExpr> = items.iter().map(|i| self.expr(i, scope)).collect::<EResult<_>>()?;
                let w = n as u32 * items.iter().map(|i| i.width).sum::<u32>();
                (EExpr::Replicate { count: n as u32, items }, w)
            }
        };
        Ok(TExpr { kind, width, span })
    }
}

fn literal_value(e: &Expr) -> Option<LogicVec> {
    match &e.kind {
        ExprKind::Literal(Literal::Value { value, .. }) => Some(value.clone()),
        ExprKind::Literal(Literal::Fill(b)) => Some(LogicVec::filled(32, *b)),
        _ => None,
    }
}

/// Integer evaluation of constant expressions over parameters.
pub fn const_eval(e: &Expr, params: &BTreeMap<String, LogicVec>) -> Option<i64> {
    match &e.kind {
        ExprKind::Literal(Literal::Value { value, .. }) => value.to_u64().map(|v| v as i64),
        ExprKind::Ident(n) => params.get(n)?.to_u64().map(|v| v as i64),
        ExprKind::Unary { op: UnaryOp::Neg, arg } => const_eval(arg, params).map(|v| -v),
        ExprKind::Unary { op: UnaryOp::Plus, arg } => const_eval(arg, params),
        ExprKind::Binary { op, lhs, rhs, .. } => {
            let (a, b) = (const_eval(lhs, params)?, const_eval(rhs, params)?);
            match op {
                BinaryOp::Add => a.checked_add(b),
                BinaryOp::Sub => a.checked_sub(b),
                BinaryOp::Mul => a.checked_mul(b),
                BinaryOp::Div => a.checked_div(b),
                BinaryOp::Mod => a.checked_rem(b),
                BinaryOp::Shl => u32::try_from(b).ok().and_then(|b| a.checked_shl(b)),
                BinaryOp::Shr => u32::try_from(b).ok().and_then(|b| a.checked_shr(b)),
                _ => None,
            }
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdl::parse_sources;

    fn elab(src: &str, top: &str) -> EResult<DesignHierarchy> {
        let ast = parse_sources(&[SourceUnit::new("t.sv", src)]).unwrap();
        elaborate(&ast, top)
    }

    const CHILD: &str = "module child #(parameter W = 4) (input logic [W-1:0] a, output logic [W-1:0] b);\n  assign b = ~a;\nendmodule\n";

    #[test]
    fn input_connection_recorded() {
        let src = format!(
            "{CHILD}module top(input logic [3:0] x, output logic [3:0] y);\n  child u1 (\n    .a(x),\n    .b(y)\n  );\nendmodule\n"
        );
        let d = elab(&src, "top").unwrap();
        let c = d.connections.iter().find(|c| c.direction == Direction::Input).unwrap();
        assert_eq!(d.name(c.port), "top.u1.a");
        let parents: Vec<&str> = c.parent_signals().iter().map(|s| d.name(*s)).collect();
        assert_eq!(parents, vec!["top.x"]);
        assert_eq!(c.line, 6);
    }

    #[test]
    fn two_instances_have_disjoint_names() {
        let src = format!(
            "{CHILD}module top(input logic [3:0] x, output logic [3:0] y, output logic [3:0] z);\n  child u1 (\n    .a(x),\n    .b(y)\n  );\n  child u2 (\n    .a(x),\n    .b(z)\n  );\nendmodule\n"
        );
        let d = elab(&src, "top").unwrap();
        let u1: BTreeSet<_> = d.signals.iter().filter(|s| s.hier_name.starts_with("top.u1.")).map(|s| s.local.clone()).collect();
        let u2: BTreeSet<_> = d.signals.iter().filter(|s| s.hier_name.starts_with("top.u2.")).map(|s| s.local.clone()).collect();
        assert_eq!(u1, u2);
        assert_eq!(u1.len(), 2);
        assert_eq!(d.statements.len(), 2);
        assert_ne!(d.statements[0].lhs, d.statements[1].lhs);
    }

    #[test]
    fn parameter_override_sets_width() {
        let src = format!("{CHILD}module top(input logic [7:0] x);\n  child #(.W(8)) u1 (\n    .a(x)\n  );\nendmodule\n");
        let d = elab(&src, "top").unwrap();
        assert_eq!(d.signal(d.lookup("top.u1.a").unwrap()).width, 8);
    }

    #[test]
    fn unknown_module() {
        let err = elab("module top;\n  nothere u1 ();\nendmodule\n", "top").unwrap_err();
        assert_eq!(err, ElabError::UnknownModule("nothere".into()));
        assert_eq!(elab("module top; endmodule", "other").unwrap_err(), ElabError::UnknownModule("other".into()));
    }

    #[test]
    fn recursion_detected() {
        let err = elab("module top;\n  top u1 ();\nendmodule\n", "top").unwrap_err();
        assert_eq!(err, ElabError::RecursiveInstantiation("top.u1".into()));
    }

    #[test]
    fn unresolved_identifier() {
        let err = elab("module top(output logic y);\n  assign y = q;\nendmodule\n", "top").unwrap_err();
        assert_eq!(
            err,
            ElabError::UnresolvedIdentifier {
                path: "top".into(),
                name: "q".into()
            }
        );
    }

    #[test]
    fn unknown_port() {
        let src = format!("{CHILD}module top(input logic [3:0] x);\n  child u1 (\n    .q(x)\n  );\nendmodule\n");
        assert!(matches!(elab(&src, "top").unwrap_err(), ElabError::UnknownPort { .. }));
    }

    #[test]
    fn every_statement_identifier_resolves() {
        let src = "module top(input logic clk, input logic [3:0] a, output logic [3:0] q);\n  logic [3:0] n;\n  assign n = a + 4'd1;\n  always_ff @(posedge clk) begin\n    if (a[0]) q <= n;\n  end\nendmodule\n";
        let d = elab(src, "top").unwrap();
        for st in &d.statements {
            for s in st.lhs.iter().chain(&st.rhs).chain(&st.cond) {
                assert!(*s < d.signals.len());
            }
        }
        let ff = &d.statements[1];
        assert_eq!(d.name(ff.clock.unwrap()), "top.clk");
    }
}
