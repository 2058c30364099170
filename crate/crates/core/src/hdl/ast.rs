//! Syntax tree for the supported SystemVerilog subset.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::logic::{Logic, LogicVec};

/// Byte range plus the 1-based line/column of its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span {
            start: self.start,
            end: other.end,
            line: self.line,
            col: self.col,
            end_line: other.end_line,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
    pub line_count: usize,
}

impl SourceUnit {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let line_count = text.lines().count().max(1);
        SourceUnit {
            path: path.into(),
            text,
            line_count,
        }
    }

    pub fn read(path: impl AsRef<std::path::Path>, display: impl Into<String>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(SourceUnit::new(display, text))
    }

    /// Returns the 1-based line, or an empty string when out of range.
    pub fn line(&self, n: u32) -> &str {
        self.text.lines().nth((n as usize).saturating_sub(1)).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum UnaryOp {
    Plus,
    Neg,
    Not,
    LogNot,
    RedAnd,
    RedNand,
    RedOr,
    RedNor,
    RedXor,
    RedXnor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
    And,
    Or,
    Xor,
    Xnor,
    LogAnd,
    LogOr,
    Eq,
    Ne,
    CaseEq,
    CaseNe,
    Lt,
    Le,
    Gt,
    Ge,
    Shl,
    Shr,
    AShl,
    AShr,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        use BinaryOp::*;
        match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Mod => "%",
            Pow => "**",
            And => "&",
            Or => "|",
            Xor => "^",
            Xnor => "~^",
            LogAnd => "&&",
            LogOr => "||",
            Eq => "==",
            Ne => "!=",
            CaseEq => "===",
            CaseNe => "!==",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            Shl => "<<",
            Shr => ">>",
            AShl => "<<<",
            AShr => ">>>",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinaryOp> {
        use BinaryOp::*;
        Some(match s {
            "+" => Add,
            "-" => Sub,
            "*" => Mul,
            "/" => Div,
            "%" => Mod,
            "**" => Pow,
            "&" => And,
            "|" => Or,
            "^" => Xor,
            "~^" | "^~" => Xnor,
            "&&" => LogAnd,
            "||" => LogOr,
            "==" => Eq,
            "!=" => Ne,
            "===" => CaseEq,
            "!==" => CaseNe,
            "<" => Lt,
            "<=" => Le,
            ">" => Gt,
            ">=" => Ge,
            "<<" => Shl,
            ">>" => Shr,
            "<<<" => AShl,
            ">>>" => AShr,
            _ => return None,
        })
    }

    pub fn is_relational(self) -> bool {
        use BinaryOp::*;
        matches!(self, LogAnd | LogOr | Eq | Ne | CaseEq | CaseNe | Lt | Le | Gt | Ge)
    }

    pub fn is_shift(self) -> bool {
        matches!(self, BinaryOp::Shl | BinaryOp::Shr | BinaryOp::AShl | BinaryOp::AShr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    /// A sized or unsized constant. Unsized literals are 32 bits wide.
    Value { value: LogicVec, sized: bool },
    /// `'0`, `'1`, `'x`, `'z`: width comes from context.
    Fill(Logic),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Ident(String),
    Literal(Literal),
    Index {
        base: String,
        index: Box<Expr>,
    },
    Range {
        base: String,
        msb: Box<Expr>,
        lsb: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        arg: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        op_span: Span,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Ternary {
        cond: Box<Expr>,
        then_: Box<Expr>,
        else_: Box<Expr>,
    },
    Concat(Vec<Expr>),
    Replicate {
        count: Box<Expr>,
        items: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    /// Identifiers read by this expression, including select indices.
    pub fn collect_idents(&self, out: &mut BTreeSet<String>) {
        match &self.kind {
            ExprKind::Ident(n) => {
                out.insert(n.clone());
            }
            ExprKind::Literal(_) => {}
            ExprKind::Index { base, index } => {
                out.insert(base.clone());
                index.collect_idents(out);
            }
            ExprKind::Range { base, msb, lsb } => {
                out.insert(base.clone());
                msb.collect_idents(out);
                lsb.collect_idents(out);
            }
            ExprKind::Unary { arg, .. } => arg.collect_idents(out),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.collect_idents(out);
                rhs.collect_idents(out);
            }
            ExprKind::Ternary { cond, then_, else_ } => {
                cond.collect_idents(out);
                then_.collect_idents(out);
                else_.collect_idents(out);
            }
            ExprKind::Concat(items) => items.iter().for_each(|e| e.collect_idents(out)),
            ExprKind::Replicate { count, items } => {
                count.collect_idents(out);
                items.iter().for_each(|e| e.collect_idents(out));
            }
        }
    }

    /// Splits identifiers of an assignment target into (written, read).
    /// Select indices on the target are reads.
    pub fn lvalue_idents(&self, written: &mut BTreeSet<String>, read: &mut BTreeSet<String>) {
        match &self.kind {
            ExprKind::Ident(n) => {
                written.insert(n.clone());
            }
            ExprKind::Index { base, index } => {
                written.insert(base.clone());
                index.collect_idents(read);
            }
            ExprKind::Range { base, msb, lsb } => {
                written.insert(base.clone());
                msb.collect_idents(read);
                lsb.collect_idents(read);
            }
            ExprKind::Concat(items) => items.iter().for_each(|e| e.lvalue_idents(written, read)),
            _ => {}
        }
    }

    pub fn is_lvalue(&self) -> bool {
        match &self.kind {
            ExprKind::Ident(_) | ExprKind::Index { .. } | ExprKind::Range { .. } => true,
            ExprKind::Concat(items) => items.iter().all(Expr::is_lvalue),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseKind {
    Case,
    Casez,
    Casex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseItem {
    /// Empty for `default`.
    pub labels: Vec<Expr>,
    pub body: Stmt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Block(Vec<Stmt>),
    If {
        cond: Expr,
        then_: Box<Stmt>,
        else_: Option<Box<Stmt>>,
        span: Span,
    },
    Case {
        kind: CaseKind,
        subject: Expr,
        items: Vec<CaseItem>,
        span: Span,
    },
    Assign {
        lhs: Expr,
        rhs: Expr,
        blocking: bool,
        span: Span,
    },
    Null,
}

impl Stmt {
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        match self {
            Stmt::Block(items) => items.iter().for_each(|s| s.visit(f)),
            Stmt::If { then_, else_, .. } => {
                then_.visit(f);
                if let Some(e) = else_ {
                    e.visit(f);
                }
            }
            Stmt::Case { items, .. } => items.iter().for_each(|i| i.body.visit(f)),
            Stmt::Assign { .. } | Stmt::Null => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Direction {
    Input,
    Output,
    Inout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedRange {
    pub msb: Expr,
    pub lsb: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortDecl {
    pub name: String,
    pub direction: Direction,
    pub range: Option<PackedRange>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetDecl {
    pub name: String,
    pub range: Option<PackedRange>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDecl {
    pub name: String,
    pub value: Expr,
    pub local: bool,
    pub line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StatementKind {
    ContinuousAssign,
    AlwaysBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Edge {
    Posedge,
    Negedge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementNode {
    pub kind: StatementKind,
    /// Inclusive first/last source line.
    pub line_span: (u32, u32),
    pub span: Span,
    pub clocked: bool,
    pub clock_edge_signal: Option<String>,
    /// Edge events of a clocked block; the first one is the clock.
    pub sensitivity: Vec<(Edge, String)>,
    /// The guard tree: a continuous assign is a single `Stmt::Assign`.
    pub body: Stmt,
    pub lhs_signals: BTreeSet<String>,
    pub rhs_signals: BTreeSet<String>,
    pub condition_signals: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortConnection {
    pub port: String,
    /// `None` for an explicitly unconnected port `.p()`.
    pub expr: Option<Expr>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceDecl {
    pub module: String,
    pub name: String,
    pub params: Vec<(String, Expr)>,
    pub connections: Vec<PortConnection>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleDecl {
    pub name: String,
    pub file: String,
    pub line: u32,
    pub params: Vec<ParamDecl>,
    pub ports: Vec<PortDecl>,
    pub nets: Vec<NetDecl>,
    pub items: Vec<StatementNode>,
    pub instantiations: Vec<InstanceDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignAst {
    pub sources: Vec<SourceUnit>,
    pub modules: Vec<ModuleDecl>,
}

impl DesignAst {
    pub fn module(&self, name: &str) -> Option<&ModuleDecl> {
        self.modules.iter().find(|m| m.name == name)
    }
}
