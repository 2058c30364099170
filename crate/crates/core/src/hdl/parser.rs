//! Recursive-descent parser for the synthesizable subset.
//!
//! Anything outside the subset is a hard [`ParseError::UnsupportedConstruct`]
//! rather than being skipped, so every line that carries behavior ends up in
//! exactly one code block.

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{lex, Token, TokenKind};
use crate::logic::{Logic, LogicVec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{file}:{line}: syntax error: expected {expected}")]
    SyntaxError { file: String, line: u32, expected: String },
    #[error("{file}:{line}: unsupported construct: {construct}")]
    UnsupportedConstruct { file: String, line: u32, construct: String },
}

impl ParseError {
    pub fn line(&self) -> u32 {
        match self {
            ParseError::SyntaxError { line, .. } | ParseError::UnsupportedConstruct { line, .. } => *line,
        }
    }
}

type PResult<T> = Result<T, ParseError>;

const UNSUPPORTED_ITEMS: &[&str] = &[
    "initial",
    "final",
    "generate",
    "genvar",
    "for",
    "function",
    "task",
    "typedef",
    "import",
    "export",
    "class",
    "interface",
    "modport",
    "package",
    "program",
    "property",
    "sequence",
    "assert",
    "assume",
    "cover",
    "covergroup",
    "always_latch",
    "specify",
    "defparam",
    "struct",
    "enum",
    "begin",
    "if",
    "case",
    "bind",
    "clocking",
    "constraint",
];

const UNSUPPORTED_STMTS: &[&str] = &[
    "for", "foreach", "while", "repeat", "forever", "do", "fork", "wait", "disable", "return", "break",
    "continue", "assert", "assume", "cover",
];

/// Parses each source file and returns the combined module list.
pub fn parse_sources(files: &[SourceUnit]) -> PResult<DesignAst> {
    let mut modules = Vec::new();
    for unit in files {
        modules.extend(parse_file(unit)?);
    }
    Ok(DesignAst {
        sources: files.to_vec(),
        modules,
    })
}

pub fn parse_file(unit: &SourceUnit) -> PResult<Vec<ModuleDecl>> {
    let tokens = lex(&unit.text).map_err(|e| ParseError::SyntaxError {
        file: unit.path.clone(),
        line: e.line,
        expected: e.message,
    })?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        file: unit.path.clone(),
    };
    let mut modules = Vec::new();
    loop {
        let t = p.peek().clone();
        match &t.kind {
            TokenKind::Eof => break,
            TokenKind::Directive(d) if d == "timescale" || d == "default_nettype" => {
                // skip the rest of the directive line
                let line = t.span.line;
                while p.peek().span.line == line && !matches!(p.peek().kind, TokenKind::Eof) {
                    p.bump();
                }
            }
            TokenKind::Directive(d) => return Err(p.unsupported(&t, &format!("compiler directive `{d}"))),
            TokenKind::Ident(k) if k == "module" => modules.push(p.module()?),
            TokenKind::Ident(k) if ["interface", "class", "package", "program", "primitive", "config"].contains(&k.as_str()) => {
                return Err(p.unsupported(&t, &format!("{k} declaration")))
            }
            _ => return Err(p.expected("`module`")),
        }
    }
    check_line_ownership(&unit.path, &modules)?;
    Ok(modules)
}

/// Statements and port connections own their lines; two of them on one line
/// would make block line sets overlap.
fn check_line_ownership(file: &str, modules: &[ModuleDecl]) -> PResult<()> {
    let mut owned: Vec<(u32, u32)> = Vec::new();
    for m in modules {
        owned.extend(m.items.iter().map(|s| s.line_span));
        for inst in &m.instantiations {
            owned.extend(inst.connections.iter().map(|c| (c.line, c.line)));
        }
    }
    owned.sort();
    for w in owned.windows(2) {
        if w[1].0 <= w[0].1 {
            return Err(ParseError::UnsupportedConstruct {
                file: file.to_string(),
                line: w[1].0,
                construct: "multiple statements or port connections sharing a line".into(),
            });
        }
    }
    Ok(())
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    file: String,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn expected(&self, what: &str) -> ParseError {
        let t = self.peek();
        ParseError::SyntaxError {
            file: self.file.clone(),
            line: t.span.line,
            expected: format!("{what}, found {}", t.describe()),
        }
    }

    fn unsupported(&self, t: &Token, what: &str) -> ParseError {
        ParseError::UnsupportedConstruct {
            file: self.file.clone(),
            line: t.span.line,
            construct: what.to_string(),
        }
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek().is_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek().is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<Span> {
        if self.peek().is_op(op) {
            Ok(self.bump().span)
        } else {
            Err(self.expected(&format!("`{op}`")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.peek().is_kw(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.expected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match &self.peek().kind {
            TokenKind::Ident(s) if !is_reserved(s) => {
                let s = s.clone();
                Ok((s, self.bump().span))
            }
            _ => Err(self.expected("identifier")),
        }
    }

    fn module(&mut self) -> PResult<ModuleDecl> {
        let kw = self.expect_kw("module")?;
        let (name, _) = self.ident()?;
        let mut m = ModuleDecl {
            name,
            file: self.file.clone(),
            line: kw.line,
            params: Vec::new(),
            ports: Vec::new(),
            nets: Vec::new(),
            items: Vec::new(),
            instantiations: Vec::new(),
        };
        if self.eat_op("#") {
            self.expect_op("(")?;
            if !self.peek().is_op(")") {
                loop {
                    let local = if self.eat_kw("localparam") {
                        true
                    } else {
                        self.eat_kw("parameter");
                        false
                    };
                    self.param_assignment(&mut m, local)?;
                    if !self.eat_op(",") {
                        break;
                    }
                }
            }
            self.expect_op(")")?;
        }
        if self.eat_op("(") {
            if !self.peek().is_op(")") {
                self.ansi_ports(&mut m)?;
            }
            self.expect_op(")")?;
        }
        self.expect_op(";")?;
        loop {
            let t = self.peek().clone();
            match &t.kind {
                TokenKind::Ident(k) if k == "endmodule" => {
                    self.bump();
                    if self.eat_op(":") {
                        self.ident()?;
                    }
                    break;
                }
                TokenKind::Eof => return Err(self.expected("`endmodule`")),
                _ => self.module_item(&mut m)?,
            }
        }
        let params: BTreeSet<String> = m.params.iter().map(|p| p.name.clone()).collect();
        for item in &mut m.items {
            item.lhs_signals.retain(|s| !params.contains(s));
            item.rhs_signals.retain(|s| !params.contains(s));
            item.condition_signals.retain(|s| !params.contains(s));
        }
        Ok(m)
    }

    fn param_assignment(&mut self, m: &mut ModuleDecl, local: bool) -> PResult<()> {
        // optional type: int, integer, logic [..], bit [..], int unsigned
        for ty in ["int", "integer", "logic", "bit", "unsigned", "signed"] {
            self.eat_kw(ty);
        }
        self.eat_kw("unsigned");
        if self.peek().is_op("[") {
            self.packed_range()?;
        }
        let (name, span) = self.ident()?;
        self.expect_op("=")?;
        let value = self.expr()?;
        if !matches!(value.kind, ExprKind::Literal(Literal::Value { .. })) {
            return Err(ParseError::UnsupportedConstruct {
                file: self.file.clone(),
                line: span.line,
                construct: format!("parameter expression for `{name}` (literal values only)"),
            });
        }
        m.params.push(ParamDecl {
            name,
            value,
            local,
            line: span.line,
        });
        Ok(())
    }

    fn ansi_ports(&mut self, m: &mut ModuleDecl) -> PResult<()> {
        let mut dir: Option<Direction> = None;
        let mut range: Option<PackedRange> = None;
        loop {
            let t = self.peek().clone();
            let new_dir = if self.eat_kw("input") {
                Some(Direction::Input)
            } else if self.eat_kw("output") {
                Some(Direction::Output)
            } else if self.eat_kw("inout") {
                return Err(self.unsupported(&t, "inout port"));
            } else {
                None
            };
            let mut saw_type = false;
            for ty in ["var", "wire", "logic", "reg", "bit", "unsigned"] {
                if self.eat_kw(ty) {
                    saw_type = true;
                }
            }
            if self.peek().is_kw("signed") {
                return Err(self.unsupported(self.peek(), "signed declaration"));
            }
            if new_dir.is_some() || saw_type || self.peek().is_op("[") {
                range = if self.peek().is_op("[") {
                    Some(self.packed_range()?)
                } else {
                    None
                };
            }
            if let Some(d) = new_dir {
                dir = Some(d);
            }
            let Some(direction) = dir else {
                return Err(self.unsupported(&t, "non-ANSI port list"));
            };
            let (name, span) = self.ident()?;
            if self.peek().is_op("[") {
                return Err(self.unsupported(self.peek(), "unpacked array port"));
            }
            if m.ports.iter().any(|p| p.name == name) {
                return Err(ParseError::SyntaxError {
                    file: self.file.clone(),
                    line: span.line,
                    expected: format!("unique port name, `{name}` is declared twice"),
                });
            }
            m.ports.push(PortDecl {
                name,
                direction,
                range: range.clone(),
                line: span.line,
            });
            if !self.eat_op(",") {
                return Ok(());
            }
        }
    }

    fn packed_range(&mut self) -> PResult<PackedRange> {
        self.expect_op("[")?;
        let msb = self.expr()?;
        self.expect_op(":")?;
        let lsb = self.expr()?;
        self.expect_op("]")?;
        if self.peek().is_op("[") {
            return Err(self.unsupported(self.peek(), "multi-dimensional packed array"));
        }
        Ok(PackedRange { msb, lsb })
    }

    fn module_item(&mut self, m: &mut ModuleDecl) -> PResult<()> {
        let t = self.peek().clone();
        let kw = match &t.kind {
            TokenKind::Ident(s) => s.clone(),
            TokenKind::Op(";") => {
                self.bump();
                return Ok(());
            }
            TokenKind::Directive(d) => return Err(self.unsupported(&t, &format!("compiler directive `{d}"))),
            TokenKind::SysIdent(s) => return Err(self.unsupported(&t, &format!("system task `${s}`"))),
            _ => return Err(self.expected("module item")),
        };
        match kw.as_str() {
            "input" | "output" | "inout" => Err(self.unsupported(&t, "non-ANSI port declaration")),
            "logic" | "wire" | "reg" | "bit" | "var" | "integer" | "int" | "tri" => self.net_decl(m),
            "parameter" | "localparam" => {
                self.bump();
                loop {
                    self.param_assignment(m, kw == "localparam")?;
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op(";")?;
                Ok(())
            }
            "assign" => {
                self.bump();
                let lhs = self.lvalue()?;
                self.expect_op("=")?;
                let rhs = self.expr()?;
                let end = self.expect_op(";")?;
                if self.peek().is_op(",") {
                    return Err(self.unsupported(self.peek(), "multiple assignments in one assign"));
                }
                m.items.push(continuous_assign(t.span.to(end), lhs, rhs));
                Ok(())
            }
            "always" | "always_ff" | "always_comb" => {
                let stmt = self.always(&kw)?;
                m.items.push(stmt);
                Ok(())
            }
            k if UNSUPPORTED_ITEMS.contains(&k) => Err(self.unsupported(&t, k)),
            k if is_reserved(k) => Err(self.unsupported(&t, k)),
            _ => self.instance(m),
        }
    }

    fn net_decl(&mut self, m: &mut ModuleDecl) -> PResult<()> {
        let first = self.bump();
        let is_wire = first.is_kw("wire") || first.is_kw("tri");
        let int_like = first.is_kw("integer") || first.is_kw("int");
        for ty in ["logic", "reg", "bit", "unsigned"] {
            self.eat_kw(ty);
        }
        if self.peek().is_kw("signed") {
            return Err(self.unsupported(self.peek(), "signed declaration"));
        }
        let range = if self.peek().is_op("[") {
            Some(self.packed_range()?)
        } else if int_like {
            Some(PackedRange {
                msb: lit_expr(31, first.span),
                lsb: lit_expr(0, first.span),
            })
        } else {
            None
        };
        loop {
            let (name, span) = self.ident()?;
            if self.peek().is_op("[") {
                return Err(self.unsupported(self.peek(), "unpacked array"));
            }
            m.nets.push(NetDecl {
                name: name.clone(),
                range: range.clone(),
                line: span.line,
            });
            if self.peek().is_op("=") {
                if !is_wire {
                    return Err(self.unsupported(self.peek(), "variable initializer"));
                }
                self.bump();
                let rhs = self.expr()?;
                let lhs = Expr {
                    kind: ExprKind::Ident(name),
                    span,
                };
                let end = self.prev_span();
                m.items.push(continuous_assign(first.span.to(end), lhs, rhs));
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(";")?;
        Ok(())
    }

    fn always(&mut self, kw: &str) -> PResult<StatementNode> {
        let start = self.bump().span;
        let mut sensitivity = Vec::new();
        let mut clocked = kw == "always_ff";
        if kw != "always_comb" {
            if self.eat_op("@") {
                if self.eat_op("*") {
                } else {
                    self.expect_op("(")?;
                    if self.eat_op("*") {
                        self.expect_op(")")?;
                    } else {
                        loop {
                            let edge = if self.eat_kw("posedge") {
                                Some(Edge::Posedge)
                            } else if self.eat_kw("negedge") {
                                Some(Edge::Negedge)
                            } else {
                                None
                            };
                            let (sig, _) = self.ident()?;
                            match edge {
                                Some(e) => sensitivity.push((e, sig)),
                                None if kw == "always_ff" => return Err(self.expected("edge event")),
                                None => {}
                            }
                            if !(self.eat_op(",") || self.eat_kw("or")) {
                                break;
                            }
                        }
                        self.expect_op(")")?;
                    }
                }
            } else if kw == "always" {
                return Err(self.expected("`@` event control"));
            } else {
                return Err(self.expected("`@(posedge ...)`"));
            }
            if !sensitivity.is_empty() {
                clocked = true;
            }
            if clocked && sensitivity.is_empty() {
                return Err(self.expected("edge event"));
            }
        }
        let body = self.stmt()?;
        let end = self.prev_span();
        let mut lhs = BTreeSet::new();
        let mut rhs = BTreeSet::new();
        let mut cond = BTreeSet::new();
        body.visit(&mut |s| match s {
            Stmt::Assign { lhs: l, rhs: r, .. } => {
                l.lvalue_idents(&mut lhs, &mut rhs);
                r.collect_idents(&mut rhs);
            }
            Stmt::If { cond: c, .. } => c.collect_idents(&mut cond),
            Stmt::Case { subject, items, .. } => {
                subject.collect_idents(&mut cond);
                for it in items {
                    it.labels.iter().for_each(|l| l.collect_idents(&mut cond));
                }
            }
            _ => {}
        });
        Ok(StatementNode {
            kind: StatementKind::AlwaysBlock,
            line_span: (start.line, end.end_line),
            span: start.to(end),
            clocked,
            clock_edge_signal: sensitivity.first().map(|(_, s)| s.clone()),
            sensitivity,
            body,
            lhs_signals: lhs,
            rhs_signals: rhs,
            condition_signals: cond,
        })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let t = self.peek().clone();
        match &t.kind {
            TokenKind::Op(";") => {
                self.bump();
                Ok(Stmt::Null)
            }
            TokenKind::Op("{") => self.assignment_stmt(),
            TokenKind::SysIdent(s) => Err(self.unsupported(&t, &format!("system task `${s}`"))),
            TokenKind::Ident(k) => match k.as_str() {
                "begin" => {
                    self.bump();
                    if self.eat_op(":") {
                        self.ident()?;
                    }
                    let mut items = Vec::new();
                    while !self.peek().is_kw("end") {
                        if matches!(self.peek().kind, TokenKind::Eof) {
                            return Err(self.expected("`end`"));
                        }
                        if self.is_local_decl() {
                            return Err(self.unsupported(self.peek(), "declaration inside procedural block"));
                        }
                        items.push(self.stmt()?);
                    }
                    self.bump();
                    if self.eat_op(":") {
                        self.ident()?;
                    }
                    Ok(Stmt::Block(items))
                }
                "unique" | "unique0" | "priority" => {
                    self.bump();
                    if !(self.peek().is_kw("if") || self.peek().is_kw("case") || self.peek().is_kw("casez") || self.peek().is_kw("casex")) {
                        return Err(self.expected("`if` or `case`"));
                    }
                    self.stmt()
                }
                "if" => {
                    self.bump();
                    self.expect_op("(")?;
                    let cond = self.expr()?;
                    self.expect_op(")")?;
                    let then_ = Box::new(self.stmt()?);
                    let else_ = if self.eat_kw("else") {
                        Some(Box::new(self.stmt()?))
                    } else {
                        None
                    };
                    Ok(Stmt::If {
                        cond,
                        then_,
                        else_,
                        span: t.span,
                    })
                }
                "case" | "casez" | "casex" => {
                    self.bump();
                    let kind = match k.as_str() {
                        "case" => CaseKind::Case,
                        "casez" => CaseKind::Casez,
                        _ => CaseKind::Casex,
                    };
                    self.expect_op("(")?;
                    let subject = self.expr()?;
                    self.expect_op(")")?;
                    if self.peek().is_kw("inside") {
                        return Err(self.unsupported(self.peek(), "case inside"));
                    }
                    let mut items = Vec::new();
                    let mut seen_default = false;
                    while !self.eat_kw("endcase") {
                        if matches!(self.peek().kind, TokenKind::Eof) {
                            return Err(self.expected("`endcase`"));
                        }
                        let mut labels = Vec::new();
                        if self.eat_kw("default") {
                            if seen_default {
                                return Err(self.expected("at most one `default` item"));
                            }
                            seen_default = true;
                            self.eat_op(":");
                        } else {
                            loop {
                                labels.push(self.expr()?);
                                if !self.eat_op(",") {
                                    break;
                                }
                            }
                            self.expect_op(":")?;
                        }
                        let body = self.stmt()?;
                        items.push(CaseItem { labels, body });
                    }
                    // default is matched last regardless of where it is written
                    items.sort_by_key(|i| i.labels.is_empty());
                    Ok(Stmt::Case {
                        kind,
                        subject,
                        items,
                        span: t.span,
                    })
                }
                k if UNSUPPORTED_STMTS.contains(&k) => Err(self.unsupported(&t, &format!("`{k}` statement"))),
                _ => self.assignment_stmt(),
            },
            _ => Err(self.expected("statement")),
        }
    }

    fn is_local_decl(&self) -> bool {
        ["logic", "reg", "wire", "bit", "int", "integer", "automatic", "static"]
            .iter()
            .any(|k| self.peek().is_kw(k))
    }

    fn assignment_stmt(&mut self) -> PResult<Stmt> {
        let start = self.peek().span;
        let lhs = self.lvalue()?;
        let blocking = if self.eat_op("=") {
            true
        } else if self.eat_op("<=") {
            false
        } else if ["++", "--", "+=", "-=", "|=", "&=", "^="].iter().any(|o| self.peek().is_op(o)) {
            return Err(self.unsupported(self.peek(), "compound assignment operator"));
        } else {
            return Err(self.expected("`=` or `<=`"));
        };
        if self.peek().is_op("#") || self.peek().is_op("@") {
            return Err(self.unsupported(self.peek(), "intra-assignment timing control"));
        }
        let rhs = self.expr()?;
        let end = self.expect_op(";")?;
        Ok(Stmt::Assign {
            lhs,
            rhs,
            blocking,
            span: start.to(end),
        })
    }

    fn lvalue(&mut self) -> PResult<Expr> {
        let start = self.peek().span;
        if self.eat_op("{") {
            let mut items = vec![self.lvalue()?];
            while self.eat_op(",") {
                items.push(self.lvalue()?);
            }
            let end = self.expect_op("}")?;
            return Ok(Expr {
                kind: ExprKind::Concat(items),
                span: start.to(end),
            });
        }
        let (name, span) = self.ident()?;
        if self.peek().is_op(".") {
            return Err(self.unsupported(self.peek(), "hierarchical reference"));
        }
        self.select(name, span)
    }

    fn select(&mut self, name: String, span: Span) -> PResult<Expr> {
        if !self.eat_op("[") {
            return Ok(Expr {
                kind: ExprKind::Ident(name),
                span,
            });
        }
        let first = self.expr()?;
        if self.peek().is_op("+:") || self.peek().is_op("-:") {
            return Err(self.unsupported(self.peek(), "indexed part-select"));
        }
        let kind = if self.eat_op(":") {
            let lsb = self.expr()?;
            ExprKind::Range {
                base: name,
                msb: Box::new(first),
                lsb: Box::new(lsb),
            }
        } else {
            ExprKind::Index {
                base: name,
                index: Box::new(first),
            }
        };
        let end = self.expect_op("]")?;
        if self.peek().is_op("[") {
            return Err(self.unsupported(self.peek(), "multi-dimensional select"));
        }
        Ok(Expr {
            kind,
            span: span.to(end),
        })
    }

    fn instance(&mut self, m: &mut ModuleDecl) -> PResult<()> {
        let (module, mspan) = self.ident()?;
        let mut params = Vec::new();
        if self.eat_op("#") {
            self.expect_op("(")?;
            if !self.peek().is_op(")") {
                loop {
                    if !self.peek().is_op(".") {
                        return Err(self.unsupported(self.peek(), "positional parameter override"));
                    }
                    self.bump();
                    let (p, _) = self.ident()?;
                    self.expect_op("(")?;
                    let e = self.expr()?;
                    self.expect_op(")")?;
                    params.push((p, e));
                    if !self.eat_op(",") {
                        break;
                    }
                }
            }
            self.expect_op(")")?;
        }
        let (name, _) = self.ident()?;
        if self.peek().is_op("[") {
            return Err(self.unsupported(self.peek(), "instance array"));
        }
        self.expect_op("(")?;
        let mut connections = Vec::new();
        if !self.peek().is_op(")") {
            loop {
                if self.peek().is_op(".*") {
                    return Err(self.unsupported(self.peek(), "wildcard port connection"));
                }
                if !self.peek().is_op(".") {
                    return Err(self.unsupported(self.peek(), "positional port connection"));
                }
                let dot = self.bump().span;
                let (port, _) = self.ident()?;
                let expr = if self.eat_op("(") {
                    let e = if self.peek().is_op(")") { None } else { Some(self.expr()?) };
                    self.expect_op(")")?;
                    e
                } else {
                    return Err(self.unsupported(self.peek(), "implicit named port connection"));
                };
                if connections.iter().any(|c: &PortConnection| c.port == port) {
                    return Err(ParseError::SyntaxError {
                        file: self.file.clone(),
                        line: dot.line,
                        expected: format!("port `{port}` connected once"),
                    });
                }
                connections.push(PortConnection {
                    port,
                    expr,
                    line: dot.line,
                });
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        self.expect_op(")")?;
        self.expect_op(";")?;
        m.instantiations.push(InstanceDecl {
            module,
            name,
            params,
            connections,
            line: mspan.line,
        });
        Ok(())
    }

    // ---- expressions ----

    pub fn expr(&mut self) -> PResult<Expr> {
        let cond = self.binary(0)?;
        if self.eat_op("?") {
            let then_ = self.expr()?;
            self.expect_op(":")?;
            let else_ = self.expr()?;
            let span = cond.span.to(else_.span);
            return Ok(Expr {
                kind: ExprKind::Ternary {
                    cond: Box::new(cond),
                    then_: Box::new(then_),
                    else_: Box::new(else_),
                },
                span,
            });
        }
        Ok(cond)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let t = self.peek().clone();
            let TokenKind::Op(sym) = t.kind else { break };
            let Some(op) = BinaryOp::from_symbol(sym) else { break };
            let prec = precedence(op);
            if prec < min_prec {
                break;
            }
            self.bump();
            // ** is right-associative, everything else left
            let next = if op == BinaryOp::Pow { prec } else { prec + 1 };
            let rhs = self.binary(next)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr {
                kind: ExprKind::Binary {
                    op,
                    op_span: t.span,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let t = self.peek().clone();
        let op = match &t.kind {
            TokenKind::Op(o) => match *o {
                "+" => Some(UnaryOp::Plus),
                "-" => Some(UnaryOp::Neg),
                "~" => Some(UnaryOp::Not),
                "!" => Some(UnaryOp::LogNot),
                "&" => Some(UnaryOp::RedAnd),
                "~&" => Some(UnaryOp::RedNand),
                "|" => Some(UnaryOp::RedOr),
                "~|" => Some(UnaryOp::RedNor),
                "^" => Some(UnaryOp::RedXor),
                "~^" | "^~" => Some(UnaryOp::RedXnor),
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let arg = self.unary()?;
            let span = t.span.to(arg.span);
            return Ok(Expr {
                kind: ExprKind::Unary { op, arg: Box::new(arg) },
                span,
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek().clone();
        match &t.kind {
            TokenKind::Number(text) => {
                if text.contains("'s") || text.contains("'S") {
                    return Err(self.unsupported(&t, "signed literal"));
                }
                self.bump();
                let lit = parse_number(text).ok_or_else(|| ParseError::SyntaxError {
                    file: self.file.clone(),
                    line: t.span.line,
                    expected: format!("well-formed literal, found `{text}`"),
                })?;
                if self.peek().is_op("'") {
                    return Err(self.unsupported(self.peek(), "cast"));
                }
                Ok(Expr {
                    kind: ExprKind::Literal(lit),
                    span: t.span,
                })
            }
            TokenKind::Ident(name) if !is_reserved(name) => {
                let name = name.clone();
                self.bump();
                if self.peek().is_op("(") {
                    return Err(self.unsupported(&t, &format!("function call `{name}`")));
                }
                if self.peek().is_op(".") || self.peek().is_op("::") {
                    return Err(self.unsupported(self.peek(), "hierarchical or package reference"));
                }
                if self.peek().is_op("'") {
                    return Err(self.unsupported(self.peek(), "cast"));
                }
                self.select(name, t.span)
            }
            TokenKind::SysIdent(s) => Err(self.unsupported(&t, &format!("system function `${s}`"))),
            TokenKind::Op("(") => {
                self.bump();
                let mut e = self.expr()?;
                let end = self.expect_op(")")?;
                e.span = t.span.to(end);
                Ok(e)
            }
            TokenKind::Op("'") => Err(self.unsupported(&t, "assignment pattern")),
            TokenKind::Op("{") => {
                self.bump();
                let first = self.expr()?;
                if self.peek().is_op("{") {
                    self.bump();
                    let mut items = vec![self.expr()?];
                    while self.eat_op(",") {
                        items.push(self.expr()?);
                    }
                    self.expect_op("}")?;
                    let end = self.expect_op("}")?;
                    return Ok(Expr {
                        kind: ExprKind::Replicate {
                            count: Box::new(first),
                            items,
                        },
                        span: t.span.to(end),
                    });
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    items.push(self.expr()?);
                }
                let end = self.expect_op("}")?;
                Ok(Expr {
                    kind: ExprKind::Concat(items),
                    span: t.span.to(end),
                })
            }
            _ => Err(self.expected("expression")),
        }
    }
}

fn precedence(op: BinaryOp) -> u8 {
    use BinaryOp::*;
    match op {
        LogOr => 1,
        LogAnd => 2,
        Or => 3,
        Xor | Xnor => 4,
        And => 5,
        Eq | Ne | CaseEq | CaseNe => 6,
        Lt | Le | Gt | Ge => 7,
        Shl | Shr | AShl | AShr => 8,
        Add | Sub => 9,
        Mul | Div | Mod => 10,
        Pow => 11,
    }
}

fn continuous_assign(span: Span, lhs: Expr, rhs: Expr) -> StatementNode {
    let mut lhs_sigs = BTreeSet::new();
    let mut rhs_sigs = BTreeSet::new();
    lhs.lvalue_idents(&mut lhs_sigs, &mut rhs_sigs);
    rhs.collect_idents(&mut rhs_sigs);
    StatementNode {
        kind: StatementKind::ContinuousAssign,
        line_span: (span.line, span.end_line),
        span,
        clocked: false,
        clock_edge_signal: None,
        sensitivity: Vec::new(),
        body: Stmt::Assign {
            lhs,
            rhs,
            blocking: true,
            span,
        },
        lhs_signals: lhs_sigs,
        rhs_signals: rhs_sigs,
        condition_signals: BTreeSet::new(),
    }
}

fn lit_expr(v: u64, span: Span) -> Expr {
    Expr {
        kind: ExprKind::Literal(Literal::Value {
            value: LogicVec::from_u64(v, 32),
            sized: false,
        }),
        span,
    }
}

fn is_reserved(s: &str) -> bool {
    matches!(
        s,
        "module" | "endmodule" | "input" | "output" | "inout" | "logic" | "wire" | "reg" | "assign" | "always"
            | "always_ff" | "always_comb" | "always_latch" | "begin" | "end" | "if" | "else" | "case" | "casez"
            | "casex" | "endcase" | "default" | "posedge" | "negedge" | "or" | "parameter" | "localparam"
            | "initial" | "generate" | "endgenerate" | "function" | "endfunction" | "task" | "endtask" | "class"
            | "interface" | "for" | "while" | "typedef" | "unique" | "priority" | "int" | "integer" | "bit"
    )
}

/// Parses the text of a numeric literal.
pub fn parse_number(text: &str) -> Option<Literal> {
    let clean: String = text.chars().filter(|c| *c != '_').collect();
    let Some(q) = clean.find('\'') else {
        let v: u128 = clean.parse().ok()?;
        return Some(Literal::Value {
            value: LogicVec::from_u128(v, 32),
            sized: false,
        });
    };
    let (size_txt, rest) = clean.split_at(q);
    let mut rest = &rest[1..];
    if rest.len() == 1 && size_txt.is_empty() {
        return Some(Literal::Fill(Logic::from_char(rest.chars().next()?)?));
    }
    if rest.starts_with(['s', 'S']) {
        rest = &rest[1..];
    }
    let base = rest.chars().next()?.to_ascii_lowercase();
    let digits = &rest[1..];
    if digits.is_empty() {
        return None;
    }
    let (sized, width) = if size_txt.is_empty() {
        (false, 32)
    } else {
        let w: u32 = size_txt.parse().ok()?;
        if w == 0 {
            return None;
        }
        (true, w)
    };
    let bits_per = match base {
        'b' => 1,
        'o' => 3,
        'h' => 4,
        'd' => 0,
        _ => return None,
    };
    let raw = if bits_per == 0 {
        if let Some(c) = digits.chars().next().filter(|c| "xXzZ?".contains(*c)) {
            if digits.len() != 1 {
                return None;
            }
            LogicVec::filled(width, Logic::from_char(c)?)
        } else {
            let v: u128 = digits.parse().ok()?;
            LogicVec::from_u128(v, 128)
        }
    } else {
        let mut bits = String::new();
        for c in digits.chars() {
            match c {
                'x' | 'X' | 'z' | 'Z' | '?' => bits.extend(std::iter::repeat_n(c.to_ascii_lowercase(), bits_per)),
                _ => {
                    let v = c.to_digit(1 << bits_per)?;
                    for k in (0..bits_per).rev() {
                        bits.push(if (v >> k) & 1 == 1 { '1' } else { '0' });
                    }
                }
            }
        }
        let bits = bits.replace('?', "z");
        LogicVec::from_bin_str(&bits)?
    };
    Some(Literal::Value {
        value: raw.extend_vcd(width).resize(width),
        sized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_one(src: &str) -> PResult<Vec<ModuleDecl>> {
        parse_file(&SourceUnit::new("t.sv", src))
    }

    #[test]
    fn literal_forms() {
        let v = |s: &str| match parse_number(s).unwrap() {
            Literal::Value { value, .. } => value,
            _ => panic!(),
        };
        assert_eq!(v("8'hFF").to_u64(), Some(255));
        assert_eq!(v("4'b10x1").to_bin_string(), "10x1");
        assert_eq!(v("12").width(), 32);
        assert_eq!(v("4'hx").to_bin_string(), "xxxx");
        assert_eq!(v("8'hz").to_bin_string(), "zzzzzzzz");
        assert_eq!(v("3'd5").to_u64(), Some(5));
        assert_eq!(v("6'o17").to_u64(), Some(15));
        assert_eq!(parse_number("'1"), Some(Literal::Fill(Logic::One)));
        assert!(parse_number("0'd1").is_none());
    }

    #[test]
    fn empty_module() {
        let ms = parse_one("module m; endmodule").unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].name, "m");
        assert!(ms[0].items.is_empty());
    }

    #[test]
    fn clocked_always_with_enable() {
        let src = "module if_stage(input logic clk, input logic we, input logic [31:0] pc_if_o, output logic [31:0] pc_id_o);\n  always_ff @(posedge clk) if (we) pc_id_o <= pc_if_o;\nendmodule\n";
        let ms = parse_one(src).unwrap();
        let s = &ms[0].items[0];
        assert_eq!(s.kind, StatementKind::AlwaysBlock);
        assert!(s.clocked);
        assert_eq!(s.clock_edge_signal.as_deref(), Some("clk"));
        assert_eq!(s.line_span, (2, 2));
        let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(s.lhs_signals, set(&["pc_id_o"]));
        assert_eq!(s.rhs_signals, set(&["pc_if_o"]));
        assert_eq!(s.condition_signals, set(&["we"]));
    }

    #[test]
    fn multi_line_spans() {
        let src = "module m(input logic a, output logic y, output logic z);\n  assign y =\n     a;\n  always_comb begin\n    z = a;\n  end\nendmodule\n";
        let ms = parse_one(src).unwrap();
        assert_eq!(ms[0].items[0].line_span, (2, 3));
        assert_eq!(ms[0].items[1].line_span, (4, 6));
    }

    #[test]
    fn class_is_unsupported() {
        let err = parse_one("class foo;\nendclass\n").unwrap_err();
        assert!(matches!(err, ParseError::UnsupportedConstruct { line: 1, .. }), "{err}");
    }

    #[test]
    fn generate_is_unsupported_with_line() {
        let err = parse_one("module m;\n\n  generate\n  endgenerate\nendmodule").unwrap_err();
        assert_eq!(
            err,
            ParseError::UnsupportedConstruct {
                file: "t.sv".into(),
                line: 3,
                construct: "generate".into()
            }
        );
    }

    #[test]
    fn signed_is_unsupported() {
        for src in [
            "module m(input logic signed [3:0] a);\nendmodule",
            "module m(input signed [3:0] a);\nendmodule",
            "module m;\n  logic signed [3:0] b;\nendmodule",
        ] {
            let err = parse_one(src).unwrap_err();
            assert!(matches!(&err, ParseError::UnsupportedConstruct { construct, .. } if construct == "signed declaration"), "{err}");
        }
    }

    #[test]
    fn syntax_error_names_line() {
        let err = parse_one("module m(input logic a);\n  assign = a;\nendmodule").unwrap_err();
        assert!(matches!(err, ParseError::SyntaxError { line: 2, .. }), "{err}");
    }

    #[test]
    fn statements_sharing_a_line_rejected() {
        let err = parse_one("module m(input logic a, output logic y, output logic z);\n  assign y = a; assign z = a;\nendmodule").unwrap_err();
        assert!(matches!(err, ParseError::UnsupportedConstruct { line: 2, .. }));
    }

    #[test]
    fn instance_with_named_connections() {
        let src = "module top(input logic x);\n  child #(.W(4)) u1 (\n    .a(x),\n    .b()\n  );\nendmodule\n";
        let ms = parse_one(src).unwrap();
        let inst = &ms[0].instantiations[0];
        assert_eq!(inst.module, "child");
        assert_eq!(inst.name, "u1");
        assert_eq!(inst.connections.len(), 2);
        assert_eq!(inst.connections[0].line, 3);
        assert!(inst.connections[1].expr.is_none());
    }

    #[test]
    fn case_default_moves_last() {
        let src = "module m(input logic [1:0] s, output logic y);\n  always_comb begin\n    case (s)\n      default: y = 0;\n      2'd1, 2'd2: y = 1;\n    endcase\n  end\nendmodule";
        let ms = parse_one(src).unwrap();
        let Stmt::Block(b) = &ms[0].items[0].body else { panic!() };
        let Stmt::Case { items, .. } = &b[0] else { panic!() };
        assert_eq!(items[0].labels.len(), 2);
        assert!(items[1].labels.is_empty());
    }

    #[test]
    fn deterministic() {
        let src = "module m(input logic [3:0] a, output logic [3:0] y);\n  assign y = a + 4'd1;\nendmodule";
        assert_eq!(parse_one(src).unwrap(), parse_one(src).unwrap());
    }
}
