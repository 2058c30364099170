//! SystemVerilog front end: lexing, parsing and elaboration.

pub mod ast;
pub mod elab;
pub mod lexer;
pub mod parser;

pub use ast::{DesignAst, ModuleDecl, SourceUnit, StatementKind, StatementNode};
pub use elab::{elaborate, DesignHierarchy, ElabError, SignalId, SignalRef};
pub use parser::{parse_sources, ParseError};
