use super::ast::Span;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    /// `$name` system identifiers.
    SysIdent(String),
    /// Raw numeric literal text, e.g. `8'hff`, `'0`, `42`.
    Number(String),
    Str(String),
    /// Compiler directive name without the backtick.
    Directive(String),
    Op(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

impl Token {
    pub fn is_op(&self, op: &str) -> bool {
        matches!(&self.kind, TokenKind::Op(o) if *o == op)
    }

    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident(s) if s == kw)
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::SysIdent(s) => format!("`${s}`"),
            TokenKind::Number(s) => format!("number `{s}`"),
            TokenKind::Str(_) => "string literal".into(),
            TokenKind::Directive(d) => format!("directive `{d}`"),
            TokenKind::Op(o) => format!("`{o}`"),
            TokenKind::Eof => "end of file".into(),
        }
    }
}

const OPS3: [&str; 4] = ["<<<", ">>>", "===", "!=="];
const OPS2: [&str; 25] = [
    "**", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "~&", "~|", "~^", "^~", "+:", "-:",
    "::", "->", "++", "--", "+=", "-=", "|=", "&=", "^=", ".*",
];
const OPS1: &str = "+-*/%&|^~!<>=?:;,.()[]{}@#'";

#[derive(Debug)]
pub struct LexError {
    pub line: u32,
    pub message: String,
}

pub fn lex(text: &str) -> Result<Vec<Token>, LexError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut line_start = 0usize;

    macro_rules! span {
        ($s:expr, $e:expr, $l:expr, $ls:expr) => {
            Span {
                start: $s,
                end: $e,
                line: $l,
                col: ($s - $ls + 1) as u32,
                end_line: $l,
            }
        };
    }

    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            line += 1;
            i += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            loop {
                if i >= bytes.len() {
                    return Err(LexError {
                        line,
                        message: "unterminated block comment".into(),
                    });
                }
                if bytes[i] == b'\n' {
                    line += 1;
                    line_start = i + 1;
                }
                if bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/') {
                    i += 2;
                    break;
                }
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok_line = line;
        let tok_ls = line_start;

        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$') {
                i += 1;
            }
            toks.push(Token {
                kind: TokenKind::Ident(text[start..i].to_string()),
                span: span!(start, i, tok_line, tok_ls),
            });
            continue;
        }
        if c == b'$' {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            toks.push(Token {
                kind: TokenKind::SysIdent(text[start + 1..i].to_string()),
                span: span!(start, i, tok_line, tok_ls),
            });
            continue;
        }
        if c == b'`' {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            toks.push(Token {
                kind: TokenKind::Directive(text[start + 1..i].to_string()),
                span: span!(start, i, tok_line, tok_ls),
            });
            continue;
        }
        if c == b'"' {
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'\n' {
                    return Err(LexError {
                        line,
                        message: "unterminated string literal".into(),
                    });
                }
                i += 1;
            }
            i += 1;
            toks.push(Token {
                kind: TokenKind::Str(text[start..i.min(bytes.len())].to_string()),
                span: span!(start, i.min(bytes.len()), tok_line, tok_ls),
            });
            continue;
        }
        if c.is_ascii_digit() || (c == b'\'' && is_based_start(bytes.get(i + 1).copied())) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'\'' {
                i += 1;
                if i < bytes.len() && (bytes[i] == b's' || bytes[i] == b'S') {
                    i += 1;
                }
                if i < bytes.len() && matches!(bytes[i].to_ascii_lowercase(), b'b' | b'o' | b'd' | b'h') {
                    i += 1;
                    while i < bytes.len() && (bytes[i].is_ascii_hexdigit() || b"xXzZ?_".contains(&bytes[i])) {
                        i += 1;
                    }
                } else if i < bytes.len() && b"01xXzZ".contains(&bytes[i]) {
                    i += 1;
                } else {
                    return Err(LexError {
                        line,
                        message: "malformed based literal".into(),
                    });
                }
            }
            toks.push(Token {
                kind: TokenKind::Number(text[start..i].to_string()),
                span: span!(start, i, tok_line, tok_ls),
            });
            continue;
        }
        let rest = &text[i..];
        let op = OPS3
            .iter()
            .find(|o| rest.starts_with(**o))
            .or_else(|| OPS2.iter().find(|o| rest.starts_with(**o)))
            .copied()
            .or_else(|| {
                OPS1.find(c as char)
                    .map(|k| &OPS1[k..k + 1])
            });
        match op {
            Some(op) => {
                i += op.len();
                toks.push(Token {
                    kind: TokenKind::Op(op),
                    span: span!(start, i, tok_line, tok_ls),
                });
            }
            None => {
                return Err(LexError {
                    line,
                    message: format!("unexpected character `{}`", rest.chars().next().unwrap()),
                })
            }
        }
    }
    toks.push(Token {
        kind: TokenKind::Eof,
        span: Span {
            start: bytes.len(),
            end: bytes.len(),
            line,
            col: (bytes.len() - line_start + 1) as u32,
            end_line: line,
        },
    });
    Ok(toks)
}

fn is_based_start(c: Option<u8>) -> bool {
    matches!(c, Some(b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H' | b's' | b'S' | b'0' | b'1' | b'x' | b'X' | b'z' | b'Z'))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &str) -> Vec<TokenKind> {
        lex(s).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn numbers_and_ops() {
        assert_eq!(
            kinds("a <= 8'hFF + 'x;"),
            vec![
                TokenKind::Ident("a".into()),
                TokenKind::Op("<="),
                TokenKind::Number("8'hFF".into()),
                TokenKind::Op("+"),
                TokenKind::Number("'x".into()),
                TokenKind::Op(";"),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn spans_track_lines_and_comments() {
        let toks = lex("// c\n/* a\n b */ x\n  y").unwrap();
        assert_eq!(toks[0].span.line, 3);
        assert_eq!(toks[1].span.line, 4);
        assert_eq!(toks[1].span.col, 3);
    }

    #[test]
    fn sensitivity_star_is_not_attribute() {
        assert_eq!(
            kinds("@(*)"),
            vec![TokenKind::Op("@"), TokenKind::Op("("), TokenKind::Op("*"), TokenKind::Op(")"), TokenKind::Eof]
        );
    }
}
