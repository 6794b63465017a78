use std::fmt;

use thiserror::Error;

use super::{BinOp, Expr, Func, ImmersionSpec};
use crate::ambient::AmbientSpec;

/// Nesting limit for parentheses, calls and unary minus.
const MAX_DEPTH: usize = 200;
/// Largest accepted integer exponent.
const MAX_EXPONENT: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax {
        expected: Vec<String>,
        found: String,
    },
    Arity {
        expected: usize,
        found: usize,
    },
    UnknownName {
        token: String,
    },
    Invalid {
        message: String,
    },
}

/// Diagnostic with a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: ", self.line, self.column)?;
        match &self.kind {
            ParseErrorKind::Syntax { expected, found } => {
                if expected.len() == 1 {
                    write!(f, "expected {}, found {found}", expected[0])
                } else {
                    write!(f, "expected one of {}, found {found}", expected.join(", "))
                }
            }
            ParseErrorKind::Arity { expected, found } => {
                write!(
                    f,
                    "arity error: expected {expected} components, found {found}"
                )
            }
            ParseErrorKind::UnknownName { token } => write!(f, "unknown name `{token}`"),
            ParseErrorKind::Invalid { message } => write!(f, "{message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Punct(char),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(s) => format!("number `{s}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_digit() || (c == '.' && i + 1 < chars.len() && chars[i + 1].is_ascii_digit())
        {
            let s = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[s..i].iter().collect();
            col += i - s;
            out.push(Token {
                tok: Tok::Num(text),
                line: start_line,
                column: start_col,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[s..i].iter().collect();
            col += i - s;
            out.push(Token {
                tok: Tok::Ident(text),
                line: start_line,
                column: start_col,
            });
            continue;
        }
        if "=;[](),+-*/^".contains(c) {
            out.push(Token {
                tok: Tok::Punct(c),
                line,
                column: col,
            });
            i += 1;
            col += 1;
            continue;
        }
        return Err(ParseError {
            kind: ParseErrorKind::Syntax {
                expected: vec!["a number, name or operator".into()],
                found: format!("character {c:?}"),
            },
            line,
            column: col,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Number of domain variables, when known.
    nvars: Option<usize>,
    depth: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &Token, kind: ParseErrorKind) -> ParseError {
        ParseError {
            kind,
            line: t.line,
            column: t.column,
        }
    }

    fn expected(&self, what: &[&str]) -> ParseError {
        let t = self.peek();
        self.error_at(
            t,
            ParseErrorKind::Syntax {
                expected: what.iter().map(|s| s.to_string()).collect(),
                found: t.tok.describe(),
            },
        )
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek().tok == Tok::Punct(c)
    }

    fn eat_punct(&mut self, c: char) -> PResult<Token> {
        if self.is_punct(c) {
            Ok(self.bump())
        } else {
            Err(self.expected(&[&format!("`{c}`")]))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> PResult<Token> {
        if self.peek().tok == Tok::Ident(kw.to_string()) {
            Ok(self.bump())
        } else {
            Err(self.expected(&[&format!("`{kw}`")]))
        }
    }

    fn parse_int(&mut self) -> PResult<(u64, Token)> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Num(s) if s.chars().all(|c| c.is_ascii_digit()) => {
                self.bump();
                let v = s.parse::<u64>().map_err(|_| {
                    self.error_at(
                        &t,
                        ParseErrorKind::Invalid {
                            message: format!("integer `{s}` is too large"),
                        },
                    )
                })?;
                Ok((v, t))
            }
            _ => Err(self.expected(&["an integer"])),
        }
    }

    fn parse_real_token(&mut self) -> PResult<f64> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Num(s) => {
                self.bump();
                let v: f64 = s.parse().map_err(|_| {
                    self.error_at(
                        &t,
                        ParseErrorKind::Invalid {
                            message: format!("malformed number `{s}`"),
                        },
                    )
                })?;
                if !v.is_finite() {
                    return Err(self.error_at(
                        &t,
                        ParseErrorKind::Invalid {
                            message: format!("number `{s}` is out of range"),
                        },
                    ));
                }
                Ok(v)
            }
            _ => Err(self.expected(&["a number"])),
        }
    }

    fn parse_signed_real(&mut self) -> PResult<f64> {
        if self.is_punct('-') {
            self.bump();
            Ok(-self.parse_real_token()?)
        } else {
            if self.is_punct('+') {
                self.bump();
            }
            self.parse_real_token()
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let t = self.peek().clone();
            return Err(self.error_at(
                &t,
                ParseErrorKind::Invalid {
                    message: format!("expression nesting exceeds {MAX_DEPTH}"),
                },
            ));
        }
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_punct('+') {
                BinOp::Add
            } else if self.is_punct('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.is_punct('*') {
                BinOp::Mul
            } else if self.is_punct('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        let base = self.base()?;
        if self.is_punct('^') {
            self.bump();
            let (k, t) = self.parse_int()?;
            if k > MAX_EXPONENT {
                return Err(self.error_at(
                    &t,
                    ParseErrorKind::Invalid {
                        message: format!("exponent {k} exceeds {MAX_EXPONENT}"),
                    },
                ));
            }
            return Ok(Expr::pow(base, k as u32));
        }
        Ok(base)
    }

    fn base(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = self.base_inner();
        self.depth -= 1;
        r
    }

    fn base_inner(&mut self) -> PResult<Expr> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Num(_) => Ok(Expr::Num(self.parse_real_token()?)),
            Tok::Punct('-') => {
                self.bump();
                if matches!(self.peek().tok, Tok::Num(_)) {
                    Ok(Expr::Num(-self.parse_real_token()?))
                } else {
                    Ok(Expr::neg(self.base()?))
                }
            }
            Tok::Punct('(') => {
                self.bump();
                let e = self.expr()?;
                self.eat_punct(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(f) = Func::from_name(name) {
                    self.eat_punct('(')?;
                    let e = self.expr()?;
                    self.eat_punct(')')?;
                    return Ok(Expr::func(f, e));
                }
                if let Some(idx) = parse_var(name) {
                    if let Some(nv) = self.nvars {
                        if idx == 0 || idx > nv {
                            return Err(self.error_at(
                                &t,
                                ParseErrorKind::UnknownName {
                                    token: name.clone(),
                                },
                            ));
                        }
                    } else if idx == 0 {
                        return Err(self.error_at(
                            &t,
                            ParseErrorKind::UnknownName {
                                token: name.clone(),
                            },
                        ));
                    }
                    return Ok(Expr::Var(idx - 1));
                }
                Err(self.error_at(
                    &t,
                    ParseErrorKind::UnknownName {
                        token: name.clone(),
                    },
                ))
            }
            _ => Err(self.expected(&["a number", "a variable", "a function", "`(`", "`-`"])),
        }
    }

    fn ambient(&mut self) -> PResult<AmbientSpec> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(s) if s == "flat" => {
                self.bump();
                Ok(AmbientSpec::flat(0))
            }
            Tok::Ident(s) if s == "space_form" => {
                self.bump();
                self.eat_punct('(')?;
                let rho = self.parse_signed_real()?;
                self.eat_punct(')')?;
                Ok(AmbientSpec::space_form(0, rho))
            }
            _ => Err(self.expected(&["`flat`", "`space_form`"])),
        }
    }

    fn file(&mut self) -> PResult<ImmersionSpec> {
        self.eat_keyword("n")?;
        self.eat_punct('=')?;
        let (n, nt) = self.parse_int()?;
        if !(1..=4).contains(&n) {
            return Err(self.error_at(
                &nt,
                ParseErrorKind::Invalid {
                    message: format!("n = {n} is outside 1..=4"),
                },
            ));
        }
        let n = n as usize;
        self.eat_punct(';')?;
        self.eat_keyword("ambient")?;
        self.eat_punct('=')?;
        let mut ambient = self.ambient()?;
        ambient.complex_dim = 2 * n;
        self.eat_punct(';')?;
        let mut periodic = false;
        if self.peek().tok == Tok::Ident("periodic".into()) {
            self.bump();
            self.eat_punct(';')?;
            periodic = true;
        }
        self.eat_keyword("map")?;
        self.eat_punct('=')?;
        let open = self.eat_punct('[')?;
        self.nvars = Some(2 * n);
        let mut comps = vec![self.expr()?];
        loop {
            if self.is_punct(',') {
                self.bump();
                comps.push(self.expr()?);
            } else if self.is_punct(']') {
                self.bump();
                break;
            } else {
                let what: &[&str] = if comps.len() < 4 * n {
                    &["`,`", "`]`"]
                } else {
                    &["`]`", "`,`"]
                };
                return Err(self.expected(what));
            }
        }
        if self.is_punct(';') {
            self.bump();
        }
        if self.peek().tok != Tok::Eof {
            return Err(self.expected(&["end of input"]));
        }
        if comps.len() != 4 * n {
            return Err(self.error_at(
                &open,
                ParseErrorKind::Arity {
                    expected: 4 * n,
                    found: comps.len(),
                },
            ));
        }
        Ok(ImmersionSpec {
            name: String::new(),
            n,
            ambient,
            periodic,
            components: comps,
        })
    }
}

fn parse_var(name: &str) -> Option<usize> {
    let rest = name.strip_prefix('u')?;
    if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) || rest.len() > 3 {
        return None;
    }
    rest.parse().ok()
}

/// Parses an `.imm` document.
pub fn parse_immersion(text: &str) -> Result<ImmersionSpec, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        nvars: None,
        depth: 0,
    };
    p.file()
}

/// Parses a single expression; `nvars` bounds the accepted variables.
pub fn parse_expr(text: &str, nvars: Option<usize>) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        nvars,
        depth: 0,
    };
    let e = p.expr()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.expected(&["end of input"]));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_graph_parses() {
        let s = parse_immersion("n=1; ambient=flat; map=[u1, u2, -u2, u1]").unwrap();
        assert_eq!(s.n, 1);
        assert_eq!(s.components.len(), 4);
        assert_eq!(s.components[2], Expr::neg(Expr::Var(1)));
    }

    #[test]
    fn missing_bracket_is_positioned() {
        let e = parse_immersion("n=1; ambient=flat; map=[u1, u2, u1, u2").unwrap_err();
        assert_eq!(e.line, 1);
        match e.kind {
            ParseErrorKind::Syntax { expected, found } => {
                assert!(expected.iter().any(|s| s == "`]`"));
                assert_eq!(found, "end of input");
            }
            k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn arity_error_names_expected_count() {
        let e = parse_immersion("n=2; ambient=flat; map=[u1,u2,u3]").unwrap_err();
        assert_eq!(
            e.kind,
            ParseErrorKind::Arity {
                expected: 8,
                found: 3
            }
        );
        assert!(e.to_string().contains("expected 8 components, found 3"));
    }

    #[test]
    fn unknown_names() {
        let e = parse_immersion("n=1; ambient=flat; map=[u1, u2, tan(u1), u3]").unwrap_err();
        assert_eq!(
            e.kind,
            ParseErrorKind::UnknownName {
                token: "tan".into()
            }
        );
        assert_eq!(e.column, 33);
        let e = parse_immersion("n=1; ambient=flat; map=[u1, u2, u1, u3]").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownName { token: "u3".into() });
    }

    #[test]
    fn header_variants() {
        let s = parse_immersion("# comment\nn = 1;\nambient = space_form(-0.5);\nperiodic;\nmap = [cos(u1), sin(u1), 0, u2^2]\n")
            .unwrap();
        assert!(s.periodic);
        assert_eq!(s.ambient.rho, -0.5);
        assert_eq!(s.components[3], Expr::pow(Expr::Var(1), 2));
    }

    #[test]
    fn precedence_and_literals() {
        let e = parse_expr("-2^2", None).unwrap();
        assert_eq!(e, Expr::pow(Expr::Num(-2.0), 2));
        let e = parse_expr("1 - 2 - 3", None).unwrap();
        assert_eq!(e.eval_f64(&[]), -4.0);
        let e = parse_expr("2*3^2/6", None).unwrap();
        assert_eq!(e.eval_f64(&[]), 3.0);
        let e = parse_expr("-(u1)^2", Some(1)).unwrap();
        assert_eq!(e.eval_f64(&[3.0]), 9.0);
    }

    #[test]
    fn deep_nesting_is_rejected_not_crashing() {
        let text = "(".repeat(100_000);
        assert!(parse_expr(&text, None).is_err());
        let text = "-".repeat(100_000);
        assert!(parse_expr(&text, None).is_err());
    }
}
