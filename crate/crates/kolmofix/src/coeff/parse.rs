//! Text grammar for coefficient expressions.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := "-" unary | power
//! power  := atom ("^" unary)?                      (right-associative)
//! atom   := NUMBER | "x"N | "y"N | "(" expr ")"
//!         | "ABS" "(" expr ")"
//!         | "MIN" "(" expr "," expr ")" | "MAX" "(" expr "," expr ")"
//!         | "IND" "(" expr (">=" | "<=") signed-number ")"
//!         | "MOM" "(" number "," ("abs" | "radial" | "y"N) ")"
//!         | "INT" "(" expr-in-y ")"
//! ```
//!
//! Function names are case-insensitive; variables are `x1..xd` (state) and
//! `y1..yd` (integration variable, only inside `INT`). A unary minus in
//! front of a literal folds into a negative literal so printing and parsing
//! are mutually canonical.

use crate::coeff::ast::{CoeffExpr, IndOp};
use crate::error::{Error, Result};
use crate::measure::MomentKind;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Ge,
    Le,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn err(line: usize, col: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        col,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0usize;
    let mut line = 1usize;
    let mut col = 1usize;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let (tline, tcol) = (line, col);
        let mut push1 = |tok: Tok, i: &mut usize, col: &mut usize| {
            out.push(Spanned {
                tok,
                line: tline,
                col: tcol,
            });
            *i += 1;
            *col += 1;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '+' => push1(Tok::Plus, &mut i, &mut col),
            '-' => push1(Tok::Minus, &mut i, &mut col),
            '*' => push1(Tok::Star, &mut i, &mut col),
            '/' => push1(Tok::Slash, &mut i, &mut col),
            '^' => push1(Tok::Caret, &mut i, &mut col),
            '(' => push1(Tok::LParen, &mut i, &mut col),
            ')' => push1(Tok::RParen, &mut i, &mut col),
            ',' => push1(Tok::Comma, &mut i, &mut col),
            '>' | '<' => {
                if i + 1 < bytes.len() && bytes[i + 1] as char == '=' {
                    out.push(Spanned {
                        tok: if c == '>' { Tok::Ge } else { Tok::Le },
                        line,
                        col,
                    });
                    i += 2;
                    col += 2;
                } else {
                    return Err(err(line, col, format!("expected `{c}=`, found lone `{c}`")));
                }
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] as char == '.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let save = i;
                    i += 1;
                    if i < bytes.len() && matches!(bytes[i] as char, '+' | '-') {
                        i += 1;
                    }
                    if i < bytes.len() && bytes[i].is_ascii_digit() {
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    } else {
                        // Not an exponent after all (e.g. `2e` would be an
                        // identifier boundary error); rewind.
                        i = save;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s
                    .parse()
                    .map_err(|_| err(line, col, format!("bad number literal {s:?}")))?;
                out.push(Spanned {
                    tok: Tok::Num(v),
                    line,
                    col,
                });
                col += i - start;
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Spanned {
                    tok: Tok::Ident(text[start..i].to_string()),
                    line,
                    col,
                });
                col += i - start;
            }
            other => return Err(err(line, col, format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

/// Recursion cap for the descent (guards the call stack against
/// pathological inputs like ten thousand opening parentheses).
const MAX_PARSE_DEPTH: usize = 200;

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end_line: usize,
    end_col: usize,
    depth: usize,
}

impl Parser {
    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_PARSE_DEPTH {
            let (line, col) = self.here();
            return Err(err(line, col, "expression nested too deeply"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let (line, col) = self.here();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(err(line, col, format!("expected {what}, found {t:?}"))),
            None => Err(err(line, col, format!("expected {what}, found end of input"))),
        }
    }

    fn expr(&mut self) -> Result<CoeffExpr> {
        self.enter()?;
        let out = self.expr_inner();
        self.leave();
        out
    }

    fn expr_inner(&mut self) -> Result<CoeffExpr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    acc = CoeffExpr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    acc = CoeffExpr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<CoeffExpr> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    acc = CoeffExpr::Mul(Box::new(acc), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    acc = CoeffExpr::Div(Box::new(acc), Box::new(self.unary()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<CoeffExpr> {
        self.enter()?;
        let out = if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            // Canonical fold: a minus sign on a literal is the literal's sign.
            self.unary().map(|inner| match inner {
                CoeffExpr::Const(c) => CoeffExpr::Const(-c),
                other => CoeffExpr::Neg(Box::new(other)),
            })
        } else {
            self.power()
        };
        self.leave();
        out
    }

    fn power(&mut self) -> Result<CoeffExpr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let exp = self.unary()?;
            return Ok(CoeffExpr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn signed_number(&mut self, what: &str) -> Result<f64> {
        let (line, col) = self.here();
        let neg = if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            true
        } else {
            false
        };
        // Accept a parenthesized literal too: `(-2)`.
        if !neg && matches!(self.peek(), Some(Tok::LParen)) {
            self.bump();
            let v = self.signed_number(what)?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(v);
        }
        match self.bump() {
            Some(Tok::Num(v)) => Ok(if neg { -v } else { v }),
            other => Err(err(
                line,
                col,
                format!("expected {what} (a number), found {other:?}"),
            )),
        }
    }

    fn var_index(name: &str) -> Option<(char, usize)> {
        let mut chars = name.chars();
        let head = chars.next()?;
        if !matches!(head, 'x' | 'y') {
            return None;
        }
        let rest: String = chars.collect();
        if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let idx: usize = rest.parse().ok()?;
        if idx == 0 {
            return None;
        }
        Some((head, idx - 1))
    }

    fn atom(&mut self) -> Result<CoeffExpr> {
        let (line, col) = self.here();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(CoeffExpr::Const(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if let Some((head, idx)) = Self::var_index(&name) {
                    return Ok(match head {
                        'x' => CoeffExpr::X(idx),
                        _ => CoeffExpr::Y(idx),
                    });
                }
                match name.to_ascii_uppercase().as_str() {
                    "ABS" => {
                        self.expect(Tok::LParen, "`(` after ABS")?;
                        let e = self.expr()?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(CoeffExpr::Abs(Box::new(e)))
                    }
                    "MIN" | "MAX" => {
                        let is_min = name.eq_ignore_ascii_case("MIN");
                        self.expect(Tok::LParen, "`(`")?;
                        let a = self.expr()?;
                        self.expect(Tok::Comma, "`,`")?;
                        let b = self.expr()?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(if is_min {
                            CoeffExpr::Min(Box::new(a), Box::new(b))
                        } else {
                            CoeffExpr::Max(Box::new(a), Box::new(b))
                        })
                    }
                    "IND" => {
                        self.expect(Tok::LParen, "`(` after IND")?;
                        let e = self.expr()?;
                        let (oline, ocol) = self.here();
                        let op = match self.bump() {
                            Some(Tok::Ge) => IndOp::Ge,
                            Some(Tok::Le) => IndOp::Le,
                            other => {
                                return Err(err(
                                    oline,
                                    ocol,
                                    format!("expected `>=` or `<=` in IND, found {other:?}"),
                                ))
                            }
                        };
                        let c = self.signed_number("indicator threshold")?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(CoeffExpr::Ind(Box::new(e), op, c))
                    }
                    "MOM" => {
                        self.expect(Tok::LParen, "`(` after MOM")?;
                        let p = self.signed_number("moment order")?;
                        self.expect(Tok::Comma, "`,`")?;
                        let (kline, kcol) = self.here();
                        let kind = match self.bump() {
                            Some(Tok::Ident(k)) => {
                                if k.eq_ignore_ascii_case("abs") {
                                    MomentKind::Abs
                                } else if k.eq_ignore_ascii_case("radial") {
                                    MomentKind::Radial
                                } else if let Some(('y', idx)) = Self::var_index(&k) {
                                    MomentKind::Component(idx)
                                } else {
                                    return Err(err(
                                        kline,
                                        kcol,
                                        format!(
                                            "unknown moment kind {k:?}: expected abs, radial, or y<i>"
                                        ),
                                    ));
                                }
                            }
                            other => {
                                return Err(err(
                                    kline,
                                    kcol,
                                    format!("expected a moment kind, found {other:?}"),
                                ))
                            }
                        };
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(CoeffExpr::Mom(p, kind))
                    }
                    "INT" => {
                        self.expect(Tok::LParen, "`(` after INT")?;
                        let e = self.expr()?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(CoeffExpr::Int(Box::new(e)))
                    }
                    _ => Err(err(line, col, format!("unknown identifier {name:?}"))),
                }
            }
            Some(t) => Err(err(line, col, format!("unexpected token {t:?}"))),
            None => Err(err(line, col, "unexpected end of input".to_string())),
        }
    }
}

/// Parse a coefficient expression, validate its variable scoping, and
/// return the tree. Errors carry 1-based line and column positions.
pub fn parse_coeff(text: &str) -> Result<CoeffExpr> {
    let toks = tokenize(text)?;
    let (end_line, end_col) = {
        let lines: Vec<&str> = text.split('\n').collect();
        (lines.len(), lines.last().map(|l| l.len() + 1).unwrap_or(1))
    };
    let mut p = Parser {
        toks,
        pos: 0,
        end_line,
        end_col,
        depth: 0,
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        let (line, col) = p.here();
        return Err(err(
            line,
            col,
            format!("trailing input starting at {:?}", p.toks[p.pos].tok),
        ));
    }
    e.validate()?;
    Ok(e)
}
