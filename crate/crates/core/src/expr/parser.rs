//! Recursive-descent parser for scalar expressions.
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := factor (('*' | '/') factor)*
//! factor   := ('+' | '-') factor | power
//! power    := primary ('^' exponent)?
//! exponent := ('+' | '-')? integer | '(' ('+' | '-')? integer ')'
//! primary  := number | identifier | function '(' expr ')' | '(' expr ')'
//! function := exp | ln | sin | cos
//! ```
//!
//! Identifiers resolve to chart coordinates first, then to named parameters.
//! Positions in errors count characters from zero.

use std::collections::BTreeMap;

use super::ast::{Expr, Func};
use super::chart::ChartSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer {
    chars: Vec<char>,
    tokens: Vec<(Tok, usize)>,
}

fn syntax(position: usize, expected: &[&str]) -> Error {
    Error::SyntaxError {
        position,
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

impl Lexer {
    fn run(text: &str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer {
            chars: text.chars().collect(),
            tokens: Vec::new(),
        };
        let mut i = 0;
        while i < lx.chars.len() {
            let c = lx.chars[i];
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            let tok = match c {
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '^' => Tok::Caret,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                c if c.is_ascii_digit() || c == '.' => {
                    let (tok, next) = lx.number(i)?;
                    i = next;
                    lx.tokens.push((tok, start));
                    continue;
                }
                c if c.is_ascii_alphabetic() => {
                    while i < lx.chars.len()
                        && (lx.chars[i].is_ascii_alphanumeric() || lx.chars[i] == '_')
                    {
                        i += 1;
                    }
                    let name: String = lx.chars[start..i].iter().collect();
                    lx.tokens.push((Tok::Ident(name), start));
                    continue;
                }
                _ => {
                    return Err(syntax(
                        i,
                        &["number", "identifier", "operator", "parenthesis"],
                    ))
                }
            };
            lx.tokens.push((tok, start));
            i += 1;
        }
        lx.tokens.push((Tok::End, lx.chars.len()));
        Ok(lx.tokens)
    }

    fn number(&self, start: usize) -> Result<(Tok, usize)> {
        let s = &self.chars;
        let mut i = start;
        let mut digits = 0;
        let mut integral = true;
        while i < s.len() && s[i].is_ascii_digit() {
            i += 1;
            digits += 1;
        }
        if i < s.len() && s[i] == '.' {
            integral = false;
            i += 1;
            while i < s.len() && s[i].is_ascii_digit() {
                i += 1;
                digits += 1;
            }
        }
        if digits == 0 {
            return Err(syntax(start, &["digit"]));
        }
        if i < s.len() && (s[i] == 'e' || s[i] == 'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == '+' || s[j] == '-') {
                j += 1;
            }
            let exp_start = j;
            while j < s.len() && s[j].is_ascii_digit() {
                j += 1;
            }
            if j == exp_start {
                return Err(syntax(j, &["exponent digits"]));
            }
            integral = false;
            i = j;
        }
        let text: String = s[start..i].iter().collect();
        let value: f64 = text.parse().map_err(|_| syntax(start, &["number"]))?;
        Ok((Tok::Num(value, integral), i))
    }
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    chart: &'a ChartSpec,
    params: &'a BTreeMap<String, f64>,
}

const OPERAND: &[&str] = &["number", "identifier", "(", "-", "+"];

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn here(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, label: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.here(), &[label]))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = Expr::add(acc, self.term()?);
                }
                Tok::Minus => {
                    self.bump();
                    acc = Expr::sub(acc, self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    acc = Expr::mul(acc, self.factor()?);
                }
                Tok::Slash => {
                    self.bump();
                    acc = Expr::div(acc, self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Expr::neg(self.factor()?))
            }
            Tok::Plus => {
                self.bump();
                self.factor()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let parenthesized = *self.peek() == Tok::LParen;
        if parenthesized {
            self.bump();
        }
        let sign = match self.peek() {
            Tok::Minus => {
                self.bump();
                -1
            }
            Tok::Plus => {
                self.bump();
                1
            }
            _ => 1,
        };
        let at = self.here();
        let k = match self.bump() {
            Tok::Num(v, true) if v <= i32::MAX as f64 => sign * v as i32,
            _ => return Err(syntax(at, &["integer exponent"])),
        };
        if parenthesized {
            self.expect(Tok::RParen, ")")?;
        }
        if *self.peek() == Tok::Caret {
            return Err(syntax(
                self.here(),
                &["operator other than ^ (parenthesize powers)"],
            ));
        }
        Ok(Expr::pow(base, k))
    }

    fn primary(&mut self) -> Result<Expr> {
        let at = self.here();
        match self.bump() {
            Tok::Num(v, _) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, ")")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() == Tok::LParen {
                        self.bump();
                        let arg = self.expr()?;
                        self.expect(Tok::RParen, ")")?;
                        return Ok(Expr::func(func, arg));
                    }
                    if self.chart.index_of(&name).is_none() {
                        return Err(syntax(self.here(), &["("]));
                    }
                }
                if let Some(i) = self.chart.index_of(&name) {
                    Ok(Expr::Var(i))
                } else if let Some(&v) = self.params.get(&name) {
                    Ok(Expr::Const(v))
                } else {
                    Err(Error::UnknownIdentifier(name))
                }
            }
            _ => Err(syntax(at, OPERAND)),
        }
    }
}

/// Parse `text` over `chart`, substituting named parameters.
pub fn parse_expr(text: &str, chart: &ChartSpec, params: &BTreeMap<String, f64>) -> Result<Expr> {
    let tokens = Lexer::run(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        chart,
        params,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(syntax(p.here(), &["operator", "end of input"]));
    }
    Ok(e)
}
