//! Intensional constraint expressions.
//!
//! A small integer expression language used to write constraint utilities as
//! functions of the scope variables instead of enumerating every row, e.g.
//! `2*abs(x12 + x21)` or `if(xg - xc - xt == 0, 0, INF)`. The grammar is
//! published in `docs/expr-grammar.md`.
//!
//! Values are [`Utility`] numbers: 64-bit integers plus the two infinity
//! sentinels `INF` and `NINF`. Sentinels absorb through `+ - * abs min max`;
//! comparing a sentinel, dividing with one, or multiplying one by zero is an
//! evaluation error.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::model::Utility;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

/// Abstract syntax tree of an expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    /// `INF`
    PosInf,
    /// `NINF`
    NegInf,
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("comparison involving an infinity sentinel")]
    SentinelComparison,
    #[error("ambiguous sentinel arithmetic: {0}")]
    SentinelArithmetic(&'static str),
    #[error("integer overflow")]
    Overflow,
}

/// Parses an expression. The result must be numeric; a bare condition such
/// as `a < b` is rejected.
pub fn parse(source: &str) -> Result<Expr, SyntaxError> {
    let tokens = lex(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let (expr, ty, at) = parser.parse_or()?;
    let next = parser.peek();
    if next.tok != Tok::Eof {
        return Err(next.error(format!("unexpected {}", next.tok)));
    }
    if ty != Ty::Num {
        return Err(at.error("expected a numeric expression, found a condition".into()));
    }
    Ok(expr)
}

impl Expr {
    /// Every identifier referenced by the expression.
    pub fn free_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Int(_) | Expr::PosInf | Expr::NegInf => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(e) | Expr::Abs(e) | Expr::Not(e) => e.collect_vars(out),
            Expr::Bin(_, a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b)
            | Expr::Cmp(_, a, b)
            | Expr::And(a, b)
            | Expr::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::If(c, a, b) => {
                c.collect_vars(out);
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluates the expression, resolving variables through `lookup`.
    pub fn evaluate<F>(&self, lookup: &F) -> Result<Utility, EvalError>
    where
        F: Fn(&str) -> Option<i64>,
    {
        match self.eval(lookup)? {
            Val::Num(u) => Ok(u),
            // parse() never yields a boolean root
            Val::Bool(b) => Ok(Utility::Finite(b as i64)),
        }
    }

    fn eval<F>(&self, lookup: &F) -> Result<Val, EvalError>
    where
        F: Fn(&str) -> Option<i64>,
    {
        let num = |e: &Expr| -> Result<Utility, EvalError> {
            match e.eval(lookup)? {
                Val::Num(u) => Ok(u),
                Val::Bool(b) => Ok(Utility::Finite(b as i64)),
            }
        };
        let boolean = |e: &Expr| -> Result<bool, EvalError> {
            match e.eval(lookup)? {
                Val::Bool(b) => Ok(b),
                Val::Num(u) => Ok(u != Utility::Finite(0)),
            }
        };
        Ok(match self {
            Expr::Int(v) => Val::Num(Utility::Finite(*v)),
            Expr::PosInf => Val::Num(Utility::PosInf),
            Expr::NegInf => Val::Num(Utility::NegInf),
            Expr::Var(name) => match lookup(name) {
                Some(v) => Val::Num(Utility::Finite(v)),
                None => return Err(EvalError::UnboundVariable(name.clone())),
            },
            Expr::Neg(e) => Val::Num(negate(num(e)?)?),
            Expr::Bin(op, a, b) => {
                let (a, b) = (num(a)?, num(b)?);
                Val::Num(match op {
                    BinOp::Add => add(a, b)?,
                    BinOp::Sub => add(a, negate(b)?)?,
                    BinOp::Mul => mul(a, b)?,
                    BinOp::Div => div(a, b)?,
                })
            }
            Expr::Abs(e) => Val::Num(match num(e)? {
                Utility::Finite(v) => Utility::Finite(v.checked_abs().ok_or(EvalError::Overflow)?),
                _ => Utility::PosInf,
            }),
            Expr::Min(a, b) => Val::Num(num(a)?.min(num(b)?)),
            Expr::Max(a, b) => Val::Num(num(a)?.max(num(b)?)),
            Expr::If(c, a, b) => {
                if boolean(c)? {
                    Val::Num(num(a)?)
                } else {
                    Val::Num(num(b)?)
                }
            }
            Expr::Cmp(op, a, b) => {
                let (Utility::Finite(a), Utility::Finite(b)) = (num(a)?, num(b)?) else {
                    return Err(EvalError::SentinelComparison);
                };
                Val::Bool(match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                })
            }
            Expr::Not(e) => Val::Bool(!boolean(e)?),
            Expr::And(a, b) => Val::Bool(boolean(a)? && boolean(b)?),
            Expr::Or(a, b) => Val::Bool(boolean(a)? || boolean(b)?),
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(..) => 1,
            Expr::And(..) => 2,
            Expr::Not(_) => 3,
            Expr::Cmp(..) => 4,
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 5,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 6,
            Expr::Neg(_) => 7,
            _ => 8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Val {
    Num(Utility),
    Bool(bool),
}

fn negate(u: Utility) -> Result<Utility, EvalError> {
    Ok(match u {
        Utility::Finite(v) => Utility::Finite(v.checked_neg().ok_or(EvalError::Overflow)?),
        Utility::PosInf => Utility::NegInf,
        Utility::NegInf => Utility::PosInf,
    })
}

fn add(a: Utility, b: Utility) -> Result<Utility, EvalError> {
    a.try_add(b).map_err(|e| match e {
        crate::model::UtilityError::Overflow => EvalError::Overflow,
        crate::model::UtilityError::OppositeInfinities => EvalError::SentinelArithmetic("INF plus NINF"),
    })
}

fn mul(a: Utility, b: Utility) -> Result<Utility, EvalError> {
    use Utility::*;
    let sign = |u: Utility| match u {
        Finite(v) => v.signum(),
        PosInf => 1,
        NegInf => -1,
    };
    match (a, b) {
        (Finite(x), Finite(y)) => x.checked_mul(y).map(Finite).ok_or(EvalError::Overflow),
        _ => match sign(a) * sign(b) {
            0 => Err(EvalError::SentinelArithmetic("infinity times zero")),
            s if s > 0 => Ok(PosInf),
            _ => Ok(NegInf),
        },
    }
}

fn div(a: Utility, b: Utility) -> Result<Utility, EvalError> {
    match (a, b) {
        (_, Utility::Finite(0)) => Err(EvalError::DivisionByZero),
        (Utility::Finite(x), Utility::Finite(y)) => x.checked_div(y).map(Utility::Finite).ok_or(EvalError::Overflow),
        _ => Err(EvalError::SentinelArithmetic("division with an infinity")),
    }
}

impl fmt::Display for Expr {
    /// Canonical form: minimal parentheses, single spaces around binary
    /// operators, `name(a, b)` for calls.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        // left-associative: right operand at equal precedence needs parens
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::PosInf => f.write_str("INF"),
            Expr::NegInf => f.write_str("NINF"),
            Expr::Var(name) => f.write_str(name),
            Expr::Neg(e) => {
                f.write_str("-")?;
                child(f, e, p)
            }
            Expr::Not(e) => {
                f.write_str("not ")?;
                child(f, e, p)
            }
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                child(f, a, p)?;
                write!(f, " {sym} ")?;
                child(f, b, p + 1)
            }
            Expr::Cmp(op, a, b) => {
                child(f, a, p + 1)?;
                write!(f, " {} ", op.symbol())?;
                child(f, b, p + 1)
            }
            Expr::And(a, b) | Expr::Or(a, b) => {
                let word = if matches!(self, Expr::And(..)) { "and" } else { "or" };
                child(f, a, p)?;
                write!(f, " {word} ")?;
                child(f, b, p + 1)
            }
            Expr::Abs(e) => write!(f, "abs({e})"),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::If(c, a, b) => write!(f, "if({c}, {a}, {b})"),
        }
    }
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(i64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    Cmp(CmpOp),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(v) => write!(f, "integer `{v}`"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Cmp(op) => write!(f, "`{}`", op.symbol()),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

impl Pos {
    fn error(self, message: String) -> SyntaxError {
        SyntaxError {
            line: self.line,
            column: self.column,
            message,
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

impl Token {
    fn error(&self, message: String) -> SyntaxError {
        self.pos.error(message)
    }
}

fn lex(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut column) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column };
        if c == '\n' {
            i += 1;
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<i64>()
                .map_err(|_| pos.error(format!("integer literal `{text}` out of range")))?;
            Tok::Int(v)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else {
            let next = chars.get(i + 1).copied();
            let (tok, len) = match (c, next) {
                ('=', Some('=')) => (Tok::Cmp(CmpOp::Eq), 2),
                ('!', Some('=')) => (Tok::Cmp(CmpOp::Ne), 2),
                ('<', Some('=')) => (Tok::Cmp(CmpOp::Le), 2),
                ('>', Some('=')) => (Tok::Cmp(CmpOp::Ge), 2),
                ('<', _) => (Tok::Cmp(CmpOp::Lt), 1),
                ('>', _) => (Tok::Cmp(CmpOp::Gt), 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                ('/', _) => (Tok::Slash, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                (',', _) => (Tok::Comma, 1),
                _ => return Err(pos.error(format!("unexpected character `{c}`"))),
            };
            i += len;
            tok
        };
        column += i - start;
        tokens.push(Token { tok, pos });
    }
    tokens.push(Token {
        tok: Tok::Eof,
        pos: Pos { line, column },
    });
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parser

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Num,
    Bool,
}

const KEYWORDS: &[&str] = &["and", "or", "not", "INF", "NINF", "abs", "min", "max", "if"];

/// Reserved words, which cannot name variables.
pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type Parsed = (Expr, Ty, Pos);

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn is_keyword(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == word)
    }

    fn expect(&mut self, tok: Tok) -> Result<(), SyntaxError> {
        let t = self.bump();
        if t.tok == tok {
            Ok(())
        } else {
            Err(t.error(format!("expected {tok}, found {}", t.tok)))
        }
    }

    fn want(&self, (e, ty, at): Parsed, expected: Ty) -> Result<Expr, SyntaxError> {
        if ty == expected {
            Ok(e)
        } else {
            let msg = match expected {
                Ty::Num => "expected a numeric operand, found a condition",
                Ty::Bool => "expected a condition, found a numeric expression",
            };
            Err(at.error(msg.into()))
        }
    }

    fn parse_or(&mut self) -> Result<Parsed, SyntaxError> {
        let first = self.parse_and()?;
        if !self.is_keyword("or") {
            return Ok(first);
        }
        let at = first.2;
        let mut acc = self.want(first, Ty::Bool)?;
        while self.is_keyword("or") {
            self.bump();
            let rhs = self.parse_and()?;
            let rhs = self.want(rhs, Ty::Bool)?;
            acc = Expr::Or(Box::new(acc), Box::new(rhs));
        }
        Ok((acc, Ty::Bool, at))
    }

    fn parse_and(&mut self) -> Result<Parsed, SyntaxError> {
        let first = self.parse_not()?;
        if !self.is_keyword("and") {
            return Ok(first);
        }
        let at = first.2;
        let mut acc = self.want(first, Ty::Bool)?;
        while self.is_keyword("and") {
            self.bump();
            let rhs = self.parse_not()?;
            let rhs = self.want(rhs, Ty::Bool)?;
            acc = Expr::And(Box::new(acc), Box::new(rhs));
        }
        Ok((acc, Ty::Bool, at))
    }

    fn parse_not(&mut self) -> Result<Parsed, SyntaxError> {
        if self.is_keyword("not") {
            let at = self.bump().pos;
            let inner = self.parse_not()?;
            let inner = self.want(inner, Ty::Bool)?;
            return Ok((Expr::Not(Box::new(inner)), Ty::Bool, at));
        }
        self.parse_cmp()
    }

    fn parse_cmp(&mut self) -> Result<Parsed, SyntaxError> {
        let lhs = self.parse_add()?;
        let Tok::Cmp(op) = self.peek().tok else {
            return Ok(lhs);
        };
        let at = lhs.2;
        let lhs = self.want(lhs, Ty::Num)?;
        self.bump();
        let rhs = self.parse_add()?;
        let rhs = self.want(rhs, Ty::Num)?;
        if let Tok::Cmp(_) = self.peek().tok {
            return Err(self.peek().error("comparisons cannot be chained".into()));
        }
        Ok((Expr::Cmp(op, Box::new(lhs), Box::new(rhs)), Ty::Bool, at))
    }

    fn parse_add(&mut self) -> Result<Parsed, SyntaxError> {
        let first = self.parse_mul()?;
        if !matches!(self.peek().tok, Tok::Plus | Tok::Minus) {
            return Ok(first);
        }
        let at = first.2;
        let mut acc = self.want(first, Ty::Num)?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_mul()?;
            let rhs = self.want(rhs, Ty::Num)?;
            acc = Expr::Bin(op, Box::new(acc), Box::new(rhs));
        }
        Ok((acc, Ty::Num, at))
    }

    fn parse_mul(&mut self) -> Result<Parsed, SyntaxError> {
        let first = self.parse_unary()?;
        if !matches!(self.peek().tok, Tok::Star | Tok::Slash) {
            return Ok(first);
        }
        let at = first.2;
        let mut acc = self.want(first, Ty::Num)?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_unary()?;
            let rhs = self.want(rhs, Ty::Num)?;
            acc = Expr::Bin(op, Box::new(acc), Box::new(rhs));
        }
        Ok((acc, Ty::Num, at))
    }

    fn parse_unary(&mut self) -> Result<Parsed, SyntaxError> {
        if self.peek().tok == Tok::Minus {
            let at = self.bump().pos;
            let inner = self.parse_unary()?;
            let inner = self.want(inner, Ty::Num)?;
            return Ok((Expr::Neg(Box::new(inner)), Ty::Num, at));
        }
        self.parse_atom()
    }

    fn parse_atom(&mut self) -> Result<Parsed, SyntaxError> {
        let t = self.bump();
        let at = t.pos;
        match t.tok {
            Tok::Int(v) => Ok((Expr::Int(v), Ty::Num, at)),
            Tok::LParen => {
                let inner = self.parse_or()?;
                self.expect(Tok::RParen)?;
                Ok((inner.0, inner.1, at))
            }
            Tok::Ident(name) => match name.as_str() {
                "INF" => Ok((Expr::PosInf, Ty::Num, at)),
                "NINF" => Ok((Expr::NegInf, Ty::Num, at)),
                "abs" => {
                    let mut args = self.call_args(1)?;
                    Ok((Expr::Abs(Box::new(args.remove(0))), Ty::Num, at))
                }
                "min" | "max" => {
                    let mut args = self.call_args(2)?;
                    let b = Box::new(args.pop().unwrap());
                    let a = Box::new(args.pop().unwrap());
                    let e = if name == "min" {
                        Expr::Min(a, b)
                    } else {
                        Expr::Max(a, b)
                    };
                    Ok((e, Ty::Num, at))
                }
                "if" => {
                    self.expect(Tok::LParen)?;
                    let cond = self.parse_or()?;
                    let cond = self.want(cond, Ty::Bool)?;
                    self.expect(Tok::Comma)?;
                    let then = self.parse_or()?;
                    let then = self.want(then, Ty::Num)?;
                    self.expect(Tok::Comma)?;
                    let other = self.parse_or()?;
                    let other = self.want(other, Ty::Num)?;
                    self.expect(Tok::RParen)?;
                    Ok((Expr::If(Box::new(cond), Box::new(then), Box::new(other)), Ty::Num, at))
                }
                kw if KEYWORDS.contains(&kw) => Err(at.error(format!("unexpected keyword `{kw}`"))),
                _ => Ok((Expr::Var(name), Ty::Num, at)),
            },
            other => Err(at.error(format!("unexpected {other}"))),
        }
    }

    fn call_args(&mut self, n: usize) -> Result<Vec<Expr>, SyntaxError> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                self.expect(Tok::Comma)?;
            }
            let arg = self.parse_or()?;
            args.push(self.want(arg, Ty::Num)?);
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }
}
