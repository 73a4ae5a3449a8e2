//! Arithmetic DSL for metric components.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = atom [ "^" exponent ] ;            (* right associative *)
//! exponent= "-" exponent | power ;
//! atom    = number | ident | ident "(" expr ")" | "(" expr ")" ;
//! number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! ident   = letter { letter | digit | "_" } ;
//! ```
//!
//! Identifiers resolve to coordinates `x1..xn`, the constant `pi`, declared
//! parameters, the functions `sin cos exp log sqrt`, or declared profiles
//! (numeric univariate functions such as a warping function `h(x1)`).
//! Precedence is `^` above unary minus above `* /` above `+ -`, so `-x^2`
//! is `-(x^2)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::jet::{Jet, JetDomainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Expression tree. Coordinates are stored zero-based (`x1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Param(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Func(Func, Box<Expr>),
    Profile(String, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// One-based coordinate, `Expr::var(1)` is `x1`.
    pub fn var(one_based: usize) -> Expr {
        assert!(one_based >= 1, "coordinates are numbered from 1");
        Expr::Var(one_based - 1)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    /// Largest one-based coordinate index referenced, 0 if none.
    pub fn max_var(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Param(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Func(_, a) | Expr::Profile(_, a) => a.max_var(),
            Expr::Bin(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    /// True when the expression does not depend on coordinates or profiles.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Param(_) => true,
            Expr::Var(_) | Expr::Profile(..) => false,
            Expr::Neg(a) | Expr::Func(_, a) => a.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    pub fn params(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Param(p) => {
                out.insert(p.clone());
            }
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Func(_, a) => a.params(out),
            Expr::Profile(_, a) => a.params(out),
            Expr::Bin(_, a, b) => {
                a.params(out);
                b.params(out);
            }
        }
    }

    pub fn profiles(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Profile(name, a) => {
                out.insert(name.clone());
                a.profiles(out);
            }
            Expr::Num(_) | Expr::Var(_) | Expr::Param(_) => {}
            Expr::Neg(a) | Expr::Func(_, a) => a.profiles(out),
            Expr::Bin(_, a, b) => {
                a.profiles(out);
                b.profiles(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // parenthesized so `(-a)^b` does not reparse as `-(a^b)`
            Expr::Num(v) if v.is_sign_negative() => write!(f, "({v})"),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Param(p) => write!(f, "{p}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Func(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Profile(name, a) => write!(f, "{name}({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        offset: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

/// Names an expression may reference besides coordinates and builtins.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    pub params: BTreeSet<String>,
    pub profiles: BTreeSet<String>,
    /// Highest admissible coordinate index (one-based); `None` = unbounded.
    pub max_var: Option<usize>,
}

impl SymbolTable {
    pub fn with_params<I, S>(params: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SymbolTable {
            params: params.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    pub fn profile(mut self, name: impl Into<String>) -> Self {
        self.profiles.insert(name.into());
        self
    }

    pub fn dimension(mut self, n: usize) -> Self {
        self.max_var = Some(n);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((Tok::Num(v), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push((tok, start));
        i += c.len_utf8();
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    symbols: &'a SymbolTable,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, o)| *o).unwrap_or(self.end)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.exponent()?;
            return Ok(Expr::bin(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            let inner = self.exponent()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn call_args(&mut self, name: &str, name_offset: usize) -> Result<Expr, ParseError> {
        // Current token is '('.
        self.pos += 1;
        let mut args = vec![self.expr()?];
        while let Some(Tok::Comma) = self.peek() {
            self.pos += 1;
            args.push(self.expr()?);
        }
        match self.peek() {
            Some(Tok::RParen) => self.pos += 1,
            _ => return self.syntax("expected `)`"),
        }
        if args.len() != 1 {
            return Err(ParseError::Arity {
                name: name.to_string(),
                expected: 1,
                found: args.len(),
                offset: name_offset,
            });
        }
        Ok(args.pop().expect("one argument"))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => self.syntax("expected `)`"),
                }
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let is_call = matches!(self.peek(), Some(Tok::LParen));
                if let Some(func) = Func::from_name(&name) {
                    if !is_call {
                        return Err(ParseError::Arity {
                            name,
                            expected: 1,
                            found: 0,
                            offset,
                        });
                    }
                    let arg = self.call_args(func.name(), offset)?;
                    return Ok(Expr::Func(func, Box::new(arg)));
                }
                if self.symbols.profiles.contains(&name) {
                    if !is_call {
                        return Err(ParseError::Arity {
                            name,
                            expected: 1,
                            found: 0,
                            offset,
                        });
                    }
                    let arg = self.call_args(&name, offset)?;
                    return Ok(Expr::Profile(name, Box::new(arg)));
                }
                if is_call {
                    return Err(ParseError::UnknownIdentifier { name, offset });
                }
                if let Some(idx) = parse_coordinate(&name) {
                    if self.symbols.max_var.is_some_and(|m| idx > m) {
                        return Err(ParseError::UnknownIdentifier { name, offset });
                    }
                    return Ok(Expr::var(idx));
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                if self.symbols.params.contains(&name) {
                    return Ok(Expr::Param(name));
                }
                Err(ParseError::UnknownIdentifier { name, offset })
            }
            Some(_) => self.syntax("expected a number, identifier or `(`"),
            None => self.syntax("unexpected end of input"),
        }
    }
}

fn parse_coordinate(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

/// Parses with no parameters or profiles declared.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    parse_expr_with(src, &SymbolTable::default())
}

pub fn parse_expr_with(src: &str, symbols: &SymbolTable) -> Result<Expr, ParseError> {
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(ParseError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        end: src.len(),
        symbols,
    };
    let e = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return parser.syntax("unexpected trailing input");
    }
    Ok(e)
}

/// A numeric univariate function known through its derivatives, such as an
/// ODE solution on a grid.
pub trait Profile: Send + Sync + fmt::Debug {
    /// Derivatives `f^(k)(t)` for `k = 0..=order`.
    fn derivatives(&self, t: f64, order: usize) -> Result<Vec<f64>, String>;
}

/// Values for parameters and profiles referenced by expressions.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    pub params: BTreeMap<String, f64>,
    pub profiles: BTreeMap<String, Arc<dyn Profile>>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn param(mut self, name: impl Into<String>, value: f64) -> Self {
        self.params.insert(name.into(), value);
        self
    }

    pub fn with_profile(mut self, name: impl Into<String>, profile: Arc<dyn Profile>) -> Self {
        self.profiles.insert(name.into(), profile);
        self
    }

    pub fn symbols(&self) -> SymbolTable {
        SymbolTable {
            params: self.params.keys().cloned().collect(),
            profiles: self.profiles.keys().cloned().collect(),
            max_var: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("domain violation in `{node}` at point {point:?}: {source}")]
    Domain {
        node: String,
        point: Vec<f64>,
        source: JetDomainError,
    },
    #[error("parameter `{0}` is not bound")]
    UnboundParam(String),
    #[error("profile `{0}` is not bound")]
    UnboundProfile(String),
    #[error("profile `{name}` failed at {at}: {message}")]
    ProfileFailure { name: String, at: f64, message: String },
    #[error("expression uses x{var} but the point has {dim} coordinates")]
    VariableOutOfRange { var: usize, dim: usize },
    #[error("jet order {0} is not supported")]
    Order(usize),
}

struct Evaluator<'a> {
    point: &'a [f64],
    order: usize,
    bindings: &'a Bindings,
}

impl Evaluator<'_> {
    fn domain(&self, node: &Expr, source: JetDomainError) -> EvalError {
        EvalError::Domain {
            node: node.to_string(),
            point: self.point.to_vec(),
            source,
        }
    }

    fn constant(&self, v: f64) -> Jet {
        Jet::constant(self.point.len(), self.order, v)
    }

    fn eval(&self, e: &Expr) -> Result<Jet, EvalError> {
        let n = self.point.len();
        Ok(match e {
            Expr::Num(v) => self.constant(*v),
            Expr::Var(i) => {
                if *i >= n {
                    return Err(EvalError::VariableOutOfRange { var: i + 1, dim: n });
                }
                Jet::variable(n, self.order, *i, self.point[*i])
            }
            Expr::Param(p) => {
                let v = self.bindings.params.get(p).ok_or_else(|| EvalError::UnboundParam(p.clone()))?;
                self.constant(*v)
            }
            Expr::Neg(a) => -&self.eval(a)?,
            Expr::Bin(op, a, b) => {
                let lhs = self.eval(a)?;
                match op {
                    BinOp::Add => &lhs + &self.eval(b)?,
                    BinOp::Sub => &lhs - &self.eval(b)?,
                    BinOp::Mul => &lhs * &self.eval(b)?,
                    BinOp::Div => {
                        let rhs = self.eval(b)?;
                        lhs.try_div(&rhs).map_err(|err| self.domain(e, err))?
                    }
                    BinOp::Pow => self.power(e, lhs, b)?,
                }
            }
            Expr::Func(func, a) => {
                let arg = self.eval(a)?;
                match func {
                    Func::Sin => arg.sin(),
                    Func::Cos => arg.cos(),
                    Func::Exp => arg.exp(),
                    Func::Log => arg.ln().map_err(|err| self.domain(e, err))?,
                    Func::Sqrt => arg.sqrt().map_err(|err| self.domain(e, err))?,
                }
            }
            Expr::Profile(name, a) => {
                let arg = self.eval(a)?;
                let profile = self
                    .bindings
                    .profiles
                    .get(name)
                    .ok_or_else(|| EvalError::UnboundProfile(name.clone()))?;
                let at = arg.value();
                let derivs = profile.derivatives(at, self.order).map_err(|message| EvalError::ProfileFailure {
                    name: name.clone(),
                    at,
                    message,
                })?;
                arg.compose(&derivs)
            }
        })
    }

    fn power(&self, node: &Expr, base: Jet, exponent: &Expr) -> Result<Jet, EvalError> {
        if exponent.is_constant() {
            let p = self.eval(exponent)?.value();
            if p.fract() == 0.0 && p.abs() <= 1024.0 {
                return base.powi(p as i64).map_err(|err| self.domain(node, err));
            }
            return base.powf(p).map_err(|err| self.domain(node, err));
        }
        // Variable exponent: b^y = exp(y log b), positive base only.
        let y = self.eval(exponent)?;
        let log_base = base
            .ln()
            .map_err(|_| self.domain(node, JetDomainError::PowNonPositive(base.value())))?;
        Ok((&y * &log_base).exp())
    }
}

/// Evaluates `e` and all its partial derivatives up to `order` at `point`.
pub fn eval_jet(e: &Expr, point: &[f64], order: usize, bindings: &Bindings) -> Result<Jet, EvalError> {
    if order > crate::jet::MAX_ORDER {
        return Err(EvalError::Order(order));
    }
    let out = Evaluator { point, order, bindings }.eval(e)?;
    if !out.is_finite() {
        return Err(EvalError::Domain {
            node: e.to_string(),
            point: point.to_vec(),
            source: JetDomainError::NonFinite,
        });
    }
    Ok(out)
}

/// Plain value of `e` at `point`.
pub fn eval_value(e: &Expr, point: &[f64], bindings: &Bindings) -> Result<f64, EvalError> {
    eval_jet(e, point, 0, bindings).map(|j| j.value())
}
