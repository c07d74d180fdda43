//! A small expression language for test functions on \[0,1\], plus the
//! [`Func1D`] wrapper (parsed expression, interpolation table, or native
//! closure) used everywhere a test function is consumed.
//!
//! Grammar: decimal literals, `x`, `pi`, unary minus, `+ - * / ^`, and calls
//! to `sin cos exp ln abs sqrt relu` (one argument) and `min max` (two).
//! `^` binds tightest and associates to the right, so `-x^2` is `-(x^2)` and
//! `2^3^2` is `2^(3^2)`. There is no implicit multiplication. Domain errors
//! (`ln` of a non-positive value, `sqrt` of a negative, division by zero,
//! fractional powers of negatives) are reported as structured errors naming
//! the offending subexpression, never as silent NaN.

use crate::basis;
use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

/// Hard cap on parse nesting so fuzzed input cannot overflow the stack.
const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Abs,
    Sqrt,
    Relu,
    Min,
    Max,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Relu => "relu",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "relu" => Func::Relu,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl fmt::Display for Expr {
    /// Fully parenthesized rendering; parsing it back yields a structurally
    /// identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var => f.write_str("x"),
            Expr::Pi => f.write_str("pi"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(Tok, usize)>> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'0'..=b'9' => {
                self.pos += 1;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if self.pos < self.src.len() && self.src[self.pos] == b'.' {
                    self.pos += 1;
                    while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                }
                if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
                    let mark = self.pos;
                    self.pos += 1;
                    if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                        self.pos += 1;
                    }
                    if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    } else {
                        // Not an exponent after all; leave `e` for the ident
                        // lexer to reject with a clear message.
                        self.pos = mark;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: f64 = text.parse().map_err(|_| Error::Parse {
                    offset: start,
                    message: format!("invalid numeric literal `{text}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        offset: start,
                        message: format!("numeric literal `{text}` overflows f64"),
                    });
                }
                Tok::Num(v)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                self.pos += 1;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Tok::Ident(text.to_string())
            }
            other => {
                return Err(Error::Parse {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((tok, start)))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, o)| o).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<()> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn error(&self, message: String) -> Error {
        Error::Parse {
            offset: self.offset(),
            message,
        }
    }

    fn guard(&self, depth: usize) -> Result<()> {
        if depth > MAX_DEPTH {
            Err(self.error(format!("expression nested deeper than {MAX_DEPTH} levels")))
        } else {
            Ok(())
        }
    }

    fn parse_expr(&mut self, depth: usize) -> Result<Expr> {
        self.guard(depth)?;
        let mut lhs = self.parse_term(depth + 1)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_term(depth + 1)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_term(&mut self, depth: usize) -> Result<Expr> {
        self.guard(depth)?;
        let mut lhs = self.parse_unary(depth + 1)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_unary(depth + 1)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self, depth: usize) -> Result<Expr> {
        self.guard(depth)?;
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let inner = self.parse_unary(depth + 1)?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_power(depth + 1)
    }

    fn parse_power(&mut self, depth: usize) -> Result<Expr> {
        self.guard(depth)?;
        let base = self.parse_atom(depth + 1)?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            // Right-associative; the exponent may carry a unary minus.
            let exp = self.parse_unary(depth + 1)?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self, depth: usize) -> Result<Expr> {
        self.guard(depth)?;
        let offset = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.parse_expr(depth + 1)?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "x" => Ok(Expr::Var),
                "pi" => Ok(Expr::Pi),
                _ => {
                    let func = Func::from_name(&name).ok_or(Error::Parse {
                        offset,
                        message: format!("unknown identifier `{name}`"),
                    })?;
                    self.expect(&Tok::LParen, "`(` after function name")?;
                    let mut args = vec![self.parse_expr(depth + 1)?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        args.push(self.parse_expr(depth + 1)?);
                    }
                    self.expect(&Tok::RParen, "`)`")?;
                    if args.len() != func.arity() {
                        return Err(Error::Parse {
                            offset,
                            message: format!(
                                "`{name}` takes {} argument(s), got {}",
                                func.arity(),
                                args.len()
                            ),
                        });
                    }
                    Ok(Expr::Call(func, args))
                }
            },
            Some(tok) => Err(Error::Parse {
                offset,
                message: format!("unexpected token `{tok:?}`"),
            }),
            None => Err(Error::Parse {
                offset,
                message: "unexpected end of input".to_string(),
            }),
        }
    }
}

/// Parses an expression; errors carry the byte offset of the failure.
pub fn parse(src: &str) -> Result<Expr> {
    let toks = Lexer::tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
    };
    let e = p.parse_expr(0)?;
    if p.pos != p.toks.len() {
        return Err(p.error("trailing input after expression".to_string()));
    }
    Ok(e)
}

impl Expr {
    /// Evaluates at `x`, which must lie in \[0,1\].
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Eval {
                x,
                message: "argument outside the domain [0,1]".to_string(),
            });
        }
        self.eval_inner(x)
    }

    fn eval_inner(&self, x: f64) -> Result<f64> {
        let fail = |message: String| Error::Eval { x, message };
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var => x,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval_inner(x)?,
            Expr::Bin(op, a, b) => {
                let va = a.eval_inner(x)?;
                let vb = b.eval_inner(x)?;
                match op {
                    BinOp::Add => va + vb,
                    BinOp::Sub => va - vb,
                    BinOp::Mul => va * vb,
                    BinOp::Div => {
                        if vb == 0.0 {
                            return Err(fail(format!("division by zero in `{self}`")));
                        }
                        va / vb
                    }
                    BinOp::Pow => {
                        if va < 0.0 && vb.fract() != 0.0 {
                            return Err(fail(format!(
                                "fractional power of negative value in `{self}`"
                            )));
                        }
                        va.powf(vb)
                    }
                }
            }
            Expr::Call(func, args) => {
                let a0 = args[0].eval_inner(x)?;
                match func {
                    Func::Sin => a0.sin(),
                    Func::Cos => a0.cos(),
                    Func::Exp => a0.exp(),
                    Func::Ln => {
                        if a0 <= 0.0 {
                            return Err(fail(format!("ln of non-positive value {a0} in `{self}`")));
                        }
                        a0.ln()
                    }
                    Func::Abs => a0.abs(),
                    Func::Sqrt => {
                        if a0 < 0.0 {
                            return Err(fail(format!("sqrt of negative value {a0} in `{self}`")));
                        }
                        a0.sqrt()
                    }
                    Func::Relu => basis::relu(a0),
                    Func::Min => a0.min(args[1].eval_inner(x)?),
                    Func::Max => a0.max(args[1].eval_inner(x)?),
                }
            }
        };
        if !v.is_finite() {
            return Err(fail(format!("non-finite result from `{self}`")));
        }
        Ok(v)
    }
}

/// Piecewise-linear function given by knots; exact at every knot.
#[derive(Debug, Clone)]
pub(crate) struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    /// Knots must be finite, strictly increasing, and span exactly \[0,1\].
    pub(crate) fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidArg(
                "interpolation table needs at least two (x, y) pairs".to_string(),
            ));
        }
        if xs[0] != 0.0 || *xs.last().unwrap() != 1.0 {
            return Err(Error::InvalidArg(
                "interpolation table must start at x = 0 and end at x = 1".to_string(),
            ));
        }
        if !xs.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArg(
                "interpolation knots must be strictly increasing".to_string(),
            ));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArg(
                "interpolation table contains a non-finite value".to_string(),
            ));
        }
        Ok(Self { xs, ys })
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&x));
        // First knot strictly greater than x; the segment is [hi-1, hi].
        let hi = self.xs.partition_point(|&t| t <= x);
        if hi == self.xs.len() {
            return *self.ys.last().unwrap();
        }
        let lo = hi - 1;
        if self.xs[lo] == x {
            return self.ys[lo];
        }
        let t = (x - self.xs[lo]) / (self.xs[hi] - self.xs[lo]);
        self.ys[lo] + t * (self.ys[hi] - self.ys[lo])
    }
}

enum FuncBody {
    Expr(Expr),
    Table(PiecewiseLinear),
    Native(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Clone for FuncBody {
    fn clone(&self) -> Self {
        match self {
            FuncBody::Expr(e) => FuncBody::Expr(e.clone()),
            FuncBody::Table(t) => FuncBody::Table(t.clone()),
            FuncBody::Native(f) => FuncBody::Native(Arc::clone(f)),
        }
    }
}

/// A test function on \[0,1\] with an optional Lipschitz constant.
#[derive(Clone)]
pub struct Func1D {
    body: FuncBody,
    lipschitz: Option<f64>,
}

impl fmt::Debug for Func1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.body {
            FuncBody::Expr(e) => format!("expr `{e}`"),
            FuncBody::Table(t) => format!("table with {} knots", t.xs.len()),
            FuncBody::Native(_) => "native closure".to_string(),
        };
        write!(f, "Func1D({kind}, lipschitz: {:?})", self.lipschitz)
    }
}

impl Func1D {
    /// Parses `src` as an expression in `x`.
    pub fn from_expr(src: &str) -> Result<Self> {
        Ok(Self {
            body: FuncBody::Expr(parse(src)?),
            lipschitz: None,
        })
    }

    pub fn from_ast(expr: Expr) -> Self {
        Self {
            body: FuncBody::Expr(expr),
            lipschitz: None,
        }
    }

    /// Piecewise-linear interpolation through `(x, y)` samples; the sample
    /// grid must start at 0 and end at 1.
    pub fn from_table(samples: &[(f64, f64)]) -> Result<Self> {
        let xs: Vec<f64> = samples.iter().map(|&(x, _)| x).collect();
        let ys: Vec<f64> = samples.iter().map(|&(_, y)| y).collect();
        Ok(Self {
            body: FuncBody::Table(PiecewiseLinear::new(xs, ys)?),
            lipschitz: None,
        })
    }

    /// Wraps a native closure. The closure must return finite values on
    /// \[0,1\]; non-finite results are reported as evaluation errors.
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            body: FuncBody::Native(Arc::new(f)),
            lipschitz: None,
        }
    }

    pub(crate) fn from_piecewise(pl: PiecewiseLinear) -> Self {
        Self {
            body: FuncBody::Table(pl),
            lipschitz: None,
        }
    }

    /// Attaches a known Lipschitz constant (required by the rate sweep).
    pub fn with_lipschitz(mut self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArg(format!(
                "Lipschitz constant must be finite and positive, got {c}"
            )));
        }
        self.lipschitz = Some(c);
        Ok(self)
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    /// Evaluates at `x` in \[0,1\].
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Eval {
                x,
                message: "argument outside the domain [0,1]".to_string(),
            });
        }
        match &self.body {
            FuncBody::Expr(e) => e.eval(x),
            FuncBody::Table(t) => Ok(t.eval(x)),
            FuncBody::Native(f) => {
                let v = f(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Eval {
                        x,
                        message: "non-finite value from native function".to_string(),
                    })
                }
            }
        }
    }
}
