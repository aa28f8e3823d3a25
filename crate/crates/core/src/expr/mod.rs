//! Arithmetic expressions over base, fiber, angle and action variables.
//!
//! Variables are `x1..xn`, `y1..yn`, `t1..tk`, `phi1..phik` and `I1..Im`,
//! limited by a [`VarContext`]. Functions: `sqrt exp log sin cos abs` and
//! the two-argument `pow`. Expressions evaluate on `f64` or on [`Jet`]s, so a
//! parsed `F(x, y)` supports derivatives up to third order.
//!
//! Error positions are 1-based byte columns.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::finsler::{FinslerFunction, FinslerStructure};
use crate::taylor::{DiffError, Field, Jet};

mod parser;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at position {position}: found {found}, expected {}", expected.join(" or "))]
    Syntax { position: usize, found: String, expected: Vec<String> },
    #[error("unknown identifier '{name}' at position {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("variable '{name}' at position {position} exceeds declared dimension {declared}")]
    VariableOutOfRange { name: String, position: usize, declared: usize },
    #[error("function '{function}' at position {position} takes {expected} argument(s), got {got}")]
    Arity { function: String, expected: usize, got: usize, position: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{what} (value {value}) in subexpression at {}..{}", span.start + 1, span.end + 1)]
    Domain { what: &'static str, value: f64, span: Span },
    #[error("variable {0} is not bound")]
    Unbound(Var),
}

/// Byte range `[start, end)` of a subexpression in its source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// A variable, with its 0-based index inside its family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X(usize),
    Y(usize),
    T(usize),
    Phi(usize),
    I(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
            Var::T(i) => write!(f, "t{}", i + 1),
            Var::Phi(i) => write!(f, "phi{}", i + 1),
            Var::I(i) => write!(f, "I{}", i + 1),
        }
    }
}

/// Declared dimension of each variable family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VarContext {
    pub x: usize,
    pub y: usize,
    pub t: usize,
    pub phi: usize,
    pub action: usize,
}

impl VarContext {
    /// `x1..xn, y1..yn`
    pub fn finsler(n: usize) -> Self {
        Self { x: n, y: n, ..Self::default() }
    }

    /// `x1..xn, t1..tk`
    pub fn fiber(n: usize, k: usize) -> Self {
        Self { x: n, t: k, ..Self::default() }
    }

    /// `I1..Im, phi1..phik`
    pub fn torus(m: usize, k: usize) -> Self {
        Self { phi: k, action: m, ..Self::default() }
    }

    fn declared(&self, var: Var) -> usize {
        match var {
            Var::X(_) => self.x,
            Var::Y(_) => self.y,
            Var::T(_) => self.t,
            Var::Phi(_) => self.phi,
            Var::I(_) => self.action,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
    Pow,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        if self == Func::Pow {
            2
        } else {
            1
        }
    }
}

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

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

const NEG_PRECEDENCE: u8 = 3;
const ATOM_PRECEDENCE: u8 = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn parse(src: &str, ctx: &VarContext) -> Result<Expr, ParseError> {
        parser::parse(src, ctx)
    }

    fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        let span = Span { start: lhs.span.start, end: rhs.span.end };
        Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span }
    }

    /// Builds a node with an empty span (for programmatic construction).
    pub fn new(kind: ExprKind) -> Expr {
        Expr { kind, span: Span::default() }
    }

    fn precedence(&self) -> u8 {
        match &self.kind {
            ExprKind::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => NEG_PRECEDENCE,
            ExprKind::Num(_) | ExprKind::Var(_) | ExprKind::Call(..) => ATOM_PRECEDENCE,
            ExprKind::Neg(_) => NEG_PRECEDENCE,
            ExprKind::Binary(op, ..) => op.precedence(),
        }
    }

    pub fn uses_abs(&self) -> bool {
        match &self.kind {
            ExprKind::Num(_) | ExprKind::Var(_) => false,
            ExprKind::Neg(e) => e.uses_abs(),
            ExprKind::Binary(_, a, b) => a.uses_abs() || b.uses_abs(),
            ExprKind::Call(f, args) => *f == Func::Abs || args.iter().any(Expr::uses_abs),
        }
    }

    pub fn depth(&self) -> usize {
        1 + match &self.kind {
            ExprKind::Num(_) | ExprKind::Var(_) => 0,
            ExprKind::Neg(e) => e.depth(),
            ExprKind::Binary(_, a, b) => a.depth().max(b.depth()),
            ExprKind::Call(_, args) => args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    pub fn evaluate(&self, b: &Bindings<'_, f64>) -> Result<f64, EvalError> {
        self.eval_generic(b)
    }

    pub fn evaluate_jet(&self, b: &Bindings<'_, Jet>) -> Result<Jet, EvalError> {
        self.eval_generic(b)
    }

    fn eval_generic<T: Scalar>(&self, b: &Bindings<'_, T>) -> Result<T, EvalError> {
        let domain = |what, value| EvalError::Domain { what, value, span: self.span };
        match &self.kind {
            ExprKind::Num(v) => Ok(T::lit(*v)),
            ExprKind::Var(v) => b.get(*v).cloned().ok_or(EvalError::Unbound(*v)),
            ExprKind::Neg(e) => Ok(e.eval_generic(b)?.neg()),
            ExprKind::Binary(op, l, r) => {
                let lv = l.eval_generic(b)?;
                let rv = r.eval_generic(b)?;
                match op {
                    BinOp::Add => Ok(lv.add(&rv)),
                    BinOp::Sub => Ok(lv.sub(&rv)),
                    BinOp::Mul => Ok(lv.mul(&rv)),
                    BinOp::Div => {
                        if rv.value() == 0.0 {
                            return Err(domain("division by zero", lv.value()));
                        }
                        Ok(lv.div(&rv))
                    }
                    BinOp::Pow => power(lv, rv, domain),
                }
            }
            ExprKind::Call(f, args) => {
                let a = args[0].eval_generic(b)?;
                let v = a.value();
                match f {
                    Func::Sqrt if v < 0.0 => Err(domain("sqrt of negative value", v)),
                    Func::Sqrt => Ok(a.sqrt()),
                    Func::Exp => Ok(a.exp()),
                    Func::Log if v <= 0.0 => Err(domain("log of non-positive value", v)),
                    Func::Log => Ok(a.ln()),
                    Func::Sin => Ok(a.sin()),
                    Func::Cos => Ok(a.cos()),
                    Func::Abs => Ok(a.abs()),
                    Func::Pow => power(a, args[1].eval_generic(b)?, domain),
                }
            }
        }
    }
}

fn power<T: Scalar>(
    base: T,
    exponent: T,
    domain: impl Fn(&'static str, f64) -> EvalError,
) -> Result<T, EvalError> {
    let (bv, ev) = (base.value(), exponent.value());
    if bv < 0.0 && (ev.fract() != 0.0 || !exponent.is_const()) {
        return Err(domain("negative base with non-integer exponent", bv));
    }
    if bv == 0.0 && ev < 0.0 {
        return Err(domain("zero base with negative exponent", bv));
    }
    Ok(base.pow(&exponent))
}

/// Numeric types an [`Expr`] evaluates over.
trait Scalar: Clone {
    fn lit(v: f64) -> Self;
    fn value(&self) -> f64;
    fn is_const(&self) -> bool;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn pow(&self, o: &Self) -> Self;
    fn sqrt(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn abs(&self) -> Self;
}

impl Scalar for f64 {
    fn lit(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn is_const(&self) -> bool {
        true
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn pow(&self, o: &Self) -> Self {
        if o.fract() == 0.0 && o.abs() <= i32::MAX as f64 {
            self.powi(*o as i32)
        } else {
            self.powf(*o)
        }
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

impl Scalar for Jet {
    fn lit(v: f64) -> Self {
        Jet::constant(v)
    }
    fn value(&self) -> f64 {
        Jet::value(self)
    }
    fn is_const(&self) -> bool {
        self.is_constant() || self.gradient().iter().all(|&g| g == 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn pow(&self, o: &Self) -> Self {
        Jet::pow(self, o)
    }
    fn sqrt(&self) -> Self {
        Jet::sqrt(self)
    }
    fn exp(&self) -> Self {
        Jet::exp(self)
    }
    fn ln(&self) -> Self {
        Jet::ln(self)
    }
    fn sin(&self) -> Self {
        Jet::sin(self)
    }
    fn cos(&self) -> Self {
        Jet::cos(self)
    }
    fn abs(&self) -> Self {
        Jet::abs(self)
    }
}

/// Values for each variable family; unbound families are empty slices.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<'a, T> {
    pub x: &'a [T],
    pub y: &'a [T],
    pub t: &'a [T],
    pub phi: &'a [T],
    pub action: &'a [T],
}

impl<'a, T> Default for Bindings<'a, T> {
    fn default() -> Self {
        Self { x: &[], y: &[], t: &[], phi: &[], action: &[] }
    }
}

impl<'a, T> Bindings<'a, T> {
    fn get(&self, var: Var) -> Option<&T> {
        match var {
            Var::X(i) => self.x.get(i),
            Var::Y(i) => self.y.get(i),
            Var::T(i) => self.t.get(i),
            Var::Phi(i) => self.phi.get(i),
            Var::I(i) => self.action.get(i),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match &self.kind {
            ExprKind::Num(v) if v.is_sign_negative() => write!(f, "(-{:?})", -v),
            ExprKind::Num(v) => write!(f, "{v:?}"),
            ExprKind::Var(v) => write!(f, "{v}"),
            ExprKind::Neg(e) => {
                write!(f, "-")?;
                wrap(f, e, e.precedence() < NEG_PRECEDENCE)
            }
            ExprKind::Binary(op, l, r) => {
                let p = op.precedence();
                let (left_parens, right_parens) = if *op == BinOp::Pow {
                    (l.precedence() <= p, r.precedence() < NEG_PRECEDENCE)
                } else {
                    (l.precedence() < p, r.precedence() <= p)
                };
                wrap(f, l, left_parens)?;
                write!(f, " {} ", op.symbol())?;
                wrap(f, r, right_parens)
            }
            ExprKind::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Which variable families occupy a flat argument slice, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `[x1..xn, t1..tk]`
    Fiber { n: usize, k: usize },
    /// `[I1..Im, phi1..phik]`
    Torus { m: usize, k: usize },
}

/// An expression bound to a flat variable layout, usable as a [`Field`].
#[derive(Debug, Clone)]
pub struct ExprField {
    expr: Arc<Expr>,
    layout: Layout,
}

impl ExprField {
    pub fn new(expr: Expr, layout: Layout) -> Self {
        Self { expr: Arc::new(expr), layout }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    fn bind<'a, T>(&self, vars: &'a [T]) -> Bindings<'a, T> {
        match self.layout {
            Layout::Fiber { n, .. } => {
                let (x, t) = vars.split_at(n.min(vars.len()));
                Bindings { x, t, ..Bindings::default() }
            }
            Layout::Torus { m, .. } => {
                let (action, phi) = vars.split_at(m.min(vars.len()));
                Bindings { action, phi, ..Bindings::default() }
            }
        }
    }

    pub fn eval_f64(&self, vars: &[f64]) -> Result<f64, EvalError> {
        self.expr.evaluate(&self.bind(vars))
    }
}

impl Field for ExprField {
    fn eval(&self, vars: &[Jet]) -> Result<Jet, DiffError> {
        self.expr
            .evaluate_jet(&self.bind(vars))
            .map_err(|e| DiffError::Domain(e.to_string()))
    }
}

struct ExprFinsler(Expr);

impl FinslerFunction for ExprFinsler {
    fn eval(&self, x: &[Jet], y: &[Jet]) -> Result<Jet, DiffError> {
        self.0
            .evaluate_jet(&Bindings { x, y, ..Bindings::default() })
            .map_err(|e| DiffError::Domain(e.to_string()))
    }
}

/// A Finsler structure `F(x1..xn, y1..yn)` from source text.
pub fn finsler_from_expr(source: &str, dim: usize) -> Result<FinslerStructure, ParseError> {
    let expr = Expr::parse(source, &VarContext::finsler(dim))?;
    Ok(FinslerStructure::new(dim, source.trim(), Arc::new(ExprFinsler(expr))))
}

#[cfg(test)]
mod tests;
