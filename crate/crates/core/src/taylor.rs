//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] carries a value together with every partial derivative up to
//! third order with respect to a fixed list of seed variables. Each
//! elementary operation propagates the derivatives exactly (product rule and
//! the third-order Faà di Bruno formula), so a function written once over
//! `Jet` yields machine-precision derivatives without nested differencing.
//!
//! Second and third derivative arrays are only ever written through
//! [`Jet::set_second`]/[`Jet::set_third`], which fill every permutation of the
//! index tuple at once. Symmetry of mixed partials is therefore exact.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

pub mod fd;

/// Highest derivative order carried by a [`Jet`].
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("non-finite evaluation at point {point:?}")]
    NonFinite { point: Vec<f64> },
    #[error("derivative order {0} outside 1..=3")]
    InvalidOrder(usize),
    #[error("multi-index {index:?} invalid for {nvars} variables")]
    InvalidIndex { index: Vec<usize>, nvars: usize },
    #[error("{0}")]
    Domain(String),
}

/// Value plus all mixed partials up to `order` in `nvars` seed variables.
///
/// A jet with `nvars == 0` is a plain constant and combines with any other
/// jet.
#[derive(Clone, PartialEq)]
pub struct Jet {
    order: usize,
    nvars: usize,
    value: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    third: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("value", &self.value)
            .field("order", &self.order)
            .field("first", &self.first)
            .finish_non_exhaustive()
    }
}

impl Jet {
    pub fn constant(value: f64) -> Self {
        Self {
            order: 0,
            nvars: 0,
            value,
            first: Vec::new(),
            second: Vec::new(),
            third: Vec::new(),
        }
    }

    fn zeros(value: f64, nvars: usize, order: usize) -> Self {
        let n = nvars;
        Self {
            order,
            nvars,
            value,
            first: if order >= 1 { vec![0.0; n] } else { Vec::new() },
            second: if order >= 2 { vec![0.0; n * n] } else { Vec::new() },
            third: if order >= 3 { vec![0.0; n * n * n] } else { Vec::new() },
        }
    }

    /// Seed variable `index` of `nvars`, evaluated at `value`.
    pub fn variable(value: f64, index: usize, nvars: usize, order: usize) -> Self {
        assert!(index < nvars, "seed index {index} out of range for {nvars} variables");
        assert!((1..=MAX_ORDER).contains(&order), "jet order must be 1..=3");
        let mut jet = Self::zeros(value, nvars, order);
        jet.first[index] = 1.0;
        jet
    }

    /// Seeds one jet per coordinate of `point`.
    pub fn seed(point: &[f64], order: usize) -> Vec<Self> {
        let n = point.len();
        point
            .iter()
            .enumerate()
            .map(|(i, &v)| Self::variable(v, i, n, order))
            .collect()
    }

    pub fn constants(values: &[f64]) -> Vec<Self> {
        values.iter().map(|&v| Self::constant(v)).collect()
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_constant(&self) -> bool {
        self.nvars == 0
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.nvars).map(|i| self.first(i)).collect()
    }

    pub fn first(&self, i: usize) -> f64 {
        self.first.get(i).copied().unwrap_or(0.0)
    }

    pub fn second(&self, i: usize, j: usize) -> f64 {
        if self.order < 2 {
            return 0.0;
        }
        self.second[i * self.nvars + j]
    }

    pub fn third(&self, i: usize, j: usize, k: usize) -> f64 {
        if self.order < 3 {
            return 0.0;
        }
        let n = self.nvars;
        self.third[(i * n + j) * n + k]
    }

    /// Mixed partial for a multi-index of length 0..=3.
    pub fn partial(&self, index: &[usize]) -> f64 {
        match *index {
            [] => self.value,
            [i] => self.first(i),
            [i, j] => self.second(i, j),
            [i, j, k] => self.third(i, j, k),
            _ => 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.first.iter().all(|v| v.is_finite())
            && self.second.iter().all(|v| v.is_finite())
            && self.third.iter().all(|v| v.is_finite())
    }

    fn set_second(&mut self, i: usize, j: usize, v: f64) {
        let n = self.nvars;
        self.second[i * n + j] = v;
        self.second[j * n + i] = v;
    }

    fn set_third(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.nvars;
        for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
            self.third[(a * n + b) * n + c] = v;
        }
    }

    /// The jet of `∂self/∂x_j`, one order lower.
    pub fn derivative(&self, j: usize) -> Jet {
        if self.is_constant() || self.order == 0 {
            return Jet::constant(0.0);
        }
        let n = self.nvars;
        let order = self.order - 1;
        if order == 0 {
            return Jet::constant(self.first(j));
        }
        let mut out = Jet::zeros(self.first(j), n, order);
        for a in 0..n {
            out.first[a] = self.second(j, a);
        }
        if order >= 2 {
            for a in 0..n {
                for b in a..n {
                    out.set_second(a, b, self.third(j, a, b));
                }
            }
        }
        out
    }

    /// Evaluates the truncated Taylor polynomial represented by `self`
    /// (expanded around the values of `inner`) at the jets `inner`.
    ///
    /// `self` must be seeded in `inner.len()` variables and its order must be
    /// at least the order of `inner`; the result is then exact to that order.
    pub fn compose(&self, inner: &[Jet]) -> Jet {
        let mut deltas: Vec<Jet> = inner.iter().map(|u| u - u.value).collect();
        if self.is_constant() {
            deltas.clear();
        }
        let m = deltas.len();
        let mut out = Jet::constant(self.value);
        for a in 0..m {
            let c = self.first(a);
            if c != 0.0 {
                out = out + &deltas[a] * c;
            }
        }
        if self.order >= 2 {
            for a in 0..m {
                for b in 0..m {
                    let c = self.second(a, b);
                    if c != 0.0 {
                        out = out + &(&deltas[a] * &deltas[b]) * (0.5 * c);
                    }
                }
            }
        }
        if self.order >= 3 {
            for a in 0..m {
                for b in 0..m {
                    let ab = &deltas[a] * &deltas[b];
                    for c in 0..m {
                        let coef = self.third(a, b, c);
                        if coef != 0.0 {
                            out = out + &(&ab * &deltas[c]) * (coef / 6.0);
                        }
                    }
                }
            }
        }
        out
    }

    fn shape_with(&self, other: &Jet) -> (usize, usize) {
        match (self.is_constant(), other.is_constant()) {
            (true, true) => (0, 0),
            (false, true) => (self.nvars, self.order),
            (true, false) => (other.nvars, other.order),
            (false, false) => {
                assert_eq!(
                    self.nvars, other.nvars,
                    "jets seeded in different variable counts"
                );
                (self.nvars, self.order.min(other.order))
            }
        }
    }

    fn scale(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.value *= s;
        out.first.iter_mut().for_each(|v| *v *= s);
        out.second.iter_mut().for_each(|v| *v *= s);
        out.third.iter_mut().for_each(|v| *v *= s);
        out
    }

    fn shift(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.value += s;
        out
    }

    fn linear(&self, a: f64, other: &Jet, b: f64) -> Jet {
        if other.is_constant() {
            return self.scale(a).shift(b * other.value);
        }
        if self.is_constant() {
            return other.scale(b).shift(a * self.value);
        }
        let (n, order) = self.shape_with(other);
        let mut out = Jet::zeros(a * self.value + b * other.value, n, order);
        for i in 0..n {
            if order >= 1 {
                out.first[i] = a * self.first(i) + b * other.first(i);
            }
            if order >= 2 {
                for j in 0..n {
                    out.second[i * n + j] = a * self.second(i, j) + b * other.second(i, j);
                }
            }
            if order >= 3 {
                for j in 0..n {
                    for k in 0..n {
                        out.third[(i * n + j) * n + k] =
                            a * self.third(i, j, k) + b * other.third(i, j, k);
                    }
                }
            }
        }
        out
    }

    fn product(&self, g: &Jet) -> Jet {
        if g.is_constant() {
            return self.scale(g.value);
        }
        if self.is_constant() {
            return g.scale(self.value);
        }
        let f = self;
        let (n, order) = f.shape_with(g);
        let (fv, gv) = (f.value, g.value);
        let mut out = Jet::zeros(fv * gv, n, order);
        if order >= 1 {
            for i in 0..n {
                out.first[i] = f.first(i) * gv + fv * g.first(i);
            }
        }
        if order >= 2 {
            for i in 0..n {
                for j in i..n {
                    let v = f.second(i, j) * gv
                        + f.first(i) * g.first(j)
                        + f.first(j) * g.first(i)
                        + fv * g.second(i, j);
                    out.set_second(i, j, v);
                }
            }
        }
        if order >= 3 {
            for i in 0..n {
                for j in i..n {
                    for k in j..n {
                        let v = f.third(i, j, k) * gv
                            + f.second(i, j) * g.first(k)
                            + f.second(i, k) * g.first(j)
                            + f.second(j, k) * g.first(i)
                            + f.first(i) * g.second(j, k)
                            + f.first(j) * g.second(i, k)
                            + f.first(k) * g.second(i, j)
                            + fv * g.third(i, j, k);
                        out.set_third(i, j, k, v);
                    }
                }
            }
        }
        out
    }

    /// Applies a scalar function given its value and first three derivatives
    /// at `self.value()`.
    pub fn chain(&self, d: [f64; 4]) -> Jet {
        let n = self.nvars;
        let order = self.order;
        let mut out = Jet::zeros(d[0], n, order);
        if order >= 1 {
            for i in 0..n {
                out.first[i] = d[1] * self.first(i);
            }
        }
        if order >= 2 {
            for i in 0..n {
                for j in i..n {
                    let v = d[2] * self.first(i) * self.first(j) + d[1] * self.second(i, j);
                    out.set_second(i, j, v);
                }
            }
        }
        if order >= 3 {
            for i in 0..n {
                for j in i..n {
                    for k in j..n {
                        let (fi, fj, fk) = (self.first(i), self.first(j), self.first(k));
                        let v = d[3] * fi * fj * fk
                            + d[2]
                                * (self.second(i, j) * fk
                                    + self.second(i, k) * fj
                                    + self.second(j, k) * fi)
                            + d[1] * self.third(i, j, k);
                        out.set_third(i, j, k, v);
                    }
                }
            }
        }
        out
    }

    pub fn sqrt(&self) -> Jet {
        let s = self.value.sqrt();
        let d1 = 0.5 / s;
        let d2 = -0.5 * d1 / self.value;
        let d3 = -1.5 * d2 / self.value;
        self.chain([s, d1, d2, d3])
    }

    pub fn exp(&self) -> Jet {
        let e = self.value.exp();
        self.chain([e, e, e, e])
    }

    pub fn ln(&self) -> Jet {
        let v = self.value;
        self.chain([v.ln(), 1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v)])
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value.sin_cos();
        self.chain([s, c, -s, -c])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value.sin_cos();
        self.chain([c, -s, -c, s])
    }

    /// `|x|`, with the derivative of the branch containing the value.
    pub fn abs(&self) -> Jet {
        if self.value < 0.0 {
            -self
        } else {
            self.clone()
        }
    }

    pub fn recip(&self) -> Jet {
        let v = self.value;
        let r = 1.0 / v;
        self.chain([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    /// `self^p` for a constant real exponent.
    pub fn powf(&self, p: f64) -> Jet {
        if p == p.trunc() && p.abs() <= i32::MAX as f64 {
            return self.powi(p as i32);
        }
        let v = self.value;
        self.chain([
            v.powf(p),
            p * v.powf(p - 1.0),
            p * (p - 1.0) * v.powf(p - 2.0),
            p * (p - 1.0) * (p - 2.0) * v.powf(p - 3.0),
        ])
    }

    pub fn powi(&self, p: i32) -> Jet {
        let v = self.value;
        let pf = p as f64;
        // falling factorial times v^(p-k); a vanishing factor must not meet v^-1 at v = 0
        let term = |c: f64, e: i32| if c == 0.0 { 0.0 } else if e == 0 { c } else { c * v.powi(e) };
        self.chain([
            term(1.0, p),
            term(pf, p - 1),
            term(pf * (pf - 1.0), p - 2),
            term(pf * (pf - 1.0) * (pf - 2.0), p - 3),
        ])
    }

    /// `self^exponent`; falls back to `exp(exponent·ln self)` when the
    /// exponent carries derivatives.
    pub fn pow(&self, exponent: &Jet) -> Jet {
        if exponent.is_constant() || exponent.max_derivative() == 0.0 {
            self.powf(exponent.value)
        } else {
            (exponent * &self.ln()).exp()
        }
    }

    fn max_derivative(&self) -> f64 {
        self.first
            .iter()
            .chain(&self.second)
            .chain(&self.third)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet::constant(v)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, |$a:ident, $b:ident| $body:expr) => {
        impl $trait<&Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                let ($a, $b) = (self, rhs);
                $body
            }
        }
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                $trait::$method(&self, &rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                $trait::$method(&self, rhs)
            }
        }
        impl $trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                $trait::$method(self, &rhs)
            }
        }
        impl $trait<f64> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: f64) -> Jet {
                $trait::$method(self, &Jet::constant(rhs))
            }
        }
        impl $trait<f64> for Jet {
            type Output = Jet;
            fn $method(self, rhs: f64) -> Jet {
                $trait::$method(&self, &Jet::constant(rhs))
            }
        }
        impl $trait<&Jet> for f64 {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                $trait::$method(&Jet::constant(self), rhs)
            }
        }
        impl $trait<Jet> for f64 {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                $trait::$method(&Jet::constant(self), &rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| a.linear(1.0, b, 1.0));
binop!(Sub, sub, |a, b| a.linear(1.0, b, -1.0));
binop!(Mul, mul, |a, b| a.product(b));
binop!(Div, div, |a, b| if b.is_constant() {
    a.scale(1.0 / b.value)
} else {
    a.product(&b.recip())
});

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// A scalar field that can be evaluated on jets.
///
/// Closures `Fn(&[Jet]) -> Jet` implement this directly.
pub trait Field: Send + Sync {
    fn eval(&self, vars: &[Jet]) -> Result<Jet, DiffError>;
}

impl<F> Field for F
where
    F: Fn(&[Jet]) -> Jet + Send + Sync,
{
    fn eval(&self, vars: &[Jet]) -> Result<Jet, DiffError> {
        Ok(self(vars))
    }
}

/// All partials of `f` up to `order` at `point`.
pub fn evaluate_jet<F: Field + ?Sized>(f: &F, point: &[f64], order: usize) -> Result<Jet, DiffError> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(DiffError::InvalidOrder(order));
    }
    if point.is_empty() || point.iter().any(|v| !v.is_finite()) {
        return Err(DiffError::NonFinite { point: point.to_vec() });
    }
    let jet = f.eval(&Jet::seed(point, order))?;
    if !jet.is_finite() {
        return Err(DiffError::NonFinite { point: point.to_vec() });
    }
    Ok(jet)
}

/// Single mixed partial; `multi_index` lists variable indices (repeats
/// allowed), at most three of them.
pub fn partial<F: Field + ?Sized>(f: &F, point: &[f64], multi_index: &[usize]) -> Result<f64, DiffError> {
    if multi_index.len() > MAX_ORDER || multi_index.iter().any(|&i| i >= point.len()) {
        return Err(DiffError::InvalidIndex {
            index: multi_index.to_vec(),
            nvars: point.len(),
        });
    }
    let jet = evaluate_jet(f, point, multi_index.len().max(1))?;
    Ok(jet.partial(multi_index))
}
