//! Differential forms on the trivial bundle `Rⁿ × Rᵏ` and integration along
//! the fiber.
//!
//! A term `c(x, t) dx^I ∧ dt^J` is stored with its base factors first. Fiber
//! integration sends terms with `|J| < k` to zero and
//! `c dx^I ∧ dt¹ ∧ … ∧ dtᵏ` to `(∫ c dt) dx^I`, with the integral taken by a
//! tensor Gauss–Legendre rule on `[−R, R]ᵏ`.

use std::collections::BTreeMap;
use std::fmt;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{Expr, ExprField, Layout, VarContext};
use crate::taylor::{DiffError, Field, Jet, MAX_ORDER};

pub const DEFAULT_RADIUS: f64 = 8.0;
pub const DEFAULT_FIBER_ORDER: usize = 64;
/// Boundary magnitude above which truncation is an error.
pub const TRUNCATION_ERROR: f64 = 1e-10;
/// Boundary magnitude above which truncation is logged.
pub const TRUNCATION_WARN: f64 = 1e-14;

#[derive(Clone)]
pub struct FiberTerm {
    /// Strictly increasing, 0-based.
    pub base: Vec<usize>,
    /// Strictly increasing, 0-based.
    pub fiber: Vec<usize>,
    /// `c(x, t)` on the flat layout `[x1..xn, t1..tk]`.
    pub coeff: Arc<dyn Field>,
    pub radius: f64,
    pub label: String,
}

impl fmt::Debug for FiberTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {}", self.label, basis_name(&self.base, &self.fiber))
    }
}

impl FiberTerm {
    pub fn new(base: Vec<usize>, fiber: Vec<usize>, coeff: Arc<dyn Field>, label: impl Into<String>) -> Self {
        Self { base, fiber, coeff, radius: DEFAULT_RADIUS, label: label.into() }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn degree(&self) -> usize {
        self.base.len() + self.fiber.len()
    }
}

/// `dx1^dx2^dt1`-style name of a basis element; `1` for the empty one.
pub fn basis_name(base: &[usize], fiber: &[usize]) -> String {
    let parts: Vec<String> = base
        .iter()
        .map(|i| format!("dx{}", i + 1))
        .chain(fiber.iter().map(|i| format!("dt{}", i + 1)))
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("^")
    }
}

/// Parses `dx1^dx2^dt1` (or `1` for a function) into 0-based index lists.
pub fn parse_basis(src: &str, base_dim: usize, fiber_dim: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let src = src.trim();
    if src.is_empty() || src == "1" {
        return Ok((vec![], vec![]));
    }
    let mut base = Vec::new();
    let mut fiber = Vec::new();
    for part in src.split('^').map(str::trim) {
        let bad = || Error::InvalidArgument(format!("bad basis factor '{part}' in '{src}'"));
        let (list, digits, bound) = if let Some(d) = part.strip_prefix("dx") {
            (&mut base, d, base_dim)
        } else if let Some(d) = part.strip_prefix("dt") {
            (&mut fiber, d, fiber_dim)
        } else {
            return Err(bad());
        };
        let idx: usize = digits.parse().map_err(|_| bad())?;
        if idx == 0 || idx > bound {
            return Err(bad());
        }
        list.push(idx - 1);
    }
    Ok((base, fiber))
}

fn strictly_increasing(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

#[derive(Debug, Clone)]
pub struct FiberForm {
    base_dim: usize,
    fiber_dim: usize,
    terms: Vec<FiberTerm>,
}

impl FiberForm {
    pub fn new(base_dim: usize, fiber_dim: usize, terms: Vec<FiberTerm>) -> Result<Self> {
        if base_dim == 0 || fiber_dim == 0 {
            return Err(Error::InvalidArgument("base and fiber dimensions must be ≥ 1".into()));
        }
        for t in &terms {
            if !strictly_increasing(&t.base) || !strictly_increasing(&t.fiber) {
                return Err(Error::InvalidArgument(format!("multi-indices of {t:?} must be strictly increasing")));
            }
            if t.base.iter().any(|&i| i >= base_dim) || t.fiber.iter().any(|&i| i >= fiber_dim) {
                return Err(Error::InvalidArgument(format!("{t:?} has an index out of range")));
            }
            if !(t.radius > 0.0 && t.radius.is_finite()) {
                return Err(Error::InvalidArgument(format!("truncation radius must be > 0, got {}", t.radius)));
            }
        }
        Ok(Self { base_dim, fiber_dim, terms })
    }

    pub fn zero(base_dim: usize, fiber_dim: usize) -> Result<Self> {
        Self::new(base_dim, fiber_dim, vec![])
    }

    /// A single term with an expression coefficient in `x1..xn, t1..tk`.
    pub fn from_expressions(base_dim: usize, fiber_dim: usize, terms: &[(&str, &str)], radius: f64) -> Result<Self> {
        let ctx = VarContext::fiber(base_dim, fiber_dim);
        let mut out = Vec::with_capacity(terms.len());
        for (coeff, basis) in terms {
            let expr = Expr::parse(coeff, &ctx)
                .map_err(|e| Error::InvalidArgument(format!("coefficient {coeff:?}: {e}")))?;
            let (base, fiber) = parse_basis(basis, base_dim, fiber_dim)?;
            let field = ExprField::new(expr, Layout::Fiber { n: base_dim, k: fiber_dim });
            out.push(FiberTerm::new(base, fiber, Arc::new(field), coeff.trim()).with_radius(radius));
        }
        Self::new(base_dim, fiber_dim, out)
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn terms(&self) -> &[FiberTerm] {
        &self.terms
    }

    fn eval_coeff(&self, term: &FiberTerm, x: &[f64], t: &[f64]) -> Result<f64> {
        let vars = Jet::constants(&[x, t].concat());
        let v = term.coeff.eval(&vars)?.value();
        if !v.is_finite() {
            return Err(DiffError::NonFinite { point: [x, t].concat() }.into());
        }
        Ok(v)
    }

    /// Coefficients at `(x, t)`, keyed by `(base, fiber)` index lists.
    pub fn coefficients_at(&self, x: &[f64], t: &[f64]) -> Result<Coefficients> {
        self.check_point(x, Some(t))?;
        let mut out = BTreeMap::new();
        for term in &self.terms {
            let v = self.eval_coeff(term, x, t)?;
            *out.entry((term.base.clone(), term.fiber.clone())).or_insert(0.0) += v;
        }
        Ok(out)
    }

    fn check_point(&self, x: &[f64], t: Option<&[f64]>) -> Result<()> {
        if x.len() != self.base_dim {
            return Err(Error::DimensionMismatch { expected: self.base_dim, got: x.len() });
        }
        if let Some(t) = t {
            if t.len() != self.fiber_dim {
                return Err(Error::DimensionMismatch { expected: self.fiber_dim, got: t.len() });
            }
        }
        Ok(())
    }
}

/// Coefficients of a form on the base, keyed by strictly increasing 0-based
/// index lists.
pub type BaseForm = BTreeMap<Vec<usize>, f64>;

/// Coefficients keyed by `(base, fiber)` multi-indices.
pub type Coefficients = BTreeMap<(Vec<usize>, Vec<usize>), f64>;

/// Max-abs difference over the union of keys, missing entries read as 0.
pub fn max_abs_difference(a: &BaseForm, b: &BaseForm) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, v) in a {
        worst = worst.max((v - b.get(k).copied().unwrap_or(0.0)).abs());
    }
    for (k, v) in b {
        if !a.contains_key(k) {
            worst = worst.max(v.abs());
        }
    }
    worst
}

fn tensor_rule(k: usize, order: usize, radius: f64) -> Vec<(Vec<f64>, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(order).expect("order ≥ 1"));
    let pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().iter().map(|&(t, w)| (radius * t, radius * w)).collect();
    let total = order.pow(k as u32);
    (0..total)
        .map(|mut code| {
            let mut t = Vec::with_capacity(k);
            let mut w = 1.0;
            for _ in 0..k {
                let (node, weight) = pairs[code % order];
                code /= order;
                t.push(node);
                w *= weight;
            }
            (t, w)
        })
        .collect()
}

/// Largest `|c(x, t)|` over sample points on the faces of `[−R, R]ᵏ`.
fn boundary_magnitude(form: &FiberForm, term: &FiberTerm, x: &[f64], samples: usize) -> Result<f64> {
    let k = form.fiber_dim;
    let r = term.radius;
    let face = if k == 1 { vec![vec![]] } else { tensor_rule(k - 1, samples, r).into_iter().map(|p| p.0).collect() };
    let mut worst: f64 = 0.0;
    for axis in 0..k {
        for side in [-r, r] {
            for rest in &face {
                let mut t = rest.clone();
                t.insert(axis, side);
                worst = worst.max(form.eval_coeff(term, x, &t)?.abs());
            }
        }
    }
    Ok(worst)
}

fn integrate_term(form: &FiberForm, term: &FiberTerm, x: &[f64], order: usize) -> Result<f64> {
    let magnitude = boundary_magnitude(form, term, x, 8)?;
    if magnitude > TRUNCATION_ERROR {
        return Err(Error::Truncation { radius: term.radius, magnitude });
    }
    if magnitude > TRUNCATION_WARN {
        log::warn!(
            "coefficient {} reaches {magnitude:e} on the boundary of [-{r}, {r}]^k",
            term.label,
            r = term.radius
        );
    }
    let mut sum = 0.0;
    for (t, w) in tensor_rule(form.fiber_dim, order, term.radius) {
        sum += w * form.eval_coeff(term, x, &t)?;
    }
    Ok(sum)
}

/// `π_* ω` at `x`.
pub fn fiber_integrate(form: &FiberForm, x: &[f64], order: usize) -> Result<BaseForm> {
    form.check_point(x, None)?;
    if order == 0 {
        return Err(Error::InvalidArgument("fiber quadrature order must be ≥ 1".into()));
    }
    let k = form.fiber_dim;
    let values: Vec<Option<(Vec<usize>, f64)>> = form
        .terms
        .par_iter()
        .map(|term| {
            if term.fiber.len() < k {
                return Ok(None);
            }
            Ok(Some((term.base.clone(), integrate_term(form, term, x, order)?)))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut out = BaseForm::new();
    for (base, v) in values.into_iter().flatten() {
        *out.entry(base).or_insert(0.0) += v;
    }
    Ok(out)
}

/// `∂c/∂v_j` on jets of order ≤ 2, through a jet one order higher.
struct PartialOf {
    inner: Arc<dyn Field>,
    var: usize,
}

impl Field for PartialOf {
    fn eval(&self, vars: &[Jet]) -> Result<Jet, DiffError> {
        let order = vars.iter().map(Jet::order).max().unwrap_or(0);
        if order >= MAX_ORDER {
            return Err(DiffError::InvalidOrder(order + 1));
        }
        let values: Vec<f64> = vars.iter().map(Jet::value).collect();
        let jet = self.inner.eval(&Jet::seed(&values, order + 1))?;
        let d = jet.derivative(self.var);
        Ok(if order == 0 { Jet::constant(d.value()) } else { d.compose(vars) })
    }
}

/// Inserts `extra` into the sorted list, returning the sign of the
/// permutation that moves it from the front, or `None` if already present.
fn insert_sorted(list: &[usize], extra: usize) -> Option<(Vec<usize>, f64)> {
    if list.contains(&extra) {
        return None;
    }
    let before = list.iter().filter(|&&i| i < extra).count();
    let mut out = list.to_vec();
    out.insert(before, extra);
    Some((out, if before % 2 == 0 { 1.0 } else { -1.0 }))
}

/// Basis element and sign of `dv ∧ dx^I ∧ dt^J` where `v` is variable `var`
/// of the flat layout.
fn wedge_front(term: &FiberTerm, var: usize, n: usize) -> Option<(Vec<usize>, Vec<usize>, f64)> {
    if var < n {
        let (base, s) = insert_sorted(&term.base, var)?;
        Some((base, term.fiber.clone(), s))
    } else {
        let (fiber, s) = insert_sorted(&term.fiber, var - n)?;
        let pass = if term.base.len().is_multiple_of(2) { 1.0 } else { -1.0 };
        Some((term.base.clone(), fiber, s * pass))
    }
}

struct Scaled {
    inner: Arc<dyn Field>,
    factor: f64,
}

impl Field for Scaled {
    fn eval(&self, vars: &[Jet]) -> Result<Jet, DiffError> {
        Ok(self.inner.eval(vars)? * self.factor)
    }
}

/// `dω` as a form whose coefficients are exact partial derivatives.
pub fn exterior_derivative(form: &FiberForm) -> Result<FiberForm> {
    let n = form.base_dim;
    let mut terms = Vec::new();
    for term in &form.terms {
        for var in 0..n + form.fiber_dim {
            if let Some((base, fiber, sign)) = wedge_front(term, var, n) {
                let partial: Arc<dyn Field> = Arc::new(PartialOf { inner: term.coeff.clone(), var });
                let coeff: Arc<dyn Field> =
                    if sign > 0.0 { partial } else { Arc::new(Scaled { inner: partial, factor: -1.0 }) };
                let label = format!("{}d/d{}({})", if sign > 0.0 { "" } else { "-" }, var_name(var, n), term.label);
                terms.push(FiberTerm { base, fiber, coeff, radius: term.radius, label });
            }
        }
    }
    FiberForm::new(n, form.fiber_dim, terms)
}

fn var_name(var: usize, n: usize) -> String {
    if var < n {
        format!("x{}", var + 1)
    } else {
        format!("t{}", var - n + 1)
    }
}

/// Coefficients of `dω` at `(x, t)`. With `step = None` the partials come
/// from jets; otherwise from central differences of width `step`.
pub fn exterior_derivative_eval(
    form: &FiberForm,
    x: &[f64],
    t: &[f64],
    step: Option<f64>,
) -> Result<Coefficients> {
    form.check_point(x, Some(t))?;
    if let Some(h) = step {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be > 0, got {h}")));
        }
    }
    let n = form.base_dim;
    let point = [x, t].concat();
    let mut out = BTreeMap::new();
    for term in &form.terms {
        let grad: Vec<f64> = match step {
            None => {
                let jet = term.coeff.eval(&Jet::seed(&point, 1))?;
                (0..point.len()).map(|v| jet.first(v)).collect()
            }
            Some(h) => (0..point.len())
                .map(|v| {
                    let mut p = point.clone();
                    p[v] += h;
                    let plus = form.eval_coeff(term, &p[..n], &p[n..])?;
                    p[v] -= 2.0 * h;
                    let minus = form.eval_coeff(term, &p[..n], &p[n..])?;
                    Ok((plus - minus) / (2.0 * h))
                })
                .collect::<Result<_>>()?,
        };
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("derivative of {} at {point:?}", term.label)));
        }
        for (var, g) in grad.into_iter().enumerate() {
            if let Some((base, fiber, sign)) = wedge_front(term, var, n) {
                *out.entry((base, fiber)).or_insert(0.0) += sign * g;
            }
        }
    }
    Ok(out)
}

/// Exterior derivative on the base of `x ↦ π_* ω (x)` by central differences.
pub fn base_derivative_fd(form: &FiberForm, x: &[f64], order: usize, step: f64) -> Result<BaseForm> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {step}")));
    }
    let n = form.base_dim;
    let mut out = BaseForm::new();
    for j in 0..n {
        let mut p = x.to_vec();
        p[j] += step;
        let plus = fiber_integrate(form, &p, order)?;
        p[j] -= 2.0 * step;
        let minus = fiber_integrate(form, &p, order)?;
        let mut keys: Vec<&Vec<usize>> = plus.keys().chain(minus.keys()).collect();
        keys.sort();
        keys.dedup();
        for key in keys {
            let d = (plus.get(key).copied().unwrap_or(0.0) - minus.get(key).copied().unwrap_or(0.0)) / (2.0 * step);
            if let Some((base, sign)) = insert_sorted(key, j) {
                *out.entry(base).or_insert(0.0) += sign * d;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Commutation {
    /// `π_*(dω)(x)`
    pub integrated_derivative: BaseForm,
    /// `d(π_* ω)(x)`
    pub derivative_of_integral: BaseForm,
    pub residual: f64,
}

pub fn commutation_residual(form: &FiberForm, x: &[f64], order: usize, step: f64) -> Result<Commutation> {
    let lhs = fiber_integrate(&exterior_derivative(form)?, x, order)?;
    let rhs = base_derivative_fd(form, x, order, step)?;
    let residual = max_abs_difference(&lhs, &rhs);
    Ok(Commutation { integrated_derivative: lhs, derivative_of_integral: rhs, residual })
}

/// Test forms on `R² × R`: a Gaussian-damped fiber form, a closed
/// `t`-independent base form and a linear Gaussian form.
pub fn sample_forms() -> Vec<(&'static str, FiberForm)> {
    let build = |terms: &[(&str, &str)]| FiberForm::from_expressions(2, 1, terms, DEFAULT_RADIUS).expect("valid sample form");
    vec![
        ("sin(x1)*exp(-t1^2) dt1", build(&[("sin(x1)*exp(-t1^2)", "dt1")])),
        ("x2 dx1 + x1 dx2", build(&[("x2", "dx1"), ("x1", "dx2")])),
        ("x1*exp(-t1^2) dt1", build(&[("x1*exp(-t1^2)", "dt1")])),
    ]
}
