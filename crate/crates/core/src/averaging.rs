//! Fiberwise averages over the indicatrix and the deviation tensors built
//! from them.
//!
//! For a quadrature `q` on `I_x` with total volume `vol`, the average of a
//! field `P(x, y)` is `⟨P⟩(x) = (1/vol) Σₐ wₐ P(x, yₐ)`. Every average in this
//! module goes through [`average_values`], so two fields averaged with the
//! same `q` see exactly the same weights in the same summation order.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finsler::{chern_coefficients, christoffel, FinslerFunction, FinslerStructure};
use crate::indicatrix::{build_quadrature, indicatrix_point, IndicatrixQuadrature};
use crate::taylor::{DiffError, Jet};
use crate::tensor::Tensor3;

pub const DEFAULT_TOL_RIEMANNIAN: f64 = 1e-6;
pub const DEFAULT_TOL_BERWALD: f64 = 1e-5;

/// Number of probe directions used by default for classification.
pub fn default_probes(dim: usize) -> usize {
    if dim == 2 {
        16
    } else {
        26
    }
}

/// Base step for differentiating `⟨g⟩` in `x`: `1e-4 · (1 + |x|)`.
pub fn default_base_step(x: &[f64]) -> f64 {
    1e-4 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// `⟨g_ij⟩(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedMetric {
    pub h: DMatrix<f64>,
    pub x: Vec<f64>,
    pub order: usize,
}

/// `⟨Γⁱⱼₖ⟩(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedConnection {
    pub gamma: Tensor3,
    pub x: Vec<f64>,
    pub order: usize,
}

/// `(1/vol) Σₐ wₐ vₐ`, componentwise and in node order.
pub fn average_values(q: &IndicatrixQuadrature, values: &[Vec<f64>]) -> Result<Vec<f64>> {
    let sum = q.weighted_sum(values)?;
    let vol = q.volume();
    Ok(sum.into_iter().map(|s| s / vol).collect())
}

fn check_base(f: &FinslerStructure, x: &[f64], q: &IndicatrixQuadrature) -> Result<()> {
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x.len() });
    }
    if q.x() != x {
        return Err(Error::InvalidArgument(format!(
            "quadrature was built at x = {:?}, not at x = {x:?}",
            q.x()
        )));
    }
    Ok(())
}

fn matrix_from(n: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v)
}

fn tensor_from(n: usize, v: &[f64]) -> Tensor3 {
    Tensor3::from_fn(n, |i, j, k| v[(i * n + j) * n + k])
}

pub fn average_metric(f: &FinslerStructure, x: &[f64], q: &IndicatrixQuadrature) -> Result<AveragedMetric> {
    check_base(f, x, q)?;
    let values: Vec<Vec<f64>> = q.metrics().iter().map(|g| g.as_slice().to_vec()).collect();
    let avg = average_values(q, &values)?;
    let n = f.dim();
    let h = matrix_from(n, &avg);
    if h.clone().cholesky().is_none() {
        return Err(Error::SingularMetric { context: format!("averaged metric at x = {x:?}") });
    }
    Ok(AveragedMetric { h, x: x.to_vec(), order: q.order() })
}

/// Chern coefficients at every node of `q`, in node order.
pub fn chern_at_nodes(f: &FinslerStructure, q: &IndicatrixQuadrature) -> Result<Vec<Tensor3>> {
    let x = q.x();
    q.nodes()
        .par_iter()
        .map(|y| chern_coefficients(f, x, y).map(|c| c.gamma))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn average_tensors(q: &IndicatrixQuadrature, fields: &[Tensor3]) -> Result<Tensor3> {
    let n = fields.first().map_or(0, Tensor3::dim);
    let values: Vec<Vec<f64>> = fields.iter().map(|t| t.as_slice().to_vec()).collect();
    Ok(tensor_from(n, &average_values(q, &values)?))
}

pub fn average_connection(
    f: &FinslerStructure,
    x: &[f64],
    q: &IndicatrixQuadrature,
) -> Result<AveragedConnection> {
    check_base(f, x, q)?;
    let gamma = average_tensors(q, &chern_at_nodes(f, q)?)?;
    Ok(AveragedConnection { gamma, x: x.to_vec(), order: q.order() })
}

/// Average of a (1,1)-tensor family `y ↦ A(y)` over the nodes of `q`.
pub fn average_operator_family<A>(apply: A, q: &IndicatrixQuadrature) -> Result<DMatrix<f64>>
where
    A: Fn(&[f64]) -> DMatrix<f64>,
{
    let mats: Vec<DMatrix<f64>> = q.nodes().iter().map(|y| apply(y)).collect();
    let n = mats.first().map_or(0, DMatrix::nrows);
    if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(Error::InvalidArgument("operator family must be square of constant size".into()));
    }
    let values: Vec<Vec<f64>> = mats.iter().map(|m| m.as_slice().to_vec()).collect();
    Ok(matrix_from(n, &average_values(q, &values)?))
}

/// Average of a `y`-independent rank-3 field.
pub fn average_constant_tensor(t: &Tensor3, q: &IndicatrixQuadrature) -> Result<Tensor3> {
    average_tensors(q, &vec![t.clone(); q.len()])
}

/// Levi-Civita connection of `x ↦ ⟨g⟩(x)`, with `∂⟨g⟩/∂x` from central
/// differences over base points that each get their own quadrature.
pub fn averaged_levi_civita(f: &FinslerStructure, x: &[f64], order: usize, step: f64) -> Result<Tensor3> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("base step must be > 0, got {step}")));
    }
    let n = f.dim();
    let mut points = vec![x.to_vec()];
    for k in 0..n {
        for s in [1.0, -1.0] {
            let mut p = x.to_vec();
            p[k] += s * step;
            points.push(p);
        }
    }
    let metrics: Vec<DMatrix<f64>> = points
        .par_iter()
        .map(|p| {
            let q = build_quadrature(f, p, order)?;
            Ok(average_metric(f, p, &q)?.h)
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let dh: Vec<DMatrix<f64>> =
        (0..n).map(|k| (&metrics[1 + 2 * k] - &metrics[2 + 2 * k]) / (2.0 * step)).collect();
    christoffel(&metrics[0], &dh)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationOptions {
    pub tol_riemannian: f64,
    pub tol_berwald: f64,
    /// Defaults to [`default_base_step`] when `None`.
    pub base_step: Option<f64>,
}

impl Default for DeviationOptions {
    fn default() -> Self {
        Self { tol_riemannian: DEFAULT_TOL_RIEMANNIAN, tol_berwald: DEFAULT_TOL_BERWALD, base_step: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub x: Vec<f64>,
    /// Probe directions projected onto `I_x`.
    pub probes: Vec<Vec<f64>>,
    pub averaged_metric: DMatrix<f64>,
    pub averaged_connection: Tensor3,
    pub levi_civita: Tensor3,
    /// `δg(y) = g(x, y) − ⟨g⟩(x)` at each probe.
    pub delta_g: Vec<DMatrix<f64>>,
    /// `δΓ(y) = Γ(x, y) − ⟨Γ⟩(x)` at each probe.
    pub delta_gamma: Vec<Tensor3>,
    /// `T = ʰΓ(x) − ⟨Γ⟩(x)`.
    pub t: Tensor3,
    pub sup_delta_g: f64,
    pub sup_delta_gamma: f64,
    pub t_norm: f64,
    /// Sup over probes of the largest `|λ|` with `δg v = λ ⟨g⟩ v`.
    pub delta_g_operator_norm: f64,
    pub riemannian: bool,
    pub berwald: bool,
    pub options: DeviationOptions,
}

pub fn deviation_tensors(
    f: &FinslerStructure,
    x: &[f64],
    q: &IndicatrixQuadrature,
    probe_directions: &[Vec<f64>],
    options: DeviationOptions,
) -> Result<DeviationReport> {
    check_base(f, x, q)?;
    if probe_directions.is_empty() {
        return Err(Error::InvalidArgument("at least one probe direction is required".into()));
    }
    for (name, tol) in [("tol_riemannian", options.tol_riemannian), ("tol_berwald", options.tol_berwald)] {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be > 0, got {tol}")));
        }
    }
    let h = average_metric(f, x, q)?.h;
    let avg_gamma = average_connection(f, x, q)?.gamma;
    let step = options.base_step.unwrap_or_else(|| default_base_step(x));
    let lc = averaged_levi_civita(f, x, q.order(), step)?;

    let probes: Vec<Vec<f64>> =
        probe_directions.iter().map(|u| indicatrix_point(f, x, u)).collect::<Result<_>>()?;
    let pointwise: Vec<(DMatrix<f64>, Tensor3)> = probes
        .par_iter()
        .map(|y| {
            let g = crate::finsler::fundamental_tensor(f, x, y)?.g;
            let gamma = chern_coefficients(f, x, y)?.gamma;
            Ok((g, gamma))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMetric { context: format!("averaged metric at x = {x:?}") })?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::SingularMetric { context: format!("averaged metric at x = {x:?}") })?;

    let mut delta_g = Vec::with_capacity(probes.len());
    let mut delta_gamma = Vec::with_capacity(probes.len());
    let (mut sup_g, mut sup_gamma, mut op_norm) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (g, gamma) in pointwise {
        let dg = g - &h;
        let dgamma = gamma.sub(&avg_gamma);
        sup_g = sup_g.max(dg.norm());
        sup_gamma = sup_gamma.max(dgamma.frobenius());
        let similar = &l_inv * &dg * l_inv.transpose();
        let eig = SymmetricEigen::new(similar).eigenvalues;
        op_norm = op_norm.max(eig.amax());
        delta_g.push(dg);
        delta_gamma.push(dgamma);
    }
    let t = lc.sub(&avg_gamma);
    let t_norm = t.frobenius();
    Ok(DeviationReport {
        x: x.to_vec(),
        probes,
        averaged_metric: h,
        averaged_connection: avg_gamma,
        levi_civita: lc,
        delta_g,
        delta_gamma,
        t,
        sup_delta_g: sup_g,
        sup_delta_gamma: sup_gamma,
        t_norm,
        delta_g_operator_norm: op_norm,
        riemannian: sup_g <= options.tol_riemannian,
        berwald: sup_gamma <= options.tol_berwald,
        options,
    })
}

/// `⟨δg⟩` and `⟨δΓ⟩` over the nodes of the same quadrature that defines
/// `⟨g⟩` and `⟨Γ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanDeviations {
    pub delta_g: DMatrix<f64>,
    pub delta_gamma: Tensor3,
}

pub fn mean_deviations(f: &FinslerStructure, x: &[f64], q: &IndicatrixQuadrature) -> Result<MeanDeviations> {
    check_base(f, x, q)?;
    let h = average_metric(f, x, q)?.h;
    let gammas = chern_at_nodes(f, q)?;
    let avg_gamma = average_tensors(q, &gammas)?;
    let dg: Vec<Vec<f64>> = q.metrics().iter().map(|g| (g - &h).as_slice().to_vec()).collect();
    let dgamma: Vec<Tensor3> = gammas.iter().map(|g| g.sub(&avg_gamma)).collect();
    Ok(MeanDeviations {
        delta_g: matrix_from(f.dim(), &average_values(q, &dg)?),
        delta_gamma: average_tensors(q, &dgamma)?,
    })
}

/// Largest max-abs deviation of `⟨(1−t)Γ + t⟨Γ⟩⟩` from `⟨Γ⟩` over `t_values`.
pub fn homotopy_check(
    f: &FinslerStructure,
    x: &[f64],
    q: &IndicatrixQuadrature,
    t_values: &[f64],
) -> Result<f64> {
    check_base(f, x, q)?;
    if let Some(t) = t_values.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!("homotopy parameter {t} outside [0, 1]")));
    }
    let gammas = chern_at_nodes(f, q)?;
    let avg = average_tensors(q, &gammas)?;
    let mut worst: f64 = 0.0;
    for &t in t_values {
        let blended: Vec<Tensor3> = gammas
            .iter()
            .map(|g| {
                let mut b = g.scaled(1.0 - t);
                b.add_scaled(t, &avg);
                b
            })
            .collect();
        worst = worst.max(average_tensors(q, &blended)?.sub(&avg).max_abs());
    }
    Ok(worst)
}

/// A base diffeomorphism `x̃ = ψ(x)` given through its inverse on jets.
pub trait ChartMap: Send + Sync {
    fn dim(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Vec<f64>;
    /// `x = ψ⁻¹(x̃)`.
    fn inverse(&self, xt: &[Jet]) -> Vec<Jet>;
    /// `∂xⁱ/∂x̃ᵃ` as `[i][a]`, evaluated on jets.
    fn inverse_jacobian(&self, xt: &[Jet]) -> Vec<Vec<Jet>>;
}

#[derive(Debug, Clone)]
pub struct IdentityChart(pub usize);

impl ChartMap for IdentityChart {
    fn dim(&self) -> usize {
        self.0
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn inverse(&self, xt: &[Jet]) -> Vec<Jet> {
        xt.to_vec()
    }

    fn inverse_jacobian(&self, _xt: &[Jet]) -> Vec<Vec<Jet>> {
        constant_matrix(&DMatrix::identity(self.0, self.0))
    }
}

/// `ψ(x) = M x` with invertible `M`.
#[derive(Debug, Clone)]
pub struct LinearChart {
    m: DMatrix<f64>,
    m_inv: DMatrix<f64>,
}

impl LinearChart {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let m_inv = m.clone().try_inverse().ok_or_else(|| Error::SingularChart(vec![]))?;
        Ok(Self { m, m_inv })
    }
}

fn constant_matrix(m: &DMatrix<f64>) -> Vec<Vec<Jet>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|a| Jet::constant(m[(i, a)])).collect()).collect()
}

fn mat_vec(m: &DMatrix<f64>, v: &[Jet]) -> Vec<Jet> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).fold(Jet::constant(0.0), |acc, a| acc + &v[a] * m[(i, a)]))
        .collect()
}

impl ChartMap for LinearChart {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (&self.m * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
    }

    fn inverse(&self, xt: &[Jet]) -> Vec<Jet> {
        mat_vec(&self.m_inv, xt)
    }

    fn inverse_jacobian(&self, _xt: &[Jet]) -> Vec<Vec<Jet>> {
        constant_matrix(&self.m_inv)
    }
}

/// `ψ(x) = (x¹ + c (x²)², x², x³, …)`.
#[derive(Debug, Clone)]
pub struct QuadraticShear {
    pub dim: usize,
    pub c: f64,
}

impl ChartMap for QuadraticShear {
    fn dim(&self) -> usize {
        self.dim
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        out[0] += self.c * x[1] * x[1];
        out
    }

    fn inverse(&self, xt: &[Jet]) -> Vec<Jet> {
        let mut out = xt.to_vec();
        out[0] = &xt[0] - &(&xt[1] * &xt[1]) * self.c;
        out
    }

    fn inverse_jacobian(&self, xt: &[Jet]) -> Vec<Vec<Jet>> {
        let mut jac = constant_matrix(&DMatrix::identity(self.dim, self.dim));
        jac[0][1] = &xt[1] * (-2.0 * self.c);
        jac
    }
}

struct PulledBack {
    base: Arc<dyn FinslerFunction>,
    chart: Arc<dyn ChartMap>,
}

impl FinslerFunction for PulledBack {
    fn eval(&self, xt: &[Jet], yt: &[Jet]) -> Result<Jet, DiffError> {
        let x = self.chart.inverse(xt);
        let jac = self.chart.inverse_jacobian(xt);
        let y: Vec<Jet> = jac
            .iter()
            .map(|row| row.iter().zip(yt).fold(Jet::constant(0.0), |acc, (d, v)| acc + d * v))
            .collect();
        self.base.eval(&x, &y)
    }
}

/// `F̃(x̃, ỹ) = F(ψ⁻¹(x̃), Dψ⁻¹(x̃) ỹ)`, the same structure read in the chart `x̃`.
pub fn transform_structure(f: &FinslerStructure, chart: Arc<dyn ChartMap>) -> Result<FinslerStructure> {
    if chart.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: chart.dim() });
    }
    let label = format!("{} (transformed chart)", f.label());
    Ok(FinslerStructure::new(f.dim(), label, Arc::new(PulledBack { base: f.function().clone(), chart })))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    /// `⟨Γ̃⟩` computed directly in the new chart.
    pub direct: Tensor3,
    /// The transformation law applied to `⟨Γ⟩`.
    pub predicted: Tensor3,
    /// Max-abs componentwise difference.
    pub residual: f64,
}

pub fn covariance_check(
    f: &FinslerStructure,
    chart: Arc<dyn ChartMap>,
    x: &[f64],
    order: usize,
) -> Result<CovarianceReport> {
    let n = f.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let xt = chart.forward(x);
    let seeded = Jet::seed(&xt, 2);
    let inv = chart.inverse(&seeded);
    // ∂xⁱ/∂x̃ᵃ and ∂²xⁱ/∂x̃ᵇ∂x̃ᶜ
    let d_inv = DMatrix::from_fn(n, n, |i, a| inv[i].first(a));
    let dd_inv = Tensor3::from_fn(n, |i, b, c| inv[i].second(b, c));
    let d_fwd = d_inv.clone().try_inverse().ok_or_else(|| Error::SingularChart(xt.clone()))?;
    if !(d_inv.determinant().abs() > 1e-14) || d_fwd.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularChart(xt));
    }

    let q = build_quadrature(f, x, order)?;
    let gamma = average_connection(f, x, &q)?.gamma;
    let ft = transform_structure(f, chart)?;
    let qt = build_quadrature(&ft, &xt, order)?;
    let direct = average_connection(&ft, &xt, &qt)?.gamma;

    let predicted = Tensor3::from_fn(n, |a, b, c| {
        let mut s = 0.0;
        for i in 0..n {
            let mut inner = dd_inv[(i, b, c)];
            for j in 0..n {
                for k in 0..n {
                    inner += d_inv[(j, b)] * d_inv[(k, c)] * gamma[(i, j, k)];
                }
            }
            s += d_fwd[(a, i)] * inner;
        }
        s
    });
    let residual = direct.sub(&predicted).max_abs();
    Ok(CovarianceReport { x: x.to_vec(), x_tilde: xt, direct, predicted, residual })
}
