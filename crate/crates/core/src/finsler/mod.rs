//! Finsler structures on a chart and the tensors derived from them.
//!
//! Everything is computed from jets of the Lagrangian `L = F²`:
//!
//! * fundamental tensor `g_ij = ½ ∂²L/∂yⁱ∂yʲ`
//! * Cartan tensor `A_ijk = (F/2) ∂g_ij/∂yᵏ`
//! * spray `Gⁱ = ¼ gⁱˡ (yᵏ ∂²L/∂yˡ∂xᵏ − ∂L/∂xˡ)` and `Nⁱⱼ = ∂Gⁱ/∂yʲ`
//! * Chern coefficients `Γⁱⱼₖ = ½ gⁱˢ (δₖg_sj + δⱼg_sk − δₛg_jk)` with
//!   `δₖ = ∂/∂xᵏ − Nᵐₖ ∂/∂yᵐ`.
//!
//! A single order-3 jet of `L` in the 2n variables `(x, y)` carries every
//! derivative the spray and Chern formulas need, including `∂N/∂y` terms.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::taylor::{DiffError, Jet};
use crate::tensor::Tensor3;

pub mod catalog;

pub use catalog::Catalog;

/// Default threshold for the smallest eigenvalue of `g` in convexity checks.
pub const CONVEXITY_TOL: f64 = 1e-8;

/// `F(x, y)` evaluated on jets.
pub trait FinslerFunction: Send + Sync {
    fn eval(&self, x: &[Jet], y: &[Jet]) -> Result<Jet, DiffError>;
}

impl<F> FinslerFunction for F
where
    F: Fn(&[Jet], &[Jet]) -> Jet + Send + Sync,
{
    fn eval(&self, x: &[Jet], y: &[Jet]) -> Result<Jet, DiffError> {
        Ok(self(x, y))
    }
}

/// A positively 1-homogeneous, strongly convex norm on each tangent space of
/// a chart.
#[derive(Clone)]
pub struct FinslerStructure {
    dim: usize,
    label: String,
    func: Arc<dyn FinslerFunction>,
}

impl fmt::Debug for FinslerStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FinslerStructure")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .finish()
    }
}

impl FinslerStructure {
    pub fn new(dim: usize, label: impl Into<String>, func: Arc<dyn FinslerFunction>) -> Self {
        assert!(dim >= 2, "Finsler structures need dimension ≥ 2");
        Self { dim, label: label.into(), func }
    }

    pub fn from_fn<F>(dim: usize, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[Jet], &[Jet]) -> Jet + Send + Sync + 'static,
    {
        Self::new(dim, label, Arc::new(f))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn function(&self) -> &Arc<dyn FinslerFunction> {
        &self.func
    }

    pub fn eval_jets(&self, x: &[Jet], y: &[Jet]) -> Result<Jet> {
        Ok(self.func.eval(x, y)?)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x, y)?;
        let v = self.func.eval(&Jet::constants(x), &Jet::constants(y))?.value();
        if !v.is_finite() {
            return Err(DiffError::NonFinite { point: [x, y].concat() }.into());
        }
        Ok(v)
    }

    fn check_point(&self, x: &[f64], y: &[f64]) -> Result<()> {
        for v in [x, y] {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
            }
        }
        Ok(())
    }

    fn check_direction(&self, x: &[f64], y: &[f64]) -> Result<()> {
        self.check_point(x, y)?;
        if y.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroDirection);
        }
        Ok(())
    }

    /// Jet of `L = F²` in the variables `y` only, with `x` held fixed.
    fn lagrangian_y(&self, x: &[f64], y: &[f64], order: usize) -> Result<Jet> {
        self.check_direction(x, y)?;
        let f = self.func.eval(&Jet::constants(x), &Jet::seed(y, order))?;
        let l = &f * &f;
        if !l.is_finite() {
            return Err(DiffError::NonFinite { point: [x, y].concat() }.into());
        }
        Ok(l)
    }

    /// Jet of `L = F²` in `(x¹..xⁿ, y¹..yⁿ)`.
    fn lagrangian_xy(&self, x: &[f64], y: &[f64], order: usize) -> Result<Jet> {
        self.check_direction(x, y)?;
        let point = [x, y].concat();
        let vars = Jet::seed(&point, order);
        let (xs, ys) = vars.split_at(self.dim);
        let f = self.func.eval(xs, ys)?;
        let l = &f * &f;
        if !l.is_finite() {
            return Err(DiffError::NonFinite { point }.into());
        }
        Ok(l)
    }

    /// Maximum relative deviation of `F(x, λy)` from `λF(x, y)`.
    pub fn homogeneity_defect(&self, x: &[f64], y: &[f64], lambdas: &[f64]) -> Result<f64> {
        let base = self.eval(x, y)?;
        let mut worst: f64 = 0.0;
        for &l in lambdas {
            let scaled: Vec<f64> = y.iter().map(|v| v * l).collect();
            let v = self.eval(x, &scaled)?;
            worst = worst.max((v - l * base).abs() / (l * base).abs().max(f64::MIN_POSITIVE));
        }
        Ok(worst)
    }
}

/// `g_ij(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAtPoint {
    pub g: DMatrix<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartanAtPoint {
    pub a: Tensor3,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Spray coefficients `Gⁱ` and nonlinear connection `Nⁱⱼ = ∂Gⁱ/∂yʲ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SprayData {
    pub g: DVector<f64>,
    pub n: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConnectionKind {
    Chern { x: Vec<f64>, y: Vec<f64> },
    Averaged { x: Vec<f64> },
    LeviCivita { x: Vec<f64> },
}

/// Connection coefficients `Γⁱⱼₖ`, stored as `gamma[(i, j, k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionAtPoint {
    pub gamma: Tensor3,
    pub kind: ConnectionKind,
}

pub fn fundamental_tensor(f: &FinslerStructure, x: &[f64], y: &[f64]) -> Result<MetricAtPoint> {
    let l = f.lagrangian_y(x, y, 2)?;
    let n = f.dim();
    let g = DMatrix::from_fn(n, n, |i, j| 0.5 * l.second(i, j));
    Ok(MetricAtPoint { g, x: x.to_vec(), y: y.to_vec() })
}

pub fn cartan_tensor(f: &FinslerStructure, x: &[f64], y: &[f64]) -> Result<CartanAtPoint> {
    let l = f.lagrangian_y(x, y, 3)?;
    let scale = 0.25 * l.value().sqrt();
    let a = Tensor3::from_fn(f.dim(), |i, j, k| scale * l.third(i, j, k));
    Ok(CartanAtPoint { a, x: x.to_vec(), y: y.to_vec() })
}

fn invert(g: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let inv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMetric { context: context.to_string() })?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMetric { context: context.to_string() });
    }
    Ok(inv)
}

/// Derivative data of `L` at one `(x, y)`, shared by the spray and the
/// Chern connection.
struct LagrangianData {
    n: usize,
    y: Vec<f64>,
    ginv: DMatrix<f64>,
    /// ∂g_ab/∂xᵏ at `[(a, b, k)]`
    dg_dx: Tensor3,
    /// ∂g_ab/∂yᵐ at `[(a, b, m)]`
    dg_dy: Tensor3,
    spray: SprayData,
}

impl LagrangianData {
    fn new(f: &FinslerStructure, x: &[f64], y: &[f64]) -> Result<Self> {
        let n = f.dim();
        let l = f.lagrangian_xy(x, y, 3)?;
        let xv = |i: usize| i;
        let yv = |i: usize| n + i;
        let g = DMatrix::from_fn(n, n, |i, j| 0.5 * l.second(yv(i), yv(j)));
        let ginv = invert(&g, "spray/Chern evaluation")?;
        let dg_dx = Tensor3::from_fn(n, |a, b, k| 0.5 * l.third(yv(a), yv(b), xv(k)));
        let dg_dy = Tensor3::from_fn(n, |a, b, m| 0.5 * l.third(yv(a), yv(b), yv(m)));

        // Mˡ = yᵏ L_{yˡxᵏ} − L_{xˡ}
        let m_vec = DVector::from_fn(n, |lo, _| {
            (0..n).map(|k| y[k] * l.second(yv(lo), xv(k))).sum::<f64>() - l.first(xv(lo))
        });
        // ∂Mˡ/∂yʲ
        let dm = DMatrix::from_fn(n, n, |lo, j| {
            l.second(yv(lo), xv(j))
                + (0..n).map(|k| y[k] * l.third(yv(lo), xv(k), yv(j))).sum::<f64>()
                - l.second(xv(lo), yv(j))
        });
        let spray_g = &ginv * &m_vec * 0.25;
        let mut nl = DMatrix::zeros(n, n);
        for j in 0..n {
            // ∂gⁱˡ/∂yʲ = −gⁱᵃ (∂g_ab/∂yʲ) gᵇˡ
            let dg_j = DMatrix::from_fn(n, n, |a, b| dg_dy[(a, b, j)]);
            let dginv = -(&ginv * dg_j * &ginv);
            let col = (dginv * &m_vec + &ginv * dm.column(j)) * 0.25;
            nl.set_column(j, &col);
        }
        Ok(Self {
            n,
            y: y.to_vec(),
            ginv,
            dg_dx,
            dg_dy,
            spray: SprayData { g: spray_g, n: nl },
        })
    }

    /// δg_ab/δxᵏ
    fn horizontal_dg(&self) -> Tensor3 {
        let n = self.n;
        let nl = &self.spray.n;
        Tensor3::from_fn(n, |a, b, k| {
            self.dg_dx[(a, b, k)] - (0..n).map(|m| nl[(m, k)] * self.dg_dy[(a, b, m)]).sum::<f64>()
        })
    }

    fn chern(&self) -> Tensor3 {
        let n = self.n;
        let dg = self.horizontal_dg();
        let mut gamma = Tensor3::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let v = 0.5
                        * (0..n)
                            .map(|s| {
                                self.ginv[(i, s)] * (dg[(s, j, k)] + dg[(s, k, j)] - dg[(j, k, s)])
                            })
                            .sum::<f64>();
                    gamma[(i, j, k)] = v;
                    gamma[(i, k, j)] = v;
                }
            }
        }
        gamma
    }
}

pub fn spray(f: &FinslerStructure, x: &[f64], y: &[f64]) -> Result<SprayData> {
    Ok(LagrangianData::new(f, x, y)?.spray)
}

pub fn chern_coefficients(f: &FinslerStructure, x: &[f64], y: &[f64]) -> Result<ConnectionAtPoint> {
    let data = LagrangianData::new(f, x, y)?;
    let gamma = data.chern();
    if !gamma.is_finite() {
        return Err(Error::NonFinite(format!("Chern coefficients at x={x:?}, y={:?}", data.y)));
    }
    Ok(ConnectionAtPoint {
        gamma,
        kind: ConnectionKind::Chern { x: x.to_vec(), y: y.to_vec() },
    })
}

/// Christoffel symbols `½hⁱˢ(∂ₖh_sj + ∂ⱼh_sk − ∂ₛh_jk)` from a metric and its
/// first derivatives `dh[k] = ∂h/∂xᵏ`.
pub fn christoffel(h: &DMatrix<f64>, dh: &[DMatrix<f64>]) -> Result<Tensor3> {
    let n = h.nrows();
    let hinv = invert(h, "Levi-Civita connection")?;
    let mut gamma = Tensor3::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let v = 0.5
                    * (0..n)
                        .map(|s| hinv[(i, s)] * (dh[k][(s, j)] + dh[j][(s, k)] - dh[s][(j, k)]))
                        .sum::<f64>();
                gamma[(i, j, k)] = v;
                gamma[(i, k, j)] = v;
            }
        }
    }
    Ok(gamma)
}

/// Levi-Civita connection of a pointwise-available metric field, with
/// `∂h/∂x` by central differences of width `step`.
pub fn levi_civita<H>(h: H, x: &[f64], step: f64) -> Result<ConnectionAtPoint>
where
    H: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be > 0, got {step}")));
    }
    let n = x.len();
    let h0 = h(x)?;
    if h0.nrows() != n || h0.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h0.nrows() });
    }
    let mut dh = Vec::with_capacity(n);
    let mut probe = x.to_vec();
    for k in 0..n {
        probe[k] = x[k] + step;
        let plus = h(&probe)?;
        probe[k] = x[k] - step;
        let minus = h(&probe)?;
        probe[k] = x[k];
        dh.push((plus - minus) / (2.0 * step));
    }
    let gamma = christoffel(&h0, &dh)?;
    Ok(ConnectionAtPoint { gamma, kind: ConnectionKind::LeviCivita { x: x.to_vec() } })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub ok: bool,
    pub min_eigenvalue: f64,
    pub worst_direction: Vec<f64>,
}

/// Smallest eigenvalue of `g(x, ·)` over the sampled directions. Directions
/// where `g` cannot be evaluated count as failures with eigenvalue `NaN`.
pub fn check_strong_convexity(
    f: &FinslerStructure,
    x: &[f64],
    directions: &[Vec<f64>],
    tol: f64,
) -> ConvexityReport {
    let mut report = ConvexityReport {
        ok: !directions.is_empty(),
        min_eigenvalue: f64::INFINITY,
        worst_direction: Vec::new(),
    };
    for u in directions {
        let min = match fundamental_tensor(f, x, u) {
            Ok(m) => SymmetricEigen::new(m.g).eigenvalues.min(),
            Err(_) => f64::NAN,
        };
        if min.is_nan() || min < report.min_eigenvalue {
            report.min_eigenvalue = min;
            report.worst_direction = u.clone();
        }
        if !(min > tol) {
            report.ok = false;
        }
        if min.is_nan() {
            break;
        }
    }
    report
}
