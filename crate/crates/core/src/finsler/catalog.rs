//! Built-in Finsler structures with closed-form evaluators.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_strong_convexity, FinslerStructure, CONVEXITY_TOL};
use crate::error::{Error, Result};
use crate::indicatrix::sphere_directions;
use crate::taylor::Jet;

/// Default quartic perturbation strength.
pub const DEFAULT_QUARTIC_EPS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum Catalog {
    /// `F = |y|`
    Euclidean { dim: usize },
    /// `F = √(a_ij yⁱ yʲ)` with constant positive-definite `a`
    RiemannianConstant { a: DMatrix<f64> },
    /// `F = √((y¹)² + e^{2x¹}(y²)²)`
    RiemannianExp2d,
    /// `F = |y| + b·y` with constant `b`, `|b| < 1`
    RandersFlat { b: Vec<f64> },
    /// `F = √((y¹)² + e^{2x¹}(y²)²) + b·y` with constant covector `b`
    RandersGeneral { b: Vec<f64> },
    /// `F² = |y|² + ε Σ (yⁱ)⁴ / |y|²`
    MinkowskiQuartic { dim: usize, eps: f64 },
}

impl Catalog {
    pub const IDS: [&'static str; 6] = [
        "euclidean",
        "riemannian-constant",
        "riemannian-exp2d",
        "randers-flat",
        "randers-general",
        "minkowski-perturbed-quartic",
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Catalog::Euclidean { .. } => "euclidean",
            Catalog::RiemannianConstant { .. } => "riemannian-constant",
            Catalog::RiemannianExp2d => "riemannian-exp2d",
            Catalog::RandersFlat { .. } => "randers-flat",
            Catalog::RandersGeneral { .. } => "randers-general",
            Catalog::MinkowskiQuartic { .. } => "minkowski-perturbed-quartic",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Catalog::Euclidean { dim } | Catalog::MinkowskiQuartic { dim, .. } => *dim,
            Catalog::RiemannianConstant { a } => a.nrows(),
            Catalog::RiemannianExp2d | Catalog::RandersGeneral { .. } => 2,
            Catalog::RandersFlat { b } => b.len(),
        }
    }

    /// Whether `F` is the norm of a Riemannian metric.
    pub fn is_riemannian(&self) -> bool {
        matches!(
            self,
            Catalog::Euclidean { .. } | Catalog::RiemannianConstant { .. } | Catalog::RiemannianExp2d
        )
    }

    /// Builds the structure after validating its parameters.
    pub fn build(&self) -> Result<FinslerStructure> {
        let dim = self.dim();
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("{} needs dimension ≥ 2", self.id())));
        }
        let label = self.id();
        let structure = match self.clone() {
            Catalog::Euclidean { dim } => FinslerStructure::from_fn(dim, label, |_x, y| norm(y)),
            Catalog::RiemannianConstant { a } => {
                if a.nrows() != a.ncols() || (&a - a.transpose()).amax() > 1e-12 {
                    return Err(Error::InvalidArgument("riemannian-constant needs a symmetric matrix".into()));
                }
                if SymmetricEigen::new(a.clone()).eigenvalues.min() <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "riemannian-constant needs a positive-definite matrix".into(),
                    ));
                }
                FinslerStructure::from_fn(dim, label, move |_x, y| quadratic_form(&a, y).sqrt())
            }
            Catalog::RiemannianExp2d => FinslerStructure::from_fn(2, label, exp2d_alpha),
            Catalog::RandersFlat { b } => {
                let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                if bnorm >= 1.0 {
                    return Err(Error::InvalidArgument(format!("randers-flat needs |b| < 1, got {bnorm}")));
                }
                FinslerStructure::from_fn(dim, label, move |_x, y| norm(y) + linear(&b, y))
            }
            Catalog::RandersGeneral { b } => {
                if b.len() != 2 {
                    return Err(Error::DimensionMismatch { expected: 2, got: b.len() });
                }
                // |b|_a at the origin; the norm varies with x¹.
                let bnorm = (b[0] * b[0] + b[1] * b[1]).sqrt();
                if bnorm >= 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "randers-general needs |b|_a < 1 at the origin, got {bnorm}"
                    )));
                }
                FinslerStructure::from_fn(2, label, move |x, y| exp2d_alpha(x, y) + linear(&b, y))
            }
            Catalog::MinkowskiQuartic { dim, eps } => {
                if !eps.is_finite() {
                    return Err(Error::InvalidArgument("quartic ε must be finite".into()));
                }
                FinslerStructure::from_fn(dim, label, move |_x, y| {
                    let r2 = y.iter().fold(Jet::constant(0.0), |acc, v| acc + v * v);
                    let q = y.iter().fold(Jet::constant(0.0), |acc, v| acc + v.powi(4));
                    (&r2 + &(q * eps / &r2)).sqrt()
                })
            }
        };
        if let Catalog::MinkowskiQuartic { dim, .. } = self {
            let directions = sphere_directions(*dim, 64);
            let report = check_strong_convexity(&structure, &vec![0.0; *dim], &directions, CONVEXITY_TOL);
            if !report.ok {
                return Err(Error::InvalidArgument(format!(
                    "minkowski-perturbed-quartic is not strongly convex (min eigenvalue {} at {:?})",
                    report.min_eigenvalue, report.worst_direction
                )));
            }
        }
        Ok(structure)
    }
}

fn norm(y: &[Jet]) -> Jet {
    y.iter().fold(Jet::constant(0.0), |acc, v| acc + v * v).sqrt()
}

fn linear(b: &[f64], y: &[Jet]) -> Jet {
    b.iter().zip(y).fold(Jet::constant(0.0), |acc, (bi, v)| acc + v * *bi)
}

fn quadratic_form(a: &DMatrix<f64>, y: &[Jet]) -> Jet {
    let n = y.len();
    let mut acc = Jet::constant(0.0);
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                acc = acc + &(&y[i] * &y[j]) * a[(i, j)];
            }
        }
    }
    acc
}

fn exp2d_alpha(x: &[Jet], y: &[Jet]) -> Jet {
    (&y[0] * &y[0] + (&x[0] * 2.0).exp() * &y[1] * &y[1]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(Catalog::RandersFlat { b: vec![0.8, 0.7] }.build().is_err());
        assert!(Catalog::RandersGeneral { b: vec![0.1] }.build().is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(Catalog::RiemannianConstant { a: indefinite }.build().is_err());
        assert!(Catalog::MinkowskiQuartic { dim: 2, eps: -0.9 }.build().is_err());
    }

    #[test]
    fn quartic_default_is_admissible() {
        let f = Catalog::MinkowskiQuartic { dim: 2, eps: DEFAULT_QUARTIC_EPS }.build().unwrap();
        let v = f.eval(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        let expected = (25.0 + 0.1 * (81.0 + 256.0) / 25.0_f64).sqrt();
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn ids_round_trip() {
        let all = [
            Catalog::Euclidean { dim: 2 },
            Catalog::RiemannianConstant { a: DMatrix::identity(2, 2) },
            Catalog::RiemannianExp2d,
            Catalog::RandersFlat { b: vec![0.1, 0.0] },
            Catalog::RandersGeneral { b: vec![0.1, 0.0] },
            Catalog::MinkowskiQuartic { dim: 2, eps: 0.1 },
        ];
        for (c, id) in all.iter().zip(Catalog::IDS) {
            assert_eq!(c.id(), id);
            assert_eq!(c.build().unwrap().label(), id);
        }
    }
}
