//! Quadrature on the indicatrix `I_x = {y : F(x, y) = 1}` with the measure
//! induced by `g(x, ·)`.
//!
//! The indicatrix is traversed as a radial graph over the unit sphere,
//! `θ ↦ u(θ) / F(x, u(θ))`. The node weight is the Gram determinant of the
//! embedding's Jacobian in the metric `g(x, y)` times the parameter-space
//! weight:
//!
//! * n = 2: uniform trapezoid in the angle (`order` nodes)
//! * n = 3: Gauss–Legendre in colatitude (`order` nodes) × trapezoid in
//!   longitude (`2·order` nodes)

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finsler::{fundamental_tensor, FinslerStructure, CONVEXITY_TOL};
use crate::taylor::Jet;

pub const DEFAULT_ORDER_2D: usize = 128;
pub const DEFAULT_ORDER_3D: usize = 32;

pub fn default_order(dim: usize) -> usize {
    if dim == 2 {
        DEFAULT_ORDER_2D
    } else {
        DEFAULT_ORDER_3D
    }
}

/// Smallest order accepted by [`build_quadrature`].
pub fn min_order(dim: usize) -> usize {
    if dim == 2 {
        4
    } else {
        2
    }
}

#[derive(Debug, Clone)]
pub struct IndicatrixQuadrature {
    x: Vec<f64>,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    metrics: Vec<DMatrix<f64>>,
    order: usize,
    volume: f64,
}

impl IndicatrixQuadrature {
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `g(x, yₐ)` at every node.
    pub fn metrics(&self) -> &[DMatrix<f64>] {
        &self.metrics
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σₐ wₐ vₐ` componentwise over per-node arrays of equal length,
    /// summed in node order.
    pub fn weighted_sum(&self, values: &[Vec<f64>]) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: values.len() });
        }
        let width = values.first().map_or(0, Vec::len);
        let mut acc = vec![0.0; width];
        for (a, (w, v)) in self.weights.iter().zip(values).enumerate() {
            if v.len() != width {
                return Err(Error::DimensionMismatch { expected: width, got: v.len() });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite(format!("integrand at node {a} (y = {:?})", self.nodes[a])));
            }
            for (s, c) in acc.iter_mut().zip(v) {
                *s += w * c;
            }
        }
        Ok(acc)
    }
}

/// Radial projection of `u` onto the indicatrix: `u / F(x, u)`.
pub fn indicatrix_point(f: &FinslerStructure, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if u.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroDirection);
    }
    let r = f.eval(x, u)?;
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("F(x, u) = {r} is not positive at u = {u:?}")));
    }
    Ok(u.iter().map(|v| v / r).collect())
}

/// Unit sphere point and its parameter-space weight, before projection.
struct SphereNode {
    params: Vec<f64>,
    weight: f64,
}

fn sphere_nodes(dim: usize, order: usize) -> Result<Vec<SphereNode>> {
    match dim {
        2 => {
            let h = 2.0 * PI / order as f64;
            Ok((0..order).map(|a| SphereNode { params: vec![a as f64 * h], weight: h }).collect())
        }
        3 => {
            let degree = NonZeroUsize::new(order).expect("order checked above");
            let rule = GaussLegendre::new(degree);
            let nlon = 2 * order;
            let hlon = 2.0 * PI / nlon as f64;
            let mut nodes = Vec::with_capacity(order * nlon);
            for &(t, w) in rule.as_node_weight_pairs() {
                let theta = 0.5 * PI * (t + 1.0);
                for b in 0..nlon {
                    nodes.push(SphereNode {
                        params: vec![theta, b as f64 * hlon],
                        weight: 0.5 * PI * w * hlon,
                    });
                }
            }
            Ok(nodes)
        }
        n => Err(Error::UnsupportedDimension(n)),
    }
}

fn sphere_embedding(params: &[Jet]) -> Vec<Jet> {
    match params {
        [t] => vec![t.cos(), t.sin()],
        [theta, phi] => {
            let s = theta.sin();
            vec![&s * &phi.cos(), &s * &phi.sin(), theta.cos()]
        }
        _ => unreachable!("sphere parametrization is 1- or 2-dimensional"),
    }
}

/// Point, weight and fundamental tensor of one node.
type Node = (Vec<f64>, f64, DMatrix<f64>);

pub fn build_quadrature(f: &FinslerStructure, x: &[f64], order: usize) -> Result<IndicatrixQuadrature> {
    let n = f.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if !(2..=3).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    if order < min_order(n) {
        return Err(Error::InvalidArgument(format!(
            "quadrature order {order} below minimum {} for n = {n}",
            min_order(n)
        )));
    }
    let base = sphere_nodes(n, order)?;
    let xs = Jet::constants(x);

    let built: Vec<Result<Node>> = base
        .par_iter()
        .enumerate()
        .map(|(a, node)| {
            let params = Jet::seed(&node.params, 1);
            let u = sphere_embedding(&params);
            let r = f.eval_jets(&xs, &u)?;
            if !(r.value() > 0.0) {
                return Err(Error::DegenerateMeasure {
                    node: a,
                    y: u.iter().map(Jet::value).collect(),
                    reason: format!("F = {} is not positive", r.value()),
                });
            }
            let emb: Vec<Jet> = u.iter().map(|c| c / &r).collect();
            let y: Vec<f64> = emb.iter().map(Jet::value).collect();
            let jac = DMatrix::from_fn(n, n - 1, |i, p| emb[i].first(p));
            let g = fundamental_tensor(f, x, &y)?.g;
            let min_eig = SymmetricEigen::new(g.clone()).eigenvalues.min();
            if !(min_eig > CONVEXITY_TOL) {
                return Err(Error::DegenerateMeasure {
                    node: a,
                    y,
                    reason: format!("fundamental tensor not positive definite (min eigenvalue {min_eig:e})"),
                });
            }
            let gram = jac.transpose() * &g * &jac;
            let det = gram.determinant();
            if !(det >= 0.0) {
                return Err(Error::DegenerateMeasure { node: a, y, reason: format!("Gram determinant {det:e}") });
            }
            Ok((y, det.sqrt() * node.weight, g))
        })
        .collect();

    let mut nodes = Vec::with_capacity(built.len());
    let mut weights = Vec::with_capacity(built.len());
    let mut metrics = Vec::with_capacity(built.len());
    for item in built {
        let (y, w, g) = item?;
        nodes.push(y);
        weights.push(w);
        metrics.push(g);
    }
    let volume: f64 = weights.iter().sum();
    if !(volume > 0.0) {
        return Err(Error::NonFinite(format!("indicatrix volume {volume}")));
    }
    Ok(IndicatrixQuadrature { x: x.to_vec(), nodes, weights, metrics, order, volume })
}

/// `Σₐ wₐ f(yₐ)`; the un-normalized integral.
pub fn integrate_scalar<F>(f: F, q: &IndicatrixQuadrature) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let values: Vec<Vec<f64>> = q.nodes.iter().map(|y| vec![f(y)]).collect();
    Ok(q.weighted_sum(&values)?[0])
}

/// Componentwise `Σₐ wₐ f(yₐ)` for array-valued integrands of fixed length.
pub fn integrate_tensor<F>(f: F, q: &IndicatrixQuadrature) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let values: Vec<Vec<f64>> = q.nodes.iter().map(|y| f(y)).collect();
    q.weighted_sum(&values)
}

/// Roughly uniform unit vectors: equally spaced angles for n = 2, the 26
/// normalized nonzero points of {−1, 0, 1}³ when `count == 26` and n = 3,
/// a Fibonacci lattice otherwise in 3D.
pub fn sphere_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        2 => (0..count)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + 0.5) / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 if count != 26 => {
            let golden = PI * (3.0 - 5.0_f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
        _ => {
            let total = 3usize.pow(dim as u32);
            (0..total)
                .filter_map(|mut code| {
                    let v: Vec<f64> = (0..dim)
                        .map(|_| {
                            let d = code % 3;
                            code /= 3;
                            d as f64 - 1.0
                        })
                        .collect();
                    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    (norm > 0.0).then(|| v.iter().map(|c| c / norm).collect())
                })
                .take(count)
                .collect()
        }
    }
}
