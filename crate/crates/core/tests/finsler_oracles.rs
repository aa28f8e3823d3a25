//! Closed-form and independently coded references for the fundamental,
//! Cartan, spray and Chern computations.

use avgeom_core::finsler::*;
use avgeom_core::indicatrix::sphere_directions;
use avgeom_core::{Jet, Tensor3};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// `a(x) = diag(1, e^{2x¹})`, the Riemannian part of `randers-general`.
fn exp2d_a(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, (2.0 * x[0]).exp()])
}

/// Fundamental tensor of `F = √(aᵢⱼyⁱyʲ) + bᵢyⁱ`.
fn randers_g(a: &DMatrix<f64>, b: &[f64], y: &[f64]) -> DMatrix<f64> {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let alpha = (yv.transpose() * a * &yv)[(0, 0)].sqrt();
    let beta: f64 = b.iter().zip(y).map(|(u, v)| u * v).sum();
    let f = alpha + beta;
    let al = a * &yv / alpha;
    DMatrix::from_fn(n, n, |i, j| (f / alpha) * (a[(i, j)] - al[i] * al[j]) + (al[i] + b[i]) * (al[j] + b[j]))
}

fn randers_cartan(a: &DMatrix<f64>, b: &[f64], y: &[f64]) -> Tensor3 {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let alpha = (yv.transpose() * a * &yv)[(0, 0)].sqrt();
    let beta: f64 = b.iter().zip(y).map(|(u, v)| u * v).sum();
    let f = alpha + beta;
    let al = a * &yv / alpha;
    let h = DMatrix::from_fn(n, n, |i, j| a[(i, j)] - al[i] * al[j]);
    let rho: Vec<f64> = (0..n).map(|i| b[i] - beta / alpha * al[i]).collect();
    Tensor3::from_fn(n, |i, j, k| {
        f / (2.0 * alpha) * (h[(i, j)] * rho[k] + h[(j, k)] * rho[i] + h[(k, i)] * rho[j])
    })
}

/// Spray of `randers-general` from hand-derived `∂L/∂x` and `∂²L/∂y∂x`.
fn randers_general_spray(b: &[f64], x: &[f64], y: &[f64]) -> DVector<f64> {
    let e = (2.0 * x[0]).exp();
    let alpha = (y[0] * y[0] + e * y[1] * y[1]).sqrt();
    let f = alpha + b[0] * y[0] + b[1] * y[1];
    let al = [y[0] / alpha, e * y[1] / alpha];
    let fl = [al[0] + b[0], al[1] + b[1]];
    let l_x1 = 2.0 * f * e * y[1] * y[1] / alpha;
    let l_y_x1 = |l: usize| {
        let delta = if l == 1 { 1.0 } else { 0.0 };
        2.0 * fl[l] * e * y[1] * y[1] / alpha + 2.0 * f * e * 2.0 * y[1] * delta / alpha
            - 2.0 * f * e * y[1] * y[1] * al[l] / (alpha * alpha)
    };
    let m = DVector::from_fn(2, |l, _| y[0] * l_y_x1(l) - if l == 0 { l_x1 } else { 0.0 });
    let g = randers_g(&exp2d_a(x), b, y);
    g.try_inverse().unwrap() * m * 0.25
}

/// Fourth-order central difference of a vector/matrix valued map.
fn d4<T, F>(f: F, p: &[f64], var: usize, h: f64) -> T
where
    F: Fn(&[f64]) -> T,
    T: std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let at = |s: f64| {
        let mut q = p.to_vec();
        q[var] += s * h;
        f(&q)
    };
    (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) * (1.0 / (12.0 * h))
}

/// Chern coefficients of `randers-general` assembled from the closed-form
/// metric and spray, with finite differences for every derivative.
fn randers_general_chern_reference(b: &[f64], x: &[f64], y: &[f64]) -> Tensor3 {
    let h = 1e-3;
    let g = |x: &[f64], y: &[f64]| randers_g(&exp2d_a(x), b, y);
    let nl = DMatrix::from_fn(2, 2, |i, j| d4(|yy: &[f64]| randers_general_spray(b, x, yy), y, j, h)[i]);
    let dgx: Vec<DMatrix<f64>> = (0..2).map(|k| d4(|xx: &[f64]| g(xx, y), x, k, h)).collect();
    let dgy: Vec<DMatrix<f64>> = (0..2).map(|m| d4(|yy: &[f64]| g(x, yy), y, m, h)).collect();
    let delta: Vec<DMatrix<f64>> = (0..2)
        .map(|k| {
            let mut d = dgx[k].clone();
            for m in 0..2 {
                d -= &dgy[m] * nl[(m, k)];
            }
            d
        })
        .collect();
    let ginv = g(x, y).try_inverse().unwrap();
    Tensor3::from_fn(2, |i, j, k| {
        0.5 * (0..2)
            .map(|s| ginv[(i, s)] * (delta[k][(s, j)] + delta[j][(s, k)] - delta[s][(j, k)]))
            .sum::<f64>()
    })
}

fn exp2d_christoffel(x: &[f64]) -> Tensor3 {
    let mut t = Tensor3::zeros(2);
    t[(0, 1, 1)] = -(2.0 * x[0]).exp();
    t[(1, 0, 1)] = 1.0;
    t[(1, 1, 0)] = 1.0;
    t
}

#[test]
fn randers_flat_metric_and_cartan() {
    let b = [0.3, -0.2];
    let f = Catalog::RandersFlat { b: b.to_vec() }.build().unwrap();
    let a = DMatrix::identity(2, 2);
    for y in [[1.0, 0.0], [0.3, 0.8], [-2.0, 0.5]] {
        let g = fundamental_tensor(&f, &[0.0, 0.0], &y).unwrap().g;
        assert!((g - randers_g(&a, &b, &y)).amax() < 1e-13);
        let c = cartan_tensor(&f, &[0.0, 0.0], &y).unwrap().a;
        assert!(c.sub(&randers_cartan(&a, &b, &y)).max_abs() < 1e-12);
    }
}

#[test]
fn randers_general_metric_and_cartan() {
    let b = [0.1, 0.2];
    let f = Catalog::RandersGeneral { b: b.to_vec() }.build().unwrap();
    let x = [0.4, -1.0];
    let a = exp2d_a(&x);
    for y in [[1.0, 0.0], [0.3, 0.8], [-0.6, -0.5]] {
        let g = fundamental_tensor(&f, &x, &y).unwrap().g;
        assert!((g - randers_g(&a, &b, &y)).amax() < 1e-13);
        let c = cartan_tensor(&f, &x, &y).unwrap().a;
        assert!(c.sub(&randers_cartan(&a, &b, &y)).max_abs() < 1e-12);
    }
}

#[test]
fn riemannian_metric_is_the_matrix() {
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 0.7]);
    let f = Catalog::RiemannianConstant { a: a.clone() }.build().unwrap();
    for y in sphere_directions(3, 26) {
        let g = fundamental_tensor(&f, &[0.0; 3], &y).unwrap().g;
        assert!((g - &a).amax() < 1e-13);
        assert!(cartan_tensor(&f, &[0.0; 3], &y).unwrap().a.max_abs() < 1e-12);
    }
}

#[test]
fn exp2d_spray_and_chern() {
    let f = Catalog::RiemannianExp2d.build().unwrap();
    for (x, y) in [([0.0_f64, 0.0], [1.0, 2.0]), ([0.7, -0.3], [-0.4, 0.9]), ([-1.2, 2.0], [0.5, 0.5])] {
        let e = (2.0 * x[0]).exp();
        let s = spray(&f, &x, &y).unwrap();
        assert!((s.g[0] - (-0.5 * e * y[1] * y[1])).abs() < 1e-12);
        assert!((s.g[1] - y[0] * y[1]).abs() < 1e-12);
        let c = chern_coefficients(&f, &x, &y).unwrap().gamma;
        assert!(c.sub(&exp2d_christoffel(&x)).max_abs() < 1e-12);
    }
}

#[test]
fn randers_general_chern_matches_reference() {
    let b = [0.1, 0.2];
    let f = Catalog::RandersGeneral { b: b.to_vec() }.build().unwrap();
    for (x, y) in [([0.0, 0.0], [1.0, 0.3]), ([0.3, -0.2], [0.4, 1.1]), ([-0.5, 1.0], [-0.7, -0.2])] {
        let jets = chern_coefficients(&f, &x, &y).unwrap().gamma;
        let reference = randers_general_chern_reference(&b, &x, &y);
        let err = jets.sub(&reference).max_abs();
        assert!(err < 1e-6, "x={x:?} y={y:?} err={err:e}");
        let s = spray(&f, &x, &y).unwrap().g;
        assert!((s - randers_general_spray(&b, &x, &y)).amax() < 1e-12);
    }
}

#[test]
fn levi_civita_of_exp2d() {
    let h = |x: &[f64]| Ok(exp2d_a(x));
    for x in [[0.0, 0.0], [0.5, 1.0], [-0.8, 0.1]] {
        let lc = levi_civita(h, &x, 1e-4).unwrap();
        assert!(lc.gamma.sub(&exp2d_christoffel(&x)).max_abs() < 1e-7);
    }
}

#[test]
fn strong_convexity_checks() {
    let dirs = sphere_directions(2, 64);
    let r = check_strong_convexity(&Catalog::RandersFlat { b: vec![0.5, 0.0] }.build().unwrap(), &[0.0, 0.0], &dirs, CONVEXITY_TOL);
    assert!(r.ok && r.min_eigenvalue > 0.0);

    let quartic = FinslerStructure::from_fn(2, "degenerate quartic", |_x, y: &[Jet]| {
        (y[0].powi(4) + y[1].powi(4)).powf(0.25)
    });
    let mut with_axis = dirs.clone();
    with_axis.push(vec![1.0, 0.0]);
    let r = check_strong_convexity(&quartic, &[0.0, 0.0], &with_axis, CONVEXITY_TOL);
    assert!(!r.ok);
    assert_eq!(r.worst_direction, vec![1.0, 0.0]);
    assert!(r.min_eigenvalue.abs() < 1e-12);
}

#[test]
fn homogeneity_of_catalog() {
    for c in [
        Catalog::Euclidean { dim: 3 },
        Catalog::RandersGeneral { b: vec![0.1, 0.2] },
        Catalog::MinkowskiQuartic { dim: 2, eps: 0.1 },
    ] {
        let f = c.build().unwrap();
        let n = f.dim();
        let x = vec![0.2; n];
        let y: Vec<f64> = (0..n).map(|i| 0.3 + i as f64).collect();
        assert!(f.homogeneity_defect(&x, &y, &[0.5, 2.0, 7.0]).unwrap() < 1e-14);
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-0.35f64..0.35, 2),
        prop::collection::vec(-1.0f64..1.0, 2),
        (0.1f64..2.0, 0.0f64..std::f64::consts::TAU),
    )
        .prop_map(|(b, x, (r, t))| (b, x, vec![r * t.cos(), r * t.sin()]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fundamental_tensor_identities((b, x, y) in arb_case(), lambda in 0.2f64..5.0) {
        let f = Catalog::RandersGeneral { b }.build().unwrap();
        let g = fundamental_tensor(&f, &x, &y).unwrap().g;
        let yv = DVector::from_column_slice(&y);
        let fv = f.eval(&x, &y).unwrap();
        // g(y, y) = F²
        prop_assert!(((yv.transpose() * &g * &yv)[(0, 0)] - fv * fv).abs() <= 1e-9 * fv * fv);
        let scaled: Vec<f64> = y.iter().map(|v| v * lambda).collect();
        let gs = fundamental_tensor(&f, &x, &scaled).unwrap().g;
        prop_assert!((gs - &g).amax() <= 1e-10);
        let a = cartan_tensor(&f, &x, &y).unwrap().a;
        for i in 0..2 {
            for j in 0..2 {
                let contracted: f64 = (0..2).map(|k| a[(i, j, k)] * y[k]).sum();
                prop_assert!(contracted.abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn spray_identities((b, x, y) in arb_case()) {
        let f = Catalog::RandersGeneral { b }.build().unwrap();
        let s = spray(&f, &x, &y).unwrap();
        // Nⁱⱼ yʲ = 2Gⁱ
        for i in 0..2 {
            let ny = dot(&[s.n[(i, 0)], s.n[(i, 1)]], &y);
            prop_assert!((ny - 2.0 * s.g[i]).abs() <= 1e-10 * (1.0 + s.g[i].abs()));
        }
        let doubled: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let s2 = spray(&f, &x, &doubled).unwrap();
        prop_assert!((&s2.g - &s.g * 4.0).amax() <= 1e-10 * (1.0 + s.g.amax()));
    }

    #[test]
    fn chern_is_torsion_free((b, x, y) in arb_case()) {
        let f = Catalog::RandersGeneral { b }.build().unwrap();
        let c = chern_coefficients(&f, &x, &y).unwrap().gamma;
        prop_assert_eq!(c.lower_asymmetry(), 0.0);
        // 0-homogeneous in y
        let scaled: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        let c3 = chern_coefficients(&f, &x, &scaled).unwrap().gamma;
        prop_assert!(c3.sub(&c).max_abs() <= 1e-10);
    }

    #[test]
    fn riemannian_chern_is_levi_civita(x in prop::collection::vec(-1.0f64..1.0, 2), t in 0.0f64..std::f64::consts::TAU) {
        let f = Catalog::RiemannianExp2d.build().unwrap();
        let y = [t.cos(), t.sin()];
        let c = chern_coefficients(&f, &x, &y).unwrap().gamma;
        prop_assert!(c.sub(&exp2d_christoffel(&x)).max_abs() <= 1e-12);
    }
}
