use std::f64::consts::PI;

use avgeom_core::fiber::*;
use proptest::prelude::*;

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn gaussian_fiber_integral() {
    let form = FiberForm::from_expressions(1, 1, &[("x1^2*exp(-t1^2)", "dt1")], DEFAULT_RADIUS).unwrap();
    for x in [0.5, 1.0, 2.0] {
        let got = fiber_integrate(&form, &[x], DEFAULT_FIBER_ORDER).unwrap()[&vec![]];
        let oracle = simpson(|t| x * x * (-t * t).exp(), -12.0, 12.0, 20_000);
        assert!((oracle - PI.sqrt() * x * x).abs() <= 1e-12 * x * x);
        assert!((got - oracle).abs() <= 1e-8 * oracle, "{x}: {got} vs {oracle}");
    }
}

#[test]
fn commutation_on_sample_forms() {
    let x = [0.7, -0.4];
    for (name, form) in sample_forms() {
        let c = commutation_residual(&form, &x, DEFAULT_FIBER_ORDER, 1e-5).unwrap();
        assert!(c.residual <= 1e-6, "{name}: {:e}", c.residual);
        if name.starts_with("x2 dx1") {
            assert!(c.residual <= 1e-10);
            assert!(c.integrated_derivative.values().all(|v| *v == 0.0));
        }
        if name.starts_with("x1*exp") {
            assert!(c.residual <= 1e-8);
            assert!((c.integrated_derivative[&vec![0]] - PI.sqrt()).abs() <= 1e-12);
        }
    }
}

#[test]
fn degree_bookkeeping() {
    let form = FiberForm::from_expressions(
        3,
        2,
        &[("exp(-t1^2-t2^2)*x1", "dx2^dt1^dt2"), ("exp(-t1^2)", "dx1^dt1"), ("x3", "dx1^dx3")],
        DEFAULT_RADIUS,
    )
    .unwrap();
    let out = fiber_integrate(&form, &[2.0, 0.0, 1.0], 48).unwrap();
    assert_eq!(out.len(), 1);
    let (key, v) = out.iter().next().unwrap();
    assert_eq!(key, &vec![1]);
    assert_eq!(form.terms()[0].degree() - form.fiber_dim(), key.len());
    assert!((v - 2.0 * PI).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fiber_integration_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, x in -2.0f64..2.0) {
        let p = "cos(x1*t1)*exp(-t1^2)";
        let q = "x1*t1^2*exp(-t1^2/2)";
        let single = |c: &str| FiberForm::from_expressions(1, 1, &[(c, "dt1")], DEFAULT_RADIUS).unwrap();
        let combined = format!("{a}*({p}) + {b}*({q})");
        let ip = fiber_integrate(&single(p), &[x], DEFAULT_FIBER_ORDER).unwrap()[&vec![]];
        let iq = fiber_integrate(&single(q), &[x], DEFAULT_FIBER_ORDER).unwrap()[&vec![]];
        let ic = fiber_integrate(&single(&combined), &[x], DEFAULT_FIBER_ORDER).unwrap()[&vec![]];
        prop_assert!((ic - (a * ip + b * iq)).abs() <= 1e-12 * (1.0 + ic.abs()));
        // term lists add
        let both = FiberForm::from_expressions(1, 1, &[(p, "dt1"), (q, "dt1")], DEFAULT_RADIUS).unwrap();
        let sum = fiber_integrate(&both, &[x], DEFAULT_FIBER_ORDER).unwrap()[&vec![]];
        prop_assert!((sum - (ip + iq)).abs() <= 1e-13 * (1.0 + sum.abs()));
    }

    #[test]
    fn commutation_at_random_points(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, c in 0.2f64..2.0) {
        let coeff = format!("sin({c}*x1 + x2)*exp(-(t1 - x2)^2)");
        let form = FiberForm::from_expressions(2, 1, &[(&coeff, "dt1"), ("x1*x2*exp(-t1^2)", "dx2^dt1")], DEFAULT_RADIUS).unwrap();
        let r = commutation_residual(&form, &[x1, x2], DEFAULT_FIBER_ORDER, 1e-5).unwrap();
        prop_assert!(r.residual <= 1e-6, "{:e}", r.residual);
    }
}
