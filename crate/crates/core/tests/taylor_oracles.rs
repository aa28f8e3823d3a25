use avgeom_core::taylor::fd::{fd_jet, fd_partial};
use avgeom_core::taylor::{evaluate_jet, partial, Field};
use avgeom_core::Jet;
use proptest::prelude::*;

/// Richardson-extrapolated central differences of a scalar function.
fn richardson(f: impl Fn(f64) -> f64, x: f64, order: usize) -> f64 {
    let d = |h: f64| match order {
        1 => (f(x + h) - f(x - h)) / (2.0 * h),
        2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
        3 => (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h),
        _ => unreachable!(),
    };
    let h = match order {
        1 => 1e-3,
        2 => 1e-2,
        _ => 2e-2,
    };
    // Two rounds of elimination for the h² and h⁴ error terms.
    let (a, b, c) = (d(h), d(h / 2.0), d(h / 4.0));
    let ab = (4.0 * b - a) / 3.0;
    let bc = (4.0 * c - b) / 3.0;
    (16.0 * bc - ab) / 15.0
}

#[test]
fn exp_matches_richardson_oracle() {
    let x = 0.5_f64;
    let jet = evaluate_jet(&|v: &[Jet]| v[0].exp(), &[x], 3).unwrap();
    let expected = [richardson(f64::exp, x, 1), richardson(f64::exp, x, 2), richardson(f64::exp, x, 3)];
    assert!((jet.value() - x.exp()).abs() < 1e-15);
    assert!((jet.first(0) - expected[0]).abs() < 1e-8);
    assert!((jet.second(0, 0) - expected[1]).abs() < 1e-8);
    assert!((jet.third(0, 0, 0) - expected[2]).abs() < 1e-8);
}

#[test]
fn elementary_functions_match_richardson() {
    type Pair = (fn(&Jet) -> Jet, fn(f64) -> f64, f64);
    let cases: [Pair; 5] = [
        (|u| u.sin(), f64::sin, 0.7),
        (|u| u.ln(), f64::ln, 1.3),
        (|u| u.sqrt(), f64::sqrt, 2.0),
        (|u| u.powf(1.7), |v| v.powf(1.7), 1.1),
        (|u| u.recip(), |v| 1.0 / v, -0.8),
    ];
    for (jf, ff, x) in cases {
        let jet = evaluate_jet(&move |v: &[Jet]| jf(&v[0]), &[x], 3).unwrap();
        for (k, got) in [jet.first(0), jet.second(0, 0), jet.third(0, 0, 0)].into_iter().enumerate() {
            let want = richardson(ff, x, k + 1);
            assert!((got - want).abs() < 1e-7 * want.abs().max(1.0), "order {} at {x}: {got} vs {want}", k + 1);
        }
    }
}

/// `Σ c_α x^α` over exponent triples of total degree ≤ 3.
#[derive(Debug, Clone)]
struct Poly(Vec<([u32; 3], f64)>);

impl Poly {
    fn eval_jet(&self, v: &[Jet]) -> Jet {
        self.0.iter().fold(Jet::constant(0.0), |acc, (e, c)| {
            let term = (0..3).fold(Jet::constant(*c), |t, i| t * v[i].powi(e[i] as i32));
            acc + term
        })
    }

    /// `∂^idx` by the falling-factorial rule on each monomial.
    fn derivative(&self, idx: &[usize], x: &[f64]) -> f64 {
        self.0
            .iter()
            .map(|(e, c)| {
                let mut e = *e;
                let mut coef = *c;
                for &i in idx {
                    coef *= e[i] as f64;
                    e[i] = e[i].saturating_sub(1);
                }
                coef * (0..3).map(|i| x[i].powi(e[i] as i32)).product::<f64>()
            })
            .sum()
    }
}

fn arb_poly() -> impl Strategy<Value = Poly> {
    let monomials: Vec<[u32; 3]> = (0..4u32)
        .flat_map(|a| (0..4u32).flat_map(move |b| (0..4u32).map(move |c| [a, b, c])))
        .filter(|e| e.iter().sum::<u32>() <= 3)
        .collect();
    prop::collection::vec(-3.0f64..3.0, monomials.len())
        .prop_map(move |cs| Poly(monomials.iter().copied().zip(cs).collect()))
}

fn arb_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cubic_polynomials_are_exact(p in arb_poly(), x in arb_point()) {
        let q = p.clone();
        let jet = evaluate_jet(&move |v: &[Jet]| q.eval_jet(v), &x, 3).unwrap();
        let scale = p.0.iter().map(|(_, c)| c.abs()).sum::<f64>().max(1.0) * 10.0;
        prop_assert!((jet.value() - p.derivative(&[], &x)).abs() <= 1e-13 * scale);
        for i in 0..3 {
            prop_assert!((jet.first(i) - p.derivative(&[i], &x)).abs() <= 1e-13 * scale);
            for j in 0..3 {
                prop_assert!((jet.second(i, j) - p.derivative(&[i, j], &x)).abs() <= 1e-13 * scale);
                for k in 0..3 {
                    prop_assert!((jet.third(i, j, k) - p.derivative(&[i, j, k], &x)).abs() <= 1e-13 * scale);
                }
            }
        }
    }

    #[test]
    fn partials_are_symmetric(x in arb_point()) {
        let f = |v: &[Jet]| (&v[0] * &v[1]).sin() * v[2].exp() + v[0].powi(3) / (&v[1] * &v[1] + 1.0);
        let jet = evaluate_jet(&f, &x, 3).unwrap();
        for (i, j, k) in [(0, 1, 2), (1, 1, 0), (2, 0, 0)] {
            let v = jet.third(i, j, k);
            for perm in [(i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                prop_assert_eq!(v, jet.third(perm.0, perm.1, perm.2));
            }
            prop_assert_eq!(jet.second(i, j), jet.second(j, i));
        }
    }

    #[test]
    fn linearity_and_leibniz(x in arb_point(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let f = |v: &[Jet]| (&v[0] + &v[1] * 2.0).sin() * &v[2];
        let g = |v: &[Jet]| (&v[1] - &v[2]).exp();
        let jf = evaluate_jet(&f, &x, 3).unwrap();
        let jg = evaluate_jet(&g, &x, 3).unwrap();
        let lin = evaluate_jet(&move |v: &[Jet]| f(v) * a + g(v) * b, &x, 3).unwrap();
        let prod = evaluate_jet(&move |v: &[Jet]| f(v) * g(v), &x, 3).unwrap();
        for i in 0..3 {
            prop_assert!((lin.first(i) - (a * jf.first(i) + b * jg.first(i))).abs() <= 1e-12);
            let leibniz1 = jf.first(i) * jg.value() + jf.value() * jg.first(i);
            prop_assert!((prod.first(i) - leibniz1).abs() <= 1e-12 * (1.0 + leibniz1.abs()));
            for j in 0..3 {
                let leibniz2 = jf.second(i, j) * jg.value()
                    + jf.first(i) * jg.first(j)
                    + jf.first(j) * jg.first(i)
                    + jf.value() * jg.second(i, j);
                prop_assert!((prod.second(i, j) - leibniz2).abs() <= 1e-12 * (1.0 + leibniz2.abs()));
            }
        }
    }

    #[test]
    fn jets_agree_with_finite_differences(x in prop::collection::vec(0.2f64..1.5, 3)) {
        let jf = |v: &[Jet]| (&v[0] * &v[1]).sqrt() * (&v[2] * 0.5).cos() + v[0].ln() * &v[1];
        let ff = |v: &[f64]| (v[0] * v[1]).sqrt() * (0.5 * v[2]).cos() + v[0].ln() * v[1];
        let jet = evaluate_jet(&jf, &x, 2).unwrap();
        let fd = fd_jet(&ff, &x, 2).unwrap();
        for i in 0..3 {
            prop_assert!((jet.first(i) - fd.first(i)).abs() <= 1e-7 * (1.0 + jet.first(i).abs()));
            for j in 0..3 {
                prop_assert!((jet.second(i, j) - fd.second(i, j)).abs() <= 1e-4 * (1.0 + jet.second(i, j).abs()));
            }
        }
        let p = partial(&jf, &x, &[0, 1]).unwrap();
        prop_assert!((p - fd_partial(&ff, &x, &[0, 1]).unwrap()).abs() <= 1e-4 * (1.0 + p.abs()));
    }
}

#[test]
fn closures_are_fields() {
    fn eval_dyn(f: &dyn Field) -> f64 {
        f.eval(&Jet::seed(&[2.0], 1)).unwrap().first(0)
    }
    assert_eq!(eval_dyn(&|v: &[Jet]| &v[0] * &v[0]), 4.0);
}
