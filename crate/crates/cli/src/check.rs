//! The invariant suite behind `avgeom check`.

use avgeom_core::averaging::{
    average_constant_tensor, average_connection, deviation_tensors, homotopy_check, mean_deviations,
    DeviationOptions,
};
use avgeom_core::expr::{Bindings, Expr, VarContext};
use avgeom_core::fiber::{commutation_residual, fiber_integrate, sample_forms, FiberForm, DEFAULT_FIBER_ORDER, DEFAULT_RADIUS};
use avgeom_core::finsler::{check_strong_convexity, CONVEXITY_TOL};
use avgeom_core::indicatrix::sphere_directions;
use avgeom_core::ode::{average_rhs, SystemSource, TorusSystem, DEFAULT_GRID};
use avgeom_core::{Catalog, FinslerStructure, Tensor3};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{default_quadrature_order, Settings};
use crate::error::{CliError, Context};
use crate::jobs::{build_structure, catalog_entry};
use crate::report::{Report, Table, Value};

/// Sampled base points per structure, on top of the configured one.
pub const SAMPLED_POINTS: usize = 2;

/// `(source, value)` pairs that pin down precedence and associativity.
pub const PRECEDENCE_CASES: &[(&str, f64)] = &[
    ("2+3*4", 14.0),
    ("(2+3)*4", 20.0),
    ("2^3^2", 512.0),
    ("-2^2", -4.0),
    ("(-2)^2", 4.0),
    ("2*-3", -6.0),
    ("1-2-3", -4.0),
    ("8/4/2", 1.0),
    ("2^-1", 0.5),
    ("-x1^2", -0.25),
    ("pow(2, 10)", 1024.0),
    ("1.5e2 + .5", 150.5),
    ("sqrt(abs(-16)) + exp(0) - log(1)", 5.0),
    ("x1*y2 - y1/x1", 0.5 * 3.0 - 2.0 / 0.5),
];

/// Expressions that must print and re-parse to the same function.
pub const ROUND_TRIP_CASES: &[&str] = &[
    "sqrt(y1^2 + exp(2*x1)*y2^2) + 0.1*y1",
    "-(x1 + y1^2 + 2)^2^0.5",
    "pow(y1, 4)/(y1^2 + y2^2) - -y2",
    "sin(x1)*cos(x2*y1)/(1 + abs(y2))",
    "2^-x1^2",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub subject: String,
    /// `None` when the quantity could not be evaluated.
    pub value: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: &str, subject: &str, value: Option<f64>, tolerance: f64) -> Self {
        let pass = value.is_some_and(|v| v <= tolerance);
        CheckResult { name: name.into(), subject: subject.into(), value, tolerance, pass }
    }

    fn value(&self) -> Value {
        Value::map()
            .with("name", self.name.as_str())
            .with("subject", self.subject.as_str())
            .with("value", self.value.map_or(Value::Null, Value::Num))
            .with("tolerance", self.tolerance)
            .with("pass", self.pass)
    }
}

fn eval_finsler(e: &Expr, x: &[f64], y: &[f64]) -> Option<f64> {
    e.evaluate(&Bindings { x, y, ..Bindings::default() }).ok()
}

/// Precedence table and print/parse round trips.
pub fn parser_suite() -> Vec<CheckResult> {
    let ctx = VarContext::finsler(2);
    let (x, y) = ([0.5, -1.0], [2.0, 3.0]);
    let mut out = Vec::new();
    for (src, want) in PRECEDENCE_CASES {
        let err = Expr::parse(src, &ctx).ok().and_then(|e| eval_finsler(&e, &x, &y)).map(|got| (got - want).abs());
        out.push(CheckResult::at_most("parser_precedence", src, err, 1e-12));
    }
    for src in ROUND_TRIP_CASES {
        let worst = Expr::parse(src, &ctx)
            .ok()
            .and_then(|e| {
                let printed = e.to_string();
                let again = Expr::parse(&printed, &ctx).ok()?;
                if again.to_string() != printed {
                    return None;
                }
                let samples = [([0.3, 0.1], [1.0, 0.5]), ([-0.7, 1.2], [-0.4, 2.0]), ([1.1, -0.2], [0.9, -1.3])];
                samples.iter().try_fold(0.0_f64, |acc, (xs, ys)| {
                    let a = eval_finsler(&e, xs, ys)?;
                    let b = eval_finsler(&again, xs, ys)?;
                    Some(acc.max((a - b).abs()))
                })
            });
        out.push(CheckResult::at_most("parser_round_trip", src, worst, 0.0));
    }
    out
}

/// Invariants of one structure at one base point.
pub fn structure_checks(
    f: &FinslerStructure,
    x: &[f64],
    order: usize,
    probes: usize,
    expect: Option<&Catalog>,
) -> Result<Vec<CheckResult>, CliError> {
    let subject = format!("{} at x = {x:?}", f.label());
    let at = || subject.clone();
    let n = f.dim();
    let dirs = sphere_directions(n, probes);
    let mut out = Vec::new();

    let mut homogeneity: f64 = 0.0;
    for y in &dirs {
        let d = f.homogeneity_defect(x, y, &[0.5, 2.0, 3.7]).within("finsler", "homogeneity_defect", at)?;
        homogeneity = homogeneity.max(d);
    }
    out.push(CheckResult::at_most("homogeneity", &subject, Some(homogeneity), 1e-9));

    let convexity = check_strong_convexity(f, x, &dirs, CONVEXITY_TOL);
    out.push(CheckResult {
        name: "strong_convexity_min_eigenvalue".into(),
        subject: subject.clone(),
        value: Some(convexity.min_eigenvalue).filter(|v| v.is_finite()),
        tolerance: CONVEXITY_TOL,
        pass: convexity.ok,
    });
    if !convexity.ok {
        return Ok(out);
    }

    let q = avgeom_core::indicatrix::build_quadrature(f, x, order).within("indicatrix", "build_quadrature", at)?;
    let mut on_indicatrix: f64 = 0.0;
    for y in q.nodes() {
        on_indicatrix = on_indicatrix.max((f.eval(x, y).within("finsler", "evaluate", at)? - 1.0).abs());
    }
    out.push(CheckResult::at_most("nodes_on_indicatrix", &subject, Some(on_indicatrix), 1e-10));

    let fine = avgeom_core::indicatrix::build_quadrature(f, x, 2 * order).within("indicatrix", "build_quadrature", at)?;
    let drift = (q.volume() - fine.volume()).abs() / fine.volume();
    out.push(CheckResult::at_most("volume_self_convergence", &subject, Some(drift), 1e-8));

    let mean = mean_deviations(f, x, &q).within("averaging", "mean_deviations", at)?;
    out.push(CheckResult::at_most("mean_delta_g", &subject, Some(mean.delta_g.amax()), 1e-12));
    out.push(CheckResult::at_most("mean_delta_gamma", &subject, Some(mean.delta_gamma.max_abs()), 1e-12));

    let t = Tensor3::from_fn(n, |i, j, k| (1.0 + i as f64 - 0.5 * j as f64 + 0.25 * k as f64).cos());
    let avg_t = average_constant_tensor(&t, &q).within("averaging", "average_constant_tensor", at)?;
    out.push(CheckResult::at_most("constant_tensor_average", &subject, Some(avg_t.sub(&t).max_abs()), 1e-12));

    let homotopy =
        homotopy_check(f, x, &q, &[0.0, 0.25, 0.5, 0.75, 1.0]).within("averaging", "homotopy_check", at)?;
    out.push(CheckResult::at_most("homotopy", &subject, Some(homotopy), 1e-10));

    let gamma = average_connection(f, x, &q).within("averaging", "average_connection", at)?.gamma;
    out.push(CheckResult::at_most("averaged_connection_symmetry", &subject, Some(gamma.lower_asymmetry()), 1e-10));

    if let Some(c) = expect {
        let r = deviation_tensors(f, x, &q, &dirs, DeviationOptions::default())
            .within("averaging", "deviation_tensors", at)?;
        let flag = |name: &str, ok: bool, value: f64, tol: f64| CheckResult {
            name: name.into(),
            subject: subject.clone(),
            value: Some(value),
            tolerance: tol,
            pass: ok,
        };
        if c.is_riemannian() {
            out.push(flag("riemannian_flag", r.riemannian, r.sup_delta_g, r.options.tol_riemannian));
        }
        let locally_minkowski = matches!(c, Catalog::RandersFlat { .. } | Catalog::MinkowskiQuartic { .. });
        if c.is_riemannian() || locally_minkowski {
            out.push(flag("berwald_flag", r.berwald, r.sup_delta_gamma, r.options.tol_berwald));
        }
    }
    Ok(out)
}

/// Structures checked when no metric is configured.
pub fn default_catalog() -> Vec<Catalog> {
    vec![
        Catalog::Euclidean { dim: 2 },
        Catalog::Euclidean { dim: 3 },
        Catalog::RiemannianConstant { a: DMatrix::from_row_slice(2, 2, &[4.0, 0.5, 0.5, 1.0]) },
        Catalog::RiemannianExp2d,
        Catalog::RandersFlat { b: vec![0.2, 0.0] },
        Catalog::RandersGeneral { b: vec![0.1, 0.2] },
        Catalog::MinkowskiQuartic { dim: 2, eps: 0.1 },
        Catalog::MinkowskiQuartic { dim: 3, eps: 0.1 },
    ]
}

fn extra_checks() -> Result<Vec<CheckResult>, CliError> {
    let mut out = parser_suite();
    for (name, form) in sample_forms() {
        let c = commutation_residual(&form, &[0.7, -0.4], DEFAULT_FIBER_ORDER, 1e-5)
            .within("fiber", "commutation_residual", || name.to_string())?;
        out.push(CheckResult::at_most("fiber_commutation", name, Some(c.residual), 1e-6));
    }
    let low = FiberForm::from_expressions(2, 1, &[("x1*x2", "dx1"), ("3", "1")], DEFAULT_RADIUS)
        .within("fiber", "from_expressions", || "x1*x2 dx1 + 3".into())?;
    let integral = fiber_integrate(&low, &[0.3, 0.4], DEFAULT_FIBER_ORDER)
        .within("fiber", "fiber_integrate", || "x1*x2 dx1 + 3".into())?;
    let size = integral.values().map(|v| v.abs()).fold(0.0, f64::max);
    out.push(CheckResult::at_most("fiber_low_degree_vanishes", "x1*x2 dx1 + 3", Some(size + integral.len() as f64), 0.0));

    let src = SystemSource { omega: vec!["1".into()], f: vec![], g: vec!["sin(phi1)".into()] };
    let sys = TorusSystem::from_expressions(1, 1, &src, 0.1).within("ode", "from_expressions", || format!("{src:?}"))?;
    let rhs = average_rhs(&sys, &[1.0], DEFAULT_GRID).within("ode", "average_rhs", || "J = [1.0]".into())?;
    out.push(CheckResult::at_most("ode_zero_mean_perturbation", "g = sin(phi1)", Some(rhs[0].abs()), 1e-12));
    Ok(out)
}

pub fn run(s: &Settings, report: &mut Report) -> Result<(), CliError> {
    let seed = s.seed.unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<(FinslerStructure, Option<Catalog>, Vec<f64>)> = if s.metric.is_some() || s.expr.is_some() {
        let f = build_structure(s)?;
        vec![(f, catalog_entry(s)?, s.x.clone().unwrap_or_default())]
    } else {
        default_catalog()
            .into_iter()
            .map(|c| {
                let f = c.build().or_config("metric", c.id())?;
                let origin = vec![0.0; f.dim()];
                Ok((f, Some(c), origin))
            })
            .collect::<Result<_, CliError>>()?
    };

    let mut results = Vec::new();
    for (f, catalog, x0) in &targets {
        let order = match s.order {
            Some(o) => o,
            None => default_quadrature_order(f.dim())?,
        };
        let probes = s.probes.unwrap_or_else(|| avgeom_core::averaging::default_probes(f.dim()));
        let mut points = vec![x0.clone()];
        for _ in 0..SAMPLED_POINTS {
            points.push(x0.iter().map(|c| c + rng.random_range(-0.5..0.5)).collect());
        }
        for (i, x) in points.iter().enumerate() {
            // flag checks need a Levi-Civita pass; once per structure is enough
            let expect = if i == 0 { catalog.as_ref() } else { None };
            results.extend(structure_checks(f, x, order, probes, expect)?);
        }
    }
    results.extend(extra_checks()?);

    let failures = results.iter().filter(|r| !r.pass).count();
    report.failures = failures;
    report.results = Value::map()
        .with("passed", results.len() - failures)
        .with("failed", failures)
        .with("checks", results.iter().map(CheckResult::value).collect::<Vec<_>>());
    report.diagnostics = Value::map().with("structures", targets.len()).with("points_per_structure", 1 + SAMPLED_POINTS);
    report.table = Some(Table {
        columns: ["name", "subject", "value", "tolerance", "pass"].map(String::from).to_vec(),
        rows: results
            .iter()
            .map(|r| {
                vec![r.name.as_str().into(), r.subject.as_str().into(), r.value.map_or(Value::Null, Value::Num), r.tolerance.into(), r.pass.into()]
            })
            .collect(),
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parser_suite_passes() {
        let suite = parser_suite();
        assert_eq!(suite.len(), PRECEDENCE_CASES.len() + ROUND_TRIP_CASES.len());
        for r in suite {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn euclidean_invariants_hold() {
        let c = Catalog::Euclidean { dim: 2 };
        let f = c.build().unwrap();
        let checks = structure_checks(&f, &[0.1, 0.2], 32, 8, Some(&c)).unwrap();
        assert!(checks.iter().all(|r| r.pass), "{checks:?}");
        assert!(checks.iter().any(|r| r.name == "riemannian_flag"));
    }

    #[test]
    fn nonconvex_structure_fails_early() {
        let f = avgeom_core::expr::finsler_from_expr("sqrt(y1^2 + y2^2) + 2*y1*y2/sqrt(y1^2 + y2^2)", 2).unwrap();
        let checks = structure_checks(&f, &[0.0, 0.0], 32, 16, None).unwrap();
        let convexity = checks.iter().find(|r| r.name.starts_with("strong_convexity")).unwrap();
        assert!(!convexity.pass);
    }
}
