//! The computations behind each subcommand. Every function takes a resolved
//! config (see [`crate::config::resolve`]) and fills a [`Report`].

use avgeom_core::averaging::{
    average_connection, average_metric, deviation_tensors, mean_deviations, DeviationOptions,
};
use avgeom_core::fiber::{
    basis_name, commutation_residual, exterior_derivative, fiber_integrate, BaseForm, FiberForm,
};
use avgeom_core::expr::finsler_from_expr;
use avgeom_core::indicatrix::{build_quadrature, sphere_directions, IndicatrixQuadrature};
use avgeom_core::ode::{
    average_rhs, compare, epsilon_sweep, integrate_averaged, integrate_perturbed, loglog_slope, SystemSource,
    TorusSystem,
};
use avgeom_core::{Catalog, FinslerStructure};
use nalgebra::DMatrix;

use crate::config::{split_term, Settings};
use crate::error::{CliError, Context};
use crate::report::{Report, Table, Value};

/// The catalog entry named by `--metric`, with parameters from the config.
pub fn catalog_entry(s: &Settings) -> Result<Option<Catalog>, CliError> {
    let Some(id) = s.metric.as_deref() else {
        return Ok(None);
    };
    let dim = s.dim.unwrap_or(2);
    let c = match id {
        "euclidean" => Catalog::Euclidean { dim },
        "riemannian-constant" => {
            let a = s.a.clone().unwrap_or_default();
            Catalog::RiemannianConstant { a: DMatrix::from_row_slice(dim, dim, &a) }
        }
        "riemannian-exp2d" => Catalog::RiemannianExp2d,
        "randers-flat" => Catalog::RandersFlat { b: s.b.clone().unwrap_or_default() },
        "randers-general" => Catalog::RandersGeneral { b: s.b.clone().unwrap_or_default() },
        "minkowski-perturbed-quartic" => Catalog::MinkowskiQuartic { dim, eps: s.eps_quartic.unwrap_or_default() },
        other => return Err(CliError::config("metric", other, "unknown catalog id")),
    };
    Ok(Some(c))
}

/// Builds the structure; rejected parameters count as config errors.
pub fn build_structure(s: &Settings) -> Result<FinslerStructure, CliError> {
    if let Some(c) = catalog_entry(s)? {
        return c.build().or_config("metric", c.id());
    }
    let src = s.expr.as_deref().unwrap_or_default();
    let dim = s.dim.unwrap_or(2);
    finsler_from_expr(src, dim).map_err(|e| CliError::config("expr", src, e.to_string()))
}

fn quadrature(f: &FinslerStructure, x: &[f64], order: usize) -> Result<IndicatrixQuadrature, CliError> {
    build_quadrature(f, x, order).within("indicatrix", "build_quadrature", || {
        format!("{} at x = {x:?}, order = {order}", f.label())
    })
}

fn input(f: &FinslerStructure, x: &[f64]) -> impl Fn() -> String {
    let label = f.label().to_string();
    let x = x.to_vec();
    move || format!("{label} at x = {x:?}")
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

pub fn average(s: &Settings, report: &mut Report) -> Result<(), CliError> {
    let f = build_structure(s)?;
    let x = s.x.clone().unwrap_or_default();
    let order = s.order.unwrap_or_default();
    let q = quadrature(&f, &x, order)?;
    let h = average_metric(&f, &x, &q).within("averaging", "average_metric", input(&f, &x))?.h;
    let gamma = average_connection(&f, &x, &q).within("averaging", "average_connection", input(&f, &x))?.gamma;

    let fine = quadrature(&f, &x, 2 * order)?;
    let h2 = average_metric(&f, &x, &fine).within("averaging", "average_metric", input(&f, &x))?.h;
    let gamma2 =
        average_connection(&f, &x, &fine).within("averaging", "average_connection", input(&f, &x))?.gamma;

    report.results = Value::map()
        .with("structure", f.label())
        .with("nodes", q.len())
        .with("volume", q.volume())
        .with("averaged_metric", &h)
        .with("averaged_connection", &gamma);
    report.diagnostics = Value::map()
        .with("refined_order", 2 * order)
        .with("self_convergence_volume", (q.volume() - fine.volume()).abs())
        .with("self_convergence_metric", max_diff(h.as_slice(), h2.as_slice()))
        .with("self_convergence_connection", max_diff(gamma.as_slice(), gamma2.as_slice()));
    Ok(())
}

pub fn classify(s: &Settings, report: &mut Report) -> Result<(), CliError> {
    let f = build_structure(s)?;
    let x = s.x.clone().unwrap_or_default();
    let order = s.order.unwrap_or_default();
    let q = quadrature(&f, &x, order)?;
    let probes = sphere_directions(f.dim(), s.probes.unwrap_or_default());
    let options = DeviationOptions {
        tol_riemannian: s.tol_riemannian.unwrap_or_default(),
        tol_berwald: s.tol_berwald.unwrap_or_default(),
        base_step: None,
    };
    let r = deviation_tensors(&f, &x, &q, &probes, options).within("averaging", "deviation_tensors", input(&f, &x))?;
    let mean = mean_deviations(&f, &x, &q).within("averaging", "mean_deviations", input(&f, &x))?;

    report.results = Value::map()
        .with("structure", f.label())
        .with("riemannian", r.riemannian)
        .with("berwald", r.berwald)
        .with("sup_delta_g", r.sup_delta_g)
        .with("sup_delta_gamma", r.sup_delta_gamma)
        .with("t_norm", r.t_norm)
        .with("delta_g_operator_norm", r.delta_g_operator_norm)
        .with("volume", q.volume())
        .with("averaged_metric", &r.averaged_metric)
        .with("averaged_connection", &r.averaged_connection)
        .with("levi_civita", &r.levi_civita)
        .with("t", &r.t);
    report.diagnostics = Value::map()
        .with("delta_g_operator_norm_below_one", r.delta_g_operator_norm < 1.0)
        .with("mean_delta_g_max", mean.delta_g.amax())
        .with("mean_delta_gamma_max", mean.delta_gamma.max_abs())
        .with("probes_on_indicatrix", r.probes.clone());
    Ok(())
}

fn torus_system(s: &Settings, eps: f64) -> Result<TorusSystem, CliError> {
    let src = SystemSource {
        omega: s.omega.clone().unwrap_or_default(),
        f: s.f.clone().unwrap_or_default(),
        g: s.g.clone().unwrap_or_default(),
    };
    let (k, m) = (s.k.unwrap_or_default(), s.m.unwrap_or_default());
    let sys = TorusSystem::from_expressions(k, m, &src, eps).or_config("omega/f/g", format!("{src:?}"))?;
    let actions = vec![s.i0.clone().unwrap_or_default()];
    sys.check_periodic(&actions).or_config("f/g", format!("{src:?}"))?;
    Ok(sys)
}

pub fn ode_average(s: &Settings, report: &mut Report) -> Result<(), CliError> {
    let eps = s.eps.clone().unwrap_or_default();
    let i0 = s.i0.clone().unwrap_or_default();
    let phi0 = s.phi0.clone().unwrap_or_default();
    let grid = s.grid.unwrap_or_default();
    let sys = torus_system(s, eps[0])?;
    let rhs0 = average_rhs(&sys, &i0, grid).within("ode", "average_rhs", || format!("J = {i0:?}"))?;

    if eps.len() > 1 {
        let points = epsilon_sweep(&sys, &i0, &phi0, &eps, s.dt, grid)
            .within("ode", "epsilon_sweep", || format!("eps = {eps:?}"))?;
        let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.epsilon, p.sup_error)).collect();
        let slope = loglog_slope(&pairs).within("ode", "loglog_slope", || format!("{pairs:?}"))?;
        let rows: Vec<Value> = points
            .iter()
            .map(|p| {
                Value::map()
                    .with("epsilon", p.epsilon)
                    .with("t_end", p.t_end)
                    .with("dt", p.dt)
                    .with("sup_error", p.sup_error)
                    .with("error_over_epsilon", p.sup_error / p.epsilon)
            })
            .collect();
        report.results = Value::map().with("system", sys.label()).with("sweep", rows).with("loglog_slope", slope);
        report.diagnostics = Value::map().with("averaged_rhs_at_i0", rhs0);
        report.table = Some(Table {
            columns: ["epsilon", "t_end", "dt", "sup_error"].map(String::from).to_vec(),
            rows: points
                .iter()
                .map(|p| vec![p.epsilon.into(), p.t_end.into(), p.dt.into(), p.sup_error.into()])
                .collect(),
        });
        return Ok(());
    }

    let (t_end, dt) = (s.t_end.unwrap_or_default(), s.dt.unwrap_or_default());
    let run = || format!("eps = {}, t_end = {t_end}, dt = {dt}", eps[0]);
    let p = integrate_perturbed(&sys, &i0, &phi0, t_end, dt).within("ode", "integrate_perturbed", run)?;
    let a = integrate_averaged(&sys, &i0, t_end, dt, grid).within("ode", "integrate_averaged", run)?;
    let sup_error = compare(&p, &a).within("ode", "compare", run)?;
    let m = sys.m();
    let (_, last_p) = p.last().expect("trajectory has a start point");
    let (_, last_a) = a.last().expect("trajectory has a start point");
    let mut results = Value::map()
        .with("system", sys.label())
        .with("epsilon", eps[0])
        .with("steps", p.times.len() - 1)
        .with("dt", p.dt)
        .with("sup_error", sup_error);
    if eps[0] > 0.0 {
        results = results.with("error_over_epsilon", sup_error / eps[0]);
    }
    report.results = results
        .with("final_perturbed", last_p[..m].to_vec())
        .with("final_averaged", last_a.to_vec());
    report.diagnostics = Value::map().with("averaged_rhs_at_i0", rhs0);
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=m).map(|i| format!("I{i}")));
    columns.extend((1..=m).map(|i| format!("J{i}")));
    report.table = Some(Table {
        columns,
        rows: p
            .times
            .iter()
            .zip(p.states.iter().zip(&a.states))
            .map(|(t, (sp, sa))| {
                let mut row: Vec<Value> = vec![(*t).into()];
                row.extend(sp[..m].iter().map(|v| Value::Num(*v)));
                row.extend(sa.iter().map(|v| Value::Num(*v)));
                row
            })
            .collect(),
    });
    Ok(())
}

fn form_value(form: &BaseForm) -> Value {
    form.iter().fold(Value::map(), |acc, (idx, v)| acc.with(&basis_name(idx, &[]), *v))
}

pub fn fiber(s: &Settings, report: &mut Report) -> Result<(), CliError> {
    let (n, k) = (s.base_dim.unwrap_or_default(), s.fiber_dim.unwrap_or_default());
    let raw = s.term.clone().unwrap_or_default();
    let terms: Vec<(&str, &str)> = raw.iter().map(|t| split_term(t)).collect::<Result<_, _>>()?;
    let radius = s.radius.unwrap_or_default();
    let form = FiberForm::from_expressions(n, k, &terms, radius).or_config("term", format!("{raw:?}"))?;
    let x = s.x.clone().unwrap_or_default();
    let order = s.order.unwrap_or_default();
    let step = s.step.unwrap_or_default();
    let at = || format!("{raw:?} at x = {x:?}");
    let integral = fiber_integrate(&form, &x, order).within("fiber", "fiber_integrate", at)?;
    let d = exterior_derivative(&form).within("fiber", "exterior_derivative", at)?;
    let c = commutation_residual(&form, &x, order, step).within("fiber", "commutation_residual", at)?;
    let dropped = form.terms().iter().filter(|t| t.fiber.len() < k).count();
    report.results = Value::map()
        .with("integral", form_value(&integral))
        .with("integral_of_derivative", form_value(&c.integrated_derivative))
        .with("derivative_of_integral", form_value(&c.derivative_of_integral))
        .with("commutation_residual", c.residual);
    report.diagnostics = Value::map()
        .with("terms", form.terms().len())
        .with("terms_below_fiber_degree", dropped)
        .with("derivative_terms", d.terms().len());
    Ok(())
}
