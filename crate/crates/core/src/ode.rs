//! Averaging principle for slow–fast systems on `U × Tᵏ`:
//!
//! ```text
//! φ̇ = ω(I) + ε f(I, φ)      İ = ε g(I, φ)
//! ```
//!
//! is compared against the averaged system `J̇ = ε ḡ(J)`, where `ḡ` is the
//! mean of `g` over the torus.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr, ParseError, VarContext};

/// Default trapezoid points per angle for torus averages.
pub const DEFAULT_GRID: usize = 64;

/// Tolerance for the periodicity check on `f` and `g`.
pub const PERIODICITY_TOL: f64 = 1e-9;

/// `min(1e-2, ε/10)`, or `1e-2` when `ε = 0`.
pub fn default_dt(epsilon: f64) -> f64 {
    if epsilon > 0.0 {
        (epsilon / 10.0).min(1e-2)
    } else {
        1e-2
    }
}

pub type FrequencyMap = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type PerturbationMap = Arc<dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync>;

#[derive(Clone)]
pub struct TorusSystem {
    k: usize,
    m: usize,
    label: String,
    omega: FrequencyMap,
    f: PerturbationMap,
    g: PerturbationMap,
    epsilon: f64,
}

impl fmt::Debug for TorusSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusSystem")
            .field("k", &self.k)
            .field("m", &self.m)
            .field("label", &self.label)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

/// Source text for a system given by expressions in `I1..Im, phi1..phik`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSource {
    pub omega: Vec<String>,
    /// Empty means `f ≡ 0`.
    pub f: Vec<String>,
    pub g: Vec<String>,
}

impl TorusSystem {
    pub fn new(
        k: usize,
        m: usize,
        label: impl Into<String>,
        omega: FrequencyMap,
        f: PerturbationMap,
        g: PerturbationMap,
        epsilon: f64,
    ) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!("torus dimension k = {k} and slow dimension m = {m} must be ≥ 1")));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("ε must be finite and ≥ 0, got {epsilon}")));
        }
        Ok(Self { k, m, label: label.into(), omega, f, g, epsilon })
    }

    pub fn from_expressions(k: usize, m: usize, source: &SystemSource, epsilon: f64) -> Result<Self> {
        let ctx = VarContext::torus(m, k);
        let parse_all = |what: &str, items: &[String], len: usize| -> Result<Vec<Expr>> {
            if items.len() != len {
                return Err(Error::InvalidArgument(format!("{what} needs {len} components, got {}", items.len())));
            }
            items
                .iter()
                .map(|s| {
                    Expr::parse(s, &ctx).map_err(|e: ParseError| Error::InvalidArgument(format!("{what} = {s:?}: {e}")))
                })
                .collect()
        };
        let omega = Arc::new(parse_all("omega", &source.omega, k)?);
        let f = if source.f.is_empty() { None } else { Some(Arc::new(parse_all("f", &source.f, k)?)) };
        let g = Arc::new(parse_all("g", &source.g, m)?);

        let omega_map: FrequencyMap = Arc::new(move |i: &[f64]| {
            let b = Bindings { action: i, ..Bindings::default() };
            omega.iter().map(|e| Ok(e.evaluate(&b)?)).collect()
        });
        let f_map: PerturbationMap = match f {
            None => Arc::new(move |_i: &[f64], _phi: &[f64]| Ok(vec![0.0; k])),
            Some(f) => Arc::new(move |i: &[f64], phi: &[f64]| {
                let b = Bindings { action: i, phi, ..Bindings::default() };
                f.iter().map(|e| Ok(e.evaluate(&b)?)).collect()
            }),
        };
        let g_map: PerturbationMap = Arc::new(move |i: &[f64], phi: &[f64]| {
            let b = Bindings { action: i, phi, ..Bindings::default() };
            g.iter().map(|e| Ok(e.evaluate(&b)?)).collect()
        });
        let label = format!("omega=[{}] f=[{}] g=[{}]", source.omega.join(", "), source.f.join(", "), source.g.join(", "));
        Self::new(k, m, label, omega_map, f_map, g_map, epsilon)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.k, self.m, self.label.clone(), self.omega.clone(), self.f.clone(), self.g.clone(), epsilon)
    }

    fn eval_checked(&self, what: &str, v: Result<Vec<f64>>, len: usize) -> Result<Vec<f64>> {
        let v = v?;
        if v.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: v.len() });
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("{what} = {v:?}")));
        }
        Ok(v)
    }

    pub fn omega(&self, i: &[f64]) -> Result<Vec<f64>> {
        self.eval_checked("ω(I)", (self.omega)(i), self.k)
    }

    pub fn f(&self, i: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
        self.eval_checked("f(I, φ)", (self.f)(i, phi), self.k)
    }

    pub fn g(&self, i: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
        self.eval_checked("g(I, φ)", (self.g)(i, phi), self.m)
    }

    /// Largest change in `f` or `g` under `φⱼ ↦ φⱼ + 2π`, over the given
    /// slow states and `samples` angle points per state.
    pub fn periodicity_defect(&self, actions: &[Vec<f64>], samples: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in actions {
            for s in 0..samples {
                // van der Corput–style points in [0, 2π)ᵏ
                let phi: Vec<f64> = (0..self.k)
                    .map(|j| 2.0 * PI * (((s + 1) as f64) * (0.618_033_988_749_895 + 0.414_213_562_373_095 * j as f64)).fract())
                    .collect();
                let f0 = self.f(i, &phi)?;
                let g0 = self.g(i, &phi)?;
                for j in 0..self.k {
                    let mut shifted = phi.clone();
                    shifted[j] += 2.0 * PI;
                    let f1 = self.f(i, &shifted)?;
                    let g1 = self.g(i, &shifted)?;
                    for (a, b) in f0.iter().zip(&f1).chain(g0.iter().zip(&g1)) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Errors if [`Self::periodicity_defect`] exceeds [`PERIODICITY_TOL`].
    pub fn check_periodic(&self, actions: &[Vec<f64>]) -> Result<()> {
        let defect = self.periodicity_defect(actions, 16)?;
        if defect > PERIODICITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "f, g are not 2π-periodic in the angles (defect {defect:e})"
            )));
        }
        Ok(())
    }
}

/// Torus mean `ḡ(J)` by a tensor-product trapezoid rule with `grid_order`
/// points per angle.
pub fn average_rhs(sys: &TorusSystem, j: &[f64], grid_order: usize) -> Result<Vec<f64>> {
    if grid_order < 4 {
        return Err(Error::InvalidArgument(format!("torus grid order must be ≥ 4, got {grid_order}")));
    }
    if j.len() != sys.m {
        return Err(Error::DimensionMismatch { expected: sys.m, got: j.len() });
    }
    let total = grid_order.checked_pow(sys.k as u32).ok_or_else(|| {
        Error::InvalidArgument(format!("torus grid {grid_order}^{} is too large", sys.k))
    })?;
    let h = 2.0 * PI / grid_order as f64;
    let mut acc = vec![0.0; sys.m];
    let mut phi = vec![0.0; sys.k];
    for code in 0..total {
        let mut c = code;
        for p in phi.iter_mut() {
            *p = (c % grid_order) as f64 * h;
            c /= grid_order;
        }
        for (a, v) in acc.iter_mut().zip(sys.g(j, &phi)?) {
            *a += v;
        }
    }
    Ok(acc.into_iter().map(|a| a / total as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `[I…, φ…]` for perturbed runs, `[J…]` for averaged runs.
    pub states: Vec<Vec<f64>>,
    /// Leading components of each state that are slow variables.
    pub slow_dim: usize,
    pub dt: f64,
    pub label: String,
}

impl Trajectory {
    pub fn last(&self) -> Option<(f64, &[f64])> {
        self.times.last().map(|&t| (t, self.states.last().unwrap().as_slice()))
    }

    /// Slow components linearly interpolated at `t` inside the time range.
    fn slow_at(&self, t: f64) -> Vec<f64> {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            return self.states[0][..self.slow_dim].to_vec();
        }
        if idx >= self.times.len() {
            return self.states[self.times.len() - 1][..self.slow_dim].to_vec();
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let s = (t - t0) / (t1 - t0);
        self.states[idx - 1][..self.slow_dim]
            .iter()
            .zip(&self.states[idx][..self.slow_dim])
            .map(|(a, b)| a + s * (b - a))
            .collect()
    }
}

fn rk4<R>(rhs: R, y0: Vec<f64>, t_end: f64, dt: f64, slow_dim: usize, label: String) -> Result<Trajectory>
where
    R: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be > 0, got {t_end}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(y0.clone());
    let mut y = y0;
    let axpy = |y: &[f64], s: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    for step in 0..steps {
        let t = step as f64 * h;
        let fail = |_| Error::IntegrationFailure { time: t };
        let k1 = rhs(&y).map_err(fail)?;
        let k2 = rhs(&axpy(&y, 0.5 * h, &k1)).map_err(fail)?;
        let k3 = rhs(&axpy(&y, 0.5 * h, &k2)).map_err(fail)?;
        let k4 = rhs(&axpy(&y, h, &k3)).map_err(fail)?;
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = (step + 1) as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure { time: t_next });
        }
        times.push(t_next);
        states.push(y.clone());
    }
    Ok(Trajectory { times, states, slow_dim, dt: h, label })
}

pub fn integrate_perturbed(sys: &TorusSystem, i0: &[f64], phi0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
    if i0.len() != sys.m {
        return Err(Error::DimensionMismatch { expected: sys.m, got: i0.len() });
    }
    if phi0.len() != sys.k {
        return Err(Error::DimensionMismatch { expected: sys.k, got: phi0.len() });
    }
    let m = sys.m;
    let eps = sys.epsilon;
    let rhs = |s: &[f64]| -> Result<Vec<f64>> {
        let (i, phi) = s.split_at(m);
        let mut out: Vec<f64> = sys.g(i, phi)?.into_iter().map(|v| eps * v).collect();
        let w = sys.omega(i)?;
        let f = sys.f(i, phi)?;
        out.extend(w.iter().zip(&f).map(|(a, b)| a + eps * b));
        Ok(out)
    };
    rk4(rhs, [i0, phi0].concat(), t_end, dt, m, format!("perturbed: {}", sys.label))
}

pub fn integrate_averaged(sys: &TorusSystem, j0: &[f64], t_end: f64, dt: f64, grid_order: usize) -> Result<Trajectory> {
    if j0.len() != sys.m {
        return Err(Error::DimensionMismatch { expected: sys.m, got: j0.len() });
    }
    let eps = sys.epsilon;
    let rhs = |j: &[f64]| -> Result<Vec<f64>> {
        Ok(average_rhs(sys, j, grid_order)?.into_iter().map(|v| eps * v).collect())
    };
    rk4(rhs, j0.to_vec(), t_end, dt, sys.m, format!("averaged: {}", sys.label))
}

/// Sup over the common time range of the max-abs slow-component difference,
/// sampled at the coarser of the two time grids.
pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.slow_dim != b.slow_dim {
        return Err(Error::DimensionMismatch { expected: a.slow_dim, got: b.slow_dim });
    }
    let (Some(&a0), Some(&a1), Some(&b0), Some(&b1)) = (a.times.first(), a.times.last(), b.times.first(), b.times.last())
    else {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    };
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    if lo > hi {
        return Err(Error::InvalidArgument(format!("disjoint time ranges [{a0}, {a1}] and [{b0}, {b1}]")));
    }
    let in_range = |t: &Trajectory| t.times.iter().filter(|&&s| s >= lo && s <= hi).count();
    let (coarse, fine) = if in_range(a) <= in_range(b) { (a, b) } else { (b, a) };
    let mut worst: f64 = 0.0;
    for (t, s) in coarse.times.iter().zip(&coarse.states) {
        if *t < lo || *t > hi {
            continue;
        }
        let other = fine.slow_at(*t);
        for (u, v) in s[..coarse.slow_dim].iter().zip(&other) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub t_end: f64,
    pub dt: f64,
    pub sup_error: f64,
}

/// Integrates the perturbed and averaged systems on `[0, 1/ε]` for each `ε`
/// (`dt` defaults to [`default_dt`]) and records the sup slow-variable error.
pub fn epsilon_sweep(
    sys: &TorusSystem,
    i0: &[f64],
    phi0: &[f64],
    epsilons: &[f64],
    dt: Option<f64>,
    grid_order: usize,
) -> Result<Vec<SweepPoint>> {
    epsilons
        .par_iter()
        .map(|&eps| {
            if !(eps > 0.0) {
                return Err(Error::InvalidArgument(format!("sweep ε must be > 0, got {eps}")));
            }
            let s = sys.with_epsilon(eps)?;
            let t_end = 1.0 / eps;
            let step = dt.unwrap_or_else(|| default_dt(eps));
            let p = integrate_perturbed(&s, i0, phi0, t_end, step)?;
            let a = integrate_averaged(&s, i0, t_end, step, grid_order)?;
            Ok(SweepPoint { epsilon: eps, t_end, dt: p.dt, sup_error: compare(&p, &a)? })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::InvalidArgument("slope needs ≥ 2 points with positive coordinates".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(g: &str, eps: f64) -> TorusSystem {
        let src = SystemSource { omega: vec!["1".into()], f: vec![], g: vec![g.into()] };
        TorusSystem::from_expressions(1, 1, &src, eps).unwrap()
    }

    #[test]
    fn torus_means() {
        assert!(average_rhs(&system("sin(phi1)", 0.1), &[0.0], 64).unwrap()[0].abs() < 1e-12);
        assert!((average_rhs(&system("1 + cos(phi1)", 0.1), &[0.0], 64).unwrap()[0] - 1.0).abs() < 1e-12);
        assert_eq!(average_rhs(&system("I1^2", 0.1), &[3.0], 64).unwrap()[0], 9.0);
        assert!(average_rhs(&system("I1", 0.1), &[3.0], 3).is_err());
    }

    #[test]
    fn two_torus_mean() {
        let src = SystemSource {
            omega: vec!["1".into(), "sqrt(2)".into()],
            f: vec![],
            g: vec!["cos(phi1)^2 * cos(phi2)^2".into()],
        };
        let sys = TorusSystem::from_expressions(2, 1, &src, 0.1).unwrap();
        assert!((average_rhs(&sys, &[0.0], 32).unwrap()[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_epsilon_freezes_slow_variable() {
        let sys = system("sin(phi1)", 0.0);
        let tr = integrate_perturbed(&sys, &[1.5], &[0.2], 2.0, 0.01).unwrap();
        let (t, s) = tr.last().unwrap();
        assert_eq!(s[0], 1.5);
        assert!((s[1] - (0.2 + t)).abs() < 1e-12);
    }

    #[test]
    fn linear_averaged_flow() {
        let eps = 0.05;
        let sys = system("1 + cos(phi1)", eps);
        let tr = integrate_averaged(&sys, &[2.0], 10.0, 0.1, 64).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            assert!((s[0] - (2.0 + eps * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn angles_are_unwrapped() {
        let tr = integrate_perturbed(&system("0", 0.1), &[0.0], &[0.0], 20.0, 0.01).unwrap();
        assert!((tr.last().unwrap().1[1] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn compare_rules() {
        let sys = system("sin(phi1)", 0.1);
        let a = integrate_perturbed(&sys, &[0.0], &[0.0], 1.0, 0.01).unwrap();
        assert_eq!(compare(&a, &a).unwrap(), 0.0);
        let mut late = a.clone();
        late.times.iter_mut().for_each(|t| *t += 5.0);
        assert!(compare(&a, &late).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let src = SystemSource { omega: vec!["1".into()], f: vec![], g: vec!["I1^2".into()] };
        let sys = TorusSystem::from_expressions(1, 1, &src, 1.0).unwrap();
        match integrate_perturbed(&sys, &[1.0], &[0.0], 5.0, 0.01) {
            Err(Error::IntegrationFailure { time }) => assert!(time > 0.9 && time < 1.1, "{time}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn periodicity() {
        assert!(system("sin(phi1)", 0.1).check_periodic(&[vec![0.0]]).is_ok());
        assert!(system("phi1", 0.1).check_periodic(&[vec![0.0]]).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&e| (e, 3.0 * e * e)).collect();
        assert!((loglog_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
    }
}
