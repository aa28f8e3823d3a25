//! Job settings: command-line flags, an optional flat TOML file, and the
//! defaults filled in before a job runs.

use std::fmt;
use std::path::PathBuf;

use avgeom_core::averaging::{default_probes, DEFAULT_TOL_BERWALD, DEFAULT_TOL_RIEMANNIAN};
use avgeom_core::fiber::{DEFAULT_FIBER_ORDER, DEFAULT_RADIUS};
use avgeom_core::finsler::catalog::DEFAULT_QUARTIC_EPS;
use avgeom_core::indicatrix::{default_order, min_order};
use avgeom_core::ode::{default_dt, DEFAULT_GRID};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable that replaces the built-in default quadrature order.
pub const ORDER_ENV: &str = "AVGEOM_DEFAULT_ORDER";

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "avgeom", version, about = "Averaged geometry of Finsler structures, torus systems and fiber forms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Averaged metric, averaged connection and indicatrix volume at a point
    Average(Settings),
    /// Deviation tensors, the T tensor and the riemannian/berwald flags
    Classify(Settings),
    /// Perturbed versus averaged slow dynamics on a torus
    OdeAverage(Settings),
    /// Integrate a differential form along the fiber
    FiberIntegrate(Settings),
    /// Run the invariant suite
    Check(Settings),
}

impl Command {
    pub fn split(self) -> (JobKind, Settings) {
        match self {
            Command::Average(s) => (JobKind::Average, s),
            Command::Classify(s) => (JobKind::Classify, s),
            Command::OdeAverage(s) => (JobKind::OdeAverage, s),
            Command::FiberIntegrate(s) => (JobKind::FiberIntegrate, s),
            Command::Check(s) => (JobKind::Check, s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Average,
    Classify,
    OdeAverage,
    FiberIntegrate,
    Check,
}

impl fmt::Display for JobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            JobKind::Average => "average",
            JobKind::Classify => "classify",
            JobKind::OdeAverage => "ode-average",
            JobKind::FiberIntegrate => "fiber-integrate",
            JobKind::Check => "check",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Text,
    Jsonl,
    Csv,
}

/// Every knob a job can take. All fields are optional here; [`resolve`]
/// fills the defaults relevant to the job and validates the rest.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Flat TOML file with the same keys as the long flags; flags win
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Catalog structure id
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    /// Finsler function F in x1..xn, y1..yn
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Randers covector, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    /// Matrix of riemannian-constant in row-major order, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_quartic: Option<f64>,
    /// Base point, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    /// Quadrature order
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Number of probe directions
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_riemannian: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_berwald: Option<f64>,

    /// Perturbation strength; a comma list runs a sweep
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Points per angle in the torus average
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// Number of fast angles
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Number of slow actions
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Frequency component in I1..Im (repeat per angle)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<String>>,
    /// Angle perturbation component in I, phi (repeat per angle)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<String>>,
    /// Action perturbation component in I, phi (repeat per action)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi0: Option<Vec<f64>>,

    /// Form term "coefficient ; basis", e.g. "x1*exp(-t1^2) ; dx2^dt1" (repeatable)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub term: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fiber_dim: Option<usize>,
    /// Half-width of the fiber box
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Finite-difference step for base derivatives
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,

    /// Write the report here instead of stdout
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Seed for sampled base points in check
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Settings {
    /// `other`'s set fields replace ours.
    pub fn overlay(self, other: &Settings) -> Result<Settings, CliError> {
        let to_map = |s: &Settings| match serde_json::to_value(s) {
            Ok(serde_json::Value::Object(m)) => Ok(m),
            _ => Err(CliError::config("settings", "", "cannot merge settings")),
        };
        let mut base = to_map(&self)?;
        base.extend(to_map(other)?);
        let mut merged: Settings = serde_json::from_value(serde_json::Value::Object(base))
            .map_err(|e| CliError::config("settings", "", e.to_string()))?;
        merged.config = other.config.clone().or(self.config);
        Ok(merged)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }
}

/// Reads the config file named by `flags.config` (if any) and lays the flags
/// over it.
pub fn load(flags: Settings) -> Result<Settings, CliError> {
    let Some(path) = flags.config.clone() else {
        return Ok(flags);
    };
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::config("config", &shown, e.to_string()))?;
    let file: Settings = toml::from_str(&text).map_err(|e| CliError::config("config", &shown, e.to_string()))?;
    file.overlay(&flags)
}

fn env_order() -> Result<Option<usize>, CliError> {
    match std::env::var(ORDER_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|e| CliError::config(ORDER_ENV, &v, e.to_string())),
        Err(_) => Ok(None),
    }
}

/// Default indicatrix order for `dim`, honouring [`ORDER_ENV`].
pub fn default_quadrature_order(dim: usize) -> Result<usize, CliError> {
    Ok(env_order()?.unwrap_or_else(|| default_order(dim)))
}

fn require_finite(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(name, v, "must be finite"))
    }
}

fn require_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(name, v, "must be a finite number > 0"))
    }
}

fn finite_list(name: &str, v: &Option<Vec<f64>>) -> Result<(), CliError> {
    for c in v.iter().flatten() {
        require_finite(name, *c)?;
    }
    Ok(())
}

/// Fills the defaults that `kind` uses and checks the invariants a job
/// relies on. The result is the effective config echoed in reports.
pub fn resolve(kind: JobKind, settings: Settings) -> Result<Settings, CliError> {
    let mut s = settings;
    for (name, v) in [("b", &s.b), ("a", &s.a), ("x", &s.x), ("eps", &s.eps), ("i0", &s.i0), ("phi0", &s.phi0)] {
        finite_list(name, v)?;
    }
    s.format = Some(s.format());
    match kind {
        JobKind::Average | JobKind::Classify => {
            resolve_structure(&mut s)?;
            if kind == JobKind::Classify {
                let dim = s.dim.unwrap_or(2);
                s.probes = Some(s.probes.unwrap_or_else(|| default_probes(dim)));
                s.tol_riemannian = Some(s.tol_riemannian.unwrap_or(DEFAULT_TOL_RIEMANNIAN));
                s.tol_berwald = Some(s.tol_berwald.unwrap_or(DEFAULT_TOL_BERWALD));
                if s.probes == Some(0) {
                    return Err(CliError::config("probes", 0, "at least one probe direction is required"));
                }
                require_positive("tol-riemannian", s.tol_riemannian.unwrap())?;
                require_positive("tol-berwald", s.tol_berwald.unwrap())?;
            }
        }
        JobKind::Check => {
            if s.metric.is_some() || s.expr.is_some() {
                resolve_structure(&mut s)?;
            } else if let Some(order) = s.order {
                if order < min_order(3) {
                    return Err(CliError::config("order", order, "below the minimum quadrature order"));
                }
            }
            s.seed = Some(s.seed.unwrap_or(DEFAULT_SEED));
        }
        JobKind::OdeAverage => resolve_ode(&mut s)?,
        JobKind::FiberIntegrate => resolve_fiber(&mut s)?,
    }
    Ok(s)
}

fn resolve_structure(s: &mut Settings) -> Result<(), CliError> {
    let dim = match (&s.metric, &s.expr) {
        (Some(_), Some(_)) => {
            return Err(CliError::config("metric", s.metric.as_deref().unwrap_or(""), "give either --metric or --expr"))
        }
        (None, None) => return Err(CliError::config("metric", "", "one of --metric or --expr is required")),
        (None, Some(_)) => s
            .dim
            .or(s.x.as_ref().map(Vec::len))
            .ok_or_else(|| CliError::config("dim", "", "--expr needs --dim or --x"))?,
        (Some(id), None) => match id.as_str() {
            "euclidean" => s.dim.or(s.x.as_ref().map(Vec::len)).unwrap_or(2),
            "riemannian-constant" => {
                let a = s.a.as_ref().ok_or_else(|| CliError::config("a", "", "riemannian-constant needs --a"))?;
                let n = (a.len() as f64).sqrt().round() as usize;
                if n * n != a.len() {
                    return Err(CliError::config("a", format!("{a:?}"), "needs n² entries"));
                }
                n
            }
            "riemannian-exp2d" => 2,
            "randers-flat" => s.b.get_or_insert_with(|| vec![0.2, 0.0]).len(),
            "randers-general" => {
                s.b.get_or_insert_with(|| vec![0.1, 0.2]);
                2
            }
            "minkowski-perturbed-quartic" => {
                let eps = *s.eps_quartic.get_or_insert(DEFAULT_QUARTIC_EPS);
                require_finite("eps-quartic", eps)?;
                s.dim.or(s.x.as_ref().map(Vec::len)).unwrap_or(2)
            }
            other => {
                return Err(CliError::config(
                    "metric",
                    other,
                    format!("unknown catalog id (known: {})", avgeom_core::Catalog::IDS.join(", ")),
                ))
            }
        },
    };
    if let Some(d) = s.dim {
        if d != dim {
            return Err(CliError::config("dim", d, format!("the structure has dimension {dim}")));
        }
    }
    if let Some(b) = &s.b {
        if s.metric.as_deref() == Some("randers-general") && b.len() != 2 {
            return Err(CliError::config("b", format!("{b:?}"), "randers-general needs two components"));
        }
    }
    s.dim = Some(dim);
    let x = s.x.get_or_insert_with(|| vec![0.0; dim]);
    if x.len() != dim {
        return Err(CliError::config("x", format!("{x:?}"), format!("expected {dim} components")));
    }
    if !(2..=3).contains(&dim) {
        return Err(CliError::config("dim", dim, "quadrature supports dimensions 2 and 3"));
    }
    let order = match s.order {
        Some(o) => o,
        None => default_quadrature_order(dim)?,
    };
    if order < min_order(dim) {
        return Err(CliError::config("order", order, format!("minimum for dimension {dim} is {}", min_order(dim))));
    }
    s.order = Some(order);
    Ok(())
}

fn resolve_ode(s: &mut Settings) -> Result<(), CliError> {
    let omega = s.omega.clone().ok_or_else(|| CliError::config("omega", "", "ode-average needs --omega"))?;
    let g = s.g.clone().ok_or_else(|| CliError::config("g", "", "ode-average needs --g"))?;
    let k = *s.k.get_or_insert(omega.len());
    let m = *s.m.get_or_insert(g.len());
    if k == 0 || m == 0 {
        return Err(CliError::config("k", k, "need at least one angle and one action"));
    }
    if omega.len() != k {
        return Err(CliError::config("omega", format!("{omega:?}"), format!("expected {k} components")));
    }
    if g.len() != m {
        return Err(CliError::config("g", format!("{g:?}"), format!("expected {m} components")));
    }
    let f = s.f.get_or_insert_with(Vec::new);
    if !f.is_empty() && f.len() != k {
        return Err(CliError::config("f", format!("{f:?}"), format!("expected {k} components or none")));
    }
    let eps = s.eps.clone().ok_or_else(|| CliError::config("eps", "", "ode-average needs --eps"))?;
    if eps.is_empty() {
        return Err(CliError::config("eps", "", "empty list"));
    }
    let sweep = eps.len() > 1;
    for e in &eps {
        if sweep && !(*e > 0.0) {
            return Err(CliError::config("eps", e, "sweep values must be > 0"));
        }
        if !(*e >= 0.0) {
            return Err(CliError::config("eps", e, "must be ≥ 0"));
        }
    }
    if sweep {
        if let Some(t) = s.t_end {
            return Err(CliError::config("t-end", t, "a sweep always integrates to 1/eps"));
        }
    } else {
        let e = eps[0];
        let t_end = match s.t_end {
            Some(t) => t,
            None if e > 0.0 => 1.0 / e,
            None => return Err(CliError::config("t-end", "", "eps = 0 needs an explicit --t-end")),
        };
        require_positive("t-end", t_end)?;
        s.t_end = Some(t_end);
        s.dt = Some(s.dt.unwrap_or_else(|| default_dt(e)));
    }
    if let Some(dt) = s.dt {
        require_positive("dt", dt)?;
    }
    let grid = *s.grid.get_or_insert(DEFAULT_GRID);
    if grid < 4 {
        return Err(CliError::config("grid", grid, "needs at least 4 points per angle"));
    }
    let i0 = s.i0.get_or_insert_with(|| vec![0.0; m]);
    if i0.len() != m {
        return Err(CliError::config("i0", format!("{i0:?}"), format!("expected {m} components")));
    }
    let phi0 = s.phi0.get_or_insert_with(|| vec![0.0; k]);
    if phi0.len() != k {
        return Err(CliError::config("phi0", format!("{phi0:?}"), format!("expected {k} components")));
    }
    Ok(())
}

fn resolve_fiber(s: &mut Settings) -> Result<(), CliError> {
    let terms = s.term.clone().ok_or_else(|| CliError::config("term", "", "fiber-integrate needs at least one --term"))?;
    for t in &terms {
        split_term(t)?;
    }
    let n = s.base_dim.or(s.x.as_ref().map(Vec::len)).unwrap_or(1);
    s.base_dim = Some(n);
    let k = *s.fiber_dim.get_or_insert(1);
    if n == 0 || k == 0 {
        return Err(CliError::config("base-dim", n, "base and fiber dimensions must be ≥ 1"));
    }
    let x = s.x.get_or_insert_with(|| vec![0.0; n]);
    if x.len() != n {
        return Err(CliError::config("x", format!("{x:?}"), format!("expected {n} components")));
    }
    require_positive("radius", *s.radius.get_or_insert(DEFAULT_RADIUS))?;
    require_positive("step", *s.step.get_or_insert(DEFAULT_FD_STEP))?;
    let order = match s.order {
        Some(o) => o,
        None => env_order()?.unwrap_or(DEFAULT_FIBER_ORDER),
    };
    if order == 0 {
        return Err(CliError::config("order", order, "must be ≥ 1"));
    }
    s.order = Some(order);
    Ok(())
}

/// `"coeff ; basis"` split at the last `;`.
pub fn split_term(t: &str) -> Result<(&str, &str), CliError> {
    t.rsplit_once(';')
        .map(|(c, b)| (c.trim(), b.trim()))
        .filter(|(c, b)| !c.is_empty() && !b.is_empty())
        .ok_or_else(|| CliError::config("term", t, "expected \"coefficient ; basis\""))
}
