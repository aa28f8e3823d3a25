//! Command-line front end for `avgeom-core`: config loading, the five jobs,
//! and report output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::time::Instant;

pub mod check;
pub mod config;
pub mod error;
pub mod jobs;
pub mod report;

pub use config::{Cli, Command, Format, JobKind, Settings};
pub use error::CliError;
pub use report::{Report, Value};

/// Resolves `settings` for `kind` and runs the job.
pub fn execute(kind: JobKind, settings: Settings) -> Result<Report, CliError> {
    let effective = config::resolve(kind, config::load(settings)?)?;
    let mut report = Report::new(kind, effective.clone());
    let start = Instant::now();
    match kind {
        JobKind::Average => jobs::average(&effective, &mut report)?,
        JobKind::Classify => jobs::classify(&effective, &mut report)?,
        JobKind::OdeAverage => jobs::ode_average(&effective, &mut report)?,
        JobKind::FiberIntegrate => jobs::fiber(&effective, &mut report)?,
        JobKind::Check => check::run(&effective, &mut report)?,
    }
    report.elapsed = start.elapsed();
    report.ensure_finite()?;
    Ok(report)
}

/// Writes the rendered report to `--out` or stdout.
pub fn emit(report: &Report) -> Result<(), CliError> {
    let text = report.render(report.config.format())?;
    match &report.config.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|source| CliError::Output { path: path.display().to_string(), source }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Output { path: "stdout".into(), source })
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (kind, settings) = cli.command.split();
    let outcome = execute(kind, settings).and_then(|report| {
        emit(&report)?;
        if report.failures > 0 {
            let total = report.table.as_ref().map_or(report.failures, |t| t.rows.len());
            return Err(CliError::ChecksFailed { failed: report.failures, total });
        }
        Ok(())
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("avgeom {kind}: {e}");
            e.exit_code()
        }
    }
}
