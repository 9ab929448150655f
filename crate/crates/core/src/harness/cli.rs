//! `check`, `run` and `metrics` subcommands.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::analysis::{self, CollisionCertificate};
use crate::control::Law;
use crate::dynamics;
use crate::{Error, Result};

use super::{emit_plot_data, load_scenario, load_trace, recompute, save_trace};

/// Largest allowed gap between stored and recomputed trace columns.
pub const METRICS_TOLERANCE: f64 = 1e-9;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_ABORT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "bearing-formation",
    version,
    about = "Bearing-constrained formation tracking for unicycle agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rigidity, spectral quantities and collision certificates of a scenario.
    Check {
        scenario: PathBuf,
        /// Safety distance; defaults to half the smallest target distance.
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Simulate a scenario and write its trace.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        law: Law,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        /// Record every N-th step.
        #[arg(long)]
        cadence: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-panel plot tables into this directory.
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
    /// Recompute a trace's derived columns and report the largest discrepancy.
    Metrics { trace: PathBuf, scenario: PathBuf },
}

/// Runs the CLI with `args` (program name first) and returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            let help = matches!(e.kind(), DisplayHelp | DisplayVersion);
            let sink: &mut dyn Write = if help { out } else { err };
            let _ = write!(sink, "{}", e.render());
            return if help { EXIT_OK } else { EXIT_INVALID };
        }
    };
    let result = match cli.command {
        Command::Check { scenario, kappa } => check(&scenario, kappa, out),
        Command::Run {
            scenario,
            law,
            dt,
            duration,
            cadence,
            out: trace_path,
            plot_dir,
        } => run(
            &scenario,
            law,
            dt,
            duration,
            cadence,
            &trace_path,
            plot_dir,
            out,
            err,
        ),
        Command::Metrics { trace, scenario } => metrics(&trace, &scenario, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::CoincidentAgents { .. } => EXIT_ABORT,
                _ => EXIT_INVALID,
            }
        }
    }
}

fn print_certificate(out: &mut dyn Write, label: &str, c: &CollisionCertificate) -> Result<()> {
    writeln!(
        out,
        "certificate {label}: beta = V(0) = {:.6e}, epsilon = {:.6e}, gamma = {:.6e}, phi = {:.6e}, holds = {}",
        c.beta, c.epsilon, c.gamma, c.phi, c.holds
    )?;
    Ok(())
}

fn check(path: &PathBuf, kappa: Option<f64>, out: &mut dyn Write) -> Result<i32> {
    let scenario = load_scenario(path)?;
    let f = &scenario.formation;
    writeln!(
        out,
        "scenario: {} (d = {}, agents = {}, leaders = {}, edges = {})",
        scenario.name,
        scenario.dim.size(),
        f.graph.agent_count(),
        f.graph.leader_count(),
        f.graph.edge_count()
    )?;
    writeln!(out, "{}", f.rigidity()?)?;
    writeln!(out, "lambda_min(B_ff) = {:.6e}", f.spectral.lambda_min_ff)?;
    writeln!(out, "||H|| = {:.6e}", f.spectral.incidence_norm)?;
    let kappa = kappa.unwrap_or(f.target.min_distance() / 2.0);
    writeln!(
        out,
        "kappa = {kappa:.6e} (min target distance {:.6e})",
        f.target.min_distance()
    )?;
    for law in [Law::BearingOnly, Law::Displacement] {
        let system = scenario.closed_loop(law);
        let cert = analysis::collision_certificate(&scenario.initial, &system, kappa)?;
        print_certificate(out, law.name(), &cert)?;
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn run(
    path: &PathBuf,
    law: Law,
    dt: Option<f64>,
    duration: Option<f64>,
    cadence: Option<usize>,
    trace_path: &PathBuf,
    plot_dir: Option<PathBuf>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let mut scenario = load_scenario(path)?;
    if let Some(dt) = dt {
        scenario.integrator.dt = dt;
    }
    if let Some(duration) = duration {
        scenario.integrator.duration = duration;
    }
    if let Some(cadence) = cadence {
        if cadence == 0 {
            return Err(Error::validation("--cadence", "must be at least 1"));
        }
        scenario.cadence = cadence;
    }
    scenario.integrator.validate()?;

    let trace = dynamics::simulate(&scenario, law);
    save_trace(&trace, trace_path)?;
    if let Some(dir) = plot_dir {
        emit_plot_data(&trace, dir)?;
    }
    if let Some(last) = trace.last() {
        let m = &last.metrics;
        writeln!(
            out,
            "law = {law}, t = {:.3}, snapshots = {}, bearing_error = {:.3e}, max_velocity_error = {:.3e}, V = {:.3e}, min_distance = {:.3e}",
            last.state.t,
            trace.snapshots.len(),
            m.bearing_error,
            m.max_velocity_error(),
            m.lyapunov,
            trace.min_distance()
        )?;
    }
    match &trace.aborted {
        None => Ok(EXIT_OK),
        Some(abort) => {
            writeln!(err, "aborted at t = {:.6}: {}", abort.t, abort.reason)?;
            Ok(if abort.coincidence {
                EXIT_ABORT
            } else {
                EXIT_INVALID
            })
        }
    }
}

fn metrics(
    trace_path: &PathBuf,
    scenario_path: &PathBuf,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let trace = load_trace(trace_path)?;
    let scenario = load_scenario(scenario_path)?;
    let r = recompute(&trace, &scenario)?;
    writeln!(
        out,
        "rows = {}, max discrepancy = {:.3e} (metrics {:.3e}, commands {:.3e})",
        r.rows,
        r.max(),
        r.metrics,
        r.commands
    )?;
    if r.max() > METRICS_TOLERANCE {
        writeln!(err, "discrepancy exceeds {METRICS_TOLERANCE:e}")?;
        return Ok(EXIT_INVALID);
    }
    Ok(EXIT_OK)
}
