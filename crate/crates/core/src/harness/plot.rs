//! Plain CSV series for the usual trace figures.

use std::path::{Path, PathBuf};

use crate::dynamics::SimulationTrace;
use crate::{Error, Result};

pub const TRAJECTORIES: &str = "trajectories.csv";
pub const VELOCITY_ERRORS: &str = "velocity_errors.csv";
pub const BEARING_ERROR: &str = "bearing_error.csv";
pub const LYAPUNOV: &str = "lyapunov.csv";

fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|x| format!("{x:.16e}")))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one table per panel into `out_dir` (created if needed) and returns
/// the paths in the order trajectories, velocity errors, bearing error,
/// Lyapunov value.
pub fn emit_plot_data(trace: &SimulationTrace, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let d = trace.dim.size();
    let axes = ["x", "y", "z"];
    let t = |name: &str| -> Vec<String> { vec!["t".into(), name.into()] };

    let mut traj_header = vec!["t".to_string()];
    for i in 1..=trace.n_agents {
        traj_header.extend(axes[..d].iter().map(|a| format!("p{i}_{a}")));
    }
    let traj = dir.join(TRAJECTORIES);
    write_table(
        &traj,
        &traj_header,
        trace.snapshots.iter().map(|s| {
            let mut row = vec![s.state.t];
            for a in &s.state.agents {
                row.extend(a.p.iter());
            }
            row
        }),
    )?;

    let mut vel_header = vec!["t".to_string()];
    vel_header.extend((trace.n_leaders + 1..=trace.n_agents).map(|i| format!("vel_err{i}")));
    let vel = dir.join(VELOCITY_ERRORS);
    write_table(
        &vel,
        &vel_header,
        trace.snapshots.iter().map(|s| {
            let mut row = vec![s.state.t];
            row.extend(&s.metrics.velocity_errors);
            row
        }),
    )?;

    let bearing = dir.join(BEARING_ERROR);
    write_table(
        &bearing,
        &t("bearing_error"),
        trace
            .snapshots
            .iter()
            .map(|s| vec![s.state.t, s.metrics.bearing_error]),
    )?;

    let lyap = dir.join(LYAPUNOV);
    write_table(
        &lyap,
        &t("V"),
        trace
            .snapshots
            .iter()
            .map(|s| vec![s.state.t, s.metrics.lyapunov]),
    )?;

    Ok(vec![traj, vel, bearing, lyap])
}
