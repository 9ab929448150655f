//! Trace CSV files.
//!
//! A trace starts with one or two `#` comment lines carrying metadata,
//! followed by a header row and one row per snapshot:
//!
//! ```text
//! # format_version=1 law=bearing dimension=3 agents=6 leaders=2
//! t,p1_x,p1_y,p1_z,h1_x,...,xi1_x,...,u1,w1_x,w1_y,w1_z,...,V,bearing_error,position_error,min_distance,vel_err3,...
//! ```
//!
//! Per agent: position, heading and auxiliary state (d columns each), forward
//! speed, then angular velocity (1 column in the plane, 3 in space). Metrics
//! close the row with one velocity error per follower. Floats are written
//! with 17 significant digits so rows parse back bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::analysis::{self, Metrics};
use crate::control::Law;
use crate::dynamics::{AgentState, SimulationTrace, Snapshot, SystemState};
use crate::geometry::{Dimension, Vector};
use crate::scenario::Scenario;
use crate::{Error, Result};

use super::scenario_file::FORMAT_VERSION;

const AXES: [&str; 3] = ["x", "y", "z"];

/// Shape of one trace file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceLayout {
    pub law: Law,
    pub dim: Dimension,
    pub n_agents: usize,
    pub n_leaders: usize,
}

impl TraceLayout {
    pub fn of(trace: &SimulationTrace) -> Self {
        Self {
            law: trace.law,
            dim: trace.dim,
            n_agents: trace.n_agents,
            n_leaders: trace.n_leaders,
        }
    }

    fn per_agent(&self) -> usize {
        3 * self.dim.size() + 1 + self.dim.omega_size()
    }

    pub fn column_count(&self) -> usize {
        1 + self.n_agents * self.per_agent() + 4 + (self.n_agents - self.n_leaders)
    }

    pub fn header(&self) -> Vec<String> {
        let d = self.dim.size();
        let mut cols = vec!["t".to_string()];
        for i in 1..=self.n_agents {
            for name in ["p", "h", "xi"] {
                cols.extend(AXES[..d].iter().map(|a| format!("{name}{i}_{a}")));
            }
            cols.push(format!("u{i}"));
            match self.dim {
                Dimension::Planar => cols.push(format!("w{i}")),
                Dimension::Spatial => cols.extend(AXES.iter().map(|a| format!("w{i}_{a}"))),
            }
        }
        cols.extend(["V", "bearing_error", "position_error", "min_distance"].map(String::from));
        cols.extend((self.n_leaders + 1..=self.n_agents).map(|i| format!("vel_err{i}")));
        cols
    }

    fn preamble(&self) -> String {
        format!(
            "# format_version={FORMAT_VERSION} law={} dimension={} agents={} leaders={}",
            self.law,
            self.dim.size(),
            self.n_agents,
            self.n_leaders
        )
    }

    fn parse_preamble(line: &str) -> Result<Self> {
        let bad = |why: &str| Error::Parse(format!("trace metadata: {why}"));
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| bad("missing `#` line"))?;
        let mut law = None;
        let mut dim = None;
        let mut n_agents = None;
        let mut n_leaders = None;
        let mut version = None;
        for field in body.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| bad(field))?;
            match key {
                "format_version" => version = value.parse::<u32>().ok(),
                "law" => law = value.parse::<Law>().ok(),
                "dimension" => {
                    dim = value
                        .parse::<usize>()
                        .ok()
                        .and_then(|d| Dimension::try_from(d).ok())
                }
                "agents" => n_agents = value.parse().ok(),
                "leaders" => n_leaders = value.parse().ok(),
                _ => {}
            }
        }
        if version != Some(FORMAT_VERSION) {
            return Err(bad("unsupported or missing format_version"));
        }
        let layout = Self {
            law: law.ok_or_else(|| bad("law"))?,
            dim: dim.ok_or_else(|| bad("dimension"))?,
            n_agents: n_agents.ok_or_else(|| bad("agents"))?,
            n_leaders: n_leaders.ok_or_else(|| bad("leaders"))?,
        };
        if layout.n_leaders > layout.n_agents {
            return Err(bad("more leaders than agents"));
        }
        Ok(layout)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Flat row for one snapshot.
pub fn snapshot_row(snapshot: &Snapshot) -> Vec<f64> {
    let mut row = vec![snapshot.state.t];
    for (a, cmd) in snapshot.state.agents.iter().zip(&snapshot.commands) {
        row.extend(a.p.iter().chain(a.h.iter()).chain(a.xi.iter()));
        row.push(cmd.u);
        row.extend(cmd.omega.components());
    }
    row.extend(snapshot.metrics.columns());
    row
}

pub fn write_trace<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let layout = TraceLayout::of(trace);
    let mut out = out;
    writeln!(out, "{}", layout.preamble())?;
    if let Some(abort) = &trace.aborted {
        writeln!(
            out,
            "# aborted_at={} reason={}",
            fmt(abort.t),
            abort.reason.replace('\n', " ")
        )?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(layout.header()).map_err(csv_err)?;
    for s in &trace.snapshots {
        w.write_record(snapshot_row(s).into_iter().map(fmt))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(trace: &SimulationTrace, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(trace, std::io::BufWriter::new(file))
}

/// Parsed trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub layout: TraceLayout,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub aborted: Option<String>,
}

/// One row split back into its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub state: SystemState,
    pub u: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
    pub metrics: Vec<f64>,
}

impl TraceFile {
    pub fn row(&self, k: usize) -> TraceRow {
        let l = &self.layout;
        let d = l.dim.size();
        let row = &self.rows[k];
        let mut at = 1;
        let mut take = |len: usize| {
            let s = &row[at..at + len];
            at += len;
            s.to_vec()
        };
        let mut agents = Vec::with_capacity(l.n_agents);
        let mut u = Vec::with_capacity(l.n_agents);
        let mut omega = Vec::with_capacity(l.n_agents);
        for _ in 0..l.n_agents {
            let p = Vector::from_vec(take(d));
            let h = Vector::from_vec(take(d));
            let xi = Vector::from_vec(take(d));
            agents.push(AgentState { p, h, xi });
            u.push(take(1)[0]);
            omega.push(take(l.dim.omega_size()));
        }
        let metrics = take(4 + l.n_agents - l.n_leaders);
        TraceRow {
            state: SystemState { t: row[0], agents },
            u,
            omega,
            metrics,
        }
    }
}

pub fn read_trace<R: Read>(input: R) -> Result<TraceFile> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let first = text
        .lines()
        .next()
        .ok_or_else(|| Error::Parse("empty trace file".into()))?;
    let layout = TraceLayout::parse_preamble(first)?;
    let aborted = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# aborted_at="))
        .map(str::to_string);

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if columns != layout.header() {
        return Err(Error::Parse(format!(
            "trace header does not match its metadata ({} columns, expected {})",
            columns.len(),
            layout.column_count()
        )));
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let row = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: `{f}`: {e}", k + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(TraceFile {
        layout,
        columns,
        rows,
        aborted,
    })
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<TraceFile> {
    read_trace(std::fs::File::open(path)?)
}

/// Result of recomputing a trace's derived columns from its state columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recomputation {
    pub rows: usize,
    /// Largest absolute gap over all metric columns.
    pub metrics: f64,
    /// Largest absolute gap over the command columns `u` and `ω`.
    pub commands: f64,
}

impl Recomputation {
    pub fn max(&self) -> f64 {
        self.metrics.max(self.commands)
    }
}

/// Recomputes commands and metrics from each row's `(t, p, h, ξ)`.
pub fn recompute(trace: &TraceFile, scenario: &Scenario) -> Result<Recomputation> {
    let l = &trace.layout;
    let graph = &scenario.formation.graph;
    if l.dim != scenario.dim
        || l.n_agents != graph.agent_count()
        || l.n_leaders != graph.leader_count()
    {
        return Err(Error::validation(
            "trace",
            "trace layout does not match the scenario (dimension, agents or leaders differ)",
        ));
    }
    let system = scenario.closed_loop(l.law);
    let mut out = Recomputation {
        rows: trace.rows.len(),
        metrics: 0.0,
        commands: 0.0,
    };
    for k in 0..trace.rows.len() {
        let row = trace.row(k);
        let commands = system.commands(&row.state)?;
        let metrics: Metrics = analysis::metrics(&row.state, &commands, &system)?;
        for (a, b) in metrics.columns().iter().zip(&row.metrics) {
            out.metrics = out.metrics.max((a - b).abs());
        }
        for (cmd, (u, w)) in commands.iter().zip(row.u.iter().zip(&row.omega)) {
            out.commands = out.commands.max((cmd.u - u).abs());
            for (a, b) in cmd.omega.components().iter().zip(w) {
                out.commands = out.commands.max((a - b).abs());
            }
        }
    }
    Ok(out)
}
