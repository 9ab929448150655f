//! Scenario JSON documents (`format_version` 1).
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "name": "example",
//!   "dimension": 2,
//!   "agents": [
//!     { "id": 1, "leader": true, "position": [0, 0], "heading": [1, 0] },
//!     { "id": 2, "leader": true, "position": [0, 5], "heading": [1, 0] },
//!     { "id": 3, "leader": false, "position": [-4, 1], "heading": [0, 1], "xi": [0, 0] }
//!   ],
//!   "edges": [ { "from": 3, "to": 1, "bearing": [0.8, -0.6] } ],
//!   "reference": { "speed": 0.2, "heading": [1, 0] },
//!   "gains": { "bearing": { "k1": 15, "k2": 7 }, "displacement": { "k1": 5, "k2": 3 } },
//!   "integrator": { "dt": 0.005, "duration": 120, "min_separation_abort": 0.001 },
//!   "output": { "cadence": 1 }
//! }
//! ```
//!
//! Bearings are oriented `from → to`. Leader pairs that are not listed get
//! their bearing from the leaders' initial positions. `integrator` and
//! `output` may be omitted.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::control::ControlGains;
use crate::dynamics::{AgentState, IntegratorConfig, SystemState};
use crate::formation::{DesiredBearingSet, Formation, FormationGraph, RENORMALIZE_WARN};
use crate::geometry::{self, Dimension, Vector};
use crate::scenario::{LawGains, Reference, Scenario};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Tolerance for leader headings to count as equal to `h_c`.
const HEADING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub dimension: Dimension,
    pub agents: Vec<AgentEntry>,
    pub edges: Vec<EdgeEntry>,
    pub reference: ReferenceEntry,
    pub gains: GainsEntry,
    #[serde(default)]
    pub integrator: IntegratorEntry,
    #[serde(default)]
    pub output: OutputEntry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: usize,
    pub leader: bool,
    pub position: Vec<f64>,
    pub heading: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub from: usize,
    pub to: usize,
    pub bearing: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEntry {
    pub speed: f64,
    pub heading: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsEntry {
    pub bearing: ControlGains,
    pub displacement: ControlGains,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorEntry {
    pub dt: f64,
    pub duration: f64,
    pub min_separation_abort: f64,
}

impl Default for IntegratorEntry {
    fn default() -> Self {
        let c = IntegratorConfig::default();
        Self {
            dt: c.dt,
            duration: c.duration,
            min_separation_abort: c.min_separation_abort,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputEntry {
    pub cadence: usize,
}

impl Default for OutputEntry {
    fn default() -> Self {
        Self { cadence: 1 }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.validate()
}

fn vector(field: &str, values: &[f64], d: usize) -> Result<Vector> {
    if values.len() != d {
        return Err(Error::validation(
            field,
            format!("expected {d} components, found {}", values.len()),
        ));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation(field, "components must be finite"));
    }
    Ok(Vector::from_column_slice(values))
}

fn unit_vector(field: &str, values: &[f64], d: usize) -> Result<Vector> {
    let v = vector(field, values, d)?;
    let norm = v.norm();
    if norm <= geometry::COINCIDENCE_TOLERANCE {
        return Err(Error::validation(field, "must be a nonzero direction"));
    }
    if (norm - 1.0).abs() > RENORMALIZE_WARN {
        warn!("{field} has norm {norm:.6}; renormalizing");
    }
    Ok(v / norm)
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<Scenario> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::validation(
                "format_version",
                format!(
                    "unsupported version {} (expected {FORMAT_VERSION})",
                    self.format_version
                ),
            ));
        }
        let dim = self.dimension;
        let d = dim.size();
        let n = self.agents.len();

        for (k, a) in self.agents.iter().enumerate() {
            if a.id != k + 1 {
                return Err(Error::validation(
                    "agents.id",
                    format!("ids must be 1..n in order; entry {} has id {}", k + 1, a.id),
                ));
            }
        }
        let n_leaders = self.agents.iter().take_while(|a| a.leader).count();
        if self.agents[n_leaders..].iter().any(|a| a.leader) {
            return Err(Error::validation(
                "agents.leader",
                "leaders must come first",
            ));
        }
        if n_leaders < 2 {
            return Err(Error::validation(
                "agents.leader",
                format!("at least 2 leaders are required (n_l >= 2), found {n_leaders}"),
            ));
        }

        if !(self.reference.speed >= 0.0 && self.reference.speed.is_finite()) {
            return Err(Error::validation(
                "reference.speed",
                "speed u_c must be finite and non-negative; encode direction in the heading",
            ));
        }
        let h_c = unit_vector("reference.heading", &self.reference.heading, d)?;
        let reference = Reference {
            speed: self.reference.speed,
            heading: geometry::UnitVector::new_unchecked(h_c.clone()),
        };
        let v_c = reference.velocity();

        let mut agents = Vec::with_capacity(n);
        for a in &self.agents {
            let p = vector(&format!("agents[{}].position", a.id), &a.position, d)?;
            let h = unit_vector(&format!("agents[{}].heading", a.id), &a.heading, d)?;
            let xi = if a.leader {
                if (&h - &h_c).norm() > HEADING_TOLERANCE {
                    return Err(Error::validation(
                        format!("agents[{}].heading", a.id),
                        "leader headings must equal the reference heading h_c",
                    ));
                }
                if a.xi.is_some() {
                    return Err(Error::validation(
                        format!("agents[{}].xi", a.id),
                        "leaders carry the reference velocity; omit xi",
                    ));
                }
                v_c.clone()
            } else {
                match &a.xi {
                    Some(xi) => vector(&format!("agents[{}].xi", a.id), xi, d)?,
                    None => Vector::zeros(d),
                }
            };
            let h = if a.leader { h_c.clone() } else { h };
            agents.push(AgentState { p, h, xi });
        }

        let pairs: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|e| {
                if e.from == 0 || e.to == 0 || e.from > n || e.to > n {
                    Err(Error::validation(
                        "edges",
                        format!("edge ({}, {}) references an unknown agent", e.from, e.to),
                    ))
                } else {
                    Ok((e.from - 1, e.to - 1))
                }
            })
            .collect::<Result<_>>()?;
        let graph = FormationGraph::new(n, n_leaders, &pairs)?;

        let mut entries: Vec<((usize, usize), Vec<f64>)> = pairs
            .iter()
            .zip(&self.edges)
            .map(|(&pair, e)| (pair, e.bearing.clone()))
            .collect();
        for e in graph.edges() {
            if e.head < n_leaders
                && !pairs
                    .iter()
                    .any(|&(a, b)| a.min(b) == e.tail && a.max(b) == e.head)
            {
                let g = geometry::bearing(&agents[e.tail].p, &agents[e.head].p).map_err(|_| {
                    Error::DegenerateTarget {
                        i: e.tail + 1,
                        j: e.head + 1,
                    }
                })?;
                entries.push(((e.tail, e.head), g.as_slice().to_vec()));
            }
        }
        let bearings = DesiredBearingSet::from_oriented(&graph, d, &entries)?;

        let leader_positions: Vec<Vector> =
            agents[..n_leaders].iter().map(|a| a.p.clone()).collect();
        let formation = Formation::new(graph, bearings, &leader_positions)?;

        let gains = LawGains {
            bearing: ControlGains::new(self.gains.bearing.k1, self.gains.bearing.k2)?,
            displacement: ControlGains::new(
                self.gains.displacement.k1,
                self.gains.displacement.k2,
            )?,
        };
        let integrator = IntegratorConfig {
            dt: self.integrator.dt,
            duration: self.integrator.duration,
            min_separation_abort: self.integrator.min_separation_abort,
        };
        integrator.validate()?;
        if self.output.cadence == 0 {
            return Err(Error::validation(
                "output.cadence",
                "cadence must be at least 1",
            ));
        }

        Ok(Scenario {
            name: self.name.clone(),
            dim,
            formation,
            initial: SystemState { t: 0.0, agents },
            reference,
            gains,
            integrator,
            cadence: self.output.cadence,
        })
    }
}
