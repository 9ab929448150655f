//! Per-agent control laws.
//!
//! Both follower laws share one command map and differ only in the error
//! vector fed to it: a sum of bearing errors, or a sum of projected
//! displacements. Controllers see nothing but their own local measurements.

use serde::{Deserialize, Serialize};

use crate::geometry::{self, AngularVelocity, Dimension, Vector};
use crate::{Error, Result};

/// Which measurement the followers use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Law {
    BearingOnly,
    Displacement,
}

impl Law {
    pub fn name(self) -> &'static str {
        match self {
            Law::BearingOnly => "bearing",
            Law::Displacement => "displacement",
        }
    }
}

impl std::fmt::Display for Law {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Law {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bearing" | "bearing-only" => Ok(Law::BearingOnly),
            "displacement" => Ok(Law::Displacement),
            other => Err(format!(
                "unknown law `{other}` (expected bearing or displacement)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub k1: f64,
    pub k2: f64,
}

impl ControlGains {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        for (name, k) in [("k1", k1), ("k2", k2)] {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::validation(
                    format!("gains.{name}"),
                    format!("gain must be positive and finite, got {k}"),
                ));
            }
        }
        Ok(Self { k1, k2 })
    }
}

/// What a follower senses about one neighbour.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    /// Unit bearing `g_ij` toward the neighbour.
    Bearing(Vector),
    /// Relative position `z_ij = p_j - p_i`.
    Displacement(Vector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMeasurement {
    pub measured: Measurement,
    /// Desired bearing `g*_ij`.
    pub desired: Vector,
}

impl NeighborMeasurement {
    pub fn bearing(g: Vector, desired: Vector) -> Self {
        Self {
            measured: Measurement::Bearing(g),
            desired,
        }
    }

    pub fn displacement(z: Vector, desired: Vector) -> Self {
        Self {
            measured: Measurement::Displacement(z),
            desired,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentCommand {
    /// Forward speed along the heading (m/s).
    pub u: f64,
    pub omega: AngularVelocity,
    /// Rate of the auxiliary state.
    pub xi_dot: Vector,
}

impl AgentCommand {
    /// Translational velocity `h u`.
    pub fn velocity(&self, h: &Vector) -> Vector {
        h * self.u
    }
}

/// `r_i = Σ (g_ij - g*_ij)`.
///
/// # Panics
/// If any entry carries a displacement instead of a bearing.
pub fn bearing_error_vector(measurements: &[NeighborMeasurement]) -> Vector {
    let dim = measurements.first().map_or(0, |m| m.desired.len());
    measurements
        .iter()
        .fold(Vector::zeros(dim), |acc, m| match &m.measured {
            Measurement::Bearing(g) => acc + g - &m.desired,
            Measurement::Displacement(_) => panic!("bearing-only law given a displacement"),
        })
}

/// `r_i = -Σ P_{g*_ij} (p_i - p_j) = Σ P_{g*_ij} z_ij`.
///
/// # Panics
/// If any entry carries a bearing instead of a displacement.
pub fn displacement_error_vector(measurements: &[NeighborMeasurement]) -> Vector {
    let dim = measurements.first().map_or(0, |m| m.desired.len());
    measurements
        .iter()
        .fold(Vector::zeros(dim), |acc, m| match &m.measured {
            Measurement::Displacement(z) => acc + geometry::project_out(&m.desired, z),
            Measurement::Bearing(_) => panic!("displacement law given a bearing"),
        })
}

pub fn error_vector(law: Law, measurements: &[NeighborMeasurement]) -> Vector {
    match law {
        Law::BearingOnly => bearing_error_vector(measurements),
        Law::Displacement => displacement_error_vector(measurements),
    }
}

/// Follower command from heading `h`, auxiliary state `xi` and error `r`:
///
/// ```text
/// u  = hᵀ(k1 r + ξ)
/// ξ̇  = h hᵀ r - (I - h hᵀ) ξ
/// ω  = h × k2 (r + ξ)
/// ```
pub fn follower_command(h: &Vector, xi: &Vector, r: &Vector, gains: ControlGains) -> AgentCommand {
    let u = h.dot(&(r * gains.k1 + xi));
    let xi_dot = h * h.dot(r) - geometry::project_out(h, xi);
    let omega = geometry::cross(h, &(r + xi)).scale(gains.k2);
    AgentCommand { u, omega, xi_dot }
}

/// Leaders cruise at `u_c` along their fixed heading.
pub fn leader_command(speed: f64, dim: Dimension) -> AgentCommand {
    AgentCommand {
        u: speed,
        omega: AngularVelocity::zero(dim),
        xi_dot: Vector::zeros(dim.size()),
    }
}
