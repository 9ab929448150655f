//! Validated, ready-to-simulate scenario.

use crate::control::{ControlGains, Law};
use crate::dynamics::{ClosedLoop, IntegratorConfig, SystemState};
use crate::formation::Formation;
use crate::geometry::{Dimension, UnitVector, Vector};

/// Common constant velocity of the leaders, `v_c = u_c h_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    /// `u_c ≥ 0` (m/s).
    pub speed: f64,
    pub heading: UnitVector,
}

impl Reference {
    pub fn velocity(&self) -> Vector {
        self.heading.as_ref() * self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawGains {
    pub bearing: ControlGains,
    pub displacement: ControlGains,
}

impl LawGains {
    pub fn for_law(&self, law: Law) -> ControlGains {
        match law {
            Law::BearingOnly => self.bearing,
            Law::Displacement => self.displacement,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dim: Dimension,
    pub formation: Formation,
    pub initial: SystemState,
    pub reference: Reference,
    pub gains: LawGains,
    pub integrator: IntegratorConfig,
    /// Record a snapshot every `cadence` steps.
    pub cadence: usize,
}

impl Scenario {
    pub fn closed_loop(&self, law: Law) -> ClosedLoop<'_> {
        ClosedLoop {
            formation: &self.formation,
            reference: &self.reference,
            law,
            gains: self.gains.for_law(law),
        }
    }

    pub fn agent_count(&self) -> usize {
        self.formation.graph.agent_count()
    }
}
