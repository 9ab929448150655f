//! Closed-loop multi-agent dynamics and their fixed-step integration.

use crate::analysis::{self, Metrics};
use crate::control::{self, AgentCommand, ControlGains, Law, NeighborMeasurement};
use crate::formation::Formation;
use crate::geometry::{self, Dimension, Vector};
use crate::scenario::{Reference, Scenario};
use crate::{Error, Result};

pub const DEFAULT_DT: f64 = 0.005;
pub const DEFAULT_DURATION: f64 = 120.0;
pub const DEFAULT_MIN_SEPARATION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub p: Vector,
    /// Unit heading.
    pub h: Vector,
    /// Auxiliary velocity estimate. Leaders hold `v_c` here.
    pub xi: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub agents: Vec<AgentState>,
}

impl SystemState {
    pub fn positions(&self) -> Vec<Vector> {
        self.agents.iter().map(|a| a.p.clone()).collect()
    }

    pub fn stacked_positions(&self) -> Vector {
        geometry::stack(self.agents.iter().map(|a| &a.p))
    }

    pub fn stacked_headings(&self) -> Vector {
        geometry::stack(self.agents.iter().map(|a| &a.h))
    }

    pub fn stacked_xi(&self) -> Vector {
        geometry::stack(self.agents.iter().map(|a| &a.xi))
    }

    /// Euclidean norm of all of `(p, h, ξ)` stacked.
    pub fn norm(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| a.p.norm_squared() + a.h.norm_squared() + a.xi.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest distance between any two agents and the pair attaining it.
    pub fn closest_pair(&self) -> (f64, usize, usize) {
        let mut best = (f64::INFINITY, 0, 0);
        for (i, a) in self.agents.iter().enumerate() {
            for (j, b) in self.agents.iter().enumerate().skip(i + 1) {
                let d = (&a.p - &b.p).norm();
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        best
    }

    /// `self + dt · rate`, with time advanced by `dt`.
    pub fn advance(&self, rate: &StateDerivative, dt: f64) -> SystemState {
        SystemState {
            t: self.t + dt,
            agents: self
                .agents
                .iter()
                .zip(&rate.agents)
                .map(|(a, r)| AgentState {
                    p: &a.p + &r.p * dt,
                    h: &a.h + &r.h * dt,
                    xi: &a.xi + &r.xi * dt,
                })
                .collect(),
        }
    }

    fn renormalize_headings(&mut self) {
        for a in &mut self.agents {
            a.h.normalize_mut();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRate {
    pub p: Vector,
    pub h: Vector,
    pub xi: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub agents: Vec<AgentRate>,
}

impl StateDerivative {
    fn stacked(&self, pick: impl Fn(&AgentRate) -> &Vector) -> Vector {
        geometry::stack(self.agents.iter().map(pick))
    }

    pub fn stacked_p(&self) -> Vector {
        self.stacked(|r| &r.p)
    }

    pub fn stacked_h(&self) -> Vector {
        self.stacked(|r| &r.h)
    }

    pub fn stacked_xi(&self) -> Vector {
        self.stacked(|r| &r.xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub duration: f64,
    /// Any pair closer than this during a step aborts the run (meters).
    pub min_separation_abort: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            duration: DEFAULT_DURATION,
            min_separation_abort: DEFAULT_MIN_SEPARATION,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("integrator.dt", "dt must be positive"));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return Err(Error::validation(
                "integrator.duration",
                "duration must be at least dt",
            ));
        }
        if self.min_separation_abort.is_nan() || self.min_separation_abort < 0.0 {
            return Err(Error::validation(
                "integrator.min_separation_abort",
                "abort distance must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// One control law wired to a formation and a leader reference.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoop<'a> {
    pub formation: &'a Formation,
    pub reference: &'a Reference,
    pub law: Law,
    pub gains: ControlGains,
}

impl ClosedLoop<'_> {
    pub fn dim(&self) -> Dimension {
        match self.formation.dim() {
            2 => Dimension::Planar,
            _ => Dimension::Spatial,
        }
    }

    /// What follower `i` senses, paired with its desired bearings.
    pub fn measurements(&self, state: &SystemState, i: usize) -> Result<Vec<NeighborMeasurement>> {
        let p_i = &state.agents[i].p;
        self.formation
            .graph
            .neighbors(i)
            .iter()
            .map(|nb| {
                let p_j = &state.agents[nb.agent].p;
                let desired = self.formation.bearings.toward(nb);
                let coincident = |distance| Error::CoincidentAgents {
                    i: i + 1,
                    j: nb.agent + 1,
                    distance,
                };
                Ok(match self.law {
                    Law::BearingOnly => {
                        let g = geometry::bearing(p_i, p_j).map_err(|c| coincident(c.distance))?;
                        NeighborMeasurement::bearing(g.into_inner(), desired)
                    }
                    Law::Displacement => {
                        let z = p_j - p_i;
                        let distance = z.norm();
                        if distance <= geometry::COINCIDENCE_TOLERANCE {
                            return Err(coincident(distance));
                        }
                        NeighborMeasurement::displacement(z, desired)
                    }
                })
            })
            .collect()
    }

    /// Error vector `r_i` of follower `i` under this law.
    pub fn error_vector(&self, state: &SystemState, i: usize) -> Result<Vector> {
        Ok(control::error_vector(
            self.law,
            &self.measurements(state, i)?,
        ))
    }

    pub fn commands(&self, state: &SystemState) -> Result<Vec<AgentCommand>> {
        let graph = &self.formation.graph;
        (0..graph.agent_count())
            .map(|i| {
                if graph.is_leader(i) {
                    Ok(control::leader_command(self.reference.speed, self.dim()))
                } else {
                    let a = &state.agents[i];
                    let r = self.error_vector(state, i)?;
                    Ok(control::follower_command(&a.h, &a.xi, &r, self.gains))
                }
            })
            .collect()
    }

    pub fn derivative(&self, state: &SystemState) -> Result<StateDerivative> {
        let commands = self.commands(state)?;
        Ok(self.rates(state, &commands))
    }

    fn rates(&self, state: &SystemState, commands: &[AgentCommand]) -> StateDerivative {
        let d = self.dim().size();
        let v_c = self.reference.velocity();
        let agents = state
            .agents
            .iter()
            .zip(commands)
            .enumerate()
            .map(|(i, (a, cmd))| {
                if self.formation.graph.is_leader(i) {
                    AgentRate {
                        p: v_c.clone(),
                        h: Vector::zeros(d),
                        xi: Vector::zeros(d),
                    }
                } else {
                    AgentRate {
                        p: &a.h * cmd.u,
                        h: geometry::heading_rate(&a.h, &cmd.omega),
                        xi: cmd.xi_dot.clone(),
                    }
                }
            })
            .collect();
        StateDerivative { agents }
    }

    /// One classical RK4 step followed by heading renormalization.
    pub fn step(&self, state: &SystemState, config: &IntegratorConfig) -> Result<SystemState> {
        let dt = config.dt;
        let stage = |s: &SystemState| -> Result<StateDerivative> {
            check_separation(s, config.min_separation_abort)?;
            self.derivative(s)
        };
        let k1 = stage(state)?;
        let k2 = stage(&state.advance(&k1, dt / 2.0))?;
        let k3 = stage(&state.advance(&k2, dt / 2.0))?;
        let k4 = stage(&state.advance(&k3, dt))?;
        let mut next = state
            .advance(&k1, dt / 6.0)
            .advance(&k2, dt / 3.0)
            .advance(&k3, dt / 3.0)
            .advance(&k4, dt / 6.0);
        next.t = state.t + dt;
        next.renormalize_headings();
        check_separation(&next, config.min_separation_abort)?;
        Ok(next)
    }
}

fn check_separation(state: &SystemState, min_separation: f64) -> Result<()> {
    let (distance, i, j) = state.closest_pair();
    if distance < min_separation || distance <= geometry::COINCIDENCE_TOLERANCE {
        return Err(Error::CoincidentAgents {
            i: i + 1,
            j: j + 1,
            distance,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: SystemState,
    pub commands: Vec<AgentCommand>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub t: f64,
    pub reason: String,
    /// Two agents came closer than the abort distance.
    pub coincidence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub law: Law,
    pub dim: Dimension,
    pub n_agents: usize,
    pub n_leaders: usize,
    pub snapshots: Vec<Snapshot>,
    /// Set when the run stopped early; the snapshots cover the part that ran.
    pub aborted: Option<Abort>,
}

impl SimulationTrace {
    pub fn empty(law: Law, dim: Dimension, n_agents: usize, n_leaders: usize) -> Self {
        Self {
            law,
            dim,
            n_agents,
            n_leaders,
            snapshots: Vec::new(),
            aborted: None,
        }
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    /// First recorded time at which the bearing error is below `threshold`
    /// and stays below it for the rest of the trace.
    pub fn settling_time(&self, threshold: f64) -> Option<f64> {
        let mut settled = None;
        for s in &self.snapshots {
            if s.metrics.bearing_error < threshold {
                settled.get_or_insert(s.state.t);
            } else {
                settled = None;
            }
        }
        settled
    }

    /// First recorded time at which the bearing error drops below `threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<f64> {
        self.snapshots
            .iter()
            .find(|s| s.metrics.bearing_error < threshold)
            .map(|s| s.state.t)
    }

    pub fn min_distance(&self) -> f64 {
        self.snapshots
            .iter()
            .map(|s| s.metrics.min_distance)
            .fold(f64::INFINITY, f64::min)
    }
}

fn snapshot(system: &ClosedLoop<'_>, state: SystemState) -> Result<Snapshot> {
    let commands = system.commands(&state)?;
    let metrics = analysis::metrics(&state, &commands, system)?;
    Ok(Snapshot {
        state,
        commands,
        metrics,
    })
}

/// Integrates `scenario` under `law` over its configured horizon.
///
/// A coincidence (or a pair closer than the abort distance) ends the run; the
/// returned trace then carries the snapshots recorded so far and an
/// [`Abort`] record.
pub fn simulate(scenario: &Scenario, law: Law) -> SimulationTrace {
    let system = scenario.closed_loop(law);
    let config = &scenario.integrator;
    let graph = &scenario.formation.graph;
    let mut trace =
        SimulationTrace::empty(law, scenario.dim, graph.agent_count(), graph.leader_count());
    let cadence = scenario.cadence.max(1);

    let abort = |trace: &mut SimulationTrace, t: f64, e: Error| {
        trace.aborted = Some(Abort {
            t,
            reason: e.to_string(),
            coincidence: matches!(e, Error::CoincidentAgents { .. }),
        });
    };

    let mut state = scenario.initial.clone();
    let t0 = state.t;
    if let Err(e) = check_separation(&state, config.min_separation_abort) {
        abort(&mut trace, t0, e);
        return trace;
    }
    match snapshot(&system, state.clone()) {
        Ok(s) => trace.snapshots.push(s),
        Err(e) => {
            abort(&mut trace, t0, e);
            return trace;
        }
    }

    for k in 1..=config.steps() {
        state = match system.step(&state, config) {
            Ok(mut next) => {
                next.t = t0 + k as f64 * config.dt;
                next
            }
            Err(e) => {
                abort(&mut trace, state.t, e);
                return trace;
            }
        };
        if k % cadence == 0 {
            match snapshot(&system, state.clone()) {
                Ok(s) => trace.snapshots.push(s),
                Err(e) => {
                    abort(&mut trace, state.t, e);
                    return trace;
                }
            }
        }
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::{DesiredBearingSet, FormationGraph};
    use crate::geometry::unit;
    use crate::scenario::LawGains;

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    /// Two leaders and one follower in the plane; follower target (0, 5).
    fn triangle(follower: AgentState, speed: f64) -> Scenario {
        let graph = FormationGraph::new(3, 2, &[(0, 2), (1, 2)]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bearings = DesiredBearingSet::from_oriented(
            &graph,
            2,
            &[
                ((0, 1), vec![1.0, 0.0]),
                ((0, 2), vec![s, s]),
                ((1, 2), vec![-s, s]),
            ],
        )
        .unwrap();
        let leaders = [v(&[-5.0, 0.0]), v(&[5.0, 0.0])];
        let formation = Formation::new(graph, bearings, &leaders).unwrap();
        let heading = unit(&[1.0, 1.0]);
        let reference = Reference { speed, heading };
        let v_c = reference.velocity();
        let leader = |p: &Vector| AgentState {
            p: p.clone(),
            h: reference.heading.clone().into_inner(),
            xi: v_c.clone(),
        };
        let initial = SystemState {
            t: 0.0,
            agents: vec![leader(&leaders[0]), leader(&leaders[1]), follower],
        };
        Scenario {
            name: "triangle".into(),
            dim: Dimension::Planar,
            formation,
            initial,
            reference,
            gains: LawGains {
                bearing: ControlGains::new(15.0, 7.0).unwrap(),
                displacement: ControlGains::new(5.0, 3.0).unwrap(),
            },
            integrator: IntegratorConfig {
                dt: 0.01,
                duration: 1.0,
                min_separation_abort: 1e-3,
            },
            cadence: 1,
        }
    }

    #[test]
    fn equilibrium_derivative_is_pure_translation() {
        let base = triangle(
            AgentState {
                p: v(&[0.0, 5.0]),
                h: v(&[0.0, 1.0]),
                xi: v(&[0.0, 0.0]),
            },
            0.2,
        );
        let v_c = base.reference.velocity();
        let h_c = base.reference.heading.clone().into_inner();
        let mut scenario = base.clone();
        scenario.initial.agents[2] = AgentState {
            p: v(&[0.0, 5.0]),
            h: h_c.clone(),
            xi: v_c.clone(),
        };
        for law in [Law::BearingOnly, Law::Displacement] {
            let d = scenario
                .closed_loop(law)
                .derivative(&scenario.initial)
                .unwrap();
            for rate in &d.agents {
                assert!((&rate.p - &v_c).amax() < 1e-12);
                assert!(rate.h.amax() < 1e-12);
                assert!(rate.xi.amax() < 1e-12);
            }
        }
    }

    #[test]
    fn follower_on_target_at_rest_stays_put() {
        let scenario = triangle(
            AgentState {
                p: v(&[0.0, 5.0]),
                h: v(&[0.0, 1.0]),
                xi: v(&[0.0, 0.0]),
            },
            0.2,
        );
        let d = scenario
            .closed_loop(Law::BearingOnly)
            .derivative(&scenario.initial)
            .unwrap();
        assert!(d.agents[2].p.amax() < 1e-12);
    }

    #[test]
    fn leaders_advance_exactly() {
        let scenario = triangle(
            AgentState {
                p: v(&[1.0, 3.0]),
                h: v(&[1.0, 0.0]),
                xi: v(&[0.0, 0.0]),
            },
            0.2,
        );
        let system = scenario.closed_loop(Law::BearingOnly);
        let next = system
            .step(&scenario.initial, &scenario.integrator)
            .unwrap();
        let step = scenario.reference.velocity() * scenario.integrator.dt;
        for i in 0..2 {
            let moved = &next.agents[i].p - &scenario.initial.agents[i].p;
            assert!((moved - &step).amax() < 1e-15);
            assert!((&next.agents[i].h - &scenario.initial.agents[i].h).amax() < 1e-15);
        }
        assert_eq!(next.t, scenario.integrator.dt);
    }

    #[test]
    fn headings_stay_unit_over_many_steps() {
        let mut scenario = triangle(
            AgentState {
                p: v(&[3.0, 9.0]),
                h: v(&[-1.0, 0.0]),
                xi: v(&[0.0, 0.0]),
            },
            0.2,
        );
        scenario.integrator.dt = 0.001;
        let system = scenario.closed_loop(Law::BearingOnly);
        let mut state = scenario.initial.clone();
        for _ in 0..100_000 {
            state = system.step(&state, &scenario.integrator).unwrap();
        }
        for a in &state.agents {
            assert!((a.h.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn coincident_start_aborts() {
        let scenario = triangle(
            AgentState {
                p: v(&[-5.0, 0.0]),
                h: v(&[1.0, 0.0]),
                xi: v(&[0.0, 0.0]),
            },
            0.2,
        );
        let trace = simulate(&scenario, Law::BearingOnly);
        assert!(trace.snapshots.is_empty());
        let abort = trace.aborted.unwrap();
        assert!(abort.reason.contains("coincide"), "{}", abort.reason);
    }

    #[test]
    fn stationary_equilibrium_persists() {
        let scenario = triangle(
            AgentState {
                p: v(&[0.0, 5.0]),
                h: unit(&[1.0, 1.0]).into_inner(),
                xi: v(&[0.0, 0.0]),
            },
            0.0,
        );
        let trace = simulate(&scenario, Law::Displacement);
        assert!(trace.aborted.is_none());
        assert_eq!(trace.snapshots.len(), 101);
        for s in &trace.snapshots {
            assert!(s.metrics.bearing_error < 1e-12);
            assert!(s.metrics.position_error < 1e-12);
            assert!(s.metrics.lyapunov.abs() < 1e-12);
        }
    }

    #[test]
    fn cadence_and_time_grid() {
        let mut scenario = triangle(
            AgentState {
                p: v(&[2.0, 4.0]),
                h: v(&[0.0, 1.0]),
                xi: v(&[0.0, 0.0]),
            },
            0.2,
        );
        scenario.cadence = 10;
        let trace = simulate(&scenario, Law::BearingOnly);
        let times: Vec<f64> = trace.snapshots.iter().map(|s| s.state.t).collect();
        assert_eq!(times.len(), 11);
        for w in times.windows(2) {
            assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
        }
    }
}
