//! Verification side of the closed loop: Lyapunov functions with their
//! analytic derivatives, trace metrics, collision certificates, and the
//! stacked (compact) form of the dynamics.
//!
//! The compact operators are dense `dn × dn` matrices and are only built here;
//! the simulator itself works agent by agent.

use crate::control::Law;
use crate::dynamics::{ClosedLoop, StateDerivative, SystemState};
use crate::formation::Formation;
use crate::geometry::{self, Matrix, Vector};
use crate::{Error, Result};

/// Stacked selector and heading projectors for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactOperators {
    pub p: Vector,
    pub h: Vector,
    /// Stacked ξ with every leader block set to `v_c`.
    pub xi: Vector,
    /// `blkdiag(0_{d n_l}, I_{d n_f})`.
    pub z: Matrix,
    /// `blkdiag(h_i h_iᵀ)`.
    pub d_h: Matrix,
    /// `blkdiag(I - h_i h_iᵀ)`.
    pub d_h_perp: Matrix,
}

impl CompactOperators {
    pub fn new(state: &SystemState, system: &ClosedLoop<'_>) -> Self {
        let graph = &system.formation.graph;
        let d = system.dim().size();
        let n = graph.agent_count();
        let size = d * n;
        let v_c = system.reference.velocity();

        let mut z = Matrix::zeros(size, size);
        let mut d_h = Matrix::zeros(size, size);
        let mut d_h_perp = Matrix::zeros(size, size);
        for (i, a) in state.agents.iter().enumerate() {
            let o = i * d;
            if !graph.is_leader(i) {
                z.view_mut((o, o), (d, d)).fill_with_identity();
            }
            let hh = &a.h * a.h.transpose();
            d_h_perp
                .view_mut((o, o), (d, d))
                .copy_from(&(Matrix::identity(d, d) - &hh));
            d_h.view_mut((o, o), (d, d)).copy_from(&hh);
        }
        let xi = geometry::stack(state.agents.iter().enumerate().map(|(i, a)| {
            if graph.is_leader(i) {
                &v_c
            } else {
                &a.xi
            }
        }));
        Self {
            p: state.stacked_positions(),
            h: state.stacked_headings(),
            xi,
            z,
            d_h,
            d_h_perp,
        }
    }
}

/// Stacked actual bearings `g` in canonical edge order.
pub fn stacked_bearings(state: &SystemState, formation: &Formation) -> Result<Vector> {
    let bearings = formation
        .graph
        .edges()
        .iter()
        .map(|e| {
            geometry::bearing(&state.agents[e.tail].p, &state.agents[e.head].p)
                .map(|g| g.into_inner())
                .map_err(|c| Error::CoincidentAgents {
                    i: e.tail + 1,
                    j: e.head + 1,
                    distance: c.distance,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(geometry::stack(bearings.iter()))
}

/// `δ_p = p - p*(t)`.
pub fn position_error(state: &SystemState, system: &ClosedLoop<'_>) -> Vector {
    state.stacked_positions()
        - system
            .formation
            .target
            .stacked_at(state.t, &system.reference.velocity())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovReport {
    pub value: f64,
    /// `zᵀ(g - g*)` for the bearing-only law, `½ δ_pᵀ B δ_p` for the other.
    pub formation_term: f64,
    /// `½ ‖ξ - 1 ⊗ v_c‖²`.
    pub xi_term: f64,
    /// `u_c / (2 k2) ‖h - 1 ⊗ h_c‖²`.
    pub heading_term: f64,
    /// Closed-form time derivative along the flow (never positive).
    pub vdot: f64,
}

fn common_terms(state: &SystemState, system: &ClosedLoop<'_>) -> (f64, f64) {
    let graph = &system.formation.graph;
    let v_c = system.reference.velocity();
    let h_c = system.reference.heading.as_ref();
    let mut xi_term = 0.0;
    let mut heading_sq = 0.0;
    for (i, a) in state.agents.iter().enumerate() {
        if !graph.is_leader(i) {
            xi_term += 0.5 * (&a.xi - &v_c).norm_squared();
        }
        heading_sq += (&a.h - h_c).norm_squared();
    }
    let heading_term = system.reference.speed / (2.0 * system.gains.k2) * heading_sq;
    (xi_term, heading_term)
}

/// `-Σ_f (k1 (h_iᵀ r_i)² + ξ_iᵀ (I - h_i h_iᵀ) ξ_i)` for per-follower `r_i`.
fn dissipation(
    state: &SystemState,
    system: &ClosedLoop<'_>,
    r: impl Fn(usize) -> Result<Vector>,
) -> Result<f64> {
    let mut total = 0.0;
    for i in system.formation.graph.followers() {
        let a = &state.agents[i];
        let hr = a.h.dot(&r(i)?);
        let xi_perp = geometry::project_out(&a.h, &a.xi);
        total += system.gains.k1 * hr * hr + xi_perp.norm_squared();
    }
    Ok(-total)
}

pub fn lyapunov_bearing_only(
    state: &SystemState,
    system: &ClosedLoop<'_>,
) -> Result<LyapunovReport> {
    let formation = system.formation;
    let g = stacked_bearings(state, formation)?;
    let z = formation.incidence.expanded(system.dim().size()) * state.stacked_positions();
    let formation_term = z.dot(&(g - formation.bearings.stacked()));
    let (xi_term, heading_term) = common_terms(state, system);
    let bearing_system = ClosedLoop {
        law: Law::BearingOnly,
        ..*system
    };
    let vdot = dissipation(state, system, |i| bearing_system.error_vector(state, i))?;
    Ok(LyapunovReport {
        value: formation_term + xi_term + heading_term,
        formation_term,
        xi_term,
        heading_term,
        vdot,
    })
}

pub fn lyapunov_displacement(
    state: &SystemState,
    system: &ClosedLoop<'_>,
) -> Result<LyapunovReport> {
    let d = system.dim().size();
    let delta = position_error(state, system);
    let b_delta = system.formation.laplacian.matrix() * &delta;
    let formation_term = 0.5 * delta.dot(&b_delta);
    let (xi_term, heading_term) = common_terms(state, system);
    // r_i = -(B δ_p)_i since B p* = 0.
    let vdot = dissipation(state, system, |i| Ok(-b_delta.rows(i * d, d).into_owned()))?;
    Ok(LyapunovReport {
        value: formation_term + xi_term + heading_term,
        formation_term,
        xi_term,
        heading_term,
        vdot,
    })
}

pub fn lyapunov(state: &SystemState, system: &ClosedLoop<'_>) -> Result<LyapunovReport> {
    match system.law {
        Law::BearingOnly => lyapunov_bearing_only(state, system),
        Law::Displacement => lyapunov_displacement(state, system),
    }
}

/// Quantities recorded at every trace snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub lyapunov: f64,
    /// `‖g - g*‖` over all augmented edges.
    pub bearing_error: f64,
    /// `‖p - p*(t)‖`.
    pub position_error: f64,
    pub min_distance: f64,
    /// `‖v_i - v_c‖` per follower, in agent order.
    pub velocity_errors: Vec<f64>,
}

impl Metrics {
    pub fn max_velocity_error(&self) -> f64 {
        self.velocity_errors.iter().copied().fold(0.0, f64::max)
    }

    /// Flat column order used by trace files.
    pub fn columns(&self) -> Vec<f64> {
        let mut c = vec![
            self.lyapunov,
            self.bearing_error,
            self.position_error,
            self.min_distance,
        ];
        c.extend_from_slice(&self.velocity_errors);
        c
    }
}

pub fn metrics(
    state: &SystemState,
    commands: &[crate::control::AgentCommand],
    system: &ClosedLoop<'_>,
) -> Result<Metrics> {
    let formation = system.formation;
    let v_c = system.reference.velocity();
    let g = stacked_bearings(state, formation)?;
    let velocity_errors = formation
        .graph
        .followers()
        .map(|i| (commands[i].velocity(&state.agents[i].h) - &v_c).norm())
        .collect();
    Ok(Metrics {
        lyapunov: lyapunov(state, system)?.value,
        bearing_error: (g - formation.bearings.stacked()).norm(),
        position_error: position_error(state, system).norm(),
        min_distance: state.closest_pair().0,
        velocity_errors,
    })
}

/// Both sides of the bearing inequalities: `zᵀ(g - g*)` and
/// `(p - p*)ᵀ H̄ᵀ (g - g*)`. Each is non-negative whenever no agents coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingInequalities {
    pub configuration: f64,
    pub error: f64,
    /// `‖g - g*‖`, to judge when equality is expected.
    pub bearing_error: f64,
}

pub fn bearing_inequalities(
    state: &SystemState,
    system: &ClosedLoop<'_>,
) -> Result<BearingInequalities> {
    let formation = system.formation;
    let d = system.dim().size();
    let diff = stacked_bearings(state, formation)? - formation.bearings.stacked();
    let h_bar = formation.incidence.expanded(d);
    let z = &h_bar * state.stacked_positions();
    let dz = &h_bar * position_error(state, system);
    Ok(BearingInequalities {
        configuration: z.dot(&diff),
        error: dz.dot(&diff),
        bearing_error: diff.norm(),
    })
}

/// Slack of `2‖H̄‖(‖δ_p‖ + ‖p̃*‖) zᵀ(g - g*) ≥ λ_min(B_ff) ‖δ_p‖²`
/// (left side minus right side).
pub fn quadratic_bound_slack(state: &SystemState, system: &ClosedLoop<'_>) -> Result<f64> {
    let formation = system.formation;
    let spectral = formation.spectral;
    let delta = position_error(state, system).norm();
    let pattern = formation.target.centered().norm();
    let ineq = bearing_inequalities(state, system)?;
    Ok(
        2.0 * spectral.incidence_norm * (delta + pattern) * ineq.configuration
            - spectral.lambda_min_ff * delta * delta,
    )
}

/// Which position-error bound produced `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    BearingOnly,
    Displacement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionCertificate {
    pub kappa: f64,
    /// `(min_ij ‖p*_i - p*_j‖ - κ) / √n`.
    pub epsilon: f64,
    /// `2‖H̄‖ / λ_min(B_ff)`.
    pub gamma: f64,
    pub beta: f64,
    /// Guaranteed bound on `‖δ_p‖` while `V ≤ β`.
    pub phi: f64,
    pub holds: bool,
    pub kind: CertificateKind,
}

fn certificate_base(formation: &Formation, kappa: f64) -> Result<(f64, f64)> {
    let min_distance = formation.target.min_distance();
    if !(kappa > 0.0 && kappa < min_distance) {
        return Err(Error::InvalidKappa {
            kappa,
            min_distance,
        });
    }
    let n = formation.graph.agent_count() as f64;
    let gamma = 2.0 * formation.spectral.incidence_norm / formation.spectral.lambda_min_ff;
    Ok(((min_distance - kappa) / n.sqrt(), gamma))
}

pub fn collision_certificate_bearing(
    formation: &Formation,
    kappa: f64,
    beta: f64,
) -> Result<CollisionCertificate> {
    let (epsilon, gamma) = certificate_base(formation, kappa)?;
    let gb = gamma * beta;
    let pattern = formation.target.centered().norm();
    let phi = (gb + (gb * gb + 4.0 * gb * pattern).sqrt()) / 2.0;
    Ok(CollisionCertificate {
        kappa,
        epsilon,
        gamma,
        beta,
        phi,
        holds: phi <= epsilon,
        kind: CertificateKind::BearingOnly,
    })
}

pub fn collision_certificate_displacement(
    formation: &Formation,
    kappa: f64,
    beta: f64,
) -> Result<CollisionCertificate> {
    let (epsilon, gamma) = certificate_base(formation, kappa)?;
    let phi = (2.0 * beta / formation.spectral.lambda_min_ff).sqrt();
    Ok(CollisionCertificate {
        kappa,
        epsilon,
        gamma,
        beta,
        phi,
        holds: phi <= epsilon,
        kind: CertificateKind::Displacement,
    })
}

/// Certificate for `law` with `β = V(0)` taken from `state`.
pub fn collision_certificate(
    state: &SystemState,
    system: &ClosedLoop<'_>,
    kappa: f64,
) -> Result<CollisionCertificate> {
    let beta = lyapunov(state, system)?.value;
    match system.law {
        Law::BearingOnly => collision_certificate_bearing(system.formation, kappa, beta),
        Law::Displacement => collision_certificate_displacement(system.formation, kappa, beta),
    }
}

/// Stacked `(ṗ, ξ̇, ḣ)` assembled from the compact matrix form.
pub fn compact_derivative(
    state: &SystemState,
    system: &ClosedLoop<'_>,
) -> Result<(Vector, Vector, Vector)> {
    let formation = system.formation;
    let d = system.dim().size();
    let n = formation.graph.agent_count();
    let ops = CompactOperators::new(state, system);
    // w = -(r_1, ..., r_n) stacked over every agent.
    let w = match system.law {
        Law::BearingOnly => {
            let diff = stacked_bearings(state, formation)? - formation.bearings.stacked();
            formation.incidence.expanded(d).transpose() * diff
        }
        Law::Displacement => formation.laplacian.matrix() * position_error(state, system),
    };
    let size = d * n;
    let identity = Matrix::identity(size, size);
    let ones_vc = geometry::repeat(&system.reference.velocity(), n);
    let (k1, k2) = (system.gains.k1, system.gains.k2);
    let zdh = &ops.z * &ops.d_h;
    let zdhp = &ops.z * &ops.d_h_perp;

    let p_dot = (&identity - &ops.z) * ones_vc - &zdh * (&w * k1 - &ops.xi);
    let xi_dot = -(&zdh * &w) - &zdhp * &ops.xi;
    let h_dot = -(&zdhp * (&w - &ops.xi)) * k2;
    Ok((p_dot, xi_dot, h_dot))
}

/// Max-norm gap between the compact form and `per_agent`.
pub fn compact_residual_with<F>(
    state: &SystemState,
    system: &ClosedLoop<'_>,
    per_agent: F,
) -> Result<f64>
where
    F: Fn(&SystemState) -> Result<StateDerivative>,
{
    let (p_dot, xi_dot, h_dot) = compact_derivative(state, system)?;
    let rate = per_agent(state)?;
    Ok((p_dot - rate.stacked_p())
        .amax()
        .max((h_dot - rate.stacked_h()).amax())
        .max((xi_dot - rate.stacked_xi()).amax()))
}

/// Gap between the compact form and the distributed per-agent dynamics.
pub fn compact_residual(state: &SystemState, system: &ClosedLoop<'_>) -> Result<f64> {
    compact_residual_with(state, system, |s| system.derivative(s))
}
