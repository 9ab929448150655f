//! Sensing graph, incidence and bearing-Laplacian algebra, bearing rigidity.
//!
//! Agents are indexed from zero internally with leaders first; every agent id
//! that appears in an [`Error`] is one-based, matching scenario files.

use log::warn;
use nalgebra::{Cholesky, SymmetricEigen, SVD};

use crate::geometry::{self, Matrix, UnitVector, Vector};
use crate::{Error, Result};

/// Input norms further than this from one are reported when renormalized.
pub const RENORMALIZE_WARN: f64 = 1e-6;
/// Relative singular-value cutoff used for numerical rank.
pub const RANK_THRESHOLD: f64 = 1e-8;
/// Bearing mismatch tolerated between given leader positions (or a solved
/// target) and the desired bearings.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-6;
/// Smallest admissible eigenvalue of the follower block.
pub const SINGULAR_THRESHOLD: f64 = 1e-10;

/// Edge of the augmented graph, oriented from the lower to the higher index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

/// One entry of an agent's neighbour list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub agent: usize,
    pub edge: usize,
    /// True when the canonical edge points away from the owning agent, so the
    /// edge bearing equals `g_ij` rather than `-g_ij`.
    pub outgoing: bool,
}

impl Neighbor {
    pub fn sign(&self) -> f64 {
        if self.outgoing {
            1.0
        } else {
            -1.0
        }
    }
}

/// Undirected sensing graph with its leader set and augmented edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    n: usize,
    n_leaders: usize,
    sensing: Vec<Edge>,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<Neighbor>>,
}

impl FormationGraph {
    /// `edges` are unordered pairs of zero-based agent indices; agents
    /// `0..n_leaders` are the leaders.
    pub fn new(n: usize, n_leaders: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_leaders < 2 {
            return Err(Error::validation(
                "agents",
                format!("at least 2 leaders are required (n_l >= 2), found {n_leaders}"),
            ));
        }
        if n_leaders > n {
            return Err(Error::validation("agents", "more leaders than agents"));
        }
        let mut sensing = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::validation(
                    "edges",
                    format!("edge ({}, {}) references an unknown agent", a + 1, b + 1),
                ));
            }
            if a == b {
                return Err(Error::validation(
                    "edges",
                    format!("self-loop on agent {}", a + 1),
                ));
            }
            let e = Edge {
                tail: a.min(b),
                head: a.max(b),
            };
            if sensing.contains(&e) {
                return Err(Error::validation(
                    "edges",
                    format!("duplicate edge ({}, {})", e.tail + 1, e.head + 1),
                ));
            }
            sensing.push(e);
        }

        let mut all = sensing.clone();
        for i in 0..n_leaders {
            for j in i + 1..n_leaders {
                let e = Edge { tail: i, head: j };
                if !all.contains(&e) {
                    all.push(e);
                }
            }
        }
        all.sort();

        let mut neighbors = vec![Vec::new(); n];
        for (k, e) in all.iter().enumerate() {
            neighbors[e.tail].push(Neighbor {
                agent: e.head,
                edge: k,
                outgoing: true,
            });
            neighbors[e.head].push(Neighbor {
                agent: e.tail,
                edge: k,
                outgoing: false,
            });
        }

        Ok(Self {
            n,
            n_leaders,
            sensing,
            edges: all,
            neighbors,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn leader_count(&self) -> usize {
        self.n_leaders
    }

    pub fn follower_count(&self) -> usize {
        self.n - self.n_leaders
    }

    pub fn is_leader(&self, i: usize) -> bool {
        i < self.n_leaders
    }

    pub fn followers(&self) -> std::ops::Range<usize> {
        self.n_leaders..self.n
    }

    /// Edges of the sensing graph as given (normalized to low→high).
    pub fn sensing_edges(&self) -> &[Edge] {
        &self.sensing
    }

    /// Augmented edges in canonical order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let e = Edge {
            tail: i.min(j),
            head: i.max(j),
        };
        self.edges.binary_search(&e).ok()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.neighbors[i]
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for nb in &self.neighbors[i] {
                if !seen[nb.agent] {
                    seen[nb.agent] = true;
                    stack.push(nb.agent);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Incidence matrix of the augmented graph, `m × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix(pub Matrix);

impl IncidenceMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// `H ⊗ I_d`, mapping stacked positions to stacked edge displacements.
    pub fn expanded(&self, d: usize) -> Matrix {
        self.0.kronecker(&Matrix::identity(d, d))
    }
}

pub fn build_incidence(graph: &FormationGraph) -> IncidenceMatrix {
    let mut h = Matrix::zeros(graph.edge_count(), graph.agent_count());
    for (k, e) in graph.edges().iter().enumerate() {
        h[(k, e.tail)] = -1.0;
        h[(k, e.head)] = 1.0;
    }
    IncidenceMatrix(h)
}

/// Desired bearings, one per canonical edge (oriented tail→head).
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredBearingSet {
    bearings: Vec<UnitVector>,
}

impl DesiredBearingSet {
    /// Builds the set from oriented entries `((i, j), g*_ij)`. Each edge of the
    /// augmented graph must be covered exactly once, in either orientation.
    pub fn from_oriented(
        graph: &FormationGraph,
        dim: usize,
        entries: &[((usize, usize), Vec<f64>)],
    ) -> Result<Self> {
        let mut slots: Vec<Option<UnitVector>> = vec![None; graph.edge_count()];
        for ((i, j), raw) in entries {
            let (i, j) = (*i, *j);
            let k = graph.edge_index(i, j).ok_or_else(|| {
                Error::validation(
                    "edges",
                    format!(
                        "bearing given for ({}, {}) which is not an edge",
                        i + 1,
                        j + 1
                    ),
                )
            })?;
            if raw.len() != dim {
                return Err(Error::validation(
                    "edges.bearing",
                    format!("bearing ({}, {}) must have {dim} components", i + 1, j + 1),
                ));
            }
            let mut g = Vector::from_column_slice(raw);
            let norm = g.norm();
            if !norm.is_finite() || norm <= geometry::COINCIDENCE_TOLERANCE {
                return Err(Error::validation(
                    "edges.bearing",
                    format!("bearing ({}, {}) has zero length", i + 1, j + 1),
                ));
            }
            if (norm - 1.0).abs() > RENORMALIZE_WARN {
                warn!(
                    "desired bearing ({}, {}) has norm {norm:.6}; renormalizing",
                    i + 1,
                    j + 1
                );
            }
            g /= norm;
            if i > j {
                g = -g;
            }
            if slots[k].is_some() {
                return Err(Error::validation(
                    "edges",
                    format!("bearing for edge ({}, {}) given twice", i + 1, j + 1),
                ));
            }
            slots[k] = Some(UnitVector::new_unchecked(g));
        }
        let bearings = slots
            .into_iter()
            .enumerate()
            .map(|(k, s)| {
                s.ok_or_else(|| {
                    let e = graph.edges()[k];
                    Error::validation(
                        "edges",
                        format!(
                            "no desired bearing for edge ({}, {})",
                            e.tail + 1,
                            e.head + 1
                        ),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bearings })
    }

    /// Bearings of an existing configuration along every canonical edge.
    pub fn from_positions(graph: &FormationGraph, positions: &[Vector]) -> Result<Self> {
        let bearings = graph
            .edges()
            .iter()
            .map(|e| {
                geometry::bearing(&positions[e.tail], &positions[e.head]).map_err(|_| {
                    Error::DegenerateTarget {
                        i: e.tail + 1,
                        j: e.head + 1,
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bearings })
    }

    /// Bearing of canonical edge `k`.
    pub fn edge(&self, k: usize) -> &Vector {
        self.bearings[k].as_ref()
    }

    /// Oriented bearing `g*_ij` as seen from agent `i` through `nb`.
    pub fn toward(&self, nb: &Neighbor) -> Vector {
        self.edge(nb.edge) * nb.sign()
    }

    pub fn len(&self) -> usize {
        self.bearings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bearings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vector> {
        self.bearings.iter().map(|g| g.as_ref())
    }

    /// Stacked `g*` in canonical edge order.
    pub fn stacked(&self) -> Vector {
        geometry::stack(self.iter())
    }
}

/// Dense bearing Laplacian with the leader/follower partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingLaplacian {
    matrix: Matrix,
    dim: usize,
    n_leaders: usize,
}

impl BearingLaplacian {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn split(&self) -> usize {
        self.dim * self.n_leaders
    }

    pub fn leader_block(&self) -> Matrix {
        let s = self.split();
        self.matrix.view((0, 0), (s, s)).into_owned()
    }

    pub fn leader_follower_block(&self) -> Matrix {
        let s = self.split();
        let r = self.matrix.ncols() - s;
        self.matrix.view((0, s), (s, r)).into_owned()
    }

    pub fn follower_leader_block(&self) -> Matrix {
        let s = self.split();
        let r = self.matrix.nrows() - s;
        self.matrix.view((s, 0), (r, s)).into_owned()
    }

    pub fn follower_block(&self) -> Matrix {
        let s = self.split();
        let r = self.matrix.nrows() - s;
        self.matrix.view((s, s), (r, r)).into_owned()
    }
}

pub fn bearing_laplacian(graph: &FormationGraph, bearings: &DesiredBearingSet) -> BearingLaplacian {
    let dim = bearings.edge(0).len();
    let n = graph.agent_count();
    let mut b = Matrix::zeros(dim * n, dim * n);
    for (k, e) in graph.edges().iter().enumerate() {
        let p = geometry::projector(bearings.edge(k));
        let (i, j) = (e.tail * dim, e.head * dim);
        for (r, c, s) in [(i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)] {
            let mut block = b.view_mut((r, c), (dim, dim));
            block += &p * s;
        }
    }
    BearingLaplacian {
        matrix: b,
        dim,
        n_leaders: graph.leader_count(),
    }
}

/// Desired configuration at `t = 0` together with its centred pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationTarget {
    positions: Vec<Vector>,
    centroid: Vector,
    centered: Vector,
}

impl FormationTarget {
    pub fn new(positions: Vec<Vector>) -> Self {
        let n = positions.len() as f64;
        let dim = positions[0].len();
        let centroid = positions.iter().fold(Vector::zeros(dim), |acc, p| acc + p) / n;
        let centered = geometry::stack(
            positions
                .iter()
                .map(|p| p - &centroid)
                .collect::<Vec<_>>()
                .iter(),
        );
        Self {
            positions,
            centroid,
            centered,
        }
    }

    pub fn positions(&self) -> &[Vector] {
        &self.positions
    }

    pub fn centroid(&self) -> &Vector {
        &self.centroid
    }

    /// Stacked `p* - 1 ⊗ centroid`; constant while the target translates.
    pub fn centered(&self) -> &Vector {
        &self.centered
    }

    /// Stacked target positions at time `t` for a formation translating at `v_c`.
    pub fn stacked_at(&self, t: f64, v_c: &Vector) -> Vector {
        geometry::stack(self.positions.iter()) + geometry::repeat(v_c, self.positions.len()) * t
    }

    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, p) in self.positions.iter().enumerate() {
            for q in &self.positions[i + 1..] {
                best = best.min((p - q).norm());
            }
        }
        best
    }

    fn check_distinct(&self) -> Result<()> {
        for (i, p) in self.positions.iter().enumerate() {
            for (j, q) in self.positions.iter().enumerate().skip(i + 1) {
                if (p - q).norm() <= geometry::COINCIDENCE_TOLERANCE {
                    return Err(Error::DegenerateTarget { i: i + 1, j: j + 1 });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidityReport {
    pub rank: usize,
    /// Size of the Laplacian, `d·n`.
    pub size: usize,
    pub nullity: usize,
    /// Rank criterion `rank(B) = dn - d - 1`.
    pub rigid: bool,
    /// `max_k ‖B (1 ⊗ e_k)‖`.
    pub translation_residual: f64,
    /// `‖B p̃*‖`.
    pub scale_residual: f64,
}

impl RigidityReport {
    /// Whether the translations and the pattern itself lie in the null space.
    pub fn null_space_verified(&self) -> bool {
        self.translation_residual <= 1e-9 && self.scale_residual <= 1e-9
    }
}

impl std::fmt::Display for RigidityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "rigid: {} (rank {}/{}, nullity {})",
            self.rigid, self.rank, self.size, self.nullity
        )
    }
}

/// Numerical rank with cutoff `RANK_THRESHOLD · σ_max`.
pub fn numerical_rank(m: &Matrix) -> usize {
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_THRESHOLD * smax).count()
}

/// Infinitesimal bearing rigidity of `(graph, target)` through the rank of
/// `B(p*)`, plus a direct check of the expected null space.
pub fn check_rigidity(graph: &FormationGraph, target: &FormationTarget) -> Result<RigidityReport> {
    target.check_distinct()?;
    let bearings = DesiredBearingSet::from_positions(graph, target.positions())?;
    let lap = bearing_laplacian(graph, &bearings);
    let b = lap.matrix();
    let d = lap.dim();
    let n = graph.agent_count();
    let rank = numerical_rank(b);
    let size = d * n;

    let translation_residual = (0..d)
        .map(|k| {
            let mut e = Vector::zeros(d);
            e[k] = 1.0;
            (b * geometry::repeat(&e, n)).norm()
        })
        .fold(0.0, f64::max);
    let scale_residual = (b * target.centered()).norm();

    Ok(RigidityReport {
        rank,
        size,
        nullity: size - rank,
        rigid: rank + d + 1 == size,
        translation_residual,
        scale_residual,
    })
}

fn lambda_min(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Reconstructs the full target from leader positions: followers solve
/// `B_ff p*_f = -B_fl p*_l`.
pub fn solve_target(
    graph: &FormationGraph,
    bearings: &DesiredBearingSet,
    leader_positions: &[Vector],
) -> Result<FormationTarget> {
    let nl = graph.leader_count();
    assert_eq!(leader_positions.len(), nl, "one position per leader");

    for (k, e) in graph.edges().iter().enumerate() {
        if e.head >= nl {
            continue;
        }
        let g = geometry::bearing(&leader_positions[e.tail], &leader_positions[e.head]).map_err(
            |_| Error::DegenerateTarget {
                i: e.tail + 1,
                j: e.head + 1,
            },
        )?;
        let mismatch = (g.as_ref() - bearings.edge(k)).norm();
        if mismatch > CONSISTENCY_TOLERANCE {
            return Err(Error::InconsistentLeaders {
                i: e.tail + 1,
                j: e.head + 1,
                mismatch,
            });
        }
    }

    let lap = bearing_laplacian(graph, bearings);
    let d = lap.dim();
    let mut positions: Vec<Vector> = leader_positions.to_vec();
    if graph.follower_count() > 0 {
        let bff = lap.follower_block();
        let lmin = lambda_min(&bff);
        if lmin < SINGULAR_THRESHOLD {
            return Err(Error::SingularSystem { lambda_min: lmin });
        }
        let rhs = -(lap.follower_leader_block() * geometry::stack(leader_positions.iter()));
        let chol = Cholesky::new(bff).ok_or(Error::SingularSystem { lambda_min: lmin })?;
        let pf = chol.solve(&rhs);
        positions.extend((0..graph.follower_count()).map(|f| pf.rows(f * d, d).into_owned()));
    }

    let target = FormationTarget::new(positions);
    target.check_distinct()?;
    for (k, e) in graph.edges().iter().enumerate() {
        let g = geometry::bearing(&target.positions[e.tail], &target.positions[e.head]).map_err(
            |_| Error::DegenerateTarget {
                i: e.tail + 1,
                j: e.head + 1,
            },
        )?;
        let mismatch = (g.as_ref() - bearings.edge(k)).norm();
        if mismatch > CONSISTENCY_TOLERANCE {
            return Err(Error::UnrealizableBearings {
                i: e.tail + 1,
                j: e.head + 1,
                mismatch,
            });
        }
    }
    Ok(target)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralQuantities {
    /// Smallest eigenvalue of the follower block `B_ff`.
    pub lambda_min_ff: f64,
    /// Spectral norm of `H ⊗ I_d` (equal to that of `H`).
    pub incidence_norm: f64,
}

pub fn spectral_quantities(b: &BearingLaplacian, h: &IncidenceMatrix) -> SpectralQuantities {
    let incidence_norm = SVD::new(h.matrix().clone(), false, false)
        .singular_values
        .max();
    SpectralQuantities {
        lambda_min_ff: lambda_min(&b.follower_block()),
        incidence_norm,
    }
}

/// Everything derived from the graph and desired bearings that the dynamics
/// and the verification code need.
#[derive(Debug, Clone)]
pub struct Formation {
    pub graph: FormationGraph,
    pub bearings: DesiredBearingSet,
    pub incidence: IncidenceMatrix,
    pub laplacian: BearingLaplacian,
    pub target: FormationTarget,
    pub spectral: SpectralQuantities,
}

impl Formation {
    pub fn new(
        graph: FormationGraph,
        bearings: DesiredBearingSet,
        leader_positions: &[Vector],
    ) -> Result<Self> {
        let target = solve_target(&graph, &bearings, leader_positions)?;
        let incidence = build_incidence(&graph);
        let laplacian = bearing_laplacian(&graph, &bearings);
        let spectral = spectral_quantities(&laplacian, &incidence);
        Ok(Self {
            graph,
            bearings,
            incidence,
            laplacian,
            target,
            spectral,
        })
    }

    pub fn dim(&self) -> usize {
        self.laplacian.dim()
    }

    pub fn rigidity(&self) -> Result<RigidityReport> {
        check_rigidity(&self.graph, &self.target)
    }
}
