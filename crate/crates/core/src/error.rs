use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two agents are closer than the tolerance under which a bearing (or the
    /// simulation) is still defined.
    #[error("agents {i} and {j} coincide (distance {distance:.3e} m)")]
    CoincidentAgents { i: usize, j: usize, distance: f64 },

    #[error("degenerate target: agents {i} and {j} share the same desired position")]
    DegenerateTarget { i: usize, j: usize },

    #[error("follower block of the bearing Laplacian is singular (lambda_min = {lambda_min:.3e})")]
    SingularSystem { lambda_min: f64 },

    #[error(
        "leader positions violate desired bearing of edge ({i}, {j}): mismatch {mismatch:.3e}"
    )]
    InconsistentLeaders { i: usize, j: usize, mismatch: f64 },

    #[error("desired bearings are not realizable: edge ({i}, {j}) misses by {mismatch:.3e}")]
    UnrealizableBearings { i: usize, j: usize, mismatch: f64 },

    #[error("invalid kappa {kappa}: must satisfy 0 < kappa < {min_distance}")]
    InvalidKappa { kappa: f64, min_distance: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid `{field}`: {rule}")]
    Validation { field: String, rule: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            rule: rule.into(),
        }
    }
}
