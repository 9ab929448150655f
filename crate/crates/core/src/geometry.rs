//! Dimension-generic vector primitives (d = 2 or 3).
//!
//! Vectors are stored as dynamically sized `nalgebra` columns so that planar
//! and spatial scenarios share one code path. Only the angular velocity has a
//! dimension-specific representation: a scalar yaw rate in the plane and a
//! full 3-vector in space.

use nalgebra::{DMatrix, DVector, Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;
pub type UnitVector = Unit<DVector<f64>>;

/// Distances at or below this are treated as coincident agents (meters).
pub const COINCIDENCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum Dimension {
    Planar,
    Spatial,
}

impl Dimension {
    pub fn size(self) -> usize {
        match self {
            Dimension::Planar => 2,
            Dimension::Spatial => 3,
        }
    }

    /// Number of scalar components in an angular velocity.
    pub fn omega_size(self) -> usize {
        match self {
            Dimension::Planar => 1,
            Dimension::Spatial => 3,
        }
    }
}

impl TryFrom<usize> for Dimension {
    type Error = String;

    fn try_from(d: usize) -> Result<Self, Self::Error> {
        match d {
            2 => Ok(Dimension::Planar),
            3 => Ok(Dimension::Spatial),
            other => Err(format!("dimension must be 2 or 3, got {other}")),
        }
    }
}

impl From<Dimension> for usize {
    fn from(d: Dimension) -> usize {
        d.size()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("bearing undefined: points are {distance:.3e} m apart")]
pub struct Coincident {
    pub distance: f64,
}

/// Angular velocity of one agent. In the plane this is the z-component of the
/// embedded spatial rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngularVelocity {
    Planar(f64),
    Spatial(Vector3<f64>),
}

impl AngularVelocity {
    pub fn zero(dim: Dimension) -> Self {
        match dim {
            Dimension::Planar => AngularVelocity::Planar(0.0),
            Dimension::Spatial => AngularVelocity::Spatial(Vector3::zeros()),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            AngularVelocity::Planar(w) => w.abs(),
            AngularVelocity::Spatial(w) => w.norm(),
        }
    }

    pub fn components(&self) -> Vec<f64> {
        match self {
            AngularVelocity::Planar(w) => vec![*w],
            AngularVelocity::Spatial(w) => w.iter().copied().collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        match self {
            AngularVelocity::Planar(w) => AngularVelocity::Planar(k * w),
            AngularVelocity::Spatial(w) => AngularVelocity::Spatial(w * k),
        }
    }
}

/// Unit bearing from `p_i` toward `p_j`.
pub fn bearing(p_i: &Vector, p_j: &Vector) -> Result<UnitVector, Coincident> {
    let z = p_j - p_i;
    let distance = z.norm();
    if distance <= COINCIDENCE_TOLERANCE {
        return Err(Coincident { distance });
    }
    Ok(Unit::new_unchecked(z / distance))
}

/// Orthogonal projector `I - g g^T` onto the complement of `g`.
pub fn projector(g: &Vector) -> Matrix {
    let d = g.len();
    Matrix::identity(d, d) - g * g.transpose()
}

/// `(I - g g^T) y` without materialising the projector.
pub fn project_out(g: &Vector, y: &Vector) -> Vector {
    y - g * g.dot(y)
}

/// `-x × (x × y)` for unit `x`. In the plane the projector form defines it.
pub fn double_cross(x: &Vector, y: &Vector) -> Vector {
    match x.len() {
        3 => {
            let x3 = Vector3::new(x[0], x[1], x[2]);
            let y3 = Vector3::new(y[0], y[1], y[2]);
            let r = -x3.cross(&x3.cross(&y3));
            Vector::from_column_slice(r.as_slice())
        }
        _ => project_out(x, y),
    }
}

/// `a × b`, reported as an angular velocity (scalar z-component in 2-D).
pub fn cross(a: &Vector, b: &Vector) -> AngularVelocity {
    match a.len() {
        3 => {
            let a3 = Vector3::new(a[0], a[1], a[2]);
            let b3 = Vector3::new(b[0], b[1], b[2]);
            AngularVelocity::Spatial(a3.cross(&b3))
        }
        _ => AngularVelocity::Planar(a[0] * b[1] - a[1] * b[0]),
    }
}

/// Heading kinematics `ḣ = ω × h`.
pub fn heading_rate(h: &Vector, omega: &AngularVelocity) -> Vector {
    match omega {
        AngularVelocity::Planar(w) => Vector::from_vec(vec![-w * h[1], w * h[0]]),
        AngularVelocity::Spatial(w) => {
            let h3 = Vector3::new(h[0], h[1], h[2]);
            Vector::from_column_slice(w.cross(&h3).as_slice())
        }
    }
}

/// Stacks `n` copies of `v` (the Kronecker product `1_n ⊗ v`).
pub fn repeat(v: &Vector, n: usize) -> Vector {
    let d = v.len();
    Vector::from_fn(n * d, |k, _| v[k % d])
}

/// Concatenates per-agent blocks into one stacked column.
pub fn stack<'a>(blocks: impl IntoIterator<Item = &'a Vector>) -> Vector {
    let data: Vec<f64> = blocks.into_iter().flat_map(|b| b.iter().copied()).collect();
    Vector::from_vec(data)
}

/// Unit vector from raw components, renormalizing.
pub fn unit(components: &[f64]) -> UnitVector {
    Unit::new_normalize(Vector::from_column_slice(components))
}
