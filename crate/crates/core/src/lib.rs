//! Bearing-constrained formation tracking for nonholonomic (unicycle) agents.
//!
//! Two distributed control laws drive a group of followers into a moving
//! formation defined by inter-agent bearings, with two or more leaders
//! cruising at a common constant velocity:
//!
//! * a bearing-only law, where each follower senses unit bearings to its
//!   neighbours, and
//! * a displacement law, where each follower senses relative positions.
//!
//! Neither law requires the followers to know the leaders' velocity; an
//! auxiliary state per follower learns it. The crate also contains the
//! verification machinery used to check the closed loop: bearing-rigidity
//! analysis, Lyapunov functions with their analytic derivatives, stacked
//! (compact) forms of the dynamics, and collision-avoidance certificates.

pub mod analysis;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod formation;
pub mod geometry;
pub mod harness;
pub mod scenario;

pub use error::{Error, Result};
