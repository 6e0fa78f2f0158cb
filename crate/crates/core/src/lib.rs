//! Maximal control invariant (MCI) and maximal state-control invariant (MSCI)
//! sets for discrete-time LTI systems with polytopic constraints, and a
//! model-free learner that recovers the MSCI from failing trajectories.
//!
//! - [`geometry`]: H-representation polytopes and the LP underneath them.
//! - [`dynamics`]: plants, step oracles, joint constraints and rollouts.
//! - [`invariance`]: model-based predecessor recursions (ground truth).
//! - [`fail`]: the failure-aware learning loop; sees only a [`StepOracle`].
//! - [`controllers`]: constant, random-admissible and safe controllers.

pub mod controllers;
pub mod dynamics;
pub mod fail;
pub mod geometry;
pub mod invariance;

pub use controllers::{Controller, ControllerSpec};
pub use dynamics::{make_joint_constraints, rollout, LtiSystem, StepOracle, Trajectory};
pub use fail::{certify, run_fail, CertificationReport, FailConfig, LearnState};
pub use geometry::{hausdorff, Halfspace, Polytope, RowLabel};
pub use invariance::{compute_mci, compute_msci, state_projection, x_section, RecursionTrace};

use thiserror::Error;

/// Any error raised by this crate, tagged by the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(#[from] geometry::GeometryError),
    #[error("dynamics: {0}")]
    Dynamics(#[from] dynamics::DynamicsError),
    #[error("invariance: {0}")]
    Invariance(#[from] invariance::InvarianceError),
    #[error("fail: {0}")]
    Fail(#[from] fail::FailError),
    #[error("controllers: {0}")]
    Controller(#[from] controllers::ControllerError),
}
