//! Barrier-rate guided MPPI (BR-MPPI).
//!
//! A sampling-based model predictive controller that keeps barrier constraints
//! by turning each barrier inequality into an equality on the barrier's decay
//! rate. The rate parameter of every constraint is carried as an extra state,
//! its increment as an extra control channel, and every sampled control is
//! projected in closed form onto the manifold where all rate equalities hold.
//! A buffer-zone cost rewards rates that push the state away from constraint
//! boundaries, which is what ultimately enforces safety.
//!
//! The crate also ships the vanilla MPPI baseline (safety as a soft penalty
//! only), analytic and trained signed-distance models for robot bodies, and a
//! scenario simulator with CSV/SVG logging for side-by-side comparisons.

pub mod barrier;
pub mod cost;
pub mod dynamics;
pub mod geometry;
pub mod metrics;
pub mod mppi;
pub mod projection;
pub mod render;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use barrier::{Barrier, BarrierSet};
pub use cost::CostConfig;
pub use dynamics::{AugmentedControl, AugmentedState, ModelKind, RobotModel};
pub use geometry::{ShapeDescriptor, SdfDataset, SdfModel, TrainConfig};
pub use metrics::EpisodeMetrics;
pub use mppi::{Controller, MeanSequence, MppiMode, MppiParams, RolloutBatch};
pub use projection::{ConstraintSystem, ProjectionWeights};
pub use scenario::ScenarioConfig;
pub use sim::{run_episode, EpisodeLog};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("projection failed: constraint rows {rows:?} leave the system singular beyond regularization")]
    SingularProjection { rows: Vec<usize> },
    #[error("sdf training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
