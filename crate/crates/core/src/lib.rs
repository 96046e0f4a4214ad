//! Hamilton-Jacobi reachability for pairwise collision avoidance, learned
//! value functions with exact boundary and symmetry priors, and a
//! decentralized MPC planner that uses the learned value as a safety
//! constraint.
//!
//! Module map:
//! - [`dynamics`]: benchmark systems (Particle, Air3D, SimpleArm)
//! - [`grid`]: level-set oracle for the HJI equation
//! - [`neural`]: sine-activated value networks, training and checkpoints
//! - [`value`]: the [`ValueFunction`] abstraction shared by all of the above
//! - [`planner`]: one decentralized MPC step with fail-safe fallback
//! - [`sim`]: scenarios, closed-loop trials and benchmark metrics

pub mod dynamics;
pub mod error;
pub mod grid;
pub mod neural;
pub mod planner;
pub mod seed;
pub mod sim;
pub mod value;

pub use dynamics::{SystemKind, SystemParams, SystemSpec};
pub use error::{Error, Result};
pub use grid::{Grid, ValueField};
pub use neural::{TrainConfig, ValueNetwork, Variant};
pub use planner::{PlanConfig, PlanResult, PlanStatus};
pub use sim::{MetricsTable, Scenario, TrialResult};
pub use value::{EvalResult, ValueFunction};
