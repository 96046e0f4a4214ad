use std::io;

use thiserror::Error;

/// Errors raised by the library. Statuses that are part of normal planning
/// (infeasible, timed out) are not errors; see `planner::PlanStatus`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("control component {index} = {value} exceeds bound {bound}")]
    ControlBound { index: usize, value: f64, bound: f64 },

    #[error("coordinate {dim} = {value} outside [{lo}, {hi}]")]
    OutOfBounds { dim: usize, value: f64, lo: f64, hi: f64 },

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("non-finite value encountered in {context} at t = {time}")]
    NonFinite { context: &'static str, time: f64 },

    #[error("system mismatch: {0}")]
    SystemMismatch(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("truncated blob: expected {expected} bytes, found {found}")]
    TruncatedBlob { expected: usize, found: usize },

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
