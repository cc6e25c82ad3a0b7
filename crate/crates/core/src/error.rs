use thiserror::Error;

/// Errors raised by model evaluation, simulation, estimation and the experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("local covariance is not positive definite at x = {x:?}, beta = {beta:?}")]
    NonPositiveDefinite { x: Vec<f64>, beta: Vec<f64> },
    #[error("invalid duration {0}: increments need h > 0")]
    InvalidDuration(f64),
    #[error("closed-form Levy moments unavailable for jump law `{0}`")]
    MomentsUnavailable(String),
    #[error("state became non-finite at step {step}")]
    NonFinite { step: usize },
    #[error("observation step {h} is not an integer multiple of the fine step {fine}")]
    GridMismatch { h: f64, fine: f64 },
    #[error("shifted parameter leaves the parameter box")]
    DomainExceeded,
    #[error("every optimizer start produced a non-finite objective")]
    AllStartsFailed,
    #[error("information matrix `{which}` is numerically singular (condition number {cond:e})")]
    SingularInformation { which: &'static str, cond: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
