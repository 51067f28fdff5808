use thiserror::Error;

use crate::eigen::EigenPair;
use crate::timestep::Trajectory;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("point at radius {x} lies outside the tabulated range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("degenerate ball: weighted mass of the ball of radius {radius} is zero")]
    DegenerateBall { radius: f64 },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular linear system at pivot {0}")]
    Singular(usize),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    EigenConvergence { iterations: usize, residual: f64, best: Box<EigenPair> },

    #[error("implicit step failed at t = {t}, dt = {dt}: {reason}")]
    StepFailure { t: f64, dt: f64, reason: String },

    #[error("numerical failure at t = {t}: {reason}")]
    Numerical { t: f64, reason: String, trajectory: Box<Trajectory> },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
