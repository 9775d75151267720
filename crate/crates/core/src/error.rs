use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("code {code} does not fit in {bits} bits")]
    CodeOutOfRange { code: u32, bits: u8 },

    #[error("corrupt tensor encoding: {0}")]
    Corrupt(String),

    #[error("quadrature did not converge on [{lo}, {hi}] (error estimate {error:e})")]
    QuadratureNonConvergence { lo: f64, hi: f64, error: f64 },

    #[error("optimizer hit the feasible-region boundary for D = {d} (alpha = {alpha})")]
    OptimizerBoundary { d: f64, alpha: f64 },

    #[error("boundary table has no entry for D = {0} (valid range 4..=2048)")]
    NoTableEntry(usize),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f32 },

    #[error("variance reduction undefined: uniform rounding error is zero")]
    ZeroDenominator,

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
