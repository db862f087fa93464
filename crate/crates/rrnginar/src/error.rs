//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Model or chain specification violates an invariant.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The innovation mixture weight would leave [0, 1] for this state pair.
    #[error(
        "infeasible parameters for state pair (lag={lag_state}, current={cur_state}): \
         alpha={alpha} exceeds mu_cur/(1+mu_lag)={bound}"
    )]
    Infeasible {
        lag_state: usize,
        cur_state: usize,
        alpha: f64,
        bound: f64,
    },

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series too short: need at least {needed} observations, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    /// A scaled pre-estimate coordinate has zero mass; the series carries no
    /// usable signal for it.
    #[error("series uninformative: trimmed {0} coordinate sums to zero")]
    Uninformative(&'static str),

    #[error("{0}")]
    Domain(String),

    /// The fitted conditional pmf assigns probability zero (or underflows)
    /// to an observed value.
    #[error("zero-probability observation at index {index} (x={value})")]
    ZeroProbability { index: usize, value: u64 },

    #[error("csv: line {line}: {msg}")]
    CsvParse { line: usize, msg: String },

    #[error("csv: missing required column `{0}`")]
    MissingColumn(&'static str),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
