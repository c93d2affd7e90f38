use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not Hurwitz")]
    NotHurwitz,
    #[error("linear system is numerically singular")]
    SingularSystem,
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("feature signal has no analytic rate")]
    NoAnalyticRate,
    #[error("grid too coarse: need at least {needed} samples, got {got}")]
    GridTooCoarse { needed: usize, got: usize },
    #[error("non-finite derivative at t = {t}")]
    NonFiniteDerivative { t: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown scenario: {0}")]
    UnknownScenario(String),
    #[error("bad override key: {0}")]
    BadOverrideKey(String),
    #[error("cannot write output to {path}: {reason}")]
    UnwritableOutput { path: PathBuf, reason: String },
    #[error("no manifest found in {0}")]
    MissingManifest(PathBuf),
    #[error("corrupt csv {path}: {reason}")]
    CorruptCsv { path: PathBuf, reason: String },
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
