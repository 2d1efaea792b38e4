use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("field contains non-finite values")]
    NonFinite,

    #[error("grid too large for direct summation ({points} points, limit {limit})")]
    GridTooLarge { points: usize, limit: usize },

    #[error("degenerate field: {0}")]
    Degenerate(String),

    #[error("sign parts overlap at {0} grid points")]
    OverlappingSupports(usize),

    #[error("fibering maximizer lies on the boundary (t+ = {t_plus:e}, t- = {t_minus:e})")]
    BoundaryMaximizer { t_plus: f64, t_minus: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("sign part vanished: min(|u+|, |u-|)/|u| = {ratio:e} below {tol:e}")]
    NodalCollapse { ratio: f64, tol: f64 },

    #[error("field collapsed to zero (|u| = {norm:e})")]
    Collapse { norm: f64 },

    #[error("malformed field file {path}: {reason}")]
    FieldFormat { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
