use thiserror::Error;

use crate::optim::TrainTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("n_dirs = {0} does not divide 360 into whole degrees (need n_dirs >= 2)")]
    GridSize(usize),

    #[error("direction index {index} out of range 1..={n_dirs}")]
    DirIndex { index: usize, n_dirs: usize },

    #[error("bidirectional components must be distinct (got index {0} twice)")]
    CoincidentComponents(usize),

    #[error("stimulus intensity must be > 0 (got {0})")]
    Intensity(f64),

    #[error("separation {separation_deg} deg is not representable on a {n_dirs}-direction grid")]
    Separation { separation_deg: f64, n_dirs: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("cell index {index} out of range 0..{k_cells}")]
    CellIndex { index: usize, k_cells: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("density is off the probability simplex: {0}")]
    Density(String),

    #[error("matrix not positive definite at stimulus {stimulus_id} (rank-deficient Fisher matrix with gamma_reg = 0?)")]
    NotPositiveDefinite { stimulus_id: usize },

    #[error("empty stimulus batch")]
    EmptyBatch,

    #[error(
        "density optimization stopped after {iters} iterations with KKT residual {residual:.3e} > tolerance {tol:.3e}"
    )]
    DensityNonConvergence { iters: usize, residual: f64, tol: f64 },

    #[error(
        "training diverged at iteration {iter}: smoothed objective rose from {from:.6} to {to:.6}"
    )]
    Diverged {
        iter: usize,
        from: f64,
        to: f64,
        /// Trace up to the abort point, retained for diagnostics.
        trace: Box<TrainTrace>,
    },

    #[error("{path}:{line}: {msg}")]
    Config { path: String, line: usize, msg: String },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
