use thiserror::Error;

/// Errors produced by grid construction, evolution and bound evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field and region live on different grids")]
    GridMismatch,

    #[error("{op} requires a {need} grid")]
    UnsupportedBoundary { op: &'static str, need: &'static str },

    #[error("gauge condition violated: Im(f(u) conj(u)) defect {defect:.3e} exceeds {limit:.1e}")]
    GaugeViolation { defect: f64, limit: f64 },

    #[error("fixed-point iteration diverged: residual {residual:.3e} after {iters} iterations")]
    FixedPointDiverged { residual: f64, iters: usize },

    #[error("non-finite value detected in {context}")]
    NonFinite { context: String },

    #[error("tail mass fraction {fraction:.3e} exceeds {limit:.1e}; the box no longer imitates the whole space")]
    TailMassBreach { fraction: f64, limit: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad field file: {0}")]
    BadFieldFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
