use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Error, Debug)]
pub enum SgError {
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("jet dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("basepoint mismatch between jet operands")]
    BasepointMismatch,
    #[error("multi-index order {requested} exceeds jet truncation order {available}")]
    OrderExceeded { requested: usize, available: usize },
    #[error("singular leading coefficient (pivot {pivot:.3e})")]
    SingularLeading { pivot: f64 },
    #[error("metric not positive definite at sampled point (smallest diagonal pivot {pivot:.3e})")]
    NotPositiveDefinite { pivot: f64 },
    #[error("unsupported dimension n={0}")]
    UnsupportedDimension(usize),
    #[error("symbol component at xi-degree {0} not available")]
    MissingComponent(f64),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SgError>;
