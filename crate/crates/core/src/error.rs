use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is too small to normalize")]
    ZeroVector { norm: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(f64),
    #[error("partition pool is empty")]
    EmptyPool,
    #[error("input is empty")]
    EmptyInput,
    #[error("operation not supported on {0}")]
    UnsupportedManifold(String),
    #[error("loss or an intermediate value is not finite")]
    NonFiniteLoss,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("negative pool has {available} points, {requested} requested")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("reference gradient has zero norm")]
    ZeroReference,
    #[error("density is not strictly positive at index {index} (value {value:e})")]
    NonPositiveDensity { index: usize, value: f64 },
    #[error("floor {floor} times volume {volume} must be below one")]
    InfeasibleFloor { floor: f64, volume: f64 },
    #[error("all importance weights underflowed or are not finite")]
    DegenerateWeights,
    #[error("histograms have different binning ({0} vs {1})")]
    BinMismatch(usize, usize),
    #[error("sequences have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
