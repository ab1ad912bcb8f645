use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coefficient {index} = {value} lies outside [-1, 1]")]
    OutOfCube { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("diffusion coefficient is not positive at node {node} (a = {value})")]
    NonPositiveCoefficient { node: usize, value: f64 },

    #[error("kernel is not reversible: residual {residual:e} exceeds {tolerance:e}")]
    NotReversible { residual: f64, tolerance: f64 },

    #[error("kernel is not stochastic: {0}")]
    NotStochastic(String),

    #[error("state space of size {size} exceeds the limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("unknown functional `{0}`")]
    UnknownFunctional(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv schema error: {0}")]
    Schema(String),

    #[error("step-size tuning failed: {0}")]
    Tuning(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
