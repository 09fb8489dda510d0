use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The right-hand side (or a corrected step) produced NaN or infinity.
    #[error("non-finite state at x = {x}{}", step.map(|s| format!(" (step {s})")).unwrap_or_default())]
    NonFiniteState { x: f64, step: Option<usize> },

    #[error("reference solver step fell below the minimum {min_step:e} at x = {x}")]
    MinStepReached { x: f64, min_step: f64 },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("problem `{0}` has no exact solution")]
    MissingExactSolution(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid network input: {0}")]
    InvalidInput(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("at least 2 measurements are required, got {0}")]
    TooFewPoints(usize),

    #[error("pair must satisfy x_i < x_j (got x_i = {x_i}, x_j = {x_j})")]
    BadPairOrder { x_i: f64, x_j: f64 },

    #[error("pair policy left no training samples")]
    EmptyDataset,

    #[error("corrector shape mismatch: {0}")]
    CorrectorShape(String),

    #[error("correction exponent {exponent} does not match base order {order} + 1")]
    OrderMismatch { order: u32, exponent: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset format error: {0}")]
    DatasetFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical process itself (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteState { .. } | Error::MinStepReached { .. } | Error::NonFiniteGradient
        )
    }

    /// True for dimension and shape mismatches between components.
    pub fn is_shape(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. } | Error::CorrectorShape(_) | Error::OrderMismatch { .. }
        )
    }
}
