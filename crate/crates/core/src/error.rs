use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamp grid is not equidistant at row {row}: expected step {expected}s, found {found}s")]
    TimestampGrid { row: usize, expected: i64, found: i64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: cannot parse `{value}`")]
    Parse { row: usize, column: String, value: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("training diverged at epoch {epoch} (level {level})")]
    TrainingDiverged { epoch: usize, level: f64 },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(expected: usize, found: usize) -> Self {
        Error::Dimension { expected, found }
    }

    /// Coarse category used by front ends to pick an exit status.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Domain(_) => ErrorCategory::Config,
            Error::TrainingDiverged { .. } | Error::Solver(_) => ErrorCategory::Solver,
            _ => ErrorCategory::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Solver,
}

/// Non-fatal conditions recorded while fitting or filtering.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Warning {
    /// Requested neighbor count exceeded the sample size and was reduced.
    NeighborCountClamped { requested: usize, used: usize },
    /// Gram matrix was ill-conditioned; a ridge term was added.
    RidgeApplied { level: f64, condition: f64 },
    /// Feature had zero span under min-max scaling.
    ConstantFeature { name: String },
}
