use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TarmaError>;

/// Which regime a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Lower,
    Upper,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Lower => write!(f, "lower"),
            Regime::Upper => write!(f, "upper"),
        }
    }
}

#[derive(Debug, Error)]
pub enum TarmaError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("row {row}: cannot parse `{cell}` as a number")]
    BadCell { row: usize, cell: String },

    #[error("no observations")]
    NoObservations,

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("non-positive value {value} at index {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("invalid timestamps: {0}")]
    Timestamps(String),

    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in `{field}`: expected {expected}, got {got}")]
    Dimension {
        field: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invertibility condition violated: sum of max |theta| = {0:.4} >= 1")]
    NotInvertible(f64),

    #[error("insufficient data in {regime} regime: {got} effective observations, need {needed}")]
    InsufficientRegimeData {
        regime: Regime,
        got: usize,
        needed: usize,
    },

    #[error("degenerate residuals: scale estimate is zero")]
    DegenerateScale,

    #[error("empty admissible grid")]
    EmptyGrid,

    #[error("non-finite objective")]
    Divergence,

    #[error("singular normal equations in {regime} regime")]
    SingularNormal { regime: Regime },

    #[error("sensitivity matrix is numerically singular (condition number {0:.3e})")]
    SingularHessian(f64),

    #[error("covariance unavailable: {0}")]
    CovarianceWithheld(String),

    #[error("uniform weights; ranking undefined")]
    UniformWeights,

    #[error("all fits failed: {0}")]
    AllFailed(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or input data.
    Input,
    /// The numerics failed on otherwise valid input.
    Numeric,
}

impl TarmaError {
    pub fn class(&self) -> ErrorClass {
        match self {
            TarmaError::DegenerateScale
            | TarmaError::Divergence
            | TarmaError::SingularNormal { .. }
            | TarmaError::SingularHessian(_)
            | TarmaError::CovarianceWithheld(_)
            | TarmaError::AllFailed(_) => ErrorClass::Numeric,
            _ => ErrorClass::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TarmaError::Io {
            path: path.into(),
            source,
        }
    }
}
