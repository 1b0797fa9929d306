use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("normal matrix of order {order} is rank deficient; pass eps > 0")]
    RankDeficient { order: usize },

    #[error("numerical failure in {context}: achieved residual {residual:e}")]
    NumericalFailure { context: String, residual: f64 },

    #[error(
        "step size {step:e} exceeds the stability bound {bound:e} (inverse of the largest squared singular value)"
    )]
    StepTooLarge { step: f64, bound: f64 },

    #[error("objective diverged for appliance `{appliance}` at iteration {iteration}")]
    Divergence { appliance: String, iteration: usize },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("{}:{line}: parse error: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{}:{line}: schema error: {msg}", path.display())]
    Schema { path: PathBuf, line: usize, msg: String },

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Short machine-parsable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::NumericalFailure { .. } | Error::StepTooLarge { .. } => "numerical-failure",
            Error::Divergence { .. } => "divergence",
            Error::EmptyData(_) => "empty-data",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::Config { .. } => "config",
            Error::Protocol(_) => "protocol",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Mismatch(_) => "mismatch",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
