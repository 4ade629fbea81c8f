use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {}: {source}", .path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid config at `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing artifact {}: run {command} first", .path.display())]
    MissingArtifact { command: &'static str, path: PathBuf },

    #[error("stale artifact {}: produced under a different config, rerun {command}", .path.display())]
    StaleArtifact { command: &'static str, path: PathBuf },

    #[error("training requires both classes, got only {0}")]
    SingleClass(&'static str),

    #[error("non-finite value in feature `{feature}` at row {row}")]
    NonFinite { feature: String, row: usize },

    #[error("feature catalog mismatch: {0}")]
    CatalogMismatch(String),

    #[error("minority class has {0} rows, SMOTE needs at least 2")]
    MinorityTooSmall(usize),

    #[error("target prevalence {target} unattainable: mean probability spans [{low:.6}, {high:.6}]")]
    UnattainablePrevalence { target: f64, low: f64, high: f64 },

    #[error("operation requires a logistic model, got {0}")]
    NotLogistic(&'static str),

    #[error("feature matrix has no columns")]
    NoFeatures,

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by the caller's input or configuration, as opposed to
    /// failures inside the pipeline itself.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Internal(_))
    }
}
