use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation, control and reporting layers.
#[derive(Debug, Error)]
pub enum MgError {
    /// An argument lies outside the physical domain of a model (negative irradiance, ...).
    #[error("input domain error: {0}")]
    InputDomain(String),

    /// A dispatch setpoint exceeds the device capacity.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Device state found outside its admissible range.
    #[error("state corruption: {0}")]
    StateCorruption(String),

    /// A configuration value violates its documented invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("episode finished: step {t} is past the horizon {horizon}")]
    EpisodeFinished { t: usize, horizon: usize },

    /// CSV layout problems: wrong header, ragged rows, uneven spacing.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell that could not be parsed or violates a series invariant.
    #[error("validation error at row {row}, column `{column}`: {message}")]
    Validation {
        row: usize,
        column: String,
        message: String,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// Non-finite network output or loss during training.
    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("undefined normalized score for `{0}`")]
    UndefinedScore(String),

    #[error("scenario mismatch: {left} vs {right}")]
    ScenarioMismatch { left: String, right: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MgError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MgError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            MgError::InputDomain(_)
                | MgError::InvalidConfig(_)
                | MgError::Schema(_)
                | MgError::Validation { .. }
                | MgError::LengthMismatch(_)
                | MgError::ScenarioMismatch { .. }
                | MgError::Csv(_)
        ) || matches!(self, MgError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

pub type Result<T, E = MgError> = std::result::Result<T, E>;
