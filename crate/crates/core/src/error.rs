use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by generators, reservoirs, readouts, analyses and the runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("generation diverged at step {step}: non-finite state")]
    Diverged { step: usize },

    #[error("history too short: need {required} time units, history covers {available}")]
    HistoryTooShort { required: f64, available: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("reservoir construction failed: {0}")]
    Construction(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("warmup too short: need at least {required} steps, got {got}")]
    WarmupTooShort { required: usize, got: usize },

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("unknown preset `{name}`; available presets: {available}")]
    UnknownPreset { name: String, available: String },

    #[error("missing artifact {}: {hint}", path.display())]
    MissingArtifact { path: PathBuf, hint: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Fails with [`Error::InvalidParameter`] unless `cond` holds.
pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
