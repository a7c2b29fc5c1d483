use thiserror::Error;

/// Errors produced by signal generation, analysis and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {message} (minimum repetitions required: {min_reps})")]
    Configuration { message: String, min_reps: usize },

    #[error("synchronisation failed: pulse offset {offset} samples exceeds tolerance {tolerance}")]
    Sync { offset: i64, tolerance: i64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("sidecar does not match reconstructed signal: {0}")]
    SidecarMismatch(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Configuration { .. } => "configuration",
            Error::Sync { .. } => "sync",
            Error::Numerical(_) => "numerical",
            Error::Internal(_) => "internal",
            Error::SidecarMismatch(_) => "sidecar_mismatch",
            Error::Wav(_) => "wav",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}

pub type Result<T> = std::result::Result<T, Error>;
