use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("landscape generation failed after {attempts} attempts ({peaks} peaks)")]
    GenerationFailed { peaks: usize, attempts: usize },
    #[error("trajectory has no moves")]
    EmptyTrajectory,
    #[error("normalization statistics are missing")]
    MissingStats,
    #[error("trimming needs at least {min} trials, got {got}")]
    TooFewTrials { min: usize, got: usize },
    #[error("corpus has already been trimmed")]
    AlreadyTrimmed,
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown landscape `{0}`")]
    UnknownLandscape(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Nn(#[from] aidetect_nn::NnError),
}

impl CoreError {
    /// True for failures of the filesystem rather than of the inputs.
    pub fn is_io(&self) -> bool {
        match self {
            CoreError::Io(_) => true,
            CoreError::Json(e) => e.is_io(),
            CoreError::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            CoreError::Nn(aidetect_nn::NnError::Io(_)) => true,
            _ => false,
        }
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
