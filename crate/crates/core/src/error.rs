use thiserror::Error;

/// Every failure the library can report.
///
/// The variants are grouped so that a front end can map them onto exit codes:
/// configuration-type problems, data/IO problems and numeric aborts.
#[derive(Debug, Error)]
pub enum FbmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported length {len}: {reason}")]
    UnsupportedLength { len: usize, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("spec mismatch: checkpoint holds [{found}] but [{expected}] was requested")]
    SpecMismatch { expected: String, found: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl FbmError {
    pub fn class(&self) -> ErrorClass {
        match self {
            FbmError::Dimension(_)
            | FbmError::Config(_)
            | FbmError::UnsupportedLength { .. }
            | FbmError::Contract(_)
            | FbmError::SpecMismatch { .. } => ErrorClass::Config,
            FbmError::Numeric(_) => ErrorClass::Numeric,
            FbmError::Format(_)
            | FbmError::Data(_)
            | FbmError::Parse { .. }
            | FbmError::Io(_)
            | FbmError::Csv(_)
            | FbmError::Json(_) => ErrorClass::Data,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        FbmError::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        FbmError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, FbmError>;
