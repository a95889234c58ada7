use std::path::PathBuf;

/// Everything the file layer and the CLI can fail with.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] madelung_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: malformed data: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

pub type AppResult<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        AppError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Core(
                madelung_core::Error::InvalidInput(_)
                | madelung_core::Error::InvalidGrid(_)
                | madelung_core::Error::DomainMismatch(_),
            ) => "precondition",
            AppError::Core(_) => "numerical",
            AppError::Io { .. } => "io",
            AppError::Config(_) => "config",
            AppError::Format { .. } => "format",
            AppError::Usage(_) => "usage",
        }
    }

    /// `{"error": {"kind": ..., "message": ...}}`, as printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}
