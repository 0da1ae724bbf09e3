use std::path::PathBuf;

use avnet_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("gradient check failed for: {}", .0.join(", "))]
    Gradcheck(Vec<String>),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// 2 config, 3 IO or shape, 4 divergence, 5 gradient check.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Core(CoreError::Config(_)) => 2,
            AppError::Core(CoreError::NonFiniteLoss { .. }) => 4,
            AppError::Gradcheck(_) => 5,
            _ => 3,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
