use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(wickpt::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
            AppError::Io(_) | AppError::Json(_) => 1,
        }
    }
}

impl From<wickpt::Error> for AppError {
    fn from(e: wickpt::Error) -> Self {
        match e {
            wickpt::Error::InvalidParameter(msg) => AppError::Config(msg),
            wickpt::Error::Io(e) => AppError::Io(e),
            other => AppError::Numerical(other),
        }
    }
}

pub fn config_err(msg: impl Into<String>) -> AppError {
    AppError::Config(msg.into())
}
