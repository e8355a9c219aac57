use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("data error: {0}")]
    Data(String),

    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;
