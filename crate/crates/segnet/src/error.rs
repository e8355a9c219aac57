use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Tensor(#[from] tensor_core::TensorError),

    #[error(transparent)]
    Synth(#[from] synthvid::SynthError),
}

pub type Result<T> = std::result::Result<T, SegError>;
