use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene spec error: {0}")]
    Spec(String),

    #[error(transparent)]
    Tensor(#[from] tensor_core::TensorError),

    #[error("sample layout error: {0}")]
    Layout(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;
