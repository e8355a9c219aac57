//! End-to-end motion-appearance segmentation: miniature hierarchical
//! encoder, per-stage aligned-adaptive fusion, All-MLP-style decoder,
//! cross-entropy training with AdamW and a poly schedule, checkpointing,
//! and single/multi-scale inference.

pub mod augment;
pub mod checkpoint;
mod config;
pub mod decoder;
pub mod encoder;
mod error;
pub mod loss;
mod model;
pub mod optim;
pub mod trainer;

pub use augment::{apply_augment, augment, Augmented};
pub use checkpoint::{load_checkpoint, restore_checkpoint, save_checkpoint};
pub use config::{FusionMode, ModelConfig, STAGE_STRIDES};
pub use error::{Result, SegError};
pub use loss::ce_loss;
pub use model::{Model, PredictedMask};
pub use optim::{poly_lr, AdamW, POLY_POWER};
pub use trainer::{
    run_training, sample_batch, train_step, Batch, Dataset, TrainConfig, TrainOutcome,
};
