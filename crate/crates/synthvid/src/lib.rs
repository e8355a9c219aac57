//! Synthetic moving-shape videos with exact ground-truth optical flow,
//! binary masks, and a deterministic flow-to-RGB encoding. Replaces learned
//! flow estimation with an analytic substrate that training and evaluation
//! can trust bit-for-bit.

mod error;
pub mod flow;
pub mod generate;
pub mod sample;
pub mod scene;

pub use error::{Result, SynthError};
pub use flow::{flow_to_rgb, DEFAULT_VMAX};
pub use generate::generate;
pub use sample::{list_sequences, read_sample, write_sample, VideoSample};
pub use scene::{sample_scene, FlowFailure, ObjectSpec, SceneParams, SceneSpec, ShapeKind};
