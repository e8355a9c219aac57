//! Motion-appearance feature alignment and adaptation. Each encoder stage's
//! (appearance, motion) feature pair is aligned against shared primary-object
//! semantics, then fused by a learned sigmoid gate.

pub mod adapt;
pub mod align;
pub mod stage;

pub use adapt::{fuse_sum, Fat};
pub use align::{class_semantics, CoarseSeg, Fam, Poc, NUM_CLASSES};
pub use stage::HfanStage;
