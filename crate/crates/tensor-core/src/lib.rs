//! Dense tensors, differentiable primitives, and a reverse-mode tape with a
//! finite-difference gradient checker. Everything upstream in the workspace
//! is built from these pieces.
//!
//! Determinism contract: every primitive fixes its reduction order
//! (row-major, sequential), so identical inputs always produce bit-identical
//! outputs, in both forward and backward passes.

mod error;
pub mod gradcheck;
pub mod io;
pub mod kernels;
pub mod nn;
mod ops;
mod params;
pub mod rng;
mod scalar;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{gradcheck, GradCheckReport, GRADCHECK_STEP, GRADCHECK_TOL};
pub use params::{BufferId, ParamId, ParamStore, Parameter};
pub use scalar::Scalar;
pub use tape::{Tape, Val};
pub use tensor::Tensor;
