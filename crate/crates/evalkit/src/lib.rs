//! Segmentation metrics: region similarity J and boundary accuracy F with
//! Mean/Recall/Decay aggregation, plus the saliency metrics (S-measure,
//! max E-measure, max F-measure, MAE) for soft maps.

mod aggregate;
mod boundary;
mod error;
mod region;
pub mod report;
mod vsod;

pub use aggregate::{aggregate, EvalReport, FrameScore, SeqScores};
pub use boundary::{boundary_f, boundary_pixels, default_boundary_tol};
pub use error::{EvalError, Result};
pub use region::jaccard;
pub use vsod::{vsod_metrics, VsodScores};

use tensor_core::Tensor;

/// Accept masks shaped [H, W] or [1, H, W]; returns (h, w, data).
pub(crate) fn mask_plane(t: &Tensor<f32>) -> Result<(usize, usize, &[f32])> {
    match t.shape() {
        [h, w] => Ok((*h, *w, t.data())),
        [1, h, w] => Ok((*h, *w, t.data())),
        other => Err(EvalError::Data(format!(
            "expected an [H, W] or [1, H, W] mask, got {other:?}"
        ))),
    }
}

pub(crate) fn require_binary(name: &str, data: &[f32]) -> Result<()> {
    if data.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(EvalError::Data(format!("{name} mask is not binary")));
    }
    Ok(())
}
