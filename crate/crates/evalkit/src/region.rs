use tensor_core::Tensor;

use crate::error::{EvalError, Result};
use crate::{mask_plane, require_binary};

/// Intersection over union of two binary masks. Two empty masks score 1
/// (a correctly empty prediction is not penalized).
pub fn jaccard(pred: &Tensor<f32>, gt: &Tensor<f32>) -> Result<f64> {
    let (ph, pw, pd) = mask_plane(pred)?;
    let (gh, gw, gd) = mask_plane(gt)?;
    if (ph, pw) != (gh, gw) {
        return Err(EvalError::Data(format!(
            "mask sizes differ: {ph}x{pw} vs {gh}x{gw}"
        )));
    }
    require_binary("pred", pd)?;
    require_binary("gt", gd)?;
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&p, &g) in pd.iter().zip(gd) {
        let (p, g) = (p == 1.0, g == 1.0);
        inter += (p && g) as u64;
        union += (p || g) as u64;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}
