use tensor_core::Tensor;

use crate::error::{EvalError, Result};
use crate::{mask_plane, require_binary};

/// Standard tolerance: 0.008 of the image diagonal, rounded up.
pub fn default_boundary_tol(h: usize, w: usize) -> f64 {
    (0.008 * ((h * h + w * w) as f64).sqrt()).ceil()
}

/// Foreground pixels with at least one 4-neighbor that is background;
/// out-of-image counts as background, so border object pixels are boundary.
pub fn boundary_pixels(h: usize, w: usize, data: &[f32]) -> Vec<(usize, usize)> {
    let at = |y: isize, x: isize| -> bool {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            false
        } else {
            data[y as usize * w + x as usize] == 1.0
        }
    };
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if data[y * w + x] != 1.0 {
                continue;
            }
            let (yi, xi) = (y as isize, x as isize);
            if !at(yi - 1, xi) || !at(yi + 1, xi) || !at(yi, xi - 1) || !at(yi, xi + 1) {
                out.push((y, x));
            }
        }
    }
    out
}

/// Match map: for each pixel, whether it lies within Euclidean distance
/// `tol` of any point in `points`. Stamped disks; cheap at mask scale.
fn within_tol(h: usize, w: usize, points: &[(usize, usize)], tol: f64) -> Vec<bool> {
    let mut hit = vec![false; h * w];
    let r = tol.floor() as isize;
    let tol2 = tol * tol;
    for &(py, px) in points {
        for dy in -r..=r {
            for dx in -r..=r {
                if (dy * dy + dx * dx) as f64 > tol2 {
                    continue;
                }
                let (y, x) = (py as isize + dy, px as isize + dx);
                if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                    hit[y as usize * w + x as usize] = true;
                }
            }
        }
    }
    hit
}

/// Boundary F-measure: precision and recall of boundary pixels matched
/// within radius `tol` (dilated-boundary intersection), F = 2PR/(P+R).
/// Two boundary-free masks (both empty or both full) compare as equal and
/// score 1; one-sided emptiness scores 0.
pub fn boundary_f(pred: &Tensor<f32>, gt: &Tensor<f32>, tol: f64) -> Result<f64> {
    let (ph, pw, pd) = mask_plane(pred)?;
    let (gh, gw, gd) = mask_plane(gt)?;
    if (ph, pw) != (gh, gw) {
        return Err(EvalError::Data(format!(
            "mask sizes differ: {ph}x{pw} vs {gh}x{gw}"
        )));
    }
    if tol < 0.0 {
        return Err(EvalError::Contract(format!("tol must be >= 0, got {tol}")));
    }
    require_binary("pred", pd)?;
    require_binary("gt", gd)?;

    let pb = boundary_pixels(ph, pw, pd);
    let gb = boundary_pixels(gh, gw, gd);
    match (pb.is_empty(), gb.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }

    let gt_zone = within_tol(ph, pw, &gb, tol);
    let pred_zone = within_tol(ph, pw, &pb, tol);
    let matched_pred = pb.iter().filter(|&&(y, x)| gt_zone[y * pw + x]).count();
    let matched_gt = gb.iter().filter(|&&(y, x)| pred_zone[y * pw + x]).count();
    let precision = matched_pred as f64 / pb.len() as f64;
    let recall = matched_gt as f64 / gb.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}
