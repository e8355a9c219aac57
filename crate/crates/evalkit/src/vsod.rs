//! Saliency metrics for soft prediction maps: mean absolute error, max
//! F-measure over 256 uniform thresholds (beta^2 = 0.3), the structure
//! measure S (alpha = 0.5), and the max enhanced-alignment measure.
//! Computed in f64 throughout; a perfect prediction scores exactly
//! MAE = 0 and S = E = F = 1 up to the stabilizing epsilon.

use tensor_core::Tensor;

use crate::error::{EvalError, Result};
use crate::{mask_plane, require_binary};

const EPS: f64 = 1e-15;
const FBETA2: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsodScores {
    pub s_measure: f64,
    pub e_max: f64,
    pub f_max: f64,
    pub mae: f64,
}

pub fn vsod_metrics(pred_prob: &Tensor<f32>, gt: &Tensor<f32>) -> Result<VsodScores> {
    let (ph, pw, pd) = mask_plane(pred_prob)?;
    let (gh, gw, gd) = mask_plane(gt)?;
    if (ph, pw) != (gh, gw) {
        return Err(EvalError::Data(format!(
            "map sizes differ: {ph}x{pw} vs {gh}x{gw}"
        )));
    }
    require_binary("gt", gd)?;
    if pd.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(EvalError::Data("probabilities must lie in [0, 1]".into()));
    }
    let pred: Vec<f64> = pd.iter().map(|&v| v as f64).collect();
    let gt: Vec<f64> = gd.iter().map(|&v| v as f64).collect();

    Ok(VsodScores {
        s_measure: s_measure(&pred, &gt, ph, pw),
        e_max: e_max(&pred, &gt),
        f_max: f_max(&pred, &gt),
        mae: mae(&pred, &gt),
    })
}

fn mae(pred: &[f64], gt: &[f64]) -> f64 {
    pred.iter()
        .zip(gt)
        .map(|(&p, &g)| (p - g).abs())
        .sum::<f64>()
        / pred.len() as f64
}

fn thresholds() -> impl Iterator<Item = f64> {
    (0..256).map(|i| i as f64 / 255.0)
}

fn f_max(pred: &[f64], gt: &[f64]) -> f64 {
    let gt_count: f64 = gt.iter().sum();
    let mut best = 0.0f64;
    for tau in thresholds() {
        let mut tp = 0.0f64;
        let mut pos = 0.0f64;
        for (&p, &g) in pred.iter().zip(gt) {
            if p > tau {
                pos += 1.0;
                tp += g;
            }
        }
        if tp == 0.0 || gt_count == 0.0 {
            continue;
        }
        let precision = tp / pos;
        let recall = tp / gt_count;
        let f = (1.0 + FBETA2) * precision * recall / (FBETA2 * precision + recall);
        best = best.max(f);
    }
    best
}

// ------------------------------------------------------------- S-measure --

fn s_measure(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    let y: f64 = gt.iter().sum::<f64>() / gt.len() as f64;
    let pred_mean = pred.iter().sum::<f64>() / pred.len() as f64;
    if y == 0.0 {
        return 1.0 - pred_mean;
    }
    if y == 1.0 {
        return pred_mean;
    }
    let s = 0.5 * s_object(pred, gt) + 0.5 * s_region(pred, gt, h, w);
    s.max(0.0)
}

/// 2m / (m^2 + 1 + sigma + eps) over the region's prediction values;
/// sigma is the sample (n-1) standard deviation, zero for single pixels.
fn object_score(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sigma = if values.len() > 1 {
        (values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + sigma + EPS)
}

fn s_object(pred: &[f64], gt: &[f64]) -> f64 {
    let fg: Vec<f64> = pred
        .iter()
        .zip(gt)
        .filter(|&(_, &g)| g == 1.0)
        .map(|(&p, _)| p)
        .collect();
    let bg: Vec<f64> = pred
        .iter()
        .zip(gt)
        .filter(|&(_, &g)| g == 0.0)
        .map(|(&p, _)| 1.0 - p)
        .collect();
    let u: f64 = gt.iter().sum::<f64>() / gt.len() as f64;
    u * object_score(&fg) + (1.0 - u) * object_score(&bg)
}

/// SSIM-style similarity of one region, sample (n-1) statistics.
fn region_ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<f64>() / n;
    let my = gt.iter().sum::<f64>() / n;
    let (mut sx, mut sy, mut sxy) = (0.0f64, 0.0, 0.0);
    if pred.len() > 1 {
        for (&x, &y) in pred.iter().zip(gt) {
            sx += (x - mx) * (x - mx);
            sy += (y - my) * (y - my);
            sxy += (x - mx) * (y - my);
        }
        sx /= n - 1.0;
        sy /= n - 1.0;
        sxy /= n - 1.0;
    }
    let alpha = 4.0 * mx * my * sxy;
    let beta = (mx * mx + my * my) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Quadrant split at the foreground centroid, weighted by area.
fn s_region(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    let (mut sy, mut sx, mut count) = (0.0f64, 0.0f64, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            if gt[y * w + x] == 1.0 {
                sy += y as f64;
                sx += x as f64;
                count += 1.0;
            }
        }
    }
    let cut_y = (((sy / count).round() as usize) + 1).clamp(1, h - 1);
    let cut_x = (((sx / count).round() as usize) + 1).clamp(1, w - 1);

    let total = (h * w) as f64;
    let mut score = 0.0f64;
    for (ys, ye, xs, xe) in [
        (0, cut_y, 0, cut_x),
        (0, cut_y, cut_x, w),
        (cut_y, h, 0, cut_x),
        (cut_y, h, cut_x, w),
    ] {
        let mut rp = Vec::with_capacity((ye - ys) * (xe - xs));
        let mut rg = Vec::with_capacity((ye - ys) * (xe - xs));
        for y in ys..ye {
            for x in xs..xe {
                rp.push(pred[y * w + x]);
                rg.push(gt[y * w + x]);
            }
        }
        let weight = rp.len() as f64 / total;
        score += weight * region_ssim(&rp, &rg);
    }
    score
}

// ------------------------------------------------------------- E-measure --

fn e_measure_binary(bin: &[f64], gt: &[f64]) -> f64 {
    let gt_sum: f64 = gt.iter().sum();
    let n = gt.len() as f64;
    if gt_sum == 0.0 {
        return bin.iter().map(|&b| 1.0 - b).sum::<f64>() / n;
    }
    if gt_sum == n {
        return bin.iter().sum::<f64>() / n;
    }
    let mg = gt_sum / n;
    let mb: f64 = bin.iter().sum::<f64>() / n;
    let mut total = 0.0f64;
    for (&b, &g) in bin.iter().zip(gt) {
        let pg = g - mg;
        let pb = b - mb;
        let align = 2.0 * pg * pb / (pg * pg + pb * pb + EPS);
        let enhanced = (align + 1.0) * (align + 1.0) / 4.0;
        total += enhanced;
    }
    total / n
}

fn e_max(pred: &[f64], gt: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut bin = vec![0.0f64; pred.len()];
    for tau in thresholds() {
        for (b, &p) in bin.iter_mut().zip(pred) {
            *b = if p > tau { 1.0 } else { 0.0 };
        }
        best = best.max(e_measure_binary(&bin, gt));
    }
    best
}
