//! Training-time augmentation: one geometric transform (horizontal flip,
//! scale in [0.5, 2.0], random crop) applied identically to frame, flow
//! image, and mask. Images and flow resample bilinearly, masks by nearest
//! neighbor so labels stay binary. A horizontal flip negates the flow's u
//! component, which in the flow-RGB encoding is exactly R -> 1-R.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tensor_core::kernels::{bilinear_resize_data, nearest_resize_data};
use tensor_core::Tensor;

use crate::error::{Result, SegError};

pub const SCALE_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub frame: Tensor<f32>,
    pub flow: Tensor<f32>,
    pub mask: Tensor<f32>,
}

fn hflip(t: &Tensor<f32>, remap_r: bool) -> Tensor<f32> {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    Tensor::from_fn(&[c, h, w], |i| {
        let ch = i / (h * w);
        let rest = i % (h * w);
        let (y, x) = (rest / w, rest % w);
        let v = t.data()[ch * h * w + y * w + (w - 1 - x)];
        if remap_r && ch == 0 {
            1.0 - v
        } else {
            v
        }
    })
}

fn as_batch(t: &Tensor<f32>) -> Tensor<f32> {
    let mut shape = vec![1];
    shape.extend_from_slice(t.shape());
    t.reshaped(&shape).expect("batch view")
}

fn from_batch(t: Tensor<f32>) -> Tensor<f32> {
    let shape = t.shape()[1..].to_vec();
    t.reshaped(&shape).expect("unbatch view")
}

/// Deterministic core: apply (flip, scale, crop origin) to the triple.
/// Inputs are 3 x H x W frame and flow, 1 x H x W mask.
pub fn apply_augment(
    frame: &Tensor<f32>,
    flow: &Tensor<f32>,
    mask: &Tensor<f32>,
    flip: bool,
    scale: f64,
    crop_y: usize,
    crop_x: usize,
    crop: usize,
) -> Result<Augmented> {
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    if flow.shape() != [3, h, w] || mask.shape() != [1, h, w] {
        return Err(SegError::Contract(format!(
            "augment expects aligned 3/3/1-channel inputs, got {:?}, {:?}, {:?}",
            frame.shape(),
            flow.shape(),
            mask.shape()
        )));
    }
    let (frame, flow, mask) = if flip {
        (hflip(frame, false), hflip(flow, true), hflip(mask, false))
    } else {
        (frame.clone(), flow.clone(), mask.clone())
    };

    let sh = ((h as f64 * scale).round() as usize).max(crop);
    let sw = ((w as f64 * scale).round() as usize).max(crop);
    let (frame, flow, mask) = if (sh, sw) == (h, w) {
        (frame, flow, mask)
    } else {
        (
            from_batch(bilinear_resize_data(&as_batch(&frame), sh, sw)),
            from_batch(bilinear_resize_data(&as_batch(&flow), sh, sw)),
            from_batch(nearest_resize_data(&as_batch(&mask), sh, sw)),
        )
    };

    if crop_y + crop > sh || crop_x + crop > sw {
        return Err(SegError::Contract(format!(
            "crop {crop} at ({crop_y}, {crop_x}) exceeds resized {sh}x{sw}"
        )));
    }
    let take = |t: &Tensor<f32>| -> Tensor<f32> {
        let c = t.shape()[0];
        Tensor::from_fn(&[c, crop, crop], |i| {
            let ch = i / (crop * crop);
            let rest = i % (crop * crop);
            let (y, x) = (rest / crop, rest % crop);
            t.data()[ch * sh * sw + (crop_y + y) * sw + (crop_x + x)]
        })
    };
    Ok(Augmented {
        frame: take(&frame),
        flow: take(&flow),
        mask: take(&mask),
    })
}

/// Random draw + apply. The scale is clamped up so the resized image always
/// admits the crop (retry-with-clamped-scale for undersized draws).
pub fn augment(
    frame: &Tensor<f32>,
    flow: &Tensor<f32>,
    mask: &Tensor<f32>,
    crop: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Augmented> {
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    if crop == 0 || crop > 4 * h.min(w) {
        return Err(SegError::Config(format!(
            "crop {crop} incompatible with {h}x{w} inputs"
        )));
    }
    let flip = rng.gen_bool(0.5);
    let min_scale = crop as f64 / h.min(w) as f64;
    let scale = rng
        .gen_range(SCALE_RANGE.0..=SCALE_RANGE.1)
        .max(min_scale.min(SCALE_RANGE.1));
    let sh = ((h as f64 * scale).round() as usize).max(crop);
    let sw = ((w as f64 * scale).round() as usize).max(crop);
    let crop_y = rng.gen_range(0..=sh - crop);
    let crop_x = rng.gen_range(0..=sw - crop);
    apply_augment(frame, flow, mask, flip, scale, crop_y, crop_x, crop)
}
