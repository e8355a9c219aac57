//! Flow-to-RGB encoding. The network consumes flow as a 3-channel image;
//! the encoding is per-channel and deterministic:
//!   R = clamp(u/vmax, -1, 1)/2 + 0.5
//!   G = clamp(v/vmax, -1, 1)/2 + 0.5
//!   B = clamp(|flow|/vmax, 0, 1)
//! Zero flow maps to (0.5, 0.5, 0); negating u maps R to 1-R exactly.

use tensor_core::Tensor;

use crate::error::{Result, SynthError};

/// Default normalization: velocities above this saturate the encoding.
pub const DEFAULT_VMAX: f32 = 8.0;

pub fn flow_to_rgb(flow_uv: &Tensor<f32>, vmax: f32) -> Result<Tensor<f32>> {
    if flow_uv.rank() != 3 || flow_uv.shape()[0] != 2 {
        return Err(SynthError::Layout(format!(
            "flow_to_rgb expects a 2 x H x W field, got {:?}",
            flow_uv.shape()
        )));
    }
    if vmax <= 0.0 {
        return Err(SynthError::Spec(format!("vmax must be positive, got {vmax}")));
    }
    let (h, w) = (flow_uv.shape()[1], flow_uv.shape()[2]);
    let hw = h * w;
    let mut rgb = Tensor::zeros(&[3, h, w]);
    let fd = flow_uv.data();
    let od = rgb.data_mut();
    for p in 0..hw {
        let u = fd[p];
        let v = fd[hw + p];
        od[p] = (u / vmax).clamp(-1.0, 1.0) / 2.0 + 0.5;
        od[hw + p] = (v / vmax).clamp(-1.0, 1.0) / 2.0 + 0.5;
        od[2 * hw + p] = ((u * u + v * v).sqrt() / vmax).clamp(0.0, 1.0);
    }
    Ok(rgb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_encodes_to_gray_and_black() {
        let rgb = flow_to_rgb(&Tensor::zeros(&[2, 3, 3]), DEFAULT_VMAX).unwrap();
        for p in 0..9 {
            assert_eq!(rgb.data()[p], 0.5);
            assert_eq!(rgb.data()[9 + p], 0.5);
            assert_eq!(rgb.data()[18 + p], 0.0);
        }
    }

    #[test]
    fn saturated_horizontal_flow() {
        let vmax = 4.0;
        let flow = Tensor::from_fn(&[2, 1, 1], |i| if i == 0 { vmax } else { 0.0 });
        let rgb = flow_to_rgb(&flow, vmax).unwrap();
        assert_eq!(rgb.data(), &[1.0, 0.5, 1.0]);
    }
}
