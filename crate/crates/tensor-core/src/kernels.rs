//! Pure forward kernels shared by the differentiable ops and by data-side
//! code (augmentation, multi-scale inference) that needs the same numerics
//! without a tape.
//!
//! Accumulation order is fixed (row-major, sequential) in every reduction so
//! repeated runs are bit-identical.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Batched matrix product: a is B x m x k, b is B x k x n, out B x m x n.
/// Accumulates over k in ascending order for every output element.
pub(crate) fn bmm_data<T: Scalar>(
    a: &[T],
    b: &[T],
    out: &mut [T],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
) {
    for bi in 0..batch {
        let ab = &a[bi * m * k..(bi + 1) * m * k];
        let bb = &b[bi * k * n..(bi + 1) * k * n];
        let ob = &mut out[bi * m * n..(bi + 1) * m * n];
        for i in 0..m {
            let row = &mut ob[i * n..(i + 1) * n];
            for kk in 0..k {
                let av = ab[i * k + kk];
                let brow = &bb[kk * n..(kk + 1) * n];
                for j in 0..n {
                    row[j] = row[j] + av * brow[j];
                }
            }
        }
    }
}

/// Per-output-pixel source coordinates and lerp weights for bilinear resize
/// with half-pixel centers (align-corners disabled).
#[inline]
pub(crate) fn bilinear_coords(out_i: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    if in_len == out_len {
        return (out_i, out_i, 0.0);
    }
    let scale = in_len as f64 / out_len as f64;
    let src = (out_i as f64 + 0.5) * scale - 0.5;
    let src = src.max(0.0);
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    let frac = if i1 > i0 { src - i0 as f64 } else { 0.0 };
    (i0, i1, frac)
}

/// Bilinear interpolation of an N x C x H x W tensor to out_h x out_w.
/// Computed in lerp form so constants and the identity size are exact.
pub fn bilinear_resize_data<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let mut out = Tensor::zeros(&[n, c, out_h, out_w]);
    let xd = x.data();
    let od = out.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let plane = &xd[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
            let oplane = &mut od[(ni * c + ci) * out_h * out_w..(ni * c + ci + 1) * out_h * out_w];
            for oy in 0..out_h {
                let (y0, y1, fy) = bilinear_coords(oy, h, out_h);
                let fy = T::from_f64(fy);
                for ox in 0..out_w {
                    let (x0, x1, fx) = bilinear_coords(ox, w, out_w);
                    let fx = T::from_f64(fx);
                    let a = plane[y0 * w + x0];
                    let b = plane[y0 * w + x1];
                    let cc = plane[y1 * w + x0];
                    let d = plane[y1 * w + x1];
                    let top = a + fx * (b - a);
                    let bot = cc + fx * (d - cc);
                    oplane[oy * out_w + ox] = top + fy * (bot - top);
                }
            }
        }
    }
    out
}

/// Nearest-neighbor resize; used for masks so labels stay binary.
pub fn nearest_resize_data<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let mut out = Tensor::zeros(&[n, c, out_h, out_w]);
    let xd = x.data();
    let od = out.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let plane = &xd[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
            let oplane = &mut od[(ni * c + ci) * out_h * out_w..(ni * c + ci + 1) * out_h * out_w];
            for oy in 0..out_h {
                let sy = (((oy as f64 + 0.5) * h as f64 / out_h as f64).floor() as usize)
                    .min(h - 1);
                for ox in 0..out_w {
                    let sx = (((ox as f64 + 0.5) * w as f64 / out_w as f64).floor() as usize)
                        .min(w - 1);
                    oplane[oy * out_w + ox] = plane[sy * w + sx];
                }
            }
        }
    }
    out
}

/// Numerically stable softmax along `axis` (max subtraction).
pub fn softmax_data<T: Scalar>(x: &Tensor<T>, axis: usize) -> Tensor<T> {
    let (outer, len, inner) = crate::tensor::axis_split(x.shape(), axis);
    let mut out = Tensor::zeros(x.shape());
    let xd = x.data();
    let od = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut mx = xd[base];
            for a in 1..len {
                let v = xd[base + a * inner];
                if v > mx {
                    mx = v;
                }
            }
            let mut sum = T::zero();
            for a in 0..len {
                let e = (xd[base + a * inner] - mx).exp();
                od[base + a * inner] = e;
                sum = sum + e;
            }
            for a in 0..len {
                od[base + a * inner] = od[base + a * inner] / sum;
            }
        }
    }
    out
}
