//! Forward implementations of the differentiable primitives. Every method
//! validates shapes, executes eagerly, records itself on the tape, and
//! returns a handle to the result.

use crate::error::{Result, TensorError};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tape::{Op, Tape, Val};
use crate::tensor::{axis_split, Tensor};

fn dim_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::DimensionMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// True when `b` may broadcast onto `a`: equal rank, each extent equal or 1
/// on `b`'s side.
fn broadcast_ok(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(&ae, &be)| be == ae || be == 1)
}

impl<T: Scalar> Tape<T> {
    /// Matrix product of two rank-2 tensors (m x k) . (k x n).
    pub fn matmul(&mut self, a: Val, b: Val) -> Result<Val> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(dim_err("matmul", &ash, &bsh));
        }
        self.matmul_impl(a, b, 1, ash[0], ash[1], bsh[1], &[ash[0], bsh[1]])
    }

    /// Batched matrix product of rank-3 tensors (B x m x k) . (B x k x n).
    pub fn bmm(&mut self, a: Val, b: Val) -> Result<Val> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ash.len() != 3 || bsh.len() != 3 || ash[0] != bsh[0] || ash[2] != bsh[1] {
            return Err(dim_err("bmm", &ash, &bsh));
        }
        self.matmul_impl(
            a,
            b,
            ash[0],
            ash[1],
            ash[2],
            bsh[2],
            &[ash[0], ash[1], bsh[2]],
        )
    }

    fn matmul_impl(
        &mut self,
        a: Val,
        b: Val,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        out_shape: &[usize],
    ) -> Result<Val> {
        let mut out = Tensor::zeros(out_shape);
        kernels::bmm_data(
            self.value(a).data(),
            self.value(b).data(),
            out.data_mut(),
            batch,
            m,
            k,
            n,
        );
        let out = self.push_val(out);
        self.record(Op::MatMul { a, b, out }, "matmul")?;
        Ok(out)
    }

    /// Per-pixel linear map: x is N x C_in x H x W, w is C_out x C_in,
    /// bias is C_out. Equivalent to `matmul` over the pixel-unrolled input,
    /// with the same accumulation order.
    pub fn conv1x1(&mut self, x: Val, w: Val, bias: Val) -> Result<Val> {
        let xsh = self.shape(x).to_vec();
        let wsh = self.shape(w).to_vec();
        let bsh = self.shape(bias).to_vec();
        if xsh.len() != 4 || wsh.len() != 2 || xsh[1] != wsh[1] {
            return Err(dim_err("conv1x1", &xsh, &wsh));
        }
        if bsh != [wsh[0]] {
            return Err(dim_err("conv1x1(bias)", &wsh, &bsh));
        }
        let (n, ci, h, wd) = (xsh[0], xsh[1], xsh[2], xsh[3]);
        let co = wsh[0];
        let hw = h * wd;
        let mut out = Tensor::zeros(&[n, co, h, wd]);
        {
            let xd = self.value(x).data();
            let wv = self.value(w).data();
            let bv = self.value(bias).data();
            let od = out.data_mut();
            for ni in 0..n {
                for o in 0..co {
                    let op = &mut od[(ni * co + o) * hw..(ni * co + o + 1) * hw];
                    let b = bv[o];
                    for p in 0..hw {
                        op[p] = b;
                    }
                    for c in 0..ci {
                        let wv = wv[o * ci + c];
                        let xp = &xd[(ni * ci + c) * hw..(ni * ci + c + 1) * hw];
                        for p in 0..hw {
                            op[p] = op[p] + wv * xp[p];
                        }
                    }
                }
            }
        }
        let out = self.push_val(out);
        self.record(Op::Conv1x1 { x, w, bias, out }, "conv1x1")?;
        Ok(out)
    }

    /// Batch normalization over (N, H, W) per channel using batch statistics.
    /// Returns the output plus the batch mean and (biased) variance so the
    /// caller can fold them into running state.
    pub fn batch_norm_train(
        &mut self,
        x: Val,
        gamma: Val,
        beta: Val,
        eps: f64,
    ) -> Result<(Val, Tensor<T>, Tensor<T>)> {
        let xsh = self.shape(x).to_vec();
        let c = self.bn_validate(&xsh, gamma, beta, eps)?;
        let (n, h, w) = (xsh[0], xsh[2], xsh[3]);
        let hw = h * w;
        let m = T::from_f64((n * hw) as f64);

        let xd = self.value(x).data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let mut s = T::zero();
            for ni in 0..n {
                let base = (ni * c + ch) * hw;
                for p in 0..hw {
                    s = s + xd[base + p];
                }
            }
            mean[ch] = s / m;
        }
        for ch in 0..c {
            let mu = mean[ch];
            let mut s = T::zero();
            for ni in 0..n {
                let base = (ni * c + ch) * hw;
                for p in 0..hw {
                    let d = xd[base + p] - mu;
                    s = s + d * d;
                }
            }
            var[ch] = s / m;
        }
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::one() / (v + T::from_f64(eps)).sqrt())
            .collect();

        let (out, xhat) = self.bn_apply(x, gamma, beta, &mean, &inv_std);
        let out = self.push_val(out);
        self.record(
            Op::BnTrain {
                x,
                gamma,
                beta,
                out,
                xhat,
                inv_std: inv_std.clone(),
            },
            "batch_norm",
        )?;
        Ok((
            out,
            Tensor::new(vec![c], mean).expect("mean shape"),
            Tensor::new(vec![c], var).expect("var shape"),
        ))
    }

    /// Batch normalization using frozen running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Val,
        gamma: Val,
        beta: Val,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
        eps: f64,
    ) -> Result<Val> {
        let xsh = self.shape(x).to_vec();
        let c = self.bn_validate(&xsh, gamma, beta, eps)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(dim_err("batch_norm(running)", &xsh, running_mean.shape()));
        }
        let inv_std: Vec<T> = running_var
            .data()
            .iter()
            .map(|&v| T::one() / (v + T::from_f64(eps)).sqrt())
            .collect();
        let (out, xhat) = self.bn_apply(x, gamma, beta, running_mean.data(), &inv_std);
        let out = self.push_val(out);
        self.record(
            Op::BnEval {
                x,
                gamma,
                beta,
                out,
                xhat,
                inv_std,
            },
            "batch_norm",
        )?;
        Ok(out)
    }

    fn bn_validate(&self, xsh: &[usize], gamma: Val, beta: Val, eps: f64) -> Result<usize> {
        if xsh.len() != 4 {
            return Err(TensorError::InvalidShape {
                op: "batch_norm",
                shape: xsh.to_vec(),
                msg: "expected rank-4 input".into(),
            });
        }
        if eps <= 0.0 {
            return Err(TensorError::Config(format!("batch_norm eps must be > 0, got {eps}")));
        }
        let c = xsh[1];
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(dim_err("batch_norm(params)", xsh, self.shape(gamma)));
        }
        Ok(c)
    }

    fn bn_apply(
        &self,
        x: Val,
        gamma: Val,
        beta: Val,
        mean: &[T],
        inv_std: &[T],
    ) -> (Tensor<T>, Vec<T>) {
        let xsh = self.shape(x);
        let (n, c, h, w) = (xsh[0], xsh[1], xsh[2], xsh[3]);
        let hw = h * w;
        let xd = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = Tensor::zeros(xsh);
        let od = out.data_mut();
        for ni in 0..n {
            for ch in 0..c {
                let base = (ni * c + ch) * hw;
                let (mu, is, ga, be) = (mean[ch], inv_std[ch], gv[ch], bv[ch]);
                for p in 0..hw {
                    let xh = (xd[base + p] - mu) * is;
                    xhat[base + p] = xh;
                    od[base + p] = ga * xh + be;
                }
            }
        }
        (out, xhat)
    }

    pub fn add(&mut self, a: Val, b: Val) -> Result<Val> {
        self.ew_binary(a, b, "add", |x, y| x + y, |a, b, out| Op::Add { a, b, out })
    }

    pub fn sub(&mut self, a: Val, b: Val) -> Result<Val> {
        self.ew_binary(a, b, "sub", |x, y| x - y, |a, b, out| Op::Sub { a, b, out })
    }

    pub fn mul(&mut self, a: Val, b: Val) -> Result<Val> {
        self.ew_binary(a, b, "mul", |x, y| x * y, |a, b, out| Op::Mul { a, b, out })
    }

    fn ew_binary(
        &mut self,
        a: Val,
        b: Val,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        make: impl FnOnce(Val, Val, Val) -> Op<T>,
    ) -> Result<Val> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if !broadcast_ok(&ash, &bsh) {
            return Err(dim_err(name, &ash, &bsh));
        }
        let mut out = Tensor::zeros(&ash);
        {
            let ad = self.value(a).data();
            let bd = self.value(b).data();
            let od = out.data_mut();
            if ash == bsh {
                for i in 0..od.len() {
                    od[i] = f(ad[i], bd[i]);
                }
            } else {
                crate::tape::for_each_broadcast(&ash, &bsh, |ai, bi| {
                    od[ai] = f(ad[ai], bd[bi]);
                });
            }
        }
        let out = self.push_val(out);
        self.record(make(a, b, out), name)?;
        Ok(out)
    }

    /// Multiply by a scalar constant.
    pub fn scale(&mut self, a: Val, c: T) -> Result<Val> {
        let out = self.value(a).map(|v| v * c);
        let out = self.push_val(out);
        self.record(Op::Scale { a, c, out }, "scale")?;
        Ok(out)
    }

    /// Add a scalar constant.
    pub fn add_scalar(&mut self, a: Val, c: T) -> Result<Val> {
        let out = self.value(a).map(|v| v + c);
        let out = self.push_val(out);
        self.record(Op::AddScalar { a, out }, "add_scalar")?;
        Ok(out)
    }

    pub fn relu(&mut self, x: Val) -> Result<Val> {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let out = self.push_val(out);
        self.record(Op::Relu { x, out }, "relu")?;
        Ok(out)
    }

    pub fn sigmoid(&mut self, x: Val) -> Result<Val> {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        let out = self.push_val(out);
        self.record(Op::Sigmoid { x, out }, "sigmoid")?;
        Ok(out)
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, x: Val, axis: usize) -> Result<Val> {
        self.check_axis(x, axis, "softmax")?;
        let out = kernels::softmax_data(self.value(x), axis);
        let out = self.push_val(out);
        self.record(Op::Softmax { x, axis, out }, "softmax")?;
        Ok(out)
    }

    /// log(softmax(x)) along `axis` via a shifted log-sum-exp.
    pub fn log_softmax(&mut self, x: Val, axis: usize) -> Result<Val> {
        self.check_axis(x, axis, "log_softmax")?;
        let xt = self.value(x);
        let (outer, len, inner) = axis_split(xt.shape(), axis);
        let xd = xt.data();
        let mut out = Tensor::zeros(xt.shape());
        {
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
                        sum = sum + (xd[base + a * inner] - mx).exp();
                    }
                    let lse = mx + sum.ln();
                    for a in 0..len {
                        let off = base + a * inner;
                        od[off] = xd[off] - lse;
                    }
                }
            }
        }
        let out = self.push_val(out);
        self.record(Op::LogSoftmax { x, axis, out }, "log_softmax")?;
        Ok(out)
    }

    fn check_axis(&self, x: Val, axis: usize, op: &'static str) -> Result<()> {
        let sh = self.shape(x);
        if axis >= sh.len() {
            return Err(TensorError::InvalidShape {
                op,
                shape: sh.to_vec(),
                msg: format!("axis {axis} out of range"),
            });
        }
        Ok(())
    }

    /// Per-channel spatial mean: N x C x H x W -> N x C x 1 x 1.
    pub fn global_avg_pool(&mut self, x: Val) -> Result<Val> {
        let xsh = self.shape(x).to_vec();
        if xsh.len() != 4 {
            return Err(TensorError::InvalidShape {
                op: "global_avg_pool",
                shape: xsh,
                msg: "expected rank-4 input".into(),
            });
        }
        let (n, c, h, w) = (xsh[0], xsh[1], xsh[2], xsh[3]);
        let hw = h * w;
        let inv = T::one() / T::from_f64(hw as f64);
        let mut out = Tensor::zeros(&[n, c, 1, 1]);
        {
            let xd = self.value(x).data();
            let od = out.data_mut();
            for nc in 0..n * c {
                let mut s = T::zero();
                for p in 0..hw {
                    s = s + xd[nc * hw + p];
                }
                od[nc] = s * inv;
            }
        }
        let out = self.push_val(out);
        self.record(Op::GlobalAvgPool { x, out }, "global_avg_pool")?;
        Ok(out)
    }

    /// 2x2 average pooling with stride 2; spatial extents must be even.
    pub fn avg_pool2(&mut self, x: Val) -> Result<Val> {
        let xsh = self.shape(x).to_vec();
        if xsh.len() != 4 || xsh[2] % 2 != 0 || xsh[3] % 2 != 0 {
            return Err(TensorError::InvalidShape {
                op: "avg_pool2",
                shape: xsh,
                msg: "expected rank-4 input with even spatial extents".into(),
            });
        }
        let (n, c, h, w) = (xsh[0], xsh[1], xsh[2], xsh[3]);
        let (oh, ow) = (h / 2, w / 2);
        let q = T::from_f64(0.25);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        {
            let xd = self.value(x).data();
            let od = out.data_mut();
            for nc in 0..n * c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let b = (nc * h + 2 * oy) * w + 2 * ox;
                        od[(nc * oh + oy) * ow + ox] =
                            (xd[b] + xd[b + 1] + xd[b + w] + xd[b + w + 1]) * q;
                    }
                }
            }
        }
        let out = self.push_val(out);
        self.record(Op::AvgPool2 { x, out }, "avg_pool2")?;
        Ok(out)
    }

    /// Bilinear interpolation with half-pixel centers (align-corners off).
    /// Identity when the size is unchanged; constants are preserved exactly.
    pub fn bilinear_resize(&mut self, x: Val, out_h: usize, out_w: usize) -> Result<Val> {
        let xsh = self.shape(x).to_vec();
        if xsh.len() != 4 || out_h == 0 || out_w == 0 {
            return Err(TensorError::InvalidShape {
                op: "bilinear_resize",
                shape: xsh,
                msg: format!("expected rank-4 input and positive target, got {out_h}x{out_w}"),
            });
        }
        let out = kernels::bilinear_resize_data(self.value(x), out_h, out_w);
        let out = self.push_val(out);
        self.record(Op::Bilinear { x, out }, "bilinear_resize")?;
        Ok(out)
    }

    pub fn reshape(&mut self, x: Val, shape: &[usize]) -> Result<Val> {
        let out = self.value(x).reshaped(shape)?;
        let out = self.push_val(out);
        self.record(Op::Reshape { x, out }, "reshape")?;
        Ok(out)
    }

    /// Swap the last two axes of a rank >= 2 tensor.
    pub fn transpose_last2(&mut self, x: Val) -> Result<Val> {
        let xsh = self.shape(x).to_vec();
        if xsh.len() < 2 {
            return Err(TensorError::InvalidShape {
                op: "transpose_last2",
                shape: xsh,
                msg: "expected rank >= 2".into(),
            });
        }
        let rank = xsh.len();
        let (rows, cols) = (xsh[rank - 2], xsh[rank - 1]);
        let batch: usize = xsh[..rank - 2].iter().product();
        let mut osh = xsh.clone();
        osh[rank - 2] = cols;
        osh[rank - 1] = rows;
        let mut out = Tensor::zeros(&osh);
        {
            let xd = self.value(x).data();
            let od = out.data_mut();
            for bi in 0..batch {
                let xb = &xd[bi * rows * cols..(bi + 1) * rows * cols];
                let ob = &mut od[bi * rows * cols..(bi + 1) * rows * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        ob[c * rows + r] = xb[r * cols + c];
                    }
                }
            }
        }
        let out = self.push_val(out);
        self.record(Op::TransposeLast2 { x, out }, "transpose_last2")?;
        Ok(out)
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Val], axis: usize) -> Result<Val> {
        if parts.is_empty() {
            return Err(TensorError::Contract("concat of zero tensors".into()));
        }
        let first = self.shape(parts[0]).to_vec();
        self.check_axis(parts[0], axis, "concat")?;
        let mut axis_total = 0usize;
        for &p in parts {
            let sh = self.shape(p);
            if sh.len() != first.len()
                || sh
                    .iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (&a, &b))| d != axis && a != b)
            {
                return Err(dim_err("concat", &first, sh));
            }
            axis_total += sh[axis];
        }
        let mut osh = first.clone();
        osh[axis] = axis_total;
        let (outer, _, inner) = axis_split(&osh, axis);
        let mut out = Tensor::zeros(&osh);
        {
            let od = out.data_mut();
            let mut offset = 0usize;
            for &p in parts {
                let psh = self.shape(p).to_vec();
                let plen = psh[axis];
                let pd = self.value(p).data();
                for o in 0..outer {
                    for a in 0..plen {
                        let dst = (o * axis_total + offset + a) * inner;
                        let src = (o * plen + a) * inner;
                        od[dst..dst + inner].copy_from_slice(&pd[src..src + inner]);
                    }
                }
                offset += plen;
            }
        }
        let out = self.push_val(out);
        self.record(
            Op::Concat {
                parts: parts.to_vec(),
                axis,
                out,
            },
            "concat",
        )?;
        Ok(out)
    }

    /// Sum of all elements, as a shape-[1] tensor.
    pub fn sum_all(&mut self, x: Val) -> Result<Val> {
        let mut s = T::zero();
        for &v in self.value(x).data() {
            s = s + v;
        }
        let out = self.push_val(Tensor::scalar(s));
        self.record(Op::SumAll { x, out }, "sum_all")?;
        Ok(out)
    }

    /// Mean of all elements, as a shape-[1] tensor.
    pub fn mean_all(&mut self, x: Val) -> Result<Val> {
        let n = self.value(x).len();
        let mut s = T::zero();
        for &v in self.value(x).data() {
            s = s + v;
        }
        let out = self.push_val(Tensor::scalar(s / T::from_f64(n as f64)));
        self.record(Op::MeanAll { x, out }, "mean_all")?;
        Ok(out)
    }
}
