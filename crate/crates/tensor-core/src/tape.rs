//! Reverse-mode differentiation tape. Forward ops execute eagerly, keep
//! their results in a value arena, and record themselves; `backward` replays
//! the records in exact reverse execution order.

use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{axis_split, Tensor};

/// Handle to a value in the tape arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Val(pub(crate) usize);

#[derive(Debug)]
pub(crate) enum Op<T> {
    MatMul { a: Val, b: Val, out: Val },
    Conv1x1 { x: Val, w: Val, bias: Val, out: Val },
    BnTrain { x: Val, gamma: Val, beta: Val, out: Val, xhat: Vec<T>, inv_std: Vec<T> },
    BnEval { x: Val, gamma: Val, beta: Val, out: Val, xhat: Vec<T>, inv_std: Vec<T> },
    Add { a: Val, b: Val, out: Val },
    Sub { a: Val, b: Val, out: Val },
    Mul { a: Val, b: Val, out: Val },
    Scale { a: Val, c: T, out: Val },
    AddScalar { a: Val, out: Val },
    Relu { x: Val, out: Val },
    Sigmoid { x: Val, out: Val },
    Softmax { x: Val, axis: usize, out: Val },
    LogSoftmax { x: Val, axis: usize, out: Val },
    GlobalAvgPool { x: Val, out: Val },
    AvgPool2 { x: Val, out: Val },
    Bilinear { x: Val, out: Val },
    Reshape { x: Val, out: Val },
    TransposeLast2 { x: Val, out: Val },
    Concat { parts: Vec<Val>, axis: usize, out: Val },
    SumAll { x: Val, out: Val },
    MeanAll { x: Val, out: Val },
}

pub struct Tape<T> {
    pub(crate) vals: Vec<Tensor<T>>,
    pub(crate) ops: Vec<Op<T>>,
    bindings: Vec<(ParamId, Val)>,
    grads: Vec<Option<Tensor<T>>>,
    check_finite: bool,
    finished: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            vals: Vec::new(),
            ops: Vec::new(),
            bindings: Vec::new(),
            grads: Vec::new(),
            check_finite: false,
            finished: false,
        }
    }

    /// Like `new`, but every op output is scanned for NaN/Inf and the
    /// offending op is named. Used by the gradient checker.
    pub fn with_finite_checks() -> Self {
        let mut t = Self::new();
        t.check_finite = true;
        t
    }

    /// Register a leaf value with no parameter binding (inputs, targets).
    pub fn constant(&mut self, t: Tensor<T>) -> Val {
        self.push_val(t)
    }

    /// Bind a parameter's current value onto the tape. Binding the same
    /// parameter more than once shares it: gradients from all uses
    /// accumulate into the one parameter.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Val {
        let v = self.push_val(store.value(id).clone());
        self.bindings.push((id, v));
        v
    }

    #[inline]
    pub fn value(&self, v: Val) -> &Tensor<T> {
        &self.vals[v.0]
    }

    #[inline]
    pub fn shape(&self, v: Val) -> &[usize] {
        self.vals[v.0].shape()
    }

    /// Gradient accumulated into `v` by the last `backward` call.
    pub fn grad(&self, v: Val) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub(crate) fn push_val(&mut self, t: Tensor<T>) -> Val {
        let id = self.vals.len();
        self.vals.push(t);
        Val(id)
    }

    pub(crate) fn record(&mut self, op: Op<T>, op_name: &'static str) -> Result<()> {
        debug_assert!(!self.finished, "op recorded after backward");
        if self.check_finite {
            let out = match &op {
                Op::MatMul { out, .. }
                | Op::Conv1x1 { out, .. }
                | Op::BnTrain { out, .. }
                | Op::BnEval { out, .. }
                | Op::Add { out, .. }
                | Op::Sub { out, .. }
                | Op::Mul { out, .. }
                | Op::Scale { out, .. }
                | Op::AddScalar { out, .. }
                | Op::Relu { out, .. }
                | Op::Sigmoid { out, .. }
                | Op::Softmax { out, .. }
                | Op::LogSoftmax { out, .. }
                | Op::GlobalAvgPool { out, .. }
                | Op::AvgPool2 { out, .. }
                | Op::Bilinear { out, .. }
                | Op::Reshape { out, .. }
                | Op::TransposeLast2 { out, .. }
                | Op::Concat { out, .. }
                | Op::SumAll { out, .. }
                | Op::MeanAll { out, .. } => *out,
            };
            if !self.vals[out.0].all_finite() {
                return Err(TensorError::NonFinite { op: op_name });
            }
        }
        self.ops.push(op);
        Ok(())
    }

    /// Reverse pass from a scalar loss. Gradients of every bound parameter
    /// are accumulated into the store; the op record is consumed, so the
    /// tape cannot record further work. Per-value gradients stay readable
    /// through [`Tape::grad`].
    pub fn backward(&mut self, loss: Val, store: &mut ParamStore<T>) -> Result<()> {
        if self.finished {
            return Err(TensorError::Contract("tape already consumed by backward".into()));
        }
        let lt = &self.vals[loss.0];
        if lt.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        self.finished = true;
        self.grads = (0..self.vals.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::full(lt.shape(), T::one()));

        let ops = std::mem::take(&mut self.ops);
        for op in ops.iter().rev() {
            backward_op(op, &self.vals, &mut self.grads);
        }

        for &(pid, val) in &self.bindings {
            if let Some(g) = &self.grads[val.0] {
                let dst = store.grad_mut(pid);
                debug_assert_eq!(dst.shape(), g.shape());
                for (d, s) in dst.data_mut().iter_mut().zip(g.data()) {
                    *d = *d + *s;
                }
            }
        }
        Ok(())
    }
}

fn take_out_grad<T: Scalar>(grads: &[Option<Tensor<T>>], out: Val) -> Option<Tensor<T>> {
    grads[out.0].clone()
}

fn acc_into<T: Scalar>(
    grads: &mut [Option<Tensor<T>>],
    v: Val,
    shape: &[usize],
    write: impl FnOnce(&mut [T]),
) {
    let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(shape));
    write(slot.data_mut());
}

/// Strides of `shape` with 0 substituted on broadcast (extent-1) axes of `b`.
fn broadcast_strides(a_shape: &[usize], b_shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; b_shape.len()];
    let mut s = 1usize;
    for d in (0..b_shape.len()).rev() {
        strides[d] = if b_shape[d] == 1 { 0 } else { s };
        s *= b_shape[d];
    }
    debug_assert_eq!(a_shape.len(), b_shape.len());
    strides
}

/// Calls `f(flat_a, flat_b)` for every position of `a_shape`, where `flat_b`
/// follows `b`'s broadcast strides. Odometer walk, no per-element div/mod.
pub(crate) fn for_each_broadcast(
    a_shape: &[usize],
    b_shape: &[usize],
    mut f: impl FnMut(usize, usize),
) {
    let rank = a_shape.len();
    let bstr = broadcast_strides(a_shape, b_shape);
    let total: usize = a_shape.iter().product();
    let mut idx = vec![0usize; rank];
    let mut bflat = 0usize;
    for aflat in 0..total {
        f(aflat, bflat);
        for d in (0..rank).rev() {
            idx[d] += 1;
            bflat += bstr[d];
            if idx[d] < a_shape[d] {
                break;
            }
            bflat -= bstr[d] * a_shape[d];
            idx[d] = 0;
        }
    }
}

fn backward_op<T: Scalar>(op: &Op<T>, vals: &[Tensor<T>], grads: &mut [Option<Tensor<T>>]) {
    match op {
        Op::MatMul { a, b, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let (ash, bsh) = (vals[a.0].shape().to_vec(), vals[b.0].shape().to_vec());
            let rank = ash.len();
            let (batch, m, k) = if rank == 3 {
                (ash[0], ash[1], ash[2])
            } else {
                (1, ash[0], ash[1])
            };
            let n = bsh[rank - 1];
            let (ad, bd, gd) = (vals[a.0].data(), vals[b.0].data(), g.data());
            // dA = g . B^T
            acc_into(grads, *a, &ash, |da| {
                for bi in 0..batch {
                    let gb = &gd[bi * m * n..(bi + 1) * m * n];
                    let bb = &bd[bi * k * n..(bi + 1) * k * n];
                    let dab = &mut da[bi * m * k..(bi + 1) * m * k];
                    for i in 0..m {
                        for kk in 0..k {
                            let mut s = T::zero();
                            for j in 0..n {
                                s = s + gb[i * n + j] * bb[kk * n + j];
                            }
                            dab[i * k + kk] = dab[i * k + kk] + s;
                        }
                    }
                }
            });
            // dB = A^T . g
            acc_into(grads, *b, &bsh, |db| {
                for bi in 0..batch {
                    let gb = &gd[bi * m * n..(bi + 1) * m * n];
                    let ab = &ad[bi * m * k..(bi + 1) * m * k];
                    let dbb = &mut db[bi * k * n..(bi + 1) * k * n];
                    for i in 0..m {
                        for kk in 0..k {
                            let av = ab[i * k + kk];
                            for j in 0..n {
                                dbb[kk * n + j] = dbb[kk * n + j] + av * gb[i * n + j];
                            }
                        }
                    }
                }
            });
        }
        Op::Conv1x1 { x, w, bias, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let wsh = vals[w.0].shape().to_vec();
            let (n, ci, h, wd) = (xsh[0], xsh[1], xsh[2], xsh[3]);
            let co = wsh[0];
            let hw = h * wd;
            let (xd, wv, gd) = (vals[x.0].data(), vals[w.0].data(), g.data());
            acc_into(grads, *x, &xsh, |dx| {
                for ni in 0..n {
                    for o in 0..co {
                        let gp = &gd[(ni * co + o) * hw..(ni * co + o + 1) * hw];
                        for c in 0..ci {
                            let wv = wv[o * ci + c];
                            let dxp = &mut dx[(ni * ci + c) * hw..(ni * ci + c + 1) * hw];
                            for p in 0..hw {
                                dxp[p] = dxp[p] + wv * gp[p];
                            }
                        }
                    }
                }
            });
            acc_into(grads, *w, &wsh, |dw| {
                for ni in 0..n {
                    for o in 0..co {
                        let gp = &gd[(ni * co + o) * hw..(ni * co + o + 1) * hw];
                        for c in 0..ci {
                            let xp = &xd[(ni * ci + c) * hw..(ni * ci + c + 1) * hw];
                            let mut s = T::zero();
                            for p in 0..hw {
                                s = s + gp[p] * xp[p];
                            }
                            dw[o * ci + c] = dw[o * ci + c] + s;
                        }
                    }
                }
            });
            acc_into(grads, *bias, &[co], |db| {
                for ni in 0..n {
                    for o in 0..co {
                        let gp = &gd[(ni * co + o) * hw..(ni * co + o + 1) * hw];
                        let mut s = T::zero();
                        for p in 0..hw {
                            s = s + gp[p];
                        }
                        db[o] = db[o] + s;
                    }
                }
            });
        }
        Op::BnTrain { x, gamma, beta, out, xhat, inv_std } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let (n, c, h, w) = (xsh[0], xsh[1], xsh[2], xsh[3]);
            let hw = h * w;
            let m = T::from_f64((n * hw) as f64);
            let gd = g.data();
            let gv = vals[gamma.0].data();
            // per-channel sums of g and g*xhat
            let mut sum_g = vec![T::zero(); c];
            let mut sum_gx = vec![T::zero(); c];
            for ni in 0..n {
                for ch in 0..c {
                    let base = (ni * c + ch) * hw;
                    for p in 0..hw {
                        let gg = gd[base + p];
                        sum_g[ch] = sum_g[ch] + gg;
                        sum_gx[ch] = sum_gx[ch] + gg * xhat[base + p];
                    }
                }
            }
            acc_into(grads, *gamma, &[c], |dg| {
                for ch in 0..c {
                    dg[ch] = dg[ch] + sum_gx[ch];
                }
            });
            acc_into(grads, *beta, &[c], |db| {
                for ch in 0..c {
                    db[ch] = db[ch] + sum_g[ch];
                }
            });
            acc_into(grads, *x, &xsh, |dx| {
                for ni in 0..n {
                    for ch in 0..c {
                        let base = (ni * c + ch) * hw;
                        let k = gv[ch] * inv_std[ch];
                        let mg = sum_g[ch] / m;
                        let mgx = sum_gx[ch] / m;
                        for p in 0..hw {
                            dx[base + p] =
                                dx[base + p] + k * (gd[base + p] - mg - xhat[base + p] * mgx);
                        }
                    }
                }
            });
        }
        Op::BnEval { x, gamma, beta, out, xhat, inv_std } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let (n, c, h, w) = (xsh[0], xsh[1], xsh[2], xsh[3]);
            let hw = h * w;
            let gd = g.data();
            let gv = vals[gamma.0].data();
            acc_into(grads, *gamma, &[c], |dg| {
                for ni in 0..n {
                    for ch in 0..c {
                        let base = (ni * c + ch) * hw;
                        let mut s = T::zero();
                        for p in 0..hw {
                            s = s + gd[base + p] * xhat[base + p];
                        }
                        dg[ch] = dg[ch] + s;
                    }
                }
            });
            acc_into(grads, *beta, &[c], |db| {
                for ni in 0..n {
                    for ch in 0..c {
                        let base = (ni * c + ch) * hw;
                        let mut s = T::zero();
                        for p in 0..hw {
                            s = s + gd[base + p];
                        }
                        db[ch] = db[ch] + s;
                    }
                }
            });
            acc_into(grads, *x, &xsh, |dx| {
                for ni in 0..n {
                    for ch in 0..c {
                        let base = (ni * c + ch) * hw;
                        let k = gv[ch] * inv_std[ch];
                        for p in 0..hw {
                            dx[base + p] = dx[base + p] + k * gd[base + p];
                        }
                    }
                }
            });
        }
        Op::Add { a, b, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let (ash, bsh) = (vals[a.0].shape().to_vec(), vals[b.0].shape().to_vec());
            let gd = g.data();
            acc_into(grads, *a, &ash, |da| {
                for (d, s) in da.iter_mut().zip(gd) {
                    *d = *d + *s;
                }
            });
            acc_into(grads, *b, &bsh, |db| {
                for_each_broadcast(&ash, &bsh, |ai, bi| {
                    db[bi] = db[bi] + gd[ai];
                });
            });
        }
        Op::Sub { a, b, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let (ash, bsh) = (vals[a.0].shape().to_vec(), vals[b.0].shape().to_vec());
            let gd = g.data();
            acc_into(grads, *a, &ash, |da| {
                for (d, s) in da.iter_mut().zip(gd) {
                    *d = *d + *s;
                }
            });
            acc_into(grads, *b, &bsh, |db| {
                for_each_broadcast(&ash, &bsh, |ai, bi| {
                    db[bi] = db[bi] - gd[ai];
                });
            });
        }
        Op::Mul { a, b, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let (ash, bsh) = (vals[a.0].shape().to_vec(), vals[b.0].shape().to_vec());
            let gd = g.data();
            let (ad, bd) = (vals[a.0].data(), vals[b.0].data());
            acc_into(grads, *a, &ash, |da| {
                for_each_broadcast(&ash, &bsh, |ai, bi| {
                    da[ai] = da[ai] + gd[ai] * bd[bi];
                });
            });
            acc_into(grads, *b, &bsh, |db| {
                for_each_broadcast(&ash, &bsh, |ai, bi| {
                    db[bi] = db[bi] + gd[ai] * ad[ai];
                });
            });
        }
        Op::Scale { a, c, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let ash = vals[a.0].shape().to_vec();
            let gd = g.data();
            acc_into(grads, *a, &ash, |da| {
                for (d, s) in da.iter_mut().zip(gd) {
                    *d = *d + *c * *s;
                }
            });
        }
        Op::AddScalar { a, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let ash = vals[a.0].shape().to_vec();
            let gd = g.data();
            acc_into(grads, *a, &ash, |da| {
                for (d, s) in da.iter_mut().zip(gd) {
                    *d = *d + *s;
                }
            });
        }
        Op::Relu { x, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let (xd, gd) = (vals[x.0].data(), g.data());
            acc_into(grads, *x, &xsh, |dx| {
                for i in 0..gd.len() {
                    if xd[i] > T::zero() {
                        dx[i] = dx[i] + gd[i];
                    }
                }
            });
        }
        Op::Sigmoid { x, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let (yd, gd) = (vals[out.0].data(), g.data());
            acc_into(grads, *x, &xsh, |dx| {
                for i in 0..gd.len() {
                    dx[i] = dx[i] + gd[i] * yd[i] * (T::one() - yd[i]);
                }
            });
        }
        Op::Softmax { x, axis, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let (outer, len, inner) = axis_split(&xsh, *axis);
            let (yd, gd) = (vals[out.0].data(), g.data());
            acc_into(grads, *x, &xsh, |dx| {
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * len * inner + i;
                        let mut dot = T::zero();
                        for a in 0..len {
                            let off = base + a * inner;
                            dot = dot + gd[off] * yd[off];
                        }
                        for a in 0..len {
                            let off = base + a * inner;
                            dx[off] = dx[off] + yd[off] * (gd[off] - dot);
                        }
                    }
                }
            });
        }
        Op::LogSoftmax { x, axis, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let (outer, len, inner) = axis_split(&xsh, *axis);
            let (yd, gd) = (vals[out.0].data(), g.data());
            acc_into(grads, *x, &xsh, |dx| {
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * len * inner + i;
                        let mut sum_g = T::zero();
                        for a in 0..len {
                            sum_g = sum_g + gd[base + a * inner];
                        }
                        for a in 0..len {
                            let off = base + a * inner;
                            dx[off] = dx[off] + gd[off] - yd[off].exp() * sum_g;
                        }
                    }
                }
            });
        }
        Op::GlobalAvgPool { x, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let (n, c, h, w) = (xsh[0], xsh[1], xsh[2], xsh[3]);
            let hw = h * w;
            let inv = T::one() / T::from_f64(hw as f64);
            let gd = g.data();
            acc_into(grads, *x, &xsh, |dx| {
                for nc in 0..n * c {
                    let gv = gd[nc] * inv;
                    for p in 0..hw {
                        dx[nc * hw + p] = dx[nc * hw + p] + gv;
                    }
                }
            });
        }
        Op::AvgPool2 { x, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let (n, c, h, w) = (xsh[0], xsh[1], xsh[2], xsh[3]);
            let (oh, ow) = (h / 2, w / 2);
            let q = T::from_f64(0.25);
            let gd = g.data();
            acc_into(grads, *x, &xsh, |dx| {
                for nc in 0..n * c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let gv = gd[(nc * oh + oy) * ow + ox] * q;
                            let b = (nc * h + 2 * oy) * w + 2 * ox;
                            dx[b] = dx[b] + gv;
                            dx[b + 1] = dx[b + 1] + gv;
                            dx[b + w] = dx[b + w] + gv;
                            dx[b + w + 1] = dx[b + w + 1] + gv;
                        }
                    }
                }
            });
        }
        Op::Bilinear { x, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let osh = vals[out.0].shape().to_vec();
            let (n, c, h, w) = (xsh[0], xsh[1], xsh[2], xsh[3]);
            let (oh, ow) = (osh[2], osh[3]);
            let gd = g.data();
            acc_into(grads, *x, &xsh, |dx| {
                for nc in 0..n * c {
                    let gp = &gd[nc * oh * ow..(nc + 1) * oh * ow];
                    let dp = &mut dx[nc * h * w..(nc + 1) * h * w];
                    for oy in 0..oh {
                        let (y0, y1, fy) = crate::kernels::bilinear_coords(oy, h, oh);
                        let fy = T::from_f64(fy);
                        for ox in 0..ow {
                            let (x0, x1, fx) = crate::kernels::bilinear_coords(ox, w, ow);
                            let fx = T::from_f64(fx);
                            let gv = gp[oy * ow + ox];
                            let wy0 = T::one() - fy;
                            let wx0 = T::one() - fx;
                            dp[y0 * w + x0] = dp[y0 * w + x0] + gv * wy0 * wx0;
                            dp[y0 * w + x1] = dp[y0 * w + x1] + gv * wy0 * fx;
                            dp[y1 * w + x0] = dp[y1 * w + x0] + gv * fy * wx0;
                            dp[y1 * w + x1] = dp[y1 * w + x1] + gv * fy * fx;
                        }
                    }
                }
            });
        }
        Op::Reshape { x, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let gd = g.data();
            acc_into(grads, *x, &xsh, |dx| {
                for (d, s) in dx.iter_mut().zip(gd) {
                    *d = *d + *s;
                }
            });
        }
        Op::TransposeLast2 { x, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let rank = xsh.len();
            let (rows, cols) = (xsh[rank - 2], xsh[rank - 1]);
            let batch: usize = xsh[..rank - 2].iter().product();
            let gd = g.data();
            acc_into(grads, *x, &xsh, |dx| {
                for bi in 0..batch {
                    let gb = &gd[bi * rows * cols..(bi + 1) * rows * cols];
                    let db = &mut dx[bi * rows * cols..(bi + 1) * rows * cols];
                    // g has shape (cols, rows) per batch item
                    for r in 0..rows {
                        for cc in 0..cols {
                            db[r * cols + cc] = db[r * cols + cc] + gb[cc * rows + r];
                        }
                    }
                }
            });
        }
        Op::Concat { parts, axis, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let osh = vals[out.0].shape().to_vec();
            let (outer, _, inner) = axis_split(&osh, *axis);
            let gd = g.data();
            let total_axis = osh[*axis];
            let mut offset = 0usize;
            for part in parts {
                let psh = vals[part.0].shape().to_vec();
                let plen = psh[*axis];
                let start = offset;
                acc_into(grads, *part, &psh, |dp| {
                    for o in 0..outer {
                        for a in 0..plen {
                            let src = (o * total_axis + start + a) * inner;
                            let dst = (o * plen + a) * inner;
                            for i in 0..inner {
                                dp[dst + i] = dp[dst + i] + gd[src + i];
                            }
                        }
                    }
                });
                offset += plen;
            }
        }
        Op::SumAll { x, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let gv = g.data()[0];
            acc_into(grads, *x, &xsh, |dx| {
                for d in dx.iter_mut() {
                    *d = *d + gv;
                }
            });
        }
        Op::MeanAll { x, out } => {
            let Some(g) = take_out_grad(grads, *out) else { return };
            let xsh = vals[x.0].shape().to_vec();
            let numel: usize = xsh.iter().product();
            let gv = g.data()[0] / T::from_f64(numel as f64);
            acc_into(grads, *x, &xsh, |dx| {
                for d in dx.iter_mut() {
                    *d = *d + gv;
                }
            });
        }
    }
}
