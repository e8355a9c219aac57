//! AdamW with decoupled weight decay and the poly learning-rate schedule.

use tensor_core::{ParamStore, Tensor};

use crate::error::{Result, SegError};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const POLY_POWER: f64 = 0.9;

/// lr(t) = lr0 * (1 - t/total)^power.
pub fn poly_lr(lr0: f32, t: u64, total: u64, power: f64) -> f32 {
    let frac = 1.0 - t as f64 / total as f64;
    (lr0 as f64 * frac.max(0.0).powf(power)) as f32
}

pub struct AdamW {
    pub lr0: f32,
    pub weight_decay: f32,
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
    pub step_count: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore<f32>, lr0: f32, weight_decay: f32) -> AdamW {
        let m = store
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        let v = store
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        AdamW {
            lr0,
            weight_decay,
            m,
            v,
            step_count: 0,
        }
    }

    /// One update from the gradients currently held in the store.
    pub fn step(&mut self, store: &mut ParamStore<f32>, lr: f32) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let (b1, b2) = (ADAM_BETA1 as f32, ADAM_BETA2 as f32);
        let eps = ADAM_EPS as f32;
        let wd = self.weight_decay;
        let ids: Vec<_> = store.param_ids().collect();
        for (slot, pid) in ids.into_iter().enumerate() {
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            let (value, grad) = store.value_and_grad_mut(pid);
            let p = value.data_mut();
            let g = grad.data();
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1 as f32;
                let vhat = v[i] / bc2 as f32;
                p[i] -= lr * (mhat / (vhat.sqrt() + eps)) + lr * wd * p[i];
            }
        }
    }

    /// Moment tensors paired with their parameter names, for checkpointing.
    pub fn moments<'a>(
        &'a self,
        store: &'a ParamStore<f32>,
    ) -> impl Iterator<Item = (&'a str, &'a Tensor<f32>, &'a Tensor<f32>)> + 'a {
        store
            .params()
            .iter()
            .zip(self.m.iter().zip(&self.v))
            .map(|(p, (m, v))| (p.name.as_str(), m, v))
    }

    pub fn restore_moment(
        &mut self,
        store: &ParamStore<f32>,
        name: &str,
        first: bool,
        tensor: Tensor<f32>,
    ) -> Result<()> {
        let pid = store
            .find_param(name)
            .ok_or_else(|| SegError::Data(format!("checkpoint moment for unknown parameter `{name}`")))?;
        let slot = store
            .params()
            .iter()
            .position(|p| p.name == name)
            .expect("name resolved above");
        let dst = if first { &mut self.m[slot] } else { &mut self.v[slot] };
        if dst.shape() != tensor.shape() {
            return Err(SegError::Data(format!(
                "moment `{name}` shape {:?} does not match parameter shape {:?}",
                tensor.shape(),
                store.value(pid).shape()
            )));
        }
        *dst = tensor;
        Ok(())
    }
}
