//! Parameter-holding building blocks: 1x1 convolution, batch normalization,
//! and the Conv -> BN -> ReLU unit every head in the network is made of.
//! Layers hold only handles into a [`ParamStore`], so the same layer
//! definition runs against an f32 store for training and an f64 store for
//! gradient checking.

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::params::{BufferId, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::{Tape, Val};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Kaiming-style fan-in uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
pub fn kaiming_uniform<T: Scalar>(rng: &mut impl Rng, out_ch: usize, in_ch: usize) -> Tensor<T> {
    let bound = (6.0 / in_ch as f64).sqrt();
    Tensor::from_fn(&[out_ch, in_ch], |_| {
        T::from_f64(rng.gen_range(-bound..bound))
    })
}

/// 1x1 convolution layer (weight C_out x C_in plus bias).
pub struct Conv1x1 {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl Conv1x1 {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weight = store.add_param(format!("{name}.weight"), kaiming_uniform(rng, out_ch, in_ch))?;
        let bias = store.add_param(format!("{name}.bias"), Tensor::zeros(&[out_ch]))?;
        Ok(Conv1x1 {
            weight,
            bias,
            in_ch,
            out_ch,
        })
    }

    /// Zero-initialized variant; used where a branch should start inert.
    pub fn zeroed<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
    ) -> Result<Self> {
        let weight = store.add_param(format!("{name}.weight"), Tensor::zeros(&[out_ch, in_ch]))?;
        let bias = store.add_param(format!("{name}.bias"), Tensor::zeros(&[out_ch]))?;
        Ok(Conv1x1 {
            weight,
            bias,
            in_ch,
            out_ch,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Val,
    ) -> Result<Val> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv1x1(x, w, b)
    }
}

/// Batch normalization with running statistics kept as store buffers.
/// Train mode normalizes with batch statistics and folds them into the
/// running state by exponential moving average; eval mode is frozen and
/// errors if no training step ever populated the state.
pub struct BatchNorm {
    pub name: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    pub initialized: BufferId,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, ch: usize) -> Result<Self> {
        let gamma = store.add_param(format!("{name}.gamma"), Tensor::ones(&[ch]))?;
        let beta = store.add_param(format!("{name}.beta"), Tensor::zeros(&[ch]))?;
        let running_mean = store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[ch]))?;
        let running_var = store.add_buffer(format!("{name}.running_var"), Tensor::ones(&[ch]))?;
        let initialized = store.add_buffer(format!("{name}.initialized"), Tensor::zeros(&[1]))?;
        Ok(BatchNorm {
            name: name.to_string(),
            gamma,
            beta,
            running_mean,
            running_var,
            initialized,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        x: Val,
        train: bool,
    ) -> Result<Val> {
        let gamma = tape.param(store, self.gamma);
        let beta = tape.param(store, self.beta);
        if train {
            let (y, mean, var) = tape.batch_norm_train(x, gamma, beta, self.eps)?;
            let mom = T::from_f64(self.momentum);
            let keep = T::one() - mom;
            {
                let rm = store.buffer_mut(self.running_mean);
                for (r, &m) in rm.data_mut().iter_mut().zip(mean.data()) {
                    *r = keep * *r + mom * m;
                }
            }
            {
                let rv = store.buffer_mut(self.running_var);
                for (r, &v) in rv.data_mut().iter_mut().zip(var.data()) {
                    *r = keep * *r + mom * v;
                }
            }
            store.buffer_mut(self.initialized).data_mut()[0] = T::one();
            Ok(y)
        } else {
            if store.buffer(self.initialized).data()[0] == T::zero() {
                return Err(TensorError::State(format!(
                    "batch norm `{}` evaluated before any train step populated its running statistics",
                    self.name
                )));
            }
            let rm = store.buffer(self.running_mean).clone();
            let rv = store.buffer(self.running_var).clone();
            tape.batch_norm_eval(x, gamma, beta, &rm, &rv, self.eps)
        }
    }

    /// Overwrite the running statistics (marks the state as populated).
    /// Test fixtures use this to pin BN to an identity transform.
    pub fn set_running_stats<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        mean: &[T],
        var: &[T],
    ) -> Result<()> {
        if store.buffer(self.running_mean).len() != mean.len()
            || store.buffer(self.running_var).len() != var.len()
        {
            return Err(TensorError::Contract(
                "running stats length mismatch".into(),
            ));
        }
        store
            .buffer_mut(self.running_mean)
            .data_mut()
            .copy_from_slice(mean);
        store
            .buffer_mut(self.running_var)
            .data_mut()
            .copy_from_slice(var);
        store.buffer_mut(self.initialized).data_mut()[0] = T::one();
        Ok(())
    }
}

/// Conv1x1 -> BN -> ReLU.
pub struct ConvBnRelu {
    pub conv: Conv1x1,
    pub bn: BatchNorm,
}

impl ConvBnRelu {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(ConvBnRelu {
            conv: Conv1x1::new(store, &format!("{name}.conv"), in_ch, out_ch, rng)?,
            bn: BatchNorm::new(store, &format!("{name}.bn"), out_ch)?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        x: Val,
        train: bool,
    ) -> Result<Val> {
        let y = self.conv.forward(tape, store, x)?;
        let y = self.bn.forward(tape, store, y, train)?;
        tape.relu(y)
    }
}
