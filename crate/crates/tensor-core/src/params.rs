use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Stable handle to a trainable parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Handle to a non-trainable state tensor (batch-norm running statistics).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

/// Trainable tensor plus its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Registry of all parameters and state buffers of a model, in registration
/// order. Checkpoints, the optimizer, and the gradient checker walk it by
/// name, so registration order and names must be deterministic.
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    buffers: Vec<(String, Tensor<T>)>,
    param_names: HashMap<String, usize>,
    buffer_names: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            buffers: Vec::new(),
            param_names: HashMap::new(),
            buffer_names: HashMap::new(),
        }
    }

    pub fn add_param(&mut self, name: impl Into<String>, init: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.param_names.contains_key(&name) {
            return Err(TensorError::Config(format!("duplicate parameter `{name}`")));
        }
        let id = self.params.len();
        self.param_names.insert(name.clone(), id);
        let grad = Tensor::zeros(init.shape());
        self.params.push(Parameter {
            name,
            value: init,
            grad,
        });
        Ok(ParamId(id))
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, init: Tensor<T>) -> Result<BufferId> {
        let name = name.into();
        if self.buffer_names.contains_key(&name) {
            return Err(TensorError::Config(format!("duplicate buffer `{name}`")));
        }
        let id = self.buffers.len();
        self.buffer_names.insert(name.clone(), id);
        self.buffers.push((name, init));
        Ok(BufferId(id))
    }

    #[inline]
    pub fn param(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    #[inline]
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    #[inline]
    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].grad
    }

    #[inline]
    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].grad
    }

    /// Mutable value together with the (read-only) gradient; for optimizers.
    #[inline]
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor<T>, &Tensor<T>) {
        let p = &mut self.params[id.0];
        (&mut p.value, &p.grad)
    }

    #[inline]
    pub fn buffer(&self, id: BufferId) -> &Tensor<T> {
        &self.buffers[id.0].1
    }

    #[inline]
    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor<T> {
        &mut self.buffers[id.0].1
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = T::zero();
            }
        }
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.buffers.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn find_param(&self, name: &str) -> Option<ParamId> {
        self.param_names.get(name).copied().map(ParamId)
    }

    pub fn find_buffer(&self, name: &str) -> Option<BufferId> {
        self.buffer_names.get(name).copied().map(BufferId)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Total number of scalar parameter components.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}
