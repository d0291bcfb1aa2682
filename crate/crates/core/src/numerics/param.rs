use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{Gradients, Real, Tensor};
use crate::error::{Error, Result};

/// Index of a [`Parameter`] inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named tensor with a gradient slot and a trainable flag.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    path: String,
    value: Tensor<T>,
    grad: Tensor<T>,
    trainable: bool,
}

impl<T: Real> Parameter<T> {
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn grad(&self) -> &Tensor<T> {
        &self.grad
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Owns every parameter of a model, addressed by id or by unique path.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_path: HashMap<String, ParamId>,
    grads_pending: bool,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new(), by_path: HashMap::new(), grads_pending: false }
    }

    pub fn add(&mut self, path: impl Into<String>, value: Tensor<T>, trainable: bool) -> Result<ParamId> {
        let path = path.into();
        if self.by_path.contains_key(&path) {
            return Err(Error::Contract(format!("duplicate parameter path {path}")));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.by_path.insert(path.clone(), id);
        self.params.push(Parameter { path, value, grad, trainable });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    /// Direct write access to a value. Optimizers and checkpoint loading go
    /// through here; nothing else should.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape("set_value", p.value.shape(), value.shape()));
        }
        p.value = value;
        Ok(())
    }

    pub fn id(&self, path: &str) -> Option<ParamId> {
        self.by_path.get(path).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect()
    }

    /// Total element count of trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.len()).sum()
    }

    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Adds `grads` into the gradient slots. Values are never touched.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (id, g) in grads.params() {
            let slot = &mut self.params[id.0].grad;
            for (s, &v) in slot.data_mut().iter_mut().zip(g.data()) {
                *s = *s + v;
            }
        }
        self.grads_pending = true;
    }

    /// True once [`accumulate`](Self::accumulate) has run since the last
    /// [`zero_grad`](Self::zero_grad).
    pub fn grads_pending(&self) -> bool {
        self.grads_pending
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        self.grads_pending = false;
    }

    pub(crate) fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor<T>, &Tensor<T>) {
        let p = &mut self.params[id.0];
        (&mut p.value, &p.grad)
    }

    /// SHA-256 over the paths and value bytes of the selected parameters,
    /// in id order.
    pub fn checksum(&self, mut select: impl FnMut(&Parameter<T>) -> bool) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        for p in self.params.iter().filter(|p| select(p)) {
            buf.clear();
            buf.extend_from_slice(p.path.as_bytes());
            buf.push(0);
            for &v in p.value.data() {
                v.append_le_bytes(&mut buf);
            }
            hasher.update(&buf);
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checksum of every currently frozen parameter.
    pub fn frozen_checksum(&self) -> String {
        self.checksum(|p| !p.trainable)
    }
}
