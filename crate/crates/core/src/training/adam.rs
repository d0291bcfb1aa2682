use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Real, Tensor};

pub const DEFAULT_BETAS: (f64, f64) = (0.9, 0.999);
pub const DEFAULT_EPS: f64 = 1e-8;

/// Adam moments for the parameters that were trainable at construction.
#[derive(Clone, Debug)]
pub struct Adam<T: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: usize,
    moments: BTreeMap<ParamId, (Tensor<T>, Tensor<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let moments = store
            .trainable_ids()
            .into_iter()
            .map(|id| {
                let shape = store.value(id).shape();
                (id, (Tensor::zeros(shape), Tensor::zeros(shape)))
            })
            .collect();
        Self { beta1: DEFAULT_BETAS.0, beta2: DEFAULT_BETAS.1, eps: DEFAULT_EPS, step: 0, moments }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn tracked(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.moments.keys().copied()
    }

    /// One bias-corrected update of every tracked parameter that is still
    /// trainable, then clears all gradients. Frozen values are never written.
    pub fn step(&mut self, store: &mut ParamStore<T>, lr: f64) -> Result<()> {
        if !store.grads_pending() {
            return Err(Error::Contract("optimizer step without a preceding backward pass".into()));
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let (b1, b2, eps) = (T::from_f64(b1), T::from_f64(b2), T::from_f64(self.eps));
        let (c1, c2, lr) = (T::from_f64(c1), T::from_f64(c2), T::from_f64(lr));
        let one = T::one();
        for (&id, (m, v)) in &mut self.moments {
            if !store.get(id).trainable() {
                continue;
            }
            let (value, grad) = store.value_and_grad_mut(id);
            let w = value.data_mut();
            for (((w, &g), m), v) in w.iter_mut().zip(grad.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *w = *w - lr * mh / (vh.sqrt() + eps);
            }
        }
        store.zero_grad();
        Ok(())
    }
}

/// Linear warmup from 0 over the first `ceil(0.1 · total_steps)` steps, then
/// constant. Steps count from 1.
pub fn lr_schedule(step: usize, total_steps: usize, base_lr: f64) -> f64 {
    let warmup = total_steps.div_ceil(10);
    if warmup == 0 || step >= warmup {
        base_lr
    } else {
        base_lr * step as f64 / warmup as f64
    }
}
