//! Adam optimizer and gradient utilities.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bias-corrected Adam. Moment state is keyed by parameter name and created
/// lazily on the first step.
pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (Tensor<S>, Tensor<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Paper default learning rate.
    pub fn default_lr() -> Self {
        Adam::new(1e-4)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. Every trainable parameter in the store must have a
    /// gradient entry.
    pub fn step(
        &mut self,
        store: &mut ParameterStore<S>,
        grads: &BTreeMap<String, Tensor<S>>,
    ) -> Result<()> {
        self.step += 1;
        let b1 = S::from_f(self.beta1);
        let b2 = S::from_f(self.beta2);
        let one = S::one();
        let lr = S::from_f(self.lr);
        let eps = S::from_f(self.eps);
        let bc1 = S::from_f(1.0 - self.beta1.powi(self.step as i32));
        let bc2 = S::from_f(1.0 - self.beta2.powi(self.step as i32));

        let names: Vec<String> = store.iter_trainable().map(|(n, _)| n.clone()).collect();
        for name in names {
            let g = grads
                .get(&name)
                .ok_or_else(|| Error::MissingGradient(name.clone()))?;
            let theta = store.get(&name)?;
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(g.rows(), g.cols()), Tensor::zeros(g.rows(), g.cols())));
            let new_m = m.zip_map(g, |mv, gv| b1 * mv + (one - b1) * gv);
            let new_v = v.zip_map(g, |vv, gv| b2 * vv + (one - b2) * gv * gv);
            let mut updated = Vec::with_capacity(theta.len());
            for i in 0..theta.len() {
                let mhat = new_m.data()[i] / bc1;
                let vhat = new_v.data()[i] / bc2;
                updated.push(theta.data()[i] - lr * mhat / (vhat.sqrt() + eps));
            }
            let shape = theta.shape().to_vec();
            store.set(&name, Tensor::from_vec(shape, updated))?;
            *m = new_m;
            *v = new_v;
        }
        Ok(())
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm<S: Scalar>(grads: &mut BTreeMap<String, Tensor<S>>, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.values() {
        for v in g.data() {
            let x = v.to_f();
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = S::from_f(max_norm / norm);
        for g in grads.values_mut() {
            *g = g.scale(k);
        }
    }
    norm
}

/// Accumulate `src` into `dst` (union of keys).
pub fn accumulate_grads<S: Scalar>(
    dst: &mut BTreeMap<String, Tensor<S>>,
    src: BTreeMap<String, Tensor<S>>,
) {
    for (name, g) in src {
        match dst.get_mut(&name) {
            Some(acc) => acc.accumulate(&g),
            None => {
                dst.insert(name, g);
            }
        }
    }
}

/// Divide every gradient by `n` (mean over a batch).
pub fn scale_grads<S: Scalar>(grads: &mut BTreeMap<String, Tensor<S>>, k: f64) {
    let ks = S::from_f(k);
    for g in grads.values_mut() {
        *g = g.scale(ks);
    }
}
