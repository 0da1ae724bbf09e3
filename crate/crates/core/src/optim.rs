use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for the trainable entries of one [`ParameterStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    /// `(m, v)` per store entry; `None` for buffers.
    moments: Vec<Option<(Tensor<T>, Tensor<T>)>>,
    step_count: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParameterStore<T>, config: AdamConfig) -> Self {
        let moments = store
            .iter()
            .map(|(_, e)| {
                e.trainable
                    .then(|| (Tensor::zeros(e.value.shape()), Tensor::zeros(e.value.shape())))
            })
            .collect();
        Self {
            config,
            moments,
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moment_count(&self) -> usize {
        self.moments.iter().flatten().count()
    }
}

/// One bias-corrected Adam update of every trainable parameter, then clears
/// all gradients. Fails before touching anything if a gradient is missing.
pub fn adam_step<T: Scalar>(store: &mut ParameterStore<T>, state: &mut AdamState<T>) -> Result<()> {
    assert_eq!(store.len(), state.moments.len(), "optimizer state built for another store");
    if let Some((_, e)) = store.trainable().find(|(_, e)| e.grad.is_none()) {
        return Err(Error::MissingGradient(e.name.clone()));
    }
    state.step_count += 1;
    let c = &state.config;
    let t = state.step_count as i32;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let bias1 = T::lit(1.0 - num_traits::Float::powi(c.beta1, t));
    let bias2 = T::lit(1.0 - num_traits::Float::powi(c.beta2, t));
    let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
    for (entry, slot) in store.iter_mut().zip(state.moments.iter_mut()) {
        let Some((m, v)) = slot else { continue };
        let grad = entry.grad.take().expect("checked above");
        let params = entry.value.data_mut();
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    store.zero_grads();
    Ok(())
}
