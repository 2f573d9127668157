//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Learning rate 3e-5 with the usual beta/eps values.
    pub const PAPER: Self = Self { lr: 3e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 };

    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::PAPER }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::PAPER
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { config, step_count: 0, first_moment: zeros(), second_moment: zeros() }
    }

    fn check_layout(&self, params: &[Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            p.same_shape(g, "adam grad")?;
            p.same_shape(m, "adam moment")?;
        }
        Ok(())
    }

    /// One update of `params` in place.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        self.check_layout(params, grads)?;
        self.step_count += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step_count as i32;
        let bc1 = T::lit(1.0 - beta1.powi(t));
        let bc2 = T::lit(1.0 - beta2.powi(t));
        let (lr, b1, b2, eps) = (T::lit(lr), T::lit(beta1), T::lit(beta2), T::lit(eps));
        let one = T::one();

        for (((p, g), m), v) in
            params.iter_mut().zip(grads).zip(self.first_moment.iter_mut()).zip(self.second_moment.iter_mut())
        {
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step<T: Scalar>(params: &mut [Tensor<T>], grads: &[Tensor<T>], state: &mut AdamState<T>) -> Result<()> {
    state.step(params, grads)
}
