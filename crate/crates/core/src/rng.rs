//! Seeded random source.
//!
//! Draws come from ChaCha8 (a counter-based stream cipher generator), so a
//! given `(seed, stream)` pair yields the same sequence on every platform.
//! Normal variates use the ziggurat sampler from `rand_distr`.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent sub-stream of `seed`, e.g. one per training step or per
    /// utterance.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("uniform bounds [{lo}, {hi}) are invalid")));
        }
        let u: f64 = self.inner.random();
        Ok((lo + (hi - lo) * u).min(hi))
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    pub fn normal_vec<T: Scalar>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| T::lit(self.normal())).collect()
    }

    pub fn randn<T: Scalar>(&mut self, shape: &[usize]) -> Tensor<T> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), self.normal_vec(n)).expect("randn shape")
    }
}
