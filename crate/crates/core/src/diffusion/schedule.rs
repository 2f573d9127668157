use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `sqrt(alpha_bar_T)` must stay below this for a training schedule to reach
/// a sufficiently noisy endpoint.
pub const FINAL_LEVEL_LIMIT: f64 = 0.5;

/// Continuous noise level `sqrt(alpha_bar)` in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct NoiseLevel<T>(T);

impl<T: Scalar> NoiseLevel<T> {
    pub fn new(sqrt_alpha_bar: T) -> Result<Self> {
        if sqrt_alpha_bar > T::zero() && sqrt_alpha_bar <= T::one() {
            Ok(Self(sqrt_alpha_bar))
        } else {
            Err(Error::InvalidArgument(format!("noise level {sqrt_alpha_bar} outside (0, 1]")))
        }
    }

    pub fn get(self) -> T {
        self.0
    }
}

/// Named schedules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulePreset {
    /// `Linear(1e-6, 0.006, 1000)`.
    #[serde(rename = "paper-train-1000")]
    PaperTrain1000,
    /// Eight hand-picked betas from `1e-6` to `0.9`.
    #[serde(rename = "paper-infer-8")]
    PaperInfer8,
}

impl SchedulePreset {
    pub const INFER_8_BETAS: [f64; 8] = [1e-6, 2e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 9e-1];

    pub fn name(self) -> &'static str {
        match self {
            Self::PaperTrain1000 => "paper-train-1000",
            Self::PaperInfer8 => "paper-infer-8",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "paper-train-1000" => Ok(Self::PaperTrain1000),
            "paper-infer-8" => Ok(Self::PaperInfer8),
            other => Err(Error::Schedule(format!("unknown preset {other:?}"))),
        }
    }

    pub fn build<T: Scalar>(self) -> NoiseSchedule<T> {
        match self {
            Self::PaperTrain1000 => NoiseSchedule::linear(1e-6, 0.006, 1000),
            Self::PaperInfer8 => NoiseSchedule::manual(&Self::INFER_8_BETAS),
        }
        .expect("preset schedules are valid")
    }
}

/// `beta_{1..T}` with the derived `alpha_t = 1 - beta_t`,
/// `alpha_bar_t = prod_{s <= t} alpha_s` (`alpha_bar_0 = 1`) and
/// `sigma_t = sqrt((1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t)`.
/// Steps are 1-based throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<T> {
    betas: Vec<T>,
    alphas: Vec<T>,
    /// `T + 1` entries, index 0 is 1.
    alpha_bars: Vec<T>,
    sigmas: Vec<T>,
}

impl<T: Scalar> NoiseSchedule<T> {
    /// `beta_t = beta_min + (beta_max - beta_min) (t - 1) / (T - 1)`.
    pub fn linear(beta_min: f64, beta_max: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Schedule("a schedule needs at least one step".into()));
        }
        if !(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::Schedule(format!("need 0 < {beta_min} <= {beta_max} < 1")));
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![beta_min]
        } else {
            (0..steps).map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64).collect()
        };
        Self::manual(&betas)
    }

    pub fn manual(betas: &[f64]) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Schedule("empty beta list".into()));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::Schedule(format!("beta {b} outside (0, 1)")));
        }
        Ok(Self::derive(betas.iter().map(|&b| T::lit(b)).collect()))
    }

    fn derive(betas: Vec<T>) -> Self {
        let alphas: Vec<T> = betas.iter().map(|&b| T::one() - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(T::one());
        for &a in &alphas {
            let prev = *alpha_bars.last().unwrap();
            alpha_bars.push(prev * a);
        }
        let sigmas = (1..=betas.len())
            .map(|t| ((T::one() - alpha_bars[t - 1]) / (T::one() - alpha_bars[t]) * betas[t - 1]).sqrt())
            .collect();
        Self { betas, alphas, alpha_bars, sigmas }
    }

    /// Recomputes the derived tables from the betas and checks they agree and
    /// that `alpha_bar` strictly decreases.
    pub fn validate(&self) -> Result<()> {
        let fresh = Self::derive(self.betas.clone());
        if fresh != *self {
            return Err(Error::Schedule("derived tables do not match the betas".into()));
        }
        if self.betas.iter().any(|&b| !(b > T::zero() && b < T::one())) {
            return Err(Error::Schedule("beta outside (0, 1)".into()));
        }
        if self.alpha_bars.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Schedule("alpha_bar is not strictly decreasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }

    pub fn beta(&self, t: usize) -> T {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> T {
        self.alphas[t - 1]
    }

    /// `alpha_bar_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> T {
        self.alpha_bars[t]
    }

    pub fn sqrt_alpha_bar(&self, t: usize) -> T {
        self.alpha_bars[t].sqrt()
    }

    pub fn sigma(&self, t: usize) -> T {
        self.sigmas[t - 1]
    }

    pub fn final_level(&self) -> T {
        self.sqrt_alpha_bar(self.len())
    }

    /// Whether `sqrt(alpha_bar_T) < 0.5`.
    pub fn reaches_noise(&self) -> bool {
        self.final_level() < T::lit(FINAL_LEVEL_LIMIT)
    }
}
