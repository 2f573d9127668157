use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mono waveform with its sample rate in Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSignal<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> AudioSignal<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, s| m.max(s.abs()))
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&s| s * s).sum()
    }

    /// Sub-slice `[start, end)` as a new signal at the same rate.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.samples.len() {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{end} of a {}-sample signal",
                self.samples.len()
            )));
        }
        Ok(Self { samples: self.samples[start..end].to_vec(), sample_rate: self.sample_rate })
    }

    pub fn cast<U: Scalar>(&self) -> AudioSignal<U> {
        AudioSignal {
            samples: self.samples.iter().map(|s| U::lit(s.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub(crate) fn require_nonempty(&self, what: &str) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::Empty(format!("{what}: empty signal")))
        } else {
            Ok(())
        }
    }
}
