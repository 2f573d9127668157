//! Synthetic training material: harmonic tone complexes plus tilted noise,
//! with energy spread up to the band limit.

use serde::{Deserialize, Serialize};

use super::AudioSignal;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub sample_rate: u32,
    pub duration_secs: f64,
    /// Inclusive range for the number of harmonic tone complexes per signal.
    pub min_components: usize,
    pub max_components: usize,
    /// Fundamentals are drawn from `[band_lo_hz, 2 * band_lo_hz)`; partials
    /// extend up to `band_hi_hz`.
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    /// Noise RMS relative to the tonal part's RMS.
    pub noise_level: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            sample_rate: 4000,
            duration_secs: 3.0,
            min_components: 1,
            max_components: 3,
            band_lo_hz: 90.0,
            band_hi_hz: 1950.0,
            noise_level: 0.15,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        let bad = |m: String| Err(Error::InvalidArgument(format!("synth spec: {m}")));
        if self.sample_rate == 0 || !(self.duration_secs > 0.0) {
            return bad("sample rate and duration must be positive".into());
        }
        if self.min_components == 0 || self.min_components > self.max_components {
            return bad(format!("component range {}..={}", self.min_components, self.max_components));
        }
        if !(self.band_lo_hz > 0.0 && 2.0 * self.band_lo_hz < self.band_hi_hz && self.band_hi_hz <= nyquist) {
            return bad(format!("band [{}, {}] Hz with Nyquist {nyquist}", self.band_lo_hz, self.band_hi_hz));
        }
        if !(self.noise_level >= 0.0) {
            return bad("noise level must be non-negative".into());
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_secs * self.sample_rate as f64).round() as usize
    }
}

/// One synthetic signal, peak-normalized to at most 0.95.
pub fn synth_signal<T: Scalar>(spec: &SynthSpec, rng: &mut Rng) -> Result<AudioSignal<T>> {
    spec.validate()?;
    let n = spec.n_samples();
    let sr = spec.sample_rate as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut tonal = vec![0.0f64; n];

    let count = spec.min_components + rng.below(spec.max_components - spec.min_components + 1);
    for _ in 0..count {
        let f0 = rng.uniform(spec.band_lo_hz, 2.0 * spec.band_lo_hz)?;
        let decay = rng.uniform(0.3, 0.8)?;
        let vibrato_hz = rng.uniform(3.0, 6.0)?;
        let vibrato_depth = rng.uniform(0.0, 0.01)?;
        let env_hz = rng.uniform(0.5, 3.0)?;
        let env_phase = rng.uniform(0.0, two_pi)?;
        let n_partials = ((spec.band_hi_hz / (f0 * (1.0 + vibrato_depth))).floor() as usize).max(1);
        let partials: Vec<(f64, f64)> = (1..=n_partials)
            .map(|k| Ok(((k as f64).powf(-decay), rng.uniform(0.0, two_pi)?)))
            .collect::<Result<_>>()?;
        // instantaneous phase of the fundamental with slow vibrato
        let mut phase = 0.0;
        for (i, out) in tonal.iter_mut().enumerate() {
            let t = i as f64 / sr;
            let f = f0 * (1.0 + vibrato_depth * (two_pi * vibrato_hz * t).sin());
            let env = 0.65 + 0.35 * (two_pi * env_hz * t + env_phase).sin();
            let s: f64 =
                partials.iter().enumerate().map(|(k, &(amp, ph))| amp * ((k + 1) as f64 * phase + ph).sin()).sum();
            *out += env * s;
            phase += two_pi * f / sr;
        }
    }

    let tonal_rms = (tonal.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let pole = rng.uniform(0.0, 0.5)?;
    let mut state = 0.0;
    let mut noise: Vec<f64> = (0..n)
        .map(|_| {
            state = pole * state + (1.0 - pole) * rng.normal();
            state
        })
        .collect();
    let noise_rms = (noise.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if noise_rms > 0.0 {
        let g = spec.noise_level * tonal_rms / noise_rms;
        noise.iter_mut().for_each(|v| *v *= g);
    }

    let mixed: Vec<f64> = tonal.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { 0.95 * rng.uniform(0.5, 1.0)? / peak } else { 0.0 };
    AudioSignal::new(mixed.iter().map(|v| T::lit(v * gain)).collect(), spec.sample_rate)
}

/// `count` signals; signal `i` depends only on the seed drawn from `rng` and `i`.
pub fn synth_corpus<T: Scalar>(spec: &SynthSpec, count: usize, rng: &mut Rng) -> Result<Vec<AudioSignal<T>>> {
    spec.validate()?;
    let base = rng.below(usize::MAX) as u64;
    (0..count).map(|i| synth_signal(spec, &mut Rng::stream(base, i as u64))).collect()
}
