use super::{istft, stft, AudioSignal};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::kernels;

pub const FILTER_WINDOW: usize = 1024;
pub const FILTER_HOP: usize = 256;

/// Zero-phase low-pass: STFT, zero every bin whose center frequency is at or
/// above `cutoff_hz`, inverse STFT. Output length equals input length.
pub fn lowpass_filter<T: Scalar>(y: &AudioSignal<T>, cutoff_hz: f64) -> Result<AudioSignal<T>> {
    y.require_nonempty("lowpass_filter")?;
    let nyquist = y.sample_rate() as f64 / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff_hz} Hz outside (0, {nyquist}) Hz")));
    }
    let mut frames = stft(y, FILTER_WINDOW, FILTER_HOP)?;
    let first_zeroed = (0..frames.n_bins()).find(|&k| frames.bin_frequency(k) >= cutoff_hz).unwrap_or(frames.n_bins());
    let zero = rustfft::num_complex::Complex::new(T::zero(), T::zero());
    for f in 0..frames.n_frames() {
        frames.frame_mut(f)[first_zeroed..].fill(zero);
    }
    istft(&frames)
}

/// Low-pass at the target Nyquist `sample_rate / (2 r)`, then keep samples
/// `0, r, 2r, ...`.
pub fn downsample<T: Scalar>(y: &AudioSignal<T>, r: usize) -> Result<AudioSignal<T>> {
    y.require_nonempty("downsample")?;
    if r < 2 {
        return Err(Error::InvalidArgument(format!("downsampling ratio must be >= 2, got {r}")));
    }
    if !y.len().is_multiple_of(r) {
        return Err(Error::InvalidArgument(format!("signal length {} is not divisible by r = {r}", y.len())));
    }
    if !y.sample_rate().is_multiple_of(r as u32) {
        return Err(Error::InvalidArgument(format!("sample rate {} is not divisible by r = {r}", y.sample_rate())));
    }
    let target_rate = y.sample_rate() / r as u32;
    let filtered = lowpass_filter(y, target_rate as f64 / 2.0)?;
    let kept = filtered.samples().iter().step_by(r).copied().collect();
    AudioSignal::new(kept, target_rate)
}

/// Linear-interpolation upsampler; the same geometry the network uses for its
/// conditioner input.
pub fn linear_upsample<T: Scalar>(y_d: &AudioSignal<T>, r: usize) -> Result<AudioSignal<T>> {
    y_d.require_nonempty("linear_upsample")?;
    if r == 0 {
        return Err(Error::InvalidArgument("upsampling ratio must be >= 1".into()));
    }
    let n = y_d.len();
    let out = kernels::interp(y_d.samples(), 1, n, r, n * r);
    AudioSignal::new(out, y_d.sample_rate() * r as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, sr: u32, n: usize) -> AudioSignal<f64> {
        let x = (0..n).map(|i| (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect();
        AudioSignal::new(x, sr).unwrap()
    }

    fn interior_energy(x: &[f64]) -> f64 {
        x[FILTER_WINDOW..x.len() - FILTER_WINDOW].iter().map(|v| v * v).sum()
    }

    fn interior_snr(est: &[f64], reference: &[f64]) -> f64 {
        let r = FILTER_WINDOW..reference.len() - FILTER_WINDOW;
        let sig: f64 = reference[r.clone()].iter().map(|v| v * v).sum();
        let err: f64 = r.map(|i| (est[i] - reference[i]).powi(2)).sum();
        10.0 * (sig / err).log10()
    }

    #[test]
    fn dc_passes() {
        // cutoffs above the first bin (sr / 1024)
        let y = AudioSignal::new(vec![0.3f64; 8192], 16_000).unwrap();
        for cutoff in [100.0, 1000.0, 7000.0] {
            let f = lowpass_filter(&y, cutoff).unwrap();
            let err = f.samples()[1024..7168].iter().map(|v| (v - 0.3).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "cutoff {cutoff}: {err}");
        }
    }

    #[test]
    fn passband_sinusoid_preserved() {
        let y = tone(5000.0, 48_000, 48_000);
        let f = lowpass_filter(&y, 12_000.0).unwrap();
        assert_eq!(f.len(), y.len());
        assert!(interior_snr(f.samples(), y.samples()) > 40.0);
    }

    #[test]
    fn stopband_sinusoid_suppressed() {
        let y = tone(20_000.0, 48_000, 48_000);
        let f = lowpass_filter(&y, 12_000.0).unwrap();
        assert!(interior_energy(f.samples()) < 1e-4 * interior_energy(y.samples()));
    }

    #[test]
    fn filtering_is_idempotent_away_from_the_cutoff() {
        let sr = 16_000;
        let y = AudioSignal::new(
            (0..sr)
                .map(|i| {
                    let t = i as f64 / sr as f64;
                    [120.0, 450.0, 700.0, 950.0]
                        .iter()
                        .enumerate()
                        .map(|(k, f)| (2.0 * PI * f * t + k as f64).sin() / (k + 1) as f64)
                        .sum::<f64>()
                })
                .collect(),
            sr as u32,
        )
        .unwrap();
        let once = lowpass_filter(&y, 3000.0).unwrap();
        let twice = lowpass_filter(&once, 3000.0).unwrap();
        let diff = (1024..15_000).map(|i| (once.samples()[i] - twice.samples()[i]).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn broadband_refiltering_is_a_contraction() {
        let mut rng = crate::rng::Rng::new(5);
        let y = AudioSignal::new(rng.normal_vec::<f64>(16_000), 16_000).unwrap();
        let once = lowpass_filter(&y, 3000.0).unwrap();
        let twice = lowpass_filter(&once, 3000.0).unwrap();
        let change = |a: &[f64], b: &[f64]| (1024..15_000).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
        let first = change(y.samples(), once.samples());
        let second = change(once.samples(), twice.samples());
        assert!(second < 1e-2 * first, "{second} vs {first}");
    }

    #[test]
    fn cutoff_out_of_range() {
        let y = tone(100.0, 8000, 4096);
        assert!(lowpass_filter(&y, 0.0).is_err());
        assert!(lowpass_filter(&y, 4000.0).is_err());
    }

    #[test]
    fn downsample_lengths_and_rate() {
        let y = AudioSignal::new(vec![0.0f64; 32_768], 48_000).unwrap();
        let d = downsample(&y, 2).unwrap();
        assert_eq!(d.len(), 16_384);
        assert_eq!(d.sample_rate(), 24_000);
        assert!(downsample(&AudioSignal::new(vec![0.0f64; 32_767], 48_000).unwrap(), 2).is_err());
    }

    #[test]
    fn downsample_keeps_passband_tone() {
        let y = tone(5000.0, 48_000, 48_000);
        let d = downsample(&y, 2).unwrap();
        let ideal = tone(5000.0, 24_000, 24_000);
        let r = 512..24_000 - 512;
        let sig: f64 = ideal.samples()[r.clone()].iter().map(|v| v * v).sum();
        let err: f64 = r.map(|i| (d.samples()[i] - ideal.samples()[i]).powi(2)).sum();
        assert!(10.0 * (sig / err).log10() > 35.0);
    }

    #[test]
    fn downsample_removes_alias() {
        let y = tone(20_000.0, 48_000, 48_000);
        let d = downsample(&y, 2).unwrap();
        let r = 512..24_000 - 512;
        let e: f64 = d.samples()[r.clone()].iter().map(|v| v * v).sum();
        let reference: f64 = r.map(|i| y.samples()[2 * i].powi(2)).sum();
        assert!(e < 1e-3 * reference);
    }

    #[test]
    fn linear_upsample_geometry() {
        let ramp = AudioSignal::new(vec![0.0f64, 1.0, 2.0], 1000).unwrap();
        let up = linear_upsample(&ramp, 2).unwrap();
        assert_eq!(up.samples(), &[0.0, 0.5, 1.0, 1.5, 2.0, 2.0]);
        assert_eq!(up.sample_rate(), 2000);

        let flat = AudioSignal::new(vec![0.7f64; 10], 1000).unwrap();
        let up = linear_upsample(&flat, 3).unwrap();
        assert_eq!(up.len(), 30);
        assert!(up.samples().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }
}
