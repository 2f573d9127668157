//! Objective quality measures and paired model-vs-baseline evaluation.

mod report;
mod spectrogram;

pub use report::{
    evaluate, evaluate_with, ColumnStats, DiffusionUpsampler, EvalReport, EvalRow, LinearUpsampler, Upsampler,
    Utterance,
};
pub use spectrogram::{spectrogram_image, write_spectrogram_png};

use crate::dsp::{stft, AudioSignal};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LSD_WINDOW: usize = 2048;
pub const LSD_HOP: usize = 512;
/// Floor applied to `|S|^2` before the log.
pub const LSD_POWER_FLOOR: f64 = 1e-10;

fn check_pair<T: Scalar>(y_hat: &AudioSignal<T>, y: &AudioSignal<T>) -> Result<()> {
    if y_hat.len() != y.len() || y_hat.sample_rate() != y.sample_rate() {
        return Err(Error::Shape(format!(
            "metric pair: {} samples @ {} Hz vs {} samples @ {} Hz",
            y_hat.len(),
            y_hat.sample_rate(),
            y.len(),
            y.sample_rate()
        )));
    }
    Ok(())
}

/// `10 log10(|y|^2 / |y_hat - y|^2)` in dB. Returns `f64::INFINITY` when the
/// estimate equals the reference exactly.
pub fn snr<T: Scalar>(y_hat: &AudioSignal<T>, y: &AudioSignal<T>) -> Result<f64> {
    check_pair(y_hat, y)?;
    let signal: f64 = y.samples().iter().map(|v| v.as_f64().powi(2)).sum();
    if signal == 0.0 {
        return Err(Error::InvalidArgument("SNR reference is identically zero".into()));
    }
    let noise: f64 = y_hat.samples().iter().zip(y.samples()).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

fn log_power<T: Scalar>(y: &AudioSignal<T>) -> Result<(Vec<f64>, usize)> {
    let frames = stft(&y.cast::<f64>(), LSD_WINDOW, LSD_HOP)?;
    let logp = frames.power().into_iter().map(|p| p.max(LSD_POWER_FLOOR).log10()).collect();
    Ok((logp, frames.n_bins()))
}

/// Log-spectral distance over the one-sided spectrum: mean over frames of the
/// RMS over bins of the `log10` power difference (Hann 2048, hop 512).
pub fn lsd<T: Scalar>(y_hat: &AudioSignal<T>, y: &AudioSignal<T>) -> Result<f64> {
    check_pair(y_hat, y)?;
    if y.len() < LSD_WINDOW {
        return Err(Error::InvalidArgument(format!("LSD needs at least {LSD_WINDOW} samples, got {}", y.len())));
    }
    let (a, bins) = log_power(y_hat)?;
    let (b, _) = log_power(y)?;
    let frames = a.len() / bins;
    let total: f64 = a
        .chunks(bins)
        .zip(b.chunks(bins))
        .map(|(fa, fb)| (fa.iter().zip(fb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / bins as f64).sqrt())
        .sum();
    Ok(total / frames as f64)
}

/// Fraction of signal energy at or above `cutoff_hz`, from a Hann 1024/256 STFT.
pub fn band_energy_fraction<T: Scalar>(y: &AudioSignal<T>, cutoff_hz: f64) -> Result<f64> {
    let frames = stft(&y.cast::<f64>(), 1024, 256)?;
    let bins = frames.n_bins();
    let power = frames.power();
    let (mut high, mut all) = (0.0, 0.0);
    for frame in power.chunks(bins) {
        for (k, p) in frame.iter().enumerate() {
            all += p;
            if frames.bin_frequency(k) >= cutoff_hz {
                high += p;
            }
        }
    }
    Ok(if all > 0.0 { high / all } else { 0.0 })
}
