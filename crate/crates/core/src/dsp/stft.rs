//! One-sided STFT with a periodic Hann window and centred framing
//! (reflect-padded by half a window on each side), and its weighted
//! overlap-add inverse.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::AudioSignal;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct StftFrameSet<T> {
    /// `n_frames * n_bins` coefficients, frame-major.
    coefficients: Vec<Complex<T>>,
    n_frames: usize,
    window_size: usize,
    hop: usize,
    signal_len: usize,
    sample_rate: u32,
}

impl<T: Scalar> StftFrameSet<T> {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn frame(&self, f: usize) -> &[Complex<T>] {
        let n = self.n_bins();
        &self.coefficients[f * n..(f + 1) * n]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [Complex<T>] {
        let n = self.n_bins();
        &mut self.coefficients[f * n..(f + 1) * n]
    }

    pub fn coefficients(&self) -> &[Complex<T>] {
        &self.coefficients
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.window_size as f64
    }

    /// `|X|^2` for every coefficient, frame-major.
    pub fn power(&self) -> Vec<T> {
        self.coefficients.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Periodic Hann window `0.5 - 0.5 cos(2 pi n / N)`.
pub fn hann_window<T: Scalar>(size: usize) -> Vec<T> {
    let n = T::from_usize_lossy(size);
    let two_pi = T::PI() + T::PI();
    (0..size).map(|i| T::lit(0.5) - T::lit(0.5) * (two_pi * T::from_usize_lossy(i) / n).cos()).collect()
}

fn check_params(len: usize, window: usize, hop: usize) -> Result<()> {
    if !window.is_power_of_two() || window < 2 {
        return Err(Error::InvalidArgument(format!("STFT window {window} is not a power of two")));
    }
    if hop == 0 || hop > window || !window.is_multiple_of(hop) {
        return Err(Error::InvalidArgument(format!("STFT hop {hop} must divide window {window}")));
    }
    if len == 0 {
        return Err(Error::Empty("STFT of an empty signal".into()));
    }
    if len <= window / 2 {
        return Err(Error::InvalidArgument(format!(
            "signal of {len} samples is too short for reflect padding with window {window}"
        )));
    }
    Ok(())
}

fn reflect_pad<T: Scalar>(x: &[T], pad: usize) -> Vec<T> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    out
}

fn plans<T: Scalar>(window: usize) -> (Arc<dyn Fft<T>>, Arc<dyn Fft<T>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(window), planner.plan_fft_inverse(window))
}

pub fn stft<T: Scalar>(y: &AudioSignal<T>, window: usize, hop: usize) -> Result<StftFrameSet<T>> {
    let x = y.samples();
    check_params(x.len(), window, hop)?;
    let padded = reflect_pad(x, window / 2);
    let n_frames = 1 + (padded.len() - window) / hop;
    let n_bins = window / 2 + 1;
    let win = hann_window::<T>(window);
    let (fft, _) = plans::<T>(window);

    let mut buf = vec![Complex::new(T::zero(), T::zero()); window];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    let mut coefficients = Vec::with_capacity(n_frames * n_bins);
    for f in 0..n_frames {
        let seg = &padded[f * hop..f * hop + window];
        for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex::new(s * w, T::zero());
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        coefficients.extend_from_slice(&buf[..n_bins]);
    }
    Ok(StftFrameSet {
        coefficients,
        n_frames,
        window_size: window,
        hop,
        signal_len: x.len(),
        sample_rate: y.sample_rate(),
    })
}

/// Weighted overlap-add inverse: `sum_f w * ifft(X_f) / sum_f w^2`, cropped to
/// the original signal length.
pub fn istft<T: Scalar>(frames: &StftFrameSet<T>) -> Result<AudioSignal<T>> {
    let window = frames.window_size;
    let hop = frames.hop;
    let n_bins = frames.n_bins();
    let pad = window / 2;
    let padded_len = (frames.n_frames - 1) * hop + window;
    let win = hann_window::<T>(window);
    let (_, ifft) = plans::<T>(window);

    let mut acc = vec![T::zero(); padded_len];
    let mut norm = vec![T::zero(); padded_len];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); window];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); ifft.get_inplace_scratch_len()];
    let inv_n = T::one() / T::from_usize_lossy(window);
    for f in 0..frames.n_frames {
        let spec = frames.frame(f);
        buf[..n_bins].copy_from_slice(spec);
        // Hermitian completion; DC and Nyquist bins are taken as real.
        buf[0].im = T::zero();
        buf[n_bins - 1].im = T::zero();
        for k in 1..window - n_bins + 1 {
            buf[window - k] = spec[k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = f * hop;
        for (i, (&w, b)) in win.iter().zip(&buf).enumerate() {
            acc[start + i] += b.re * inv_n * w;
            norm[start + i] += w * w;
        }
    }
    let tiny = T::lit(1e-10);
    let samples =
        (pad..pad + frames.signal_len).map(|i| if norm[i] > tiny { acc[i] / norm[i] } else { T::zero() }).collect();
    AudioSignal::new(samples, frames.sample_rate)
}
