use std::path::Path;

use image::GrayImage;

use crate::dsp::{stft, AudioSignal};
use crate::error::Result;
use crate::scalar::Scalar;

/// Displayed dynamic range below the loudest bin.
const RANGE_DB: f64 = 80.0;

/// Grayscale log-power spectrogram: one column per frame, low frequencies at
/// the bottom, white at the loudest bin.
pub fn spectrogram_image<T: Scalar>(y: &AudioSignal<T>, window: usize, hop: usize) -> Result<GrayImage> {
    let frames = stft(&y.cast::<f64>(), window, hop)?;
    let bins = frames.n_bins();
    let db: Vec<f64> = frames.power().iter().map(|p| 10.0 * p.max(1e-20).log10()).collect();
    let top = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = frames.n_frames() as u32;
    Ok(GrayImage::from_fn(width, bins as u32, |x, row| {
        let k = bins - 1 - row as usize;
        let v = (db[x as usize * bins + k] - top + RANGE_DB) / RANGE_DB;
        image::Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    }))
}

pub fn write_spectrogram_png<T: Scalar>(y: &AudioSignal<T>, path: &Path) -> Result<()> {
    spectrogram_image(y, 512, 128)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
