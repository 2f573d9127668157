//! Mono WAV I/O (16-bit PCM or 32-bit float) backed by `hound`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AudioSignal;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

const PCM16_SCALE: f64 = 32_768.0;

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav { path: path.to_path_buf(), source }
}

pub fn read_wav<T: Scalar>(path: &Path) -> Result<AudioSignal<T>> {
    let mut reader = hound::WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidArgument(format!(
            "{}: expected mono, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<T> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| T::lit(v as f64 / PCM16_SCALE)))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| T::lit(v as f64)))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (fmt, bits) => {
            return Err(Error::InvalidArgument(format!("{}: unsupported sample format {fmt:?}/{bits}", path.display())))
        }
    };
    AudioSignal::new(samples, spec.sample_rate)
}

/// Writes `y`; PCM samples are clamped to the representable range.
pub fn write_wav<T: Scalar>(path: &Path, y: &AudioSignal<T>, encoding: WavEncoding) -> Result<()> {
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec =
        hound::WavSpec { channels: 1, sample_rate: y.sample_rate(), bits_per_sample: bits, sample_format: format };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err(path))?;
    for &s in y.samples() {
        let v = s.as_f64();
        match encoding {
            WavEncoding::Pcm16 => {
                let q = (v * PCM16_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
                writer.write_sample(q)
            }
            WavEncoding::Float32 => writer.write_sample(v as f32),
        }
        .map_err(wav_err(path))?;
    }
    writer.finalize().map_err(wav_err(path))
}

/// Largest reconstruction error of a PCM16 round trip for in-range samples.
pub fn pcm16_lsb() -> f64 {
    1.0 / PCM16_SCALE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_encodings() {
        let dir = tempfile::tempdir().unwrap();
        let x: Vec<f64> = (0..1000).map(|i| 0.9 * (i as f64 * 0.01).sin()).collect();
        let y = AudioSignal::new(x.clone(), 4000).unwrap();

        let p16 = dir.path().join("a.wav");
        write_wav(&p16, &y, WavEncoding::Pcm16).unwrap();
        let back: AudioSignal<f64> = read_wav(&p16).unwrap();
        assert_eq!(back.sample_rate(), 4000);
        assert!(back.samples().iter().zip(&x).all(|(a, b)| (a - b).abs() <= pcm16_lsb()));

        let pf = dir.path().join("b.wav");
        write_wav(&pf, &y, WavEncoding::Float32).unwrap();
        let back: AudioSignal<f64> = read_wav(&pf).unwrap();
        assert!(back.samples().iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-7));
    }
}
