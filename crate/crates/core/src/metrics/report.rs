use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{band_energy_fraction, lsd, snr};
use crate::diffusion::{sample, NoiseEstimator, NoiseSchedule};
use crate::dsp::{downsample, linear_upsample, trim_silence, AudioSignal, TRIM_THRESHOLD_DB};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Produces a full-rate estimate from a band-limited input.
pub trait Upsampler<T: Scalar> {
    fn upsample(&self, y_d: &AudioSignal<T>, r: usize, rng: &mut Rng) -> Result<AudioSignal<T>>;
}

pub struct LinearUpsampler;

impl<T: Scalar> Upsampler<T> for LinearUpsampler {
    fn upsample(&self, y_d: &AudioSignal<T>, r: usize, _: &mut Rng) -> Result<AudioSignal<T>> {
        linear_upsample(y_d, r)
    }
}

/// Reverse-process sampling with a trained noise estimator.
pub struct DiffusionUpsampler<'a, T: Scalar, M: ?Sized> {
    pub model: &'a M,
    pub schedule: &'a NoiseSchedule<T>,
}

impl<T: Scalar, M: NoiseEstimator<T> + ?Sized> Upsampler<T> for DiffusionUpsampler<'_, T, M> {
    fn upsample(&self, y_d: &AudioSignal<T>, r: usize, rng: &mut Rng) -> Result<AudioSignal<T>> {
        sample(self.model, y_d, self.schedule, r, rng)
    }
}

#[derive(Clone, Debug)]
pub struct Utterance<T> {
    pub name: String,
    pub signal: AudioSignal<T>,
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn null_is_infinite<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// One utterance. SNR values of `+inf` (exact reconstruction) are written as
/// `null` in JSON and flagged through `*_perfect`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    /// CRC32 of the trimmed reference as little-endian f64 samples; both columns are scored against it.
    pub reference_crc32: String,
    pub samples: usize,
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_is_infinite")]
    pub model_snr_db: f64,
    pub model_lsd: f64,
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_is_infinite")]
    pub baseline_snr_db: f64,
    pub baseline_lsd: f64,
    /// Fraction of output energy above the input Nyquist frequency.
    pub model_high_band: f64,
    pub baseline_high_band: f64,
    pub model_perfect: bool,
    pub baseline_perfect: bool,
}

/// Mean and population standard deviation. SNR statistics skip perfect rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub snr_mean_db: Option<f64>,
    pub snr_std_db: Option<f64>,
    pub lsd_mean: f64,
    pub lsd_std: f64,
    pub high_band_mean: f64,
    pub perfect_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ratio: usize,
    pub schedule: String,
    pub sample_rate: u32,
    pub rows: Vec<EvalRow>,
    pub model: ColumnStats,
    pub baseline: ColumnStats,
    /// `model.lsd_mean / baseline.lsd_mean`.
    pub lsd_ratio: f64,
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

impl ColumnStats {
    fn from_rows(snr: &[f64], lsd: &[f64], high: &[f64]) -> Self {
        let finite: Vec<f64> = snr.iter().copied().filter(|v| v.is_finite()).collect();
        let s = mean_std(&finite);
        let (lsd_mean, lsd_std) = mean_std(lsd).unwrap_or((0.0, 0.0));
        Self {
            snr_mean_db: s.map(|s| s.0),
            snr_std_db: s.map(|s| s.1),
            lsd_mean,
            lsd_std,
            high_band_mean: mean_std(high).map_or(0.0, |s| s.0),
            perfect_rows: snr.len() - finite.len(),
        }
    }
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>, ratio: usize, schedule: &str, sample_rate: u32) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("evaluation rows".into()));
        }
        let col = |f: fn(&EvalRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let model =
            ColumnStats::from_rows(&col(|r| r.model_snr_db), &col(|r| r.model_lsd), &col(|r| r.model_high_band));
        let baseline = ColumnStats::from_rows(
            &col(|r| r.baseline_snr_db),
            &col(|r| r.baseline_lsd),
            &col(|r| r.baseline_high_band),
        );
        let lsd_ratio = if baseline.lsd_mean > 0.0 { model.lsd_mean / baseline.lsd_mean } else { f64::NAN };
        Ok(Self { ratio, schedule: schedule.to_string(), sample_rate, rows, model, baseline, lsd_ratio })
    }

    /// Tab-separated table with a header row; `inf` marks perfect reconstruction.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "name\treference_crc32\tsamples\tmodel_snr_db\tmodel_lsd\tbaseline_snr_db\tbaseline_lsd\tmodel_high_band\tbaseline_high_band\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                r.name,
                r.reference_crc32,
                r.samples,
                r.model_snr_db,
                r.model_lsd,
                r.baseline_snr_db,
                r.baseline_lsd,
                r.model_high_band,
                r.baseline_high_band
            ));
        }
        let fmt = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.6}"));
        out.push_str(&format!(
            "mean\t-\t-\t{}\t{:.6}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
            fmt(self.model.snr_mean_db),
            self.model.lsd_mean,
            fmt(self.baseline.snr_mean_db),
            self.baseline.lsd_mean,
            self.model.high_band_mean,
            self.baseline.high_band_mean
        ));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn checksum<T: Scalar>(y: &AudioSignal<T>) -> String {
    let mut h = crc32fast::Hasher::new();
    for v in y.samples() {
        h.update(&v.as_f64().to_le_bytes());
    }
    format!("{:08x}", h.finalize())
}

/// Scores the diffusion model against linear interpolation on every utterance.
pub fn evaluate<T: Scalar, M: NoiseEstimator<T> + ?Sized>(
    model: &M,
    corpus: &[Utterance<T>],
    schedule: &NoiseSchedule<T>,
    schedule_name: &str,
    r: usize,
    rng: &Rng,
) -> Result<EvalReport> {
    if model.upscale_ratio() != r {
        return Err(Error::ConfigMismatch(format!("model ratio {} vs evaluation ratio {r}", model.upscale_ratio())));
    }
    evaluate_with(&DiffusionUpsampler { model, schedule }, &LinearUpsampler, corpus, schedule_name, r, rng)
}

/// Per utterance: trim, crop to a multiple of `r`, downsample, upsample with
/// both methods, score both against the same reference. Utterance `i` samples
/// from `Rng::stream(rng.seed(), i)`, so rows do not depend on each other.
pub fn evaluate_with<T: Scalar, A: Upsampler<T> + ?Sized, B: Upsampler<T> + ?Sized>(
    model: &A,
    baseline: &B,
    corpus: &[Utterance<T>],
    schedule_name: &str,
    r: usize,
    rng: &Rng,
) -> Result<EvalReport> {
    let first = corpus.first().ok_or_else(|| Error::Empty("evaluation corpus".into()))?;
    let rate = first.signal.sample_rate();
    let mut rows = Vec::with_capacity(corpus.len());
    for (i, utt) in corpus.iter().enumerate() {
        if utt.signal.sample_rate() != rate {
            return Err(Error::ConfigMismatch(format!(
                "{} is at {} Hz, corpus is at {rate} Hz",
                utt.name,
                utt.signal.sample_rate()
            )));
        }
        let trimmed = trim_silence(&utt.signal, TRIM_THRESHOLD_DB)?;
        let reference = trimmed.slice(0, trimmed.len() - trimmed.len() % r)?;
        let y_d = downsample(&reference, r)?;
        let mut urng = Rng::stream(rng.seed(), i as u64);
        let est = model.upsample(&y_d, r, &mut urng)?;
        let base = baseline.upsample(&y_d, r, &mut urng)?;
        let cutoff = f64::from(rate) / (2.0 * r as f64);
        let (model_snr_db, baseline_snr_db) = (snr(&est, &reference)?, snr(&base, &reference)?);
        rows.push(EvalRow {
            name: utt.name.clone(),
            reference_crc32: checksum(&reference),
            samples: reference.len(),
            model_snr_db,
            model_lsd: lsd(&est, &reference)?,
            baseline_snr_db,
            baseline_lsd: lsd(&base, &reference)?,
            model_high_band: band_energy_fraction(&est, cutoff)?,
            baseline_high_band: band_energy_fraction(&base, cutoff)?,
            model_perfect: model_snr_db.is_infinite(),
            baseline_perfect: baseline_snr_db.is_infinite(),
        });
    }
    EvalReport::from_rows(rows, r, schedule_name, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{synth_corpus, SynthSpec};

    /// Returns the reference it was built from, ignoring the input.
    struct Oracle<'a>(&'a AudioSignal<f64>);

    impl Upsampler<f64> for Oracle<'_> {
        fn upsample(&self, y_d: &AudioSignal<f64>, r: usize, _: &mut Rng) -> Result<AudioSignal<f64>> {
            assert_eq!(y_d.len() * r, self.0.len());
            Ok(self.0.clone())
        }
    }

    fn corpus(n: usize) -> Vec<Utterance<f64>> {
        let spec = SynthSpec { duration_secs: 1.5, ..SynthSpec::default() };
        synth_corpus(&spec, n, &mut Rng::new(4))
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, signal)| Utterance { name: format!("utt{i}"), signal })
            .collect()
    }

    #[test]
    fn singleton_with_oracle_stub() {
        let c = corpus(1);
        let trimmed = trim_silence(&c[0].signal, TRIM_THRESHOLD_DB).unwrap();
        let reference = trimmed.slice(0, trimmed.len() - trimmed.len() % 2).unwrap();
        let report = evaluate_with(&Oracle(&reference), &LinearUpsampler, &c, "stub", 2, &Rng::new(0)).unwrap();
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!(row.model_snr_db, f64::INFINITY);
        assert!(row.model_perfect);
        assert_eq!(row.model_lsd, 0.0);
        assert_eq!(report.model.snr_mean_db, None);
        assert_eq!(report.model.perfect_rows, 1);
        assert_eq!(report.baseline.lsd_mean, row.baseline_lsd);
        assert_eq!(report.baseline.snr_mean_db, Some(row.baseline_snr_db));
        assert!(row.baseline_lsd > 0.0 && row.baseline_snr_db.is_finite());
        assert_eq!(report.schedule, "stub");
        assert_eq!(report.ratio, 2);
    }

    #[test]
    fn aggregation_and_json_round_trip() {
        let c = corpus(3);
        let report = evaluate_with(&LinearUpsampler, &LinearUpsampler, &c, "linear", 2, &Rng::new(0)).unwrap();
        assert_eq!(report.rows.len(), 3);
        let mean = report.rows.iter().map(|r| r.model_lsd).sum::<f64>() / 3.0;
        assert!((mean - report.model.lsd_mean).abs() < 1e-12);
        let snr_mean = report.rows.iter().map(|r| r.baseline_snr_db).sum::<f64>() / 3.0;
        assert!((snr_mean - report.baseline.snr_mean_db.unwrap()).abs() < 1e-12);
        assert!((report.lsd_ratio - 1.0).abs() < 1e-12);
        let back: EvalReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
        assert_eq!(report.to_tsv().lines().count(), 5);
    }

    #[test]
    fn infinite_snr_serializes_as_null() {
        let c = corpus(1);
        let trimmed = trim_silence(&c[0].signal, TRIM_THRESHOLD_DB).unwrap();
        let reference = trimmed.slice(0, trimmed.len() - trimmed.len() % 2).unwrap();
        let report = evaluate_with(&Oracle(&reference), &LinearUpsampler, &c, "stub", 2, &Rng::new(0)).unwrap();
        let json = report.to_json().unwrap();
        assert!(json.contains("\"model_snr_db\": null"));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rows[0].model_snr_db, f64::INFINITY);
    }

    #[test]
    fn mixed_rates_and_empty_corpus_are_rejected() {
        let mut c = corpus(2);
        c[1].signal = AudioSignal::new(c[1].signal.samples().to_vec(), 8000).unwrap();
        assert!(evaluate_with(&LinearUpsampler, &LinearUpsampler, &c, "x", 2, &Rng::new(0)).is_err());
        assert!(evaluate_with::<f64, _, _>(&LinearUpsampler, &LinearUpsampler, &[], "x", 2, &Rng::new(0)).is_err());
    }
}
