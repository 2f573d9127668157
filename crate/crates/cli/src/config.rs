//! Run configuration: a preset merged with an optional TOML file and flag
//! overrides. Unknown keys anywhere are an error.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nuwave::diffusion::{NoiseSchedule, SchedulePreset};
use nuwave::dsp::wav::WavEncoding;
use nuwave::dsp::{SynthSpec, PATCH_BASE};
use nuwave::model::ModelConfig;
use nuwave::optim::AdamConfig;
use nuwave::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Base preset the file was merged onto: "desk" or "paper".
    pub preset: String,
    pub seed: u64,
    /// Integer upscale ratio r.
    pub ratio: usize,
    pub out_dir: PathBuf,
    pub model: ModelSection,
    pub schedule: ScheduleSection,
    pub optim: AdamConfig,
    pub train: TrainSection,
    pub corpus: CorpusSection,
    pub eval: EvalSection,
}

/// Everything in [`ModelConfig`] except the ratio, which is set at the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_layers: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub dilation_cycle: Vec<usize>,
    pub embedding_dim: usize,
    pub embedding_c: f64,
    pub embedding_gamma: f64,
    pub embedding_hidden: usize,
}

impl ModelSection {
    fn from_config(c: ModelConfig) -> Self {
        Self {
            n_layers: c.n_layers,
            channels: c.channels,
            kernel_size: c.kernel_size,
            dilation_cycle: c.dilation_cycle,
            embedding_dim: c.embedding_dim,
            embedding_c: c.embedding_c,
            embedding_gamma: c.embedding_gamma,
            embedding_hidden: c.embedding_hidden,
        }
    }
}

/// A named preset, explicit betas, or a linear ramp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Preset(String),
    Betas { betas: Vec<f64> },
    Linear { beta_min: f64, beta_max: f64, steps: usize },
}

impl ScheduleSpec {
    pub fn build<T: Scalar>(&self) -> Result<NoiseSchedule<T>> {
        Ok(match self {
            Self::Preset(name) => SchedulePreset::from_name(name)?.build(),
            Self::Betas { betas } => NoiseSchedule::manual(betas)?,
            Self::Linear { beta_min, beta_max, steps } => NoiseSchedule::linear(*beta_min, *beta_max, *steps)?,
        })
    }

    pub fn name(&self) -> String {
        match self {
            Self::Preset(name) => name.clone(),
            Self::Betas { betas } => format!("manual-{}", betas.len()),
            Self::Linear { beta_min, beta_max, steps } => format!("linear({beta_min}, {beta_max}, {steps})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub train: ScheduleSpec,
    pub infer: ScheduleSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: u64,
    pub batch_size: usize,
    /// Patch length before rounding down to a multiple of the ratio.
    pub patch_base: usize,
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub train_count: usize,
    pub test_count: usize,
    pub encoding: WavEncoding,
    pub synth: SynthSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Write input/output/reference spectrogram PNGs per utterance.
    pub spectrograms: bool,
}

impl RunConfig {
    /// CPU-scale bundle: 4 kHz target rate, r = 2, small network, 8-step inference.
    pub fn desk() -> Self {
        Self {
            preset: "desk".into(),
            seed: 7,
            ratio: 2,
            out_dir: PathBuf::from("runs/desk"),
            model: ModelSection::from_config(ModelConfig::desk(2)),
            schedule: ScheduleSection {
                train: ScheduleSpec::Preset(SchedulePreset::PaperTrain1000.name().into()),
                infer: ScheduleSpec::Preset(SchedulePreset::PaperInfer8.name().into()),
            },
            optim: AdamConfig::with_lr(1e-3),
            train: TrainSection { steps: 6000, batch_size: 1, patch_base: 2048, checkpoint_every: 1000 },
            corpus: CorpusSection {
                train_count: 20,
                test_count: 4,
                encoding: WavEncoding::Pcm16,
                synth: SynthSpec::default(),
            },
            eval: EvalSection { spectrograms: false },
        }
    }

    /// Full-size network and optimizer settings at 48 kHz.
    pub fn paper() -> Self {
        let synth = SynthSpec {
            sample_rate: 48_000,
            duration_secs: 2.0,
            band_lo_hz: 80.0,
            band_hi_hz: 22_000.0,
            ..SynthSpec::default()
        };
        Self {
            preset: "paper".into(),
            out_dir: PathBuf::from("runs/paper"),
            model: ModelSection::from_config(ModelConfig::paper(2)),
            optim: AdamConfig::PAPER,
            train: TrainSection { steps: 20_000, batch_size: 24, patch_base: PATCH_BASE, checkpoint_every: 1000 },
            corpus: CorpusSection { synth, ..Self::desk().corpus },
            ..Self::desk()
        }
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => bail!("unknown preset {other:?} (expected \"desk\" or \"paper\")"),
        }
    }

    /// Merges `text` onto the preset it names (default "desk").
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).context("parsing config")?;
        let preset = match user.get("preset") {
            None => "desk",
            Some(toml::Value::String(s)) => s.as_str(),
            Some(_) => bail!("`preset` must be a string"),
        };
        let mut merged = toml::Table::try_from(Self::from_preset(preset)?)?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged).try_into().context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = self.model.clone();
        ModelConfig {
            n_layers: m.n_layers,
            channels: m.channels,
            kernel_size: m.kernel_size,
            dilation_cycle: m.dilation_cycle,
            embedding_dim: m.embedding_dim,
            embedding_c: m.embedding_c,
            embedding_gamma: m.embedding_gamma,
            embedding_hidden: m.embedding_hidden,
            ratio: self.ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.ratio) {
            bail!("ratio must be 2 or 3, got {}", self.ratio);
        }
        self.model_config().validate()?;
        self.schedule.train.build::<f64>().context("train schedule")?;
        self.schedule.infer.build::<f64>().context("inference schedule")?;
        self.corpus.synth.validate()?;
        if !self.corpus.synth.sample_rate.is_multiple_of(self.ratio as u32) {
            bail!("corpus rate {} is not divisible by ratio {}", self.corpus.synth.sample_rate, self.ratio);
        }
        if self.train.batch_size == 0 || self.train.checkpoint_every == 0 {
            bail!("batch_size and checkpoint_every must be positive");
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for cfg in [RunConfig::desk(), RunConfig::paper()] {
            cfg.validate().unwrap();
            assert_eq!(RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_file_overrides_preset() {
        let cfg =
            RunConfig::from_toml_str("seed = 11\n[train]\nsteps = 10\n[schedule]\ninfer = { betas = [0.0001, 0.5] }\n")
                .unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.train.steps, 10);
        assert_eq!(cfg.train.patch_base, RunConfig::desk().train.patch_base);
        assert_eq!(cfg.schedule.infer.name(), "manual-2");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("sead = 1").is_err());
        assert!(RunConfig::from_toml_str("[train]\nstep = 1").is_err());
        assert!(RunConfig::from_toml_str("[corpus.synth]\nrate = 1").is_err());
        assert!(RunConfig::from_toml_str("preset = \"laptop\"").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml_str("ratio = 4").is_err());
        assert!(RunConfig::from_toml_str("[schedule]\ntrain = { betas = [1.5] }").is_err());
    }
}
