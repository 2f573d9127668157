use std::cell::Cell;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use nuwave::diffusion::{sample, train_step, NoiseEstimator, NoiseLevel};
use nuwave::dsp::wav::{read_wav, write_wav, WavEncoding};
use nuwave::dsp::{downsample, extract_patch, synth_corpus, trim_silence, AudioSignal, TRIM_THRESHOLD_DB};
use nuwave::metrics::{evaluate, write_spectrogram_png, EvalReport, Utterance};
use nuwave::model::{load_checkpoint, save_checkpoint, Checkpoint, NuWaveNetwork};
use nuwave::optim::AdamState;
use nuwave::rng::Rng;

use crate::config::{RunConfig, ScheduleSpec};

pub const MANIFEST: &str = "manifest.tsv";
pub const LOSS_LOG: &str = "loss_log.tsv";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const RESOLVED_CONFIG: &str = "config.toml";

pub fn corpus_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("corpus")
}

pub fn train_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("train")
}

pub fn eval_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("eval")
}

/// Creates `dir`, refusing to reuse a non-empty one unless `overwrite`.
fn fresh_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        if !overwrite {
            bail!("{} already exists and is not empty (pass --overwrite to replace it)", dir.display());
        }
        fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::write(dir.join(RESOLVED_CONFIG), cfg.to_toml()?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub file: String,
    pub split: String,
    pub duration_secs: f64,
    pub sample_rate: u32,
    pub samples: usize,
}

/// Synthesises the train and test splits as WAV files plus `manifest.tsv`.
pub fn gen_data(cfg: &RunConfig, overwrite: bool) -> Result<Vec<ManifestRow>> {
    let dir = corpus_dir(cfg);
    fresh_dir(&dir, overwrite)?;
    let c = &cfg.corpus;
    let signals: Vec<AudioSignal<f64>> = synth_corpus(&c.synth, c.train_count + c.test_count, &mut Rng::new(cfg.seed))?;
    let mut rows = Vec::with_capacity(signals.len());
    for (i, y) in signals.iter().enumerate() {
        let (split, idx) = if i < c.train_count { ("train", i) } else { ("test", i - c.train_count) };
        let file = format!("{split}/{split}_{idx:04}.wav");
        fs::create_dir_all(dir.join(split))?;
        write_wav(&dir.join(&file), y, c.encoding)?;
        rows.push(ManifestRow {
            file,
            split: split.into(),
            duration_secs: y.duration_secs(),
            sample_rate: y.sample_rate(),
            samples: y.len(),
        });
    }
    let mut manifest = String::from("file\tsplit\tduration_secs\tsample_rate\tsamples\n");
    for r in &rows {
        manifest
            .push_str(&format!("{}\t{}\t{:.6}\t{}\t{}\n", r.file, r.split, r.duration_secs, r.sample_rate, r.samples));
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    write_config(&dir, cfg)?;
    Ok(rows)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)
        .with_context(|| format!("no corpus manifest at {} (run gen-data first)", path.display()))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            ensure!(f.len() == 5, "malformed manifest row {line:?}");
            Ok(ManifestRow {
                file: f[0].into(),
                split: f[1].into(),
                duration_secs: f[2].parse()?,
                sample_rate: f[3].parse()?,
                samples: f[4].parse()?,
            })
        })
        .collect()
}

pub fn load_split(cfg: &RunConfig, split: &str) -> Result<Vec<Utterance<f32>>> {
    let dir = corpus_dir(cfg);
    read_manifest(&dir)?
        .into_iter()
        .filter(|r| r.split == split)
        .map(|r| {
            let signal = read_wav(&dir.join(&r.file))?;
            Ok(Utterance { name: r.file, signal })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub first_step: u64,
    pub last_step: u64,
    pub last_loss: Option<f32>,
    pub checkpoint: PathBuf,
}

fn checkpoint_name(step: u64) -> String {
    format!("step_{step:06}.ckpt")
}

/// Trains from scratch, or continues from `resume`. Step `s` (0-based) draws
/// utterances, patch offsets, levels and noise from `Rng::stream(seed, s)`.
pub fn train(cfg: &RunConfig, overwrite: bool, resume: Option<&Path>) -> Result<TrainSummary> {
    let utterances = load_split(cfg, "train")?;
    ensure!(!utterances.is_empty(), "the corpus has no training utterances");
    let rate = cfg.corpus.synth.sample_rate;
    for u in &utterances {
        ensure!(
            u.signal.sample_rate() == rate,
            "{} is at {} Hz, config expects {rate} Hz",
            u.name,
            u.signal.sample_rate()
        );
    }
    let dir = train_dir(cfg);
    let schedule = cfg.schedule.train.build::<f32>()?;
    let model_cfg = cfg.model_config();

    let (mut net, mut adam, start, mut log) = match resume {
        Some(path) => {
            let ckpt = load_checkpoint::<f32>(path, Some(&model_cfg))
                .with_context(|| format!("resuming from {}", path.display()))?;
            let adam = ckpt.optimizer.context("checkpoint has no optimizer state to resume from")?;
            ensure!(
                ckpt.train_step <= cfg.train.steps,
                "checkpoint is at step {}, past the configured {}",
                ckpt.train_step,
                cfg.train.steps
            );
            fs::create_dir_all(&dir)?;
            let mut log = String::from("step\tloss\twall_secs\n");
            if let Ok(old) = fs::read_to_string(dir.join(LOSS_LOG)) {
                for line in old.lines().skip(1) {
                    let step: u64 = line.split('\t').next().unwrap_or("").parse().unwrap_or(u64::MAX);
                    if step <= ckpt.train_step {
                        log.push_str(line);
                        log.push('\n');
                    }
                }
            }
            (ckpt.network, adam, ckpt.train_step, log)
        }
        None => {
            fresh_dir(&dir, overwrite)?;
            let net = NuWaveNetwork::<f32>::new(model_cfg, &mut Rng::new(cfg.seed))?;
            let adam = AdamState::new(cfg.optim, net.params());
            (net, adam, 0, String::from("step\tloss\twall_secs\n"))
        }
    };
    write_config(&dir, cfg)?;

    let clock = Instant::now();
    let mut last_loss = None;
    let save = |net: &NuWaveNetwork<f32>, adam: &AdamState<f32>, step: u64, log: &str| -> Result<()> {
        let ckpt = Checkpoint { network: net.clone(), optimizer: Some(adam.clone()), train_step: step };
        save_checkpoint(&ckpt, &dir.join(checkpoint_name(step)))?;
        save_checkpoint(&ckpt, &dir.join(LAST_CHECKPOINT))?;
        fs::write(dir.join(LOSS_LOG), log)?;
        Ok(())
    };
    for step in start..cfg.train.steps {
        let mut rng = Rng::stream(cfg.seed, step);
        let batch = (0..cfg.train.batch_size)
            .map(|_| {
                let u = &utterances[rng.below(utterances.len())];
                extract_patch(&u.signal, cfg.ratio, cfg.train.patch_base, &mut rng)
            })
            .collect::<nuwave::Result<Vec<_>>>()?;
        let report = train_step(&mut net, &batch, &schedule, &mut adam, &mut rng)
            .with_context(|| format!("training step {}", step + 1))?;
        let done = step + 1;
        log.push_str(&format!("{done}\t{:.6}\t{:.3}\n", report.loss, clock.elapsed().as_secs_f64()));
        last_loss = Some(report.loss);
        if done % cfg.train.checkpoint_every == 0 || done == cfg.train.steps {
            save(&net, &adam, done, &log)?;
            eprintln!("step {done}: loss {:.4} ({:.0} s)", report.loss, clock.elapsed().as_secs_f64());
        }
    }
    if start == cfg.train.steps {
        save(&net, &adam, start, &log)?;
    }
    Ok(TrainSummary { first_step: start, last_step: cfg.train.steps, last_loss, checkpoint: dir.join(LAST_CHECKPOINT) })
}

pub fn read_loss_log(path: &Path) -> Result<Vec<(u64, f64)>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split('\t');
            let step = f.next().context("empty row")?.parse()?;
            let loss = f.next().context("missing loss")?.parse()?;
            Ok((step, loss))
        })
        .collect()
}

fn load_model(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<NuWaveNetwork<f32>> {
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| train_dir(cfg).join(LAST_CHECKPOINT));
    ensure!(path.exists(), "checkpoint {} not found", path.display());
    Ok(load_checkpoint::<f32>(&path, Some(&cfg.model_config()))
        .with_context(|| format!("loading {}", path.display()))?
        .network)
}

/// Forwards to the wrapped estimator and counts the calls.
pub struct CountingEstimator<'a, M> {
    pub inner: &'a M,
    pub calls: Cell<usize>,
}

impl<'a, M> CountingEstimator<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Self { inner, calls: Cell::new(0) }
    }
}

impl<M: NoiseEstimator<f32>> NoiseEstimator<f32> for CountingEstimator<'_, M> {
    fn upscale_ratio(&self) -> usize {
        self.inner.upscale_ratio()
    }

    fn estimate(&self, y_t: &[f32], y_d: &[f32], level: NoiseLevel<f32>) -> nuwave::Result<Vec<f32>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.estimate(y_t, y_d, level)
    }
}

#[derive(Clone, Debug)]
pub struct UpsampleSummary {
    pub forward_calls: usize,
    pub input_samples: usize,
    pub output_samples: usize,
    pub output_rate: u32,
}

pub struct UpsampleArgs<'a> {
    pub input: &'a Path,
    pub output: &'a Path,
    pub checkpoint: Option<&'a Path>,
    /// Directory for input/output spectrogram PNGs.
    pub spectrogram_dir: Option<&'a Path>,
}

pub fn upsample(cfg: &RunConfig, args: &UpsampleArgs<'_>, overwrite: bool) -> Result<UpsampleSummary> {
    let net = load_model(cfg, args.checkpoint)?;
    let y_d: AudioSignal<f32> = read_wav(args.input)?;
    let target = cfg.corpus.synth.sample_rate;
    ensure!(
        y_d.sample_rate() as usize * cfg.ratio == target as usize,
        "input is at {} Hz; a ratio-{} model trained at {target} Hz expects {} Hz",
        y_d.sample_rate(),
        cfg.ratio,
        target / cfg.ratio as u32
    );
    if args.output.exists() && !overwrite {
        bail!("{} already exists (pass --overwrite to replace it)", args.output.display());
    }
    let counter = CountingEstimator::new(&net);
    let schedule = cfg.schedule.infer.build::<f32>()?;
    let y = sample(&counter, &y_d, &schedule, cfg.ratio, &mut Rng::new(cfg.seed))?;
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_wav(args.output, &y, WavEncoding::Float32)?;
    if let Some(dir) = args.spectrogram_dir {
        fs::create_dir_all(dir)?;
        write_spectrogram_png(&y_d, &dir.join("input.png"))?;
        write_spectrogram_png(&y, &dir.join("output.png"))?;
    }
    Ok(UpsampleSummary {
        forward_calls: counter.calls.get(),
        input_samples: y_d.len(),
        output_samples: y.len(),
        output_rate: y.sample_rate(),
    })
}

/// Scores the checkpoint on the test split and writes `report.tsv` and `report.json`.
pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, overwrite: bool) -> Result<EvalReport> {
    let net = load_model(cfg, checkpoint)?;
    let test = load_split(cfg, "test")?;
    ensure!(!test.is_empty(), "the test split is empty");
    let rate = cfg.corpus.synth.sample_rate;
    for u in &test {
        ensure!(
            u.signal.sample_rate() == rate,
            "{} is at {} Hz, model was trained at {rate} Hz",
            u.name,
            u.signal.sample_rate()
        );
    }
    let dir = eval_dir(cfg);
    fresh_dir(&dir, overwrite)?;
    let schedule = cfg.schedule.infer.build::<f32>()?;
    let rng = Rng::new(cfg.seed);
    let report = evaluate(&net, &test, &schedule, &cfg.schedule.infer.name(), cfg.ratio, &rng)?;
    fs::write(dir.join("report.tsv"), report.to_tsv())?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    write_config(&dir, cfg)?;
    if cfg.eval.spectrograms {
        let spec_dir = dir.join("spectrograms");
        fs::create_dir_all(&spec_dir)?;
        for (i, u) in test.iter().enumerate() {
            let stem = Path::new(&u.name).file_stem().and_then(|s| s.to_str()).unwrap_or("utt").to_string();
            let trimmed = trim_silence(&u.signal, TRIM_THRESHOLD_DB)?;
            let y_d = downsample(&trimmed.slice(0, trimmed.len() - trimmed.len() % cfg.ratio)?, cfg.ratio)?;
            let y = sample(&net, &y_d, &schedule, cfg.ratio, &mut Rng::stream(cfg.seed, i as u64))?;
            write_spectrogram_png(&trimmed, &spec_dir.join(format!("{stem}_reference.png")))?;
            write_spectrogram_png(&y, &spec_dir.join(format!("{stem}_model.png")))?;
        }
    }
    Ok(report)
}

/// Diagnostics for one schedule in double precision.
#[derive(Clone, Debug)]
pub struct ScheduleReport {
    pub name: String,
    pub betas: Vec<f64>,
    pub sqrt_alpha_bar: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ScheduleReport {
    pub fn new(spec: &ScheduleSpec) -> Result<Self> {
        let s = spec.build::<f64>()?;
        Ok(Self {
            name: spec.name(),
            betas: s.betas().to_vec(),
            sqrt_alpha_bar: (1..=s.len()).map(|t| s.sqrt_alpha_bar(t)).collect(),
            sigma: (1..=s.len()).map(|t| s.sigma(t)).collect(),
        })
    }

    pub fn final_level(&self) -> f64 {
        *self.sqrt_alpha_bar.last().expect("non-empty schedule")
    }

    /// The final level must fall below 0.5 for the chain to end near pure noise.
    pub fn passes(&self) -> bool {
        self.final_level() < 0.5
    }
}

impl fmt::Display for ScheduleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.betas.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &b| (lo.min(b), hi.max(b)));
        writeln!(f, "schedule {}", self.name)?;
        writeln!(f, "T = {}", self.betas.len())?;
        writeln!(f, "beta range = [{lo:e}, {hi:e}]")?;
        writeln!(f, "t\tbeta\tsqrt_alpha_bar\tsigma")?;
        for (t, ((b, s), sg)) in self.betas.iter().zip(&self.sqrt_alpha_bar).zip(&self.sigma).enumerate() {
            writeln!(f, "{}\t{b:e}\t{s:.10}\t{sg:.10}", t + 1)?;
        }
        writeln!(
            f,
            "final sqrt_alpha_bar = {:.7} ({})",
            self.final_level(),
            if self.passes() { "pass: < 0.5" } else { "warn: >= 0.5" }
        )
    }
}

pub fn print_schedules(out: &mut impl Write, specs: &[&ScheduleSpec]) -> Result<Vec<ScheduleReport>> {
    let mut reports = Vec::new();
    for spec in specs {
        let r = ScheduleReport::new(spec)?;
        write!(out, "{r}")?;
        reports.push(r);
    }
    Ok(reports)
}
