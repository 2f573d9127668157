use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use nuwave_cli::commands::{self, UpsampleArgs};
use nuwave_cli::config::ScheduleSpec;
use nuwave_cli::RunConfig;

#[derive(Parser)]
#[command(name = "nuwave", version, about = "Diffusion-based audio super-resolution")]
struct Cli {
    /// TOML run configuration merged onto its preset (default: desk preset).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; commands write into subdirectories of it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace existing outputs instead of failing.
    #[arg(long, global = true)]
    overwrite: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/test corpus.
    GenData,
    /// Train the noise estimator on the corpus.
    Train {
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Upsample a WAV file by the configured ratio.
    Upsample {
        input: PathBuf,
        output: PathBuf,
        /// Defaults to the last training checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write input/output spectrogram PNGs into this directory.
        #[arg(long)]
        spectrogram: Option<PathBuf>,
    },
    /// Score model and linear baseline on the test split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print noise schedule diagnostics.
    Schedule {
        #[arg(long, value_enum, default_value_t = Which::Both)]
        which: Which,
        /// Comma-separated betas to inspect instead of the configured schedules.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Train,
    Infer,
    Both,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::desk(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::GenData => {
            let rows = commands::gen_data(&cfg, cli.overwrite)?;
            println!("wrote {} utterances to {}", rows.len(), commands::corpus_dir(&cfg).display());
        }
        Command::Train { resume } => {
            let s = commands::train(&cfg, cli.overwrite, resume.as_deref())?;
            println!("trained steps {}..{}; checkpoint {}", s.first_step, s.last_step, s.checkpoint.display());
        }
        Command::Upsample { input, output, checkpoint, spectrogram } => {
            let args = UpsampleArgs {
                input,
                output,
                checkpoint: checkpoint.as_deref(),
                spectrogram_dir: spectrogram.as_deref(),
            };
            let s = commands::upsample(&cfg, &args, cli.overwrite)?;
            println!(
                "{} -> {} samples at {} Hz ({} model calls)",
                s.input_samples, s.output_samples, s.output_rate, s.forward_calls
            );
        }
        Command::Eval { checkpoint } => {
            let report = commands::eval(&cfg, checkpoint.as_deref(), cli.overwrite)?;
            print!("{}", report.to_tsv());
            println!("lsd ratio (model / linear) = {:.4}", report.lsd_ratio);
        }
        Command::Schedule { which, betas } => {
            let manual = betas.clone().map(|betas| ScheduleSpec::Betas { betas });
            let specs: Vec<&ScheduleSpec> = match (&manual, which) {
                (Some(m), _) => vec![m],
                (None, Which::Train) => vec![&cfg.schedule.train],
                (None, Which::Infer) => vec![&cfg.schedule.infer],
                (None, Which::Both) => vec![&cfg.schedule.train, &cfg.schedule.infer],
            };
            commands::print_schedules(&mut std::io::stdout(), &specs)?;
        }
    }
    Ok(())
}
