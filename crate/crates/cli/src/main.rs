use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fisgan_cli::run::{self, Axis};
use fisgan_cli::{plot, CliError, ExperimentFile, Overrides};
use fisgan_core::config::{Mode, Preset};

/// Adversarial training with flow-based latent importance sampling.
#[derive(Parser)]
#[command(name = "fisgan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<u64>,
    /// Output directory for run folders.
    #[arg(long)]
    out: Option<PathBuf>,
    /// fast-refresh or slow-refresh.
    #[arg(long)]
    preset: Option<Preset>,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentFile, CliError> {
        let ov = Overrides {
            mode: self.mode,
            seed: self.seed,
            max_iters: self.max_iters,
            out: self.out.clone(),
            preset: self.preset,
        };
        ExperimentFile::load(&self.config)?.resolve(&ov)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint, in its run directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train once per value of a norm or flow axis and merge the metrics.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        /// Run the variants concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Score a checkpoint and write a sample grid.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Experiment file naming the dataset.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2048)]
        samples: usize,
        /// Grid output path (defaults next to the checkpoint).
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Draw proxy FID curves from metrics files as SVG.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { common, resume } => {
            let exp = common.experiment()?;
            let outcome = run::train_run(&exp, resume.as_deref(), None)?;
            println!("{}", outcome.dir.display());
        }
        Command::Ablate { common, axis, values, parallel } => {
            let exp = common.experiment()?;
            for outcome in run::ablate(&exp, axis, &values, parallel)? {
                println!("{}", outcome.dir.display());
            }
        }
        Command::Eval { checkpoint, config, samples, grid } => {
            let exp = ExperimentFile::load(&config)?;
            let fid = run::evaluate(&checkpoint, &exp, samples, grid.as_deref())?;
            println!("proxy_fid {fid:.11e}");
        }
        Command::Plot { csv, output } => {
            let n = plot::plot(&csv, &output)?;
            println!("{n} series written to {}", output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
