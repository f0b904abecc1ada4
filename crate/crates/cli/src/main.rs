//! `journey`: generate synthetic journeys, train rankers and run the
//! offline evaluations.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data rejected
//! (validation, schema or parse failure), 3 training diverged.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use journey_ranker::domain::Milestone;
use journey_ranker::model::ModelConfig;
use journey_ranker::Error;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    /// The data was read but did not pass validation.
    Rejected(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Rejected(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Rejected(_) => 2,
            CliError::Core(e) => match e {
                Error::Config { .. } | Error::Io(_) => 1,
                Error::Diverged { .. } => 3,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "journey", version, about = "Multi-task learning-to-rank over booking journeys")]
pub struct Cli {
    /// Seed override; for multi-seed commands, the first seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for multi-seed commands. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    /// Output directory. Commands that produce artifacts require it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its ground-truth world.
    Gen {
        /// Generator config (JSON or TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from the reference world (~50k searches) instead of the small default.
        #[arg(long, conflicts_with = "config")]
        golden: bool,
        #[arg(long)]
        guests: Option<usize>,
    },
    /// Check a dataset's label invariants, or a run manifest's hashes.
    Validate {
        path: PathBuf,
        /// Treat PATH as a run manifest and re-hash its outputs.
        #[arg(long)]
        manifest: bool,
    },
    /// Train one model on the training split.
    Train {
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// NDCG of a trained model, or of the true world ranking.
    Eval {
        #[arg(long, required_unless_present = "world", conflicts_with = "world")]
        model: Option<PathBuf>,
        /// Score with the ground truth of a generated world instead.
        #[arg(long)]
        world: Option<PathBuf>,
        #[command(flatten)]
        split: SplitArgs,
        /// Evaluate on every search rather than the held-out split.
        #[arg(long)]
        all: bool,
    },
    /// Paired multi-seed comparison of two training configs (A minus B).
    Compare {
        #[arg(long)]
        config_a: Option<PathBuf>,
        #[arg(long)]
        config_b: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Preset::Full)]
        preset_a: Preset,
        #[arg(long, value_enum, default_value_t = Preset::Baseline)]
        preset_b: Preset,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Base-task ablation against the unc-only model.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Normalized twiddler coefficients bucketed by a context feature.
    Ntc {
        #[arg(long)]
        model: PathBuf,
        /// Context feature; repeatable. Defaults to days ahead and previous searches.
        #[arg(long)]
        feature: Vec<String>,
        #[arg(long, default_value_t = 5)]
        buckets: usize,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        all: bool,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (JSON or TOML); the preset applies when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset in JSON lines.
    #[arg(long)]
    pub data: PathBuf,
    /// Share of guests on the training side of the split.
    #[arg(long, default_value_t = 80, value_parser = clap::value_parser!(u64).range(1..100))]
    pub train_percent: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Six funnel tasks, three negatives, learned combination.
    Full,
    /// Unc task only.
    Baseline,
    /// Click and unc.
    CUnc,
    /// Six funnel tasks, base module only.
    All6,
}

impl Preset {
    pub fn model(self) -> ModelConfig {
        match self {
            Preset::Full => ModelConfig::full(),
            Preset::Baseline => ModelConfig::baseline(),
            Preset::CUnc => ModelConfig::base_only(&[Milestone::C, Milestone::Unc]),
            Preset::All6 => ModelConfig::base_only(&Milestone::CHAIN),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
