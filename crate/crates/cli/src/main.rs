//! `diskrul`: ingest drive logs, select features, build windowed datasets,
//! train and evaluate the encoder-decoder RUL model, and run the sweeps.
//!
//! Exit status: 0 on success, 2 for usage or configuration errors, 1 for
//! runtime failures (reported as `error [io|schema|domain|numeric]: ...`).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FeatureSource, RunConfig};
use diskrul::seqnet::Precision;

#[derive(Debug)]
pub struct UsageError(pub String);

#[derive(Debug)]
pub enum CliError {
    Usage(UsageError),
    Run(diskrul::Error),
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e)
    }
}

impl From<diskrul::Error> for CliError {
    fn from(e: diskrul::Error) -> Self {
        CliError::Run(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "diskrul", version, about = "Remaining-useful-life prediction for hard drives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags that override values from `--config`.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON run configuration (or a `run.json` from an earlier run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Store root directory.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    /// Drive model, e.g. ST4000DM000.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    first_year: Option<i32>,
    #[arg(long, global = true)]
    last_year: Option<i32>,
    /// `default`, `observed`, or a features.json path.
    #[arg(long, global = true)]
    features: Option<String>,
    /// Window size T.
    #[arg(long, global = true)]
    timesteps: Option<usize>,
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Predict RUL this many days past each input day.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Keep healthy drives, labeled with this RUL cap.
    #[arg(long, global = true)]
    cap_rul: Option<f64>,
    #[arg(long, global = true)]
    units: Option<usize>,
    #[arg(long, global = true)]
    encoder_layers: Option<usize>,
    #[arg(long, global = true)]
    decoder_layers: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    patience: Option<usize>,
    /// `single` or `double`.
    #[arg(long, global = true)]
    precision: Option<String>,
    #[arg(long, global = true)]
    clip_norm: Option<f64>,
    /// Train on log1p(RUL).
    #[arg(long, global = true)]
    log1p_target: bool,
    /// Fold count for the window sweep.
    #[arg(long, global = true)]
    folds: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Append daily CSV logs to the partitioned store.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Unique failures per drive model.
    Stats {
        /// Restrict to these models (comma-separated).
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
    },
    /// Rank attributes with boosted trees and keep the top k.
    SelectFeatures {
        #[arg(long, default_value_t = 15)]
        k: usize,
    },
    /// Window, split and scale a drive model's histories.
    BuildDataset,
    /// Train the encoder-decoder on a built dataset.
    Train {
        /// Output directory of `build-dataset`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a checkpoint on each split of a built dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train every configuration row on one dataset.
    SweepConfigs {
        #[arg(long)]
        data: PathBuf,
        /// Rows to run (comma-separated, default all).
        #[arg(long, value_delimiter = ',')]
        configs: Vec<usize>,
    },
    /// Grouped k-fold cross-validation over window sizes.
    SweepWindows {
        #[arg(long, value_delimiter = ',')]
        window_sizes: Vec<usize>,
    },
    /// Apply a trained model to other drive models.
    Generalize {
        /// Output directory of `build-dataset` (for scaler.json and features.json).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
    },
    /// Write a synthetic fleet as a daily-log CSV.
    Synth {
        /// SynthSpec JSON; defaults apply when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        drives: Option<usize>,
        #[arg(long)]
        mean_lifetime: Option<f64>,
        #[arg(long)]
        missing_rate: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Stats { .. } => "stats",
            Command::SelectFeatures { .. } => "select-features",
            Command::BuildDataset => "build-dataset",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::SweepConfigs { .. } => "sweep-configs",
            Command::SweepWindows { .. } => "sweep-windows",
            Command::Generalize { .. } => "generalize",
            Command::Synth { .. } => "synth",
        }
    }
}

fn resolve(o: &Overrides) -> Result<RunConfig, UsageError> {
    let mut c = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    if o.root.is_some() {
        c.root = o.root.clone();
    }
    if o.model.is_some() {
        c.model = o.model.clone();
    }
    if o.out.is_some() {
        c.out = o.out.clone();
    }
    if o.cap_rul.is_some() {
        c.cap_rul = o.cap_rul;
    }
    if o.clip_norm.is_some() {
        c.train.clip_norm = o.clip_norm;
    }
    if o.folds.is_some() {
        c.split.k_folds = o.folds;
    }
    set!(o.seed, c.seed);
    set!(o.first_year, c.years.first);
    set!(o.last_year, c.years.last);
    set!(o.timesteps, c.timesteps);
    set!(o.stride, c.stride);
    set!(o.horizon, c.horizon);
    set!(o.units, c.network.units_per_layer);
    set!(o.encoder_layers, c.network.encoder_layers);
    set!(o.decoder_layers, c.network.decoder_layers);
    set!(o.epochs, c.train.max_epochs);
    set!(o.batch_size, c.train.batch_size);
    set!(o.learning_rate, c.train.learning_rate);
    set!(o.patience, c.train.patience);
    if let Some(f) = &o.features {
        c.features = FeatureSource::parse(f);
    }
    if let Some(p) = &o.precision {
        c.train.precision = match p.as_str() {
            "single" => Precision::Single,
            "double" => Precision::Double,
            other => return Err(UsageError(format!("--precision must be single or double, got {other}"))),
        };
    }
    if o.log1p_target {
        c.train.log1p_target = true;
    }
    c.resolve_seeds();
    c.validate()?;
    Ok(c)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = resolve(&cli.overrides)
        .map_err(CliError::from)
        .and_then(|config| commands::run(&cli.command, config, cli.overrides.seed));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(UsageError(msg))) => {
            eprintln!("error: {msg}\n\nRun `diskrul {} --help` for usage.", cli.command.name());
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error [{}]: {e}", e.category().as_str());
            ExitCode::from(1)
        }
    }
}
