//! `urglm`: batch command-line entry point for the urgency-classification
//! pipeline.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use urglm_core::config::PipelineConfig;
use urglm_core::corpus::Split;
use urglm_core::kv::KvFile;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "urglm", version, about = "Radiology report urgency classification pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Global seed; overrides the config file and URGLM_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct Data {
    /// Corpus file.
    #[arg(long)]
    corpus: PathBuf,
    /// Split manifest.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus and its split manifest.
    Gen {
        #[arg(long)]
        n_labeled: Option<usize>,
        #[arg(long)]
        n_pretrain: Option<usize>,
        #[arg(long)]
        positive_fraction: Option<f64>,
    },
    /// Impression length histogram and split/class counts.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Section to measure.
        #[arg(long, default_value = "impression")]
        section: String,
    },
    /// Learn the subword vocabulary from pre-training impressions.
    Vocab {
        #[command(flatten)]
        data: Data,
    },
    /// Masked-LM pre-training from a fresh initialization.
    Pretrain {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        vocab: PathBuf,
    },
    /// Fine-tune a checkpoint on the train split, selecting on dev.
    Finetune {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        vocab: PathBuf,
        /// Starting checkpoint; a fresh initialization when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train skip-gram embeddings on full report text.
    W2vTrain {
        #[command(flatten)]
        data: Data,
    },
    /// Fit the baseline classifier on impression document vectors.
    W2vFit {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Hyperparameter search on the dev split.
    Tune {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = TuneMode::Grid)]
        mode: TuneMode,
        /// Epoch budget for `--mode epochs`.
        #[arg(long, default_value_t = 7)]
        max_epochs: usize,
    },
    /// Write predictions for one split.
    Predict {
        #[command(flatten)]
        data: Data,
        #[arg(long, default_value = "eval", value_parser = parse_split)]
        split: Split,
        /// Encoder checkpoint (needs --vocab).
        #[arg(long, requires = "vocab", conflicts_with_all = ["embeddings", "classifier"])]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Baseline embeddings (needs --classifier).
        #[arg(long, requires = "classifier")]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<PathBuf>,
    },
    /// Bootstrap precision, recall and F-measure of one prediction file.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        ci_method: Option<String>,
        /// Model name in the summary.
        #[arg(long, default_value = "model")]
        name: String,
    },
    /// Paired bootstrap of two prediction files on the same reports.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "a")]
        name_a: String,
        #[arg(long, default_value = "b")]
        name_b: String,
    },
    /// Finite-difference check of the encoder gradients on the tiny config.
    Gradcheck {
        /// Probe point seed.
        #[arg(long, default_value_t = 0)]
        probe_seed: u64,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneMode {
    Grid,
    Lr,
    Epochs,
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse::<Split>().map_err(|e| e.to_string())
}

/// A failed command: its exit code and one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<urglm_core::Error> for Failure {
    fn from(e: urglm_core::Error) -> Self {
        use urglm_core::Error as E;
        let code = match e {
            E::Config(_) => EXIT_USAGE,
            E::Numeric(_) => EXIT_NUMERIC,
            E::EmptyReport | E::Data(_) | E::Parse { .. } | E::Io(_) => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

/// Defaults, then the config file, then URGLM_SEED, then `--set` and `--seed`.
pub fn load_config(common: &Common) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| Failure::data(format!("config {}: {e}", path.display())))?;
            let kv = KvFile::parse(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
            PipelineConfig::from_kv(&kv).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    cfg.apply_env().map_err(|e| Failure::usage(e.to_string()))?;
    for s in &common.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(v) => v,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command, &cli.common, &args[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.lines().next().unwrap_or(""));
            ExitCode::from(f.code)
        }
    }
}
