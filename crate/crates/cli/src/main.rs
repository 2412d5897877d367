mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "abbrev", version, about = "Abbreviation detection and definition matching")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Write the main output here instead of stdout
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Report format
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Detection,
    Identification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    LowNoise,
    Noiseless,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize raw text files into a corpus, one document per file
    Tokenize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train the detector ensemble and report held-out metrics
    TrainDetector,
    /// Flag abbreviation tokens
    Detect {
        /// Raw text file instead of --corpus
        #[arg(long)]
        text: Option<PathBuf>,
        /// Emit every token, not just flagged ones
        #[arg(long)]
        all: bool,
    },
    /// List candidate definitions for gold (or detected) abbreviations
    GenCandidates {
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Train the pair classifier and report held-out metrics
    TrainMatcher,
    /// Run the full pipeline and emit accepted pairs
    Identify {
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Metrics for both stages; trains on the split when no models are given
    Evaluate {
        /// Evaluate the given models on the whole corpus instead of the test split
        #[arg(long)]
        full: bool,
        /// Also print forest feature importances
        #[arg(long)]
        importances: bool,
    },
    /// ROC AUC over a range of one training parameter
    Sweep {
        /// n_trees, min_samples_split, min_samples_leaf, max_depth, boosting_rounds,
        /// boosting_max_depth, learning_rate, svm_epochs or svm_regularization
        param: String,
        /// `a..b` (inclusive, step 1), `a..b:step`, or `v1,v2,...`
        range: String,
        #[arg(long, value_enum, default_value_t = Stage::Detection)]
        stage: Stage,
        /// Model whose parameter is swept
        #[arg(long, default_value = "forest")]
        model: abbrev_core::ml::ModelKind,
    },
    /// Generate a synthetic corpus with planted abbreviations
    Synth {
        /// Corpus path; a manifest and a dictionary are written next to it
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        tokens: Option<usize>,
        #[arg(long)]
        docs: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long)]
        decoys: Option<f64>,
        #[arg(long)]
        missing: Option<f64>,
        #[arg(long)]
        reverse: Option<f64>,
    },
    /// Token, abbreviation and gold-pair counts
    Stats,
    /// Print the effective configuration as TOML
    ShowConfig,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ABBREV_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
