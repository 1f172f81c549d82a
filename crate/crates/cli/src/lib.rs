//! Command-line workflows over the `fmmnn` core: training, evaluation,
//! landscape scans, constructive artifacts and the init comparison.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fmmnn::{LandscapeCase, ParamCoord, Precision};

pub use commands::{init_compare, run, train_workflow, InitComparison, TrainOutcome};
pub use config::{DataConfig, ExperimentConfig, Overrides, TrainingConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "fmmnn",
    version,
    about = "Multi-component networks with sinusoidal activations"
)]
pub struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed; also seeds constructions.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub precision: Option<Precision>,
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the configured model; writes report.csv, model.json, summary.json.
    Train,
    /// Evaluate a saved model on the configured test set.
    Eval {
        #[arg(long)]
        model: PathBuf,
    },
    /// Analytic landscapes or two-parameter loss slices of a model.
    Landscape(LandscapeArgs),
    /// Build and verify a constructive artifact.
    Construct {
        #[command(subcommand)]
        which: Construct,
    },
    /// Train default and scaled initialization side by side.
    InitCompare,
    /// Print trainable/total parameter counts.
    Params(ParamsArgs),
}

#[derive(Debug, Subcommand)]
pub enum Construct {
    /// Floor network on the kept union of [k, k+1-delta].
    Floor {
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "L")]
        l: usize,
        #[arg(long, default_value_t = fmmnn::constructive::DEFAULT_DELTA)]
        delta: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Fit u*sin(v*sin(k*w)) to targets y_1..y_K.
    Sinematch {
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        targets: Vec<f64>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 10_000_000)]
        budget: u64,
    },
    /// SinTU approximation of ReLU on [-bound, bound].
    SintuRelu {
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        bound: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// One-dimensional floor + two-sine network with its L1 certificate.
    Theorem1d {
        /// `identity`, `abs-half`, or a 1-D target name (rescaled to [0, 1]).
        #[arg(long = "f", default_value = "identity")]
        func: String,
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "L")]
        l: usize,
        #[arg(long, default_value_t = fmmnn::constructive::DEFAULT_DELTA)]
        delta: f64,
        #[arg(long, default_value_t = 10_000_000)]
        budget: u64,
        #[arg(long, default_value_t = 0.5)]
        window: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    /// 1 -> 64 -> 64 -> 1 fully connected.
    FcnnEg,
    /// 1 -> 128 -> 32 -> 128 -> 1 multi-component.
    MmnnEg,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    /// Closed-form toy landscape instead of a model scan.
    #[arg(long)]
    pub case: Option<LandscapeCase>,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "1,2"
    )]
    pub wstar: Vec<f64>,
    /// Saved model to scan.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Built-in example architecture to scan, initialized from --seed.
    #[arg(long, value_enum)]
    pub arch: Option<Arch>,
    #[arg(long, default_value = "sine")]
    pub activation: fmmnn::ActivationKind,
    #[arg(long)]
    pub p1: Option<ParamCoord>,
    #[arg(long)]
    pub p2: Option<ParamCoord>,
    /// `random:<seed>` or `random-trainable:<seed>`.
    #[arg(long)]
    pub pick: Option<String>,
    /// `lo,hi` for both axes or `lo1,hi1,lo2,hi2`.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "-3,3"
    )]
    pub range: Vec<f64>,
    #[arg(long, default_value_t = fmmnn::landscape::DEFAULT_RESOLUTION)]
    pub resolution: usize,
    /// Score on the config's target and training data instead of the
    /// dense Runge grid on [-pi, pi].
    #[arg(long)]
    pub config_data: bool,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub kind: Option<fmmnn::ModelKind>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub input_dim: usize,
}
