//! Command-line front end. Every command composes library calls, writes its
//! artifacts under `--out` and prints a markdown summary.
//!
//! Exit status: 0 on success, 1 on a validation or analysis failure, 2 on an
//! I/O or configuration error.

pub mod cache;
pub mod commands;
pub mod config;
pub mod table;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perfpredict::registry::RegistryError;

use crate::config::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "perfpredict", version, about = "Predict benchmark scores from model design features")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Model registry: canonical JSON, or CSV together with --mapping.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    /// Column mapping for a CSV registry.
    #[arg(long, global = true)]
    pub mapping: Option<PathBuf>,
    /// Scores CSV (model_id,task_id,shots,metric_kind,value).
    #[arg(long, global = true)]
    pub scores: Option<PathBuf>,
    /// Restrict to one setting (`task@shots`) or every setting of a task.
    #[arg(long, global = true)]
    pub task: Option<String>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    ScalingHeatmap,
    ShapBeeswarm,
    ShapDependence,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the registry and scores against the schema.
    Validate,
    /// Write the encoded feature matrix.
    Encode {
        /// Comma-separated feature names (default: every feature).
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Fit the power law and log-linear baselines per task.
    FitScaling,
    /// Multi-seed nested cross-validation of one predictor.
    Cv {
        /// median, log_linear, power_law or gbt.
        #[arg(long, default_value = "gbt")]
        predictor: String,
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Greedy forward feature selection on top of the scale features.
    Select {
        #[arg(long, value_delimiter = ',')]
        candidates: Vec<String>,
    },
    /// Paired comparison of two feature sets across seeds.
    Compare {
        /// Default: scale features only.
        #[arg(long, value_delimiter = ',')]
        features_a: Vec<String>,
        /// Default: every feature.
        #[arg(long, value_delimiter = ',')]
        features_b: Vec<String>,
    },
    /// SHAP values of a model fit on all rows.
    Shap {
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// One-vs-rest architecture contrasts pooled with PET-PEESE.
    BiasAudit,
    /// MAE table of the baselines and the two feature sets.
    Report {
        /// Columns to compute: median, log_linear, scaling, all.
        #[arg(long, value_delimiter = ',', default_value = "median,log_linear,scaling,all")]
        predictors: Vec<String>,
        /// Feature set of the `all` column (default: every feature).
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// CSV data behind the figures.
    PlotData {
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Feature for shap-dependence.
        #[arg(long)]
        feature: Option<String>,
        /// Grid points per axis for scaling-heatmap.
        #[arg(long, default_value_t = 50)]
        grid_size: usize,
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Generate a synthetic registry with planted effects.
    Synth {
        #[arg(long, default_value_t = 92)]
        n_models: usize,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
    },
}

/// Exit status for an error: 2 for I/O and configuration problems, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<std::io::Error>() || cause.is::<ConfigError>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(RegistryError::Io { .. }) = cause.downcast_ref::<RegistryError>() {
            return 2;
        }
        if let Some(perfpredict::Error::Registry(RegistryError::Io { .. })) = cause.downcast_ref::<perfpredict::Error>() {
            return 2;
        }
    }
    1
}

/// Parse arguments, run the command and return the exit status.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
