//! `gencls` command-line driver: configuration, binary I/O, manifests and plots.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
//! 1 anything else (for example an unwritable output directory).

pub mod binio;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

/// Bad command-line input: missing files, wrong object kinds, inconsistent flags.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct InputError(pub String);

#[derive(Debug, Parser)]
#[command(name = "gencls", version, about = "Generative vs discriminative classifiers on synthetic shift data")]
pub struct Cli {
    /// Base seed; overrides every seed field in the configuration.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sweeps (results do not depend on this).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory (for `evaluate`, a path ending in .csv names the report file).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Gaussian,
    Tokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Lda,
    Logistic,
    Svm,
}

impl From<MethodArg> for gencls_core::linear_models::Method {
    fn from(m: MethodArg) -> Self {
        use gencls_core::linear_models::Method;
        match m {
            MethodArg::Lda => Method::Lda,
            MethodArg::Logistic => Method::LogisticGd,
            MethodArg::Svm => Method::SvmHardMargin,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample train and test splits to GCL1 files.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "gaussian")]
        kind: DataKind,
    },
    /// Fit a linear classifier (LDA, logistic GD or hard-margin SVM).
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// GCL1 Gaussian training set; sampled from `[gaussian]` when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Train the token objectives over seeds and report group accuracies.
    TrainAr {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Group accuracy report of a saved model on a saved dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Diffusion-classifier agreement with the exact Gaussian rule.
    DiffusionCheck {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Phase diagram over spurious scale and noise variance.
    SweepPhase {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Discriminative fitter for the comparison.
        #[arg(long, value_enum)]
        disc: Option<MethodArg>,
    },
    /// Accuracy and weight-ratio curves against training-set size.
    SweepN {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Per-group gradient-norm traces.
    GradTrace {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Verify run manifests under --out and summarize known outputs.
    Report,
}

/// Maps an error chain to the documented exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gencls_core::Error>() {
            return if e.is_config() { 2 } else { 3 };
        }
        if cause.is::<config::ConfigError>() || cause.is::<InputError>() || cause.is::<binio::BinError>() {
            return 2;
        }
        if cause.is::<svg::PlotError>() {
            return 3;
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    commands::dispatch(cli)
}
