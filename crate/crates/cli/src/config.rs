//! TOML run configuration.
//!
//! Each top-level table mirrors one library configuration type. Every table
//! and key is optional; omitted values take the library defaults, and unknown
//! keys are rejected with their line and column.

use std::path::Path;

use gencls_core::ar_textgen::{Objective, SgdConfig};
use gencls_core::diffusion_core::DiffusionCheckConfig;
use gencls_core::linear_models::{Inversion, LogisticConfig, Method, SvmConfig};
use gencls_core::sweep::{PhaseGridConfig, SampleComplexityConfig};
use gencls_core::synth_data::{GaussianDataConfig, TokenDataConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub method: Method,
    pub lda: Inversion,
    pub logistic: LogisticConfig,
    pub svm: SvmConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            method: Method::Lda,
            lda: Inversion::default(),
            logistic: LogisticConfig::default(),
            svm: SvmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArSection {
    pub objectives: Vec<Objective>,
    pub seeds: usize,
    pub sgd: SgdConfig,
}

impl Default for ArSection {
    fn default() -> Self {
        Self {
            objectives: vec![Objective::GenPrefix, Objective::Disc, Objective::JointSuffix],
            seeds: 10,
            sgd: SgdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    /// Token-model traces: data and optimizer come from `[tokens]` and `[ar.sgd]`.
    pub ar_epochs: usize,
    pub ar_eta_core: f64,
    pub seeds: usize,
    /// Gaussian logistic trace recorded every this many iterations.
    pub logistic_every: usize,
    pub logistic_max_iters: usize,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            ar_epochs: 1500,
            ar_eta_core: 0.0,
            seeds: 10,
            logistic_every: 100,
            logistic_max_iters: 20_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub gaussian: GaussianDataConfig,
    pub tokens: TokenDataConfig,
    pub train: TrainSection,
    pub ar: ArSection,
    pub trace: TraceSection,
    pub diffusion: DiffusionCheckConfig,
    pub phase: PhaseGridConfig,
    pub sample_complexity: SampleComplexityConfig,
}

impl Config {
    /// Overwrites every seed field so all randomness follows the one `--seed` value.
    pub fn apply_seed(&mut self, seed: u64) {
        self.gaussian.seed = seed;
        self.tokens.seed = seed;
        self.ar.sgd.seed = seed;
        self.diffusion.seed = seed;
        self.phase.base_seed = seed;
        self.sample_complexity.base_seed = seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config types serialize to TOML")
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

pub fn parse_config_str(text: &str, origin: &str) -> Result<Config, ConfigError> {
    toml::from_str::<Config>(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ConfigError::Parse {
            path: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(parse_config_str("", "t").unwrap(), Config::default());
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
