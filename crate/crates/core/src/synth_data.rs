//! Synthetic data: the Gaussian toy family with a planted spurious coordinate,
//! and a token-sequence family with the same majority/minority structure.
//!
//! Group ids encode (label, agreement) as
//! `0 = (−1, agrees)`, `1 = (−1, disagrees)`, `2 = (+1, agrees)`, `3 = (+1, disagrees)`.
//! "Agrees" means the spurious feature points to the true label.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::seeds::{rng_for, TAG_TEST, TAG_TOKENS, TAG_TRAIN};
use crate::stats::normal_cdf;

pub const N_GROUPS: usize = 4;

pub fn group_of(label: i8, agrees: bool) -> u8 {
    (if label > 0 { 2 } else { 0 }) + u8::from(!agrees)
}

pub fn group_label(g: u8) -> i8 {
    if g >= 2 {
        1
    } else {
        -1
    }
}

pub fn group_agrees(g: u8) -> bool {
    g % 2 == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianDataConfig {
    /// Total dimension: one core, one spurious, `d − 2` noise coordinates.
    pub d: usize,
    pub rho: f64,
    pub sigma_core: f64,
    /// Magnitude B of the spurious coordinate.
    pub spurious_scale: f64,
    pub sigma_noise: f64,
    pub n_train: usize,
    pub n_test_per_group: usize,
    pub seed: u64,
}

impl Default for GaussianDataConfig {
    fn default() -> Self {
        Self {
            d: 1026,
            rho: 0.9,
            sigma_core: 0.15,
            spurious_scale: 1.0,
            sigma_noise: 0.6,
            n_train: 1024,
            n_test_per_group: 500,
            seed: 0,
        }
    }
}

impl GaussianDataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 3 {
            return config_err(format!("d must be at least 3, got {}", self.d));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return config_err(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        for (name, v) in [
            ("sigma_core", self.sigma_core),
            ("spurious_scale", self.spurious_scale),
            ("sigma_noise", self.sigma_noise),
        ] {
            if !v.is_finite() || v < 0.0 {
                return config_err(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.n_train < 2 {
            return config_err(format!("n_train must be at least 2, got {}", self.n_train));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// n × d, one example per row.
    pub features: DMatrix<f64>,
    pub labels: Vec<i8>,
    pub agreement: Vec<bool>,
    pub group_id: Vec<u8>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn minority_count(&self) -> usize {
        self.agreement.iter().filter(|a| !**a).count()
    }
}

/// Draws one example; the row is written into `row`.
fn draw_row<R: Rng>(cfg: &GaussianDataConfig, y: i8, agrees: bool, rng: &mut R, row: &mut [f64]) {
    let yf = f64::from(y);
    let z: f64 = StandardNormal.sample(rng);
    row[0] = yf + cfg.sigma_core * z;
    row[1] = if agrees { yf } else { -yf } * cfg.spurious_scale;
    for v in row[2..].iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = cfg.sigma_noise * z;
    }
}

fn assemble(d: usize, rows: Vec<f64>, labels: Vec<i8>, agreement: Vec<bool>) -> LabeledDataset {
    let n = labels.len();
    let group_id = labels
        .iter()
        .zip(&agreement)
        .map(|(&y, &a)| group_of(y, a))
        .collect();
    LabeledDataset {
        features: DMatrix::from_row_slice(n, d, &rows),
        labels,
        agreement,
        group_id,
    }
}

/// Training set with exactly ⌊n/2⌋ examples per class (an odd leftover example
/// is positive), and a test set with `n_test_per_group` examples in each group.
pub fn generate_gaussian(cfg: &GaussianDataConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    cfg.validate()?;
    Ok((gaussian_train(cfg), gaussian_test(cfg)))
}

pub fn gaussian_train(cfg: &GaussianDataConfig) -> LabeledDataset {
    let d = cfg.d;
    let n = cfg.n_train;
    let mut rng = rng_for(cfg.seed, &[TAG_TRAIN]);
    let mut rows = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    let mut agreement = Vec::with_capacity(n);
    for i in 0..n {
        let y: i8 = if i % 2 == 0 { 1 } else { -1 };
        let y = if n % 2 == 1 && i == n - 1 { 1 } else { y };
        let agrees = rng.random::<f64>() < cfg.rho;
        draw_row(cfg, y, agrees, &mut rng, &mut rows[i * d..(i + 1) * d]);
        labels.push(y);
        agreement.push(agrees);
    }
    assemble(d, rows, labels, agreement)
}

pub fn gaussian_test(cfg: &GaussianDataConfig) -> LabeledDataset {
    let d = cfg.d;
    let m = cfg.n_test_per_group;
    let mut rng = rng_for(cfg.seed, &[TAG_TEST]);
    let mut rows = vec![0.0; N_GROUPS * m * d];
    let mut labels = Vec::with_capacity(N_GROUPS * m);
    let mut agreement = Vec::with_capacity(N_GROUPS * m);
    for g in 0..N_GROUPS as u8 {
        for _ in 0..m {
            let i = labels.len();
            let (y, a) = (group_label(g), group_agrees(g));
            draw_row(cfg, y, a, &mut rng, &mut rows[i * d..(i + 1) * d]);
            labels.push(y);
            agreement.push(a);
        }
    }
    assemble(d, rows, labels, agreement)
}

/// Accuracy of the core-only rule sign(x_core): Φ(1/σ).
pub fn bayes_core_accuracy(cfg: &GaussianDataConfig) -> Result<f64> {
    if !(cfg.sigma_core > 0.0) {
        return config_err(format!("sigma_core must be positive, got {}", cfg.sigma_core));
    }
    Ok(normal_cdf(1.0 / cfg.sigma_core))
}

/// Token inventory: content tokens `0..content`, then two class tokens, then padding.
///
/// Content tokens 0..4 are the indicators `core+`, `core−`, `spu+`, `spu−`; the
/// rest are filler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenVocab {
    pub content: usize,
}

impl TokenVocab {
    pub const CORE_POS: u32 = 0;
    pub const CORE_NEG: u32 = 1;
    pub const SPU_POS: u32 = 2;
    pub const SPU_NEG: u32 = 3;

    /// Class index 0 is label −1 and class index 1 is label +1.
    pub fn class_token(&self, class: usize) -> u32 {
        (self.content + class) as u32
    }

    pub fn pad(&self) -> u32 {
        (self.content + 2) as u32
    }

    pub fn total(&self) -> usize {
        self.content + 3
    }

    pub fn core_token(label: i8) -> u32 {
        if label > 0 {
            Self::CORE_POS
        } else {
            Self::CORE_NEG
        }
    }

    pub fn spurious_token(label: i8) -> u32 {
        if label > 0 {
            Self::SPU_POS
        } else {
            Self::SPU_NEG
        }
    }
}

pub fn class_index(label: i8) -> usize {
    usize::from(label > 0)
}

pub fn class_label(class: usize) -> i8 {
    if class == 1 {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenDataConfig {
    /// Content tokens including the four indicators.
    pub vocab_size: usize,
    pub seq_len: usize,
    pub rho_token: f64,
    pub eta_core: f64,
    /// Length of the contiguous run of spurious-indicator copies.
    pub spurious_run: usize,
    pub n_train: usize,
    pub n_test_per_group: usize,
    pub seed: u64,
}

impl Default for TokenDataConfig {
    fn default() -> Self {
        Self {
            vocab_size: 8,
            seq_len: 12,
            rho_token: 0.9,
            eta_core: 0.02,
            spurious_run: 3,
            n_train: 1000,
            n_test_per_group: 250,
            seed: 0,
        }
    }
}

impl TokenDataConfig {
    pub fn vocab(&self) -> TokenVocab {
        TokenVocab {
            content: self.vocab_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len < 3 {
            return config_err(format!("seq_len must be at least 3, got {}", self.seq_len));
        }
        if self.vocab_size < 4 {
            return config_err(format!("vocab_size must be at least 4, got {}", self.vocab_size));
        }
        for (name, v) in [("rho_token", self.rho_token), ("eta_core", self.eta_core)] {
            if !(0.0..=1.0).contains(&v) {
                return config_err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.spurious_run == 0 || self.spurious_run + 1 > self.seq_len {
            return config_err(format!(
                "spurious_run must be in 1..={}, got {}",
                self.seq_len - 1,
                self.spurious_run
            ));
        }
        let filler_slots = self.seq_len - 1 - self.spurious_run;
        if filler_slots > 0 && self.vocab_size == 4 {
            return config_err("filler positions need at least one filler token (vocab_size > 4)");
        }
        if self.n_train < 2 {
            return config_err(format!("n_train must be at least 2, got {}", self.n_train));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenDataset {
    pub seq_len: usize,
    /// Row-major n × seq_len token ids.
    pub tokens: Vec<u32>,
    pub labels: Vec<i8>,
    pub agreement: Vec<bool>,
    pub group_id: Vec<u8>,
}

impl TokenDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sequence(&self, i: usize) -> &[u32] {
        &self.tokens[i * self.seq_len..(i + 1) * self.seq_len]
    }
}

fn draw_sequence<R: Rng>(cfg: &TokenDataConfig, y: i8, agrees: bool, rng: &mut R, out: &mut [u32]) {
    let l = cfg.seq_len;
    let k = cfg.spurious_run;
    let n_filler = (cfg.vocab_size - 4) as u32;
    let core_flipped = rng.random::<f64>() < cfg.eta_core;
    let core = TokenVocab::core_token(if core_flipped { -y } else { y });
    let spu = TokenVocab::spurious_token(if agrees { y } else { -y });
    let run_start = rng.random_range(0..=l - k);
    // Core goes to a uniformly chosen slot outside the run.
    let mut core_slot = rng.random_range(0..l - k);
    if core_slot >= run_start {
        core_slot += k;
    }
    for (p, tok) in out.iter_mut().enumerate() {
        *tok = if p >= run_start && p < run_start + k {
            spu
        } else if p == core_slot {
            core
        } else {
            4 + rng.random_range(0..n_filler)
        };
    }
}

/// Token sequences with one core indicator, a run of spurious indicators and
/// uniform filler elsewhere. Train is class balanced like [`gaussian_train`];
/// test holds `n_test_per_group` sequences per group.
pub fn generate_tokens(cfg: &TokenDataConfig) -> Result<(TokenDataset, TokenDataset)> {
    cfg.validate()?;
    let l = cfg.seq_len;
    let build = |labels_groups: Vec<(i8, Option<bool>)>, tag: u64| {
        let mut rng = rng_for(cfg.seed, &[TAG_TOKENS, tag]);
        let n = labels_groups.len();
        let mut tokens = vec![0u32; n * l];
        let mut labels = Vec::with_capacity(n);
        let mut agreement = Vec::with_capacity(n);
        for (i, (y, fixed)) in labels_groups.into_iter().enumerate() {
            let agrees = fixed.unwrap_or_else(|| rng.random::<f64>() < cfg.rho_token);
            draw_sequence(cfg, y, agrees, &mut rng, &mut tokens[i * l..(i + 1) * l]);
            labels.push(y);
            agreement.push(agrees);
        }
        let group_id = labels.iter().zip(&agreement).map(|(&y, &a)| group_of(y, a)).collect();
        TokenDataset {
            seq_len: l,
            tokens,
            labels,
            agreement,
            group_id,
        }
    };
    let n = cfg.n_train;
    let train_spec = (0..n)
        .map(|i| {
            let y = if (i % 2 == 0) || (n % 2 == 1 && i == n - 1) { 1 } else { -1 };
            (y, None)
        })
        .collect();
    let test_spec = (0..N_GROUPS as u8)
        .flat_map(|g| std::iter::repeat_n((group_label(g), Some(group_agrees(g))), cfg.n_test_per_group))
        .collect();
    let train = build(train_spec, TAG_TRAIN);
    let test = build(test_spec, TAG_TEST);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GaussianDataConfig {
        GaussianDataConfig {
            d: 5,
            n_train: 200,
            n_test_per_group: 10,
            ..Default::default()
        }
    }

    #[test]
    fn default_config_minority_fraction_within_binomial_ci() {
        let cfg = GaussianDataConfig {
            d: 1026,
            rho: 0.9,
            sigma_core: 0.15,
            sigma_noise: 0.6,
            n_train: 1024,
            n_test_per_group: 1,
            seed: 11,
            ..Default::default()
        };
        let (train, _) = generate_gaussian(&cfg).unwrap();
        let k = train.minority_count() as f64;
        let (mean, sd) = (1024.0 * 0.1, (1024.0f64 * 0.1 * 0.9).sqrt());
        assert!((k - mean).abs() < 3.0 * sd, "minority count {k}");
    }

    #[test]
    fn degenerate_scales_make_core_threshold_perfect() {
        let cfg = GaussianDataConfig {
            d: 4,
            spurious_scale: 0.0,
            sigma_noise: 0.0,
            sigma_core: 1e-9,
            n_train: 50,
            ..Default::default()
        };
        let (train, test) = generate_gaussian(&cfg).unwrap();
        for ds in [&train, &test] {
            for i in 0..ds.len() {
                let row = ds.features.row(i);
                assert!((row[0] - f64::from(ds.labels[i])).abs() < 1e-6);
                assert_eq!(row[1], 0.0);
                assert!(row.iter().skip(2).all(|&v| v == 0.0));
                assert_eq!(row[0] >= 0.0, ds.labels[i] > 0);
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_datasets() {
        let cfg = GaussianDataConfig {
            d: 3,
            n_train: 4,
            seed: 7,
            ..small()
        };
        assert_eq!(generate_gaussian(&cfg).unwrap(), generate_gaussian(&cfg).unwrap());
        let other = GaussianDataConfig { seed: 8, ..cfg };
        assert_ne!(generate_gaussian(&other).unwrap().0, generate_gaussian(&cfg).unwrap().0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_gaussian(&GaussianDataConfig { d: 2, ..small() }).is_err());
        assert!(generate_gaussian(&GaussianDataConfig { n_train: 1, ..small() }).is_err());
        assert!(generate_gaussian(&GaussianDataConfig { sigma_noise: f64::NAN, ..small() }).is_err());
        assert!(generate_gaussian(&GaussianDataConfig { rho: 1.5, ..small() }).is_err());
    }

    #[test]
    fn train_is_class_balanced_and_test_group_balanced() {
        let cfg = GaussianDataConfig { n_train: 9, ..small() };
        let (train, test) = generate_gaussian(&cfg).unwrap();
        let pos = train.labels.iter().filter(|&&y| y > 0).count();
        assert_eq!(pos, 5);
        assert_eq!(train.len() - pos, 4);
        for g in 0..4u8 {
            assert_eq!(test.group_id.iter().filter(|&&x| x == g).count(), 10);
        }
    }

    #[test]
    fn bayes_core_accuracy_values() {
        let acc = |s: f64| {
            bayes_core_accuracy(&GaussianDataConfig {
                sigma_core: s,
                ..small()
            })
            .unwrap()
        };
        assert!((acc(0.15) - 1.0).abs() < 1e-10);
        assert!((acc(1.0) - 0.841_344_746_068_543).abs() < 1e-12);
        assert!((acc(1e12) - 0.5).abs() < 1e-10);
        assert!(bayes_core_accuracy(&GaussianDataConfig {
            sigma_core: 0.0,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn token_minority_count_within_binomial_ci() {
        let cfg = TokenDataConfig {
            rho_token: 0.9,
            n_train: 1000,
            seed: 3,
            ..Default::default()
        };
        let (train, _) = generate_tokens(&cfg).unwrap();
        let k = train.agreement.iter().filter(|a| !**a).count() as f64;
        let sd = (1000.0f64 * 0.1 * 0.9).sqrt();
        assert!((k - 100.0).abs() < 3.0 * sd, "minority count {k}");
    }

    #[test]
    fn tokens_have_planted_structure() {
        let cfg = TokenDataConfig {
            n_train: 300,
            ..Default::default()
        };
        let (train, test) = generate_tokens(&cfg).unwrap();
        let vocab = cfg.vocab();
        for ds in [&train, &test] {
            for i in 0..ds.len() {
                let s = ds.sequence(i);
                assert!(s.iter().all(|&t| (t as usize) < vocab.content));
                let cores = s.iter().filter(|&&t| t < 2).count();
                let spus: Vec<usize> = (0..s.len()).filter(|&p| s[p] == 2 || s[p] == 3).collect();
                assert_eq!(cores, 1);
                assert_eq!(spus.len(), cfg.spurious_run);
                assert_eq!(spus[spus.len() - 1] - spus[0], cfg.spurious_run - 1);
                let spu_label = if s[spus[0]] == TokenVocab::SPU_POS { 1 } else { -1 };
                assert_eq!(spu_label == ds.labels[i], ds.agreement[i]);
            }
        }
        for g in 0..4u8 {
            assert_eq!(test.group_id.iter().filter(|&&x| x == g).count(), cfg.n_test_per_group);
        }
    }

    #[test]
    fn noiseless_core_without_filler_determines_label() {
        let cfg = TokenDataConfig {
            vocab_size: 4,
            seq_len: 3,
            spurious_run: 2,
            eta_core: 0.0,
            n_train: 100,
            ..Default::default()
        };
        let (train, _) = generate_tokens(&cfg).unwrap();
        for i in 0..train.len() {
            let core = *train.sequence(i).iter().find(|&&t| t < 2).unwrap();
            assert_eq!(core, TokenVocab::core_token(train.labels[i]));
        }
    }

    #[test]
    fn token_generation_is_deterministic_and_validated() {
        let cfg = TokenDataConfig::default();
        assert_eq!(generate_tokens(&cfg).unwrap(), generate_tokens(&cfg).unwrap());
        assert!(generate_tokens(&TokenDataConfig { seq_len: 2, ..cfg.clone() }).is_err());
        assert!(generate_tokens(&TokenDataConfig { vocab_size: 3, ..cfg.clone() }).is_err());
        assert!(generate_tokens(&TokenDataConfig { vocab_size: 4, ..cfg }).is_err());
    }
}
