//! Linear classifiers for the Gaussian toy family.
//!
//! All three fitters return a [`LinearModel`] whose rule is `sign(w·x + b)` with
//! `sign(0) = +1`. Column 0 is the core feature, column 1 the spurious feature,
//! and the remaining columns are noise.

mod lda;
mod logistic;
mod svm;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth_data::LabeledDataset;

pub use lda::{fit_lda, fit_lda_linear, Inversion, LdaModel};
pub use logistic::{fit_logistic_gd, logistic_loss_and_grad, LogisticConfig};
pub use svm::{fit_svm_hard_margin, SvmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lda,
    LogisticGd,
    SvmHardMargin,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Lda => "lda",
            Method::LogisticGd => "logistic_gd",
            Method::SvmHardMargin => "svm_hard_margin",
        }
    }

    pub fn code(&self) -> u32 {
        match self {
            Method::Lda => 0,
            Method::LogisticGd => 1,
            Method::SvmHardMargin => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Method::Lda),
            1 => Some(Method::LogisticGd),
            2 => Some(Method::SvmHardMargin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub iterations: usize,
    pub train_accuracy: f64,
    /// Eigenvalue threshold (pseudo-inverse) or λ (shrinkage) for LDA.
    pub inversion_param: f64,
    /// Numerical rank of the inverted covariance (LDA).
    pub rank: usize,
    pub rank_deficient: bool,
    pub hit_max_iters: bool,
    /// Whether the training data was separated by the final iterate.
    pub separable: bool,
    /// Geometric margin of the bias-augmented separator (logistic / SVM).
    pub margin: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub method: Method,
    pub meta: FitMetadata,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        crate::linalg::dot(&self.weights, x) + self.bias
    }

    /// Weights with the bias appended, the vector the max-margin problems act on.
    pub fn augmented(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }
}

pub fn sign_label(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

/// Labels in {−1, +1}; a zero score maps to +1.
pub fn predict(model: &LinearModel, features: &DMatrix<f64>) -> Result<Vec<i8>> {
    if features.ncols() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: features.ncols(),
        });
    }
    let scores = features * nalgebra::DVector::from_column_slice(&model.weights);
    Ok(scores.iter().map(|s| sign_label(s + model.bias)).collect())
}

pub fn train_accuracy(model: &LinearModel, data: &LabeledDataset) -> Result<f64> {
    let pred = predict(model, &data.features)?;
    let correct = pred.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / data.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightDecomposition {
    pub w_core: f64,
    pub w_spu: f64,
    pub w_noise_norm: f64,
    /// `None` when |w_core| < 1e-12.
    pub ratio_spu: Option<f64>,
    pub ratio_noise: Option<f64>,
}

impl WeightDecomposition {
    pub fn from_parts(w_core: f64, w_spu: f64, w_noise_norm: f64) -> Self {
        let defined = w_core.abs() >= 1e-12;
        Self {
            w_core,
            w_spu,
            w_noise_norm,
            ratio_spu: defined.then(|| w_spu.abs() / w_core.abs()),
            ratio_noise: defined.then(|| w_noise_norm / w_core.abs()),
        }
    }

    pub fn is_undefined(&self) -> bool {
        self.ratio_spu.is_none()
    }
}

pub fn decompose_weights(model: &LinearModel) -> Result<WeightDecomposition> {
    let w = &model.weights;
    if w.len() < 3 {
        return Err(Error::Config(format!(
            "weight decomposition needs dimension >= 3, got {}",
            w.len()
        )));
    }
    let noise = crate::linalg::norm(&w[2..]);
    Ok(WeightDecomposition::from_parts(w[0], w[1], noise))
}

/// Per-record diagnostics of an iterative fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub loss: f64,
    pub grad_norm_majority: f64,
    pub grad_norm_minority: f64,
    /// NaN when undefined.
    pub ratio_spu: f64,
    pub ratio_noise: f64,
    /// Cosine between the current parameters and those of the previous record.
    pub cosine: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// Epoch whose majority gradient norm the stored norms were divided by, if normalized.
    pub norm_reference_epoch: Option<usize>,
    /// Set when training was shorter than the preferred reference epoch.
    pub norm_reference_fallback: bool,
}

impl TrainTrace {
    /// Divides both group gradient norms by the majority norm at `epoch`
    /// (falls back to the first record if that epoch is absent).
    pub fn normalize_by_majority_at(&mut self, epoch: usize) {
        let Some(first) = self.records.first() else {
            return;
        };
        let (reference, fallback) = match self.records.iter().find(|r| r.epoch == epoch) {
            Some(r) => (r.clone(), false),
            None => (first.clone(), true),
        };
        let denom = reference.grad_norm_majority;
        if denom > 0.0 {
            for r in &mut self.records {
                r.grad_norm_majority /= denom;
                r.grad_norm_minority /= denom;
            }
        }
        self.norm_reference_epoch = Some(reference.epoch);
        self.norm_reference_fallback = fallback;
    }
}

/// Appends a constant 1 to every example: a (d+1) × n matrix, one example per column.
pub(crate) fn augmented_columns(features: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = features.shape();
    let mut xa = DMatrix::zeros(d + 1, n);
    for i in 0..n {
        for j in 0..d {
            xa[(j, i)] = features[(i, j)];
        }
        xa[(d, i)] = 1.0;
    }
    xa
}

pub(crate) fn check_labels(data: &LabeledDataset) -> Result<()> {
    if data.features.nrows() != data.labels.len() {
        return Err(Error::Dimension {
            expected: data.features.nrows(),
            got: data.labels.len(),
        });
    }
    if data.labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(Error::Config("labels must be -1 or +1".into()));
    }
    let pos = data.labels.iter().filter(|&&y| y > 0).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::Config("training data must contain both classes".into()));
    }
    Ok(())
}
