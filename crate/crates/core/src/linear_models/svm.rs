//! Hard-margin SVM on bias-augmented features.
//!
//! Minimizes ‖(w, b)‖² subject to y_i (w·x_i + b) ≥ 1. Because the bias is an
//! ordinary coordinate, the dual has only the box constraint α ≥ 0:
//!
//! ```text
//! max_α  Σα_i − ½ αᵀQα,   Q_ij = y_i y_j x̃_i·x̃_j
//! ```
//!
//! It is solved by accelerated projected gradient with adaptive restart. The
//! support set is then polished by solving `Q_SS α_S = 1` exactly, and the
//! polished point is kept only when it satisfies KKT.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{augmented_columns, check_labels, FitMetadata, LinearModel, Method};
use crate::error::{Error, Result};
use crate::linalg::{dot, lambda_max_psd};
use crate::synth_data::LabeledDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub max_iters: usize,
    /// Target complementarity residual max_i |min(α_i, y_i f_i − 1)|.
    pub kkt_tol: f64,
    /// Σα above this is taken as dual divergence (no separating hyperplane).
    /// Also checked against the lower bound (Σα)²/αᵀQα on the optimal Σα.
    pub divergence_bound: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            max_iters: 500_000,
            kkt_tol: 1e-10,
            divergence_bound: 1e10,
        }
    }
}

fn kkt_residual(alpha: &[f64], margins: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(margins)
        .map(|(&a, &m)| a.min(m - 1.0).abs())
        .fold(0.0, f64::max)
}

fn margins(q: &DMatrix<f64>, alpha: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    let qs = q.as_slice();
    (0..n).map(|i| dot(&qs[i * n..(i + 1) * n], alpha)).collect()
}

fn dual_objective(alpha: &[f64], m: &[f64]) -> f64 {
    alpha.iter().sum::<f64>() - 0.5 * dot(alpha, m)
}

/// Exact solve on the current support; `None` if the result violates KKT.
fn polish(q: &DMatrix<f64>, alpha: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = alpha.len();
    let amax = alpha.iter().cloned().fold(0.0, f64::max);
    let support: Vec<usize> = (0..n).filter(|&i| alpha[i] > 1e-9 * amax).collect();
    if support.is_empty() {
        return None;
    }
    let s = support.len();
    let qss = DMatrix::from_fn(s, s, |a, b| q[(support[a], support[b])]);
    let ones = DVector::from_element(s, 1.0);
    let sol = qss.svd(true, true).solve(&ones, 1e-13).ok()?;
    let mut out = vec![0.0; n];
    for (k, &i) in support.iter().enumerate() {
        if sol[k] < 0.0 {
            return None;
        }
        out[i] = sol[k];
    }
    let m = margins(q, &out);
    (kkt_residual(&out, &m) < tol).then_some(out)
}

pub fn fit_svm_hard_margin(train: &LabeledDataset, cfg: &SvmConfig) -> Result<LinearModel> {
    check_labels(train)?;
    let xa = augmented_columns(&train.features);
    let n = xa.ncols();
    let y: Vec<f64> = train.labels.iter().map(|&v| f64::from(v)).collect();
    let mut q = xa.tr_mul(&xa);
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] *= y[i] * y[j];
        }
    }
    let lmax = lambda_max_psd(&q);
    if !(lmax > 0.0) {
        return Err(Error::Numerical("degenerate Gram matrix".into()));
    }
    let step = 1.0 / lmax;

    let mut alpha = vec![0.0; n];
    let mut beta = alpha.clone();
    let mut theta = 1.0f64;
    let mut obj_prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for t in 0..cfg.max_iters {
        iterations = t + 1;
        let qb = margins(&q, &beta);
        let next: Vec<f64> = (0..n).map(|i| (beta[i] + step * (1.0 - qb[i])).max(0.0)).collect();
        let m_next = margins(&q, &next);
        let obj = dual_objective(&next, &m_next);
        let total: f64 = next.iter().sum();
        if !total.is_finite() || total > cfg.divergence_bound {
            return Err(Error::NotSeparable(format!("dual diverged (sum alpha = {total:e}) after {iterations} iterations")));
        }
        if obj < obj_prev {
            // Adaptive restart: drop momentum when the objective decreases.
            theta = 1.0;
            beta.copy_from_slice(&alpha);
            obj_prev = f64::NEG_INFINITY;
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let mom = (theta - 1.0) / theta_next;
        for i in 0..n {
            beta[i] = next[i] + mom * (next[i] - alpha[i]);
        }
        alpha = next;
        theta = theta_next;
        obj_prev = obj;
        if t % 50 == 0 {
            // Any separator w satisfies 1 <= u·(Y X̃ᵀ w) for u = α/Σα, so
            // ‖w*‖² = Σα* >= (Σα)² / αᵀQα: a certified lower bound.
            let am = dot(&alpha, &m_next);
            if am > 0.0 && total * total / am > cfg.divergence_bound {
                return Err(Error::NotSeparable(format!(
                    "optimal sum alpha provably exceeds {:e} after {iterations} iterations",
                    cfg.divergence_bound
                )));
            }
            residual = kkt_residual(&alpha, &m_next);
            if residual < cfg.kkt_tol {
                converged = true;
                break;
            }
            if t % 1000 == 0 {
                if let Some(p) = polish(&q, &alpha, cfg.kkt_tol) {
                    alpha = p;
                    residual = kkt_residual(&alpha, &margins(&q, &alpha));
                    converged = true;
                    break;
                }
            }
        }
    }
    if !converged {
        if let Some(p) = polish(&q, &alpha, cfg.kkt_tol) {
            alpha = p;
        }
        let m = margins(&q, &alpha);
        residual = kkt_residual(&alpha, &m);
        let min_margin = m.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_margin < 1.0 - 1e-3 {
            return Err(Error::NotSeparable(format!(
                "no feasible separator after {iterations} iterations (min functional margin {min_margin:.4})"
            )));
        }
    }
    let ya: Vec<f64> = (0..n).map(|i| alpha[i] * y[i]).collect();
    let w_aug = &xa * DVector::from_column_slice(&ya);
    let d = w_aug.len() - 1;
    let norm = w_aug.norm();
    let mut correct = 0;
    let mut min_fm = f64::INFINITY;
    for i in 0..n {
        let f = dot(w_aug.as_slice(), xa.column(i).as_slice());
        min_fm = min_fm.min(y[i] * f);
        if (f >= 0.0) == (y[i] > 0.0) {
            correct += 1;
        }
    }
    Ok(LinearModel {
        weights: w_aug.as_slice()[..d].to_vec(),
        bias: w_aug[d],
        method: Method::SvmHardMargin,
        meta: FitMetadata {
            iterations,
            train_accuracy: correct as f64 / n as f64,
            separable: true,
            margin: min_fm / norm,
            kkt_residual: residual,
            hit_max_iters: !converged,
            ..Default::default()
        },
    })
}
