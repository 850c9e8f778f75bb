//! Unregularized logistic regression by full-batch gradient descent.
//!
//! The bias is an always-one augmented coordinate. With fewer examples than
//! augmented dimensions the iterates are run in the dual: w = Xaᵀa stays in
//! the row space, so the update `a_i += lr/n · y_i σ(−y_i f_i)` with `f = K a`
//! reproduces primal GD exactly at O(n²) per step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{augmented_columns, check_labels, FitMetadata, LinearModel, Method, TraceRecord, TrainTrace};
use crate::error::{Error, Result};
use crate::linalg::{axpy, cosine, dot, lambda_max_psd};
use crate::stats::{sigmoid, softplus};
use crate::synth_data::LabeledDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    /// Step size; `None` uses 1/L with L = λ_max(XaᵀXa) / (4n).
    pub lr: Option<f64>,
    pub max_iters: usize,
    /// Stop once 1 − cos(w_t, w_{t−check_every}) falls below this with 100% train accuracy.
    pub stop_cosine_tol: f64,
    pub check_every: usize,
    /// Record a trace entry every this many iterations; `None` disables the trace.
    pub trace_every: Option<usize>,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            lr: None,
            max_iters: 200_000,
            stop_cosine_tol: 1e-7,
            check_every: 1000,
            trace_every: None,
        }
    }
}

/// Mean logistic loss and its gradient at augmented weights `w`.
/// `xa` holds one augmented example per column.
pub fn logistic_loss_and_grad(xa: &DMatrix<f64>, labels: &[i8], w: &[f64]) -> (f64, Vec<f64>) {
    let dim = xa.nrows();
    let n = xa.ncols();
    let data = xa.as_slice();
    let mut grad = vec![0.0; dim];
    let mut loss = 0.0;
    for i in 0..n {
        let x = &data[i * dim..(i + 1) * dim];
        let y = f64::from(labels[i]);
        let m = y * dot(x, w);
        loss += softplus(-m);
        axpy(-y * sigmoid(-m), x, &mut grad);
    }
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    (loss * inv, grad)
}

struct StepStats {
    loss: f64,
    correct: usize,
    norm_maj: f64,
    norm_min: f64,
}

/// Per-example gradient norm is σ(−y f)·‖x̃‖; group means are accumulated here.
fn group_norms(coefs: impl Iterator<Item = (f64, f64, bool)>) -> (f64, f64) {
    let (mut smaj, mut nmaj, mut smin, mut nmin) = (0.0, 0usize, 0.0, 0usize);
    for (s, xnorm, agrees) in coefs {
        if agrees {
            smaj += s * xnorm;
            nmaj += 1;
        } else {
            smin += s * xnorm;
            nmin += 1;
        }
    }
    let avg = |s: f64, c: usize| if c == 0 { f64::NAN } else { s / c as f64 };
    (avg(smaj, nmaj), avg(smin, nmin))
}

fn ratios(w: &[f64], d: usize, noise_sq: f64) -> (f64, f64) {
    let core = w[0].abs();
    if core < 1e-12 || d < 3 {
        return (f64::NAN, f64::NAN);
    }
    (w[1].abs() / core, noise_sq.max(0.0).sqrt() / core)
}

pub fn fit_logistic_gd(train: &LabeledDataset, cfg: &LogisticConfig) -> Result<(LinearModel, TrainTrace)> {
    check_labels(train)?;
    if let Some(lr) = cfg.lr {
        if !lr.is_finite() || lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be finite and positive, got {lr}")));
        }
    }
    if cfg.max_iters == 0 || cfg.check_every == 0 {
        return Err(Error::Config("max_iters and check_every must be at least 1".into()));
    }
    let xa = augmented_columns(&train.features);
    let (dim, n) = xa.shape();
    if n < dim {
        fit_dual(train, &xa, cfg)
    } else {
        fit_primal(train, &xa, cfg)
    }
}

fn lambda_max_matrix_free(xa: &DMatrix<f64>) -> f64 {
    let (dim, n) = xa.shape();
    let data = xa.as_slice();
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let mut next = vec![0.0; dim];
        for i in 0..n {
            let x = &data[i * dim..(i + 1) * dim];
            axpy(dot(x, &v), x, &mut next);
        }
        let rq = dot(&v, &next);
        let nn = dot(&next, &next).sqrt();
        if nn == 0.0 {
            return 0.0;
        }
        next.iter_mut().for_each(|x| *x /= nn);
        v = next;
        let done = (rq - lambda).abs() <= 1e-9 * rq.abs();
        lambda = rq;
        if done {
            break;
        }
    }
    lambda
}

fn resolve_lr(cfg: &LogisticConfig, lambda_max: f64, n: usize) -> Result<f64> {
    match cfg.lr {
        Some(lr) => Ok(lr),
        None => {
            let l = lambda_max / (4.0 * n as f64);
            if !(l > 0.0) {
                return Err(Error::Numerical("degenerate data: zero smoothness constant".into()));
            }
            Ok(1.0 / l)
        }
    }
}

fn finish(
    train: &LabeledDataset,
    w: Vec<f64>,
    iterations: usize,
    hit_max: bool,
    correct: usize,
    trace: TrainTrace,
) -> Result<(LinearModel, TrainTrace)> {
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("logistic GD diverged to non-finite weights".into()));
    }
    let d = w.len() - 1;
    let n = train.len();
    let norm = crate::linalg::norm(&w);
    let mut min_margin = f64::INFINITY;
    for i in 0..n {
        let f = dot(&w[..d], train.features.row(i).transpose().as_slice()) + w[d];
        min_margin = min_margin.min(f64::from(train.labels[i]) * f);
    }
    let model = LinearModel {
        weights: w[..d].to_vec(),
        bias: w[d],
        method: Method::LogisticGd,
        meta: FitMetadata {
            iterations,
            train_accuracy: correct as f64 / n as f64,
            hit_max_iters: hit_max,
            separable: correct == n,
            margin: if norm > 0.0 { min_margin / norm } else { 0.0 },
            ..Default::default()
        },
    };
    Ok((model, trace))
}

fn fit_primal(train: &LabeledDataset, xa: &DMatrix<f64>, cfg: &LogisticConfig) -> Result<(LinearModel, TrainTrace)> {
    let (dim, n) = xa.shape();
    let d = dim - 1;
    let data = xa.as_slice();
    let labels: Vec<f64> = train.labels.iter().map(|&y| f64::from(y)).collect();
    let xnorms: Vec<f64> = (0..n).map(|i| dot(&data[i * dim..(i + 1) * dim], &data[i * dim..(i + 1) * dim]).sqrt()).collect();
    let lr = resolve_lr(cfg, lambda_max_matrix_free(xa), n)?;
    let step = lr / n as f64;

    let mut w = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut checkpoint = w.clone();
    let mut last_traced = w.clone();
    let mut trace = TrainTrace::default();
    let mut coefs = vec![0.0; n];

    for t in 0..cfg.max_iters {
        let tracing = cfg.trace_every.is_some_and(|k| t % k == 0);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut stats = StepStats {
            loss: 0.0,
            correct: 0,
            norm_maj: 0.0,
            norm_min: 0.0,
        };
        for i in 0..n {
            let x = &data[i * dim..(i + 1) * dim];
            let f = dot(x, &w);
            let m = labels[i] * f;
            let s = sigmoid(-m);
            if (f >= 0.0) == (labels[i] > 0.0) {
                stats.correct += 1;
            }
            if tracing {
                stats.loss += softplus(-m);
                coefs[i] = s;
            }
            axpy(labels[i] * s, x, &mut grad);
        }
        if tracing {
            let (a, b) = group_norms((0..n).map(|i| (coefs[i], xnorms[i], train.agreement[i])));
            stats.norm_maj = a;
            stats.norm_min = b;
            let noise_sq: f64 = w[2.min(d)..d].iter().map(|v| v * v).sum();
            let (rs, rn) = ratios(&w, d, noise_sq);
            trace.records.push(TraceRecord {
                epoch: t,
                loss: stats.loss / n as f64,
                grad_norm_majority: stats.norm_maj,
                grad_norm_minority: stats.norm_min,
                ratio_spu: rs,
                ratio_noise: rn,
                cosine: cosine(&w, &last_traced),
            });
            last_traced.copy_from_slice(&w);
        }
        if t > 0 && t % cfg.check_every == 0 {
            let stable = 1.0 - cosine(&w, &checkpoint) < cfg.stop_cosine_tol;
            if stats.correct == n && stable {
                return finish(train, w, t, false, stats.correct, trace);
            }
            if !w.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite weights at iteration {t}")));
            }
            checkpoint.copy_from_slice(&w);
        }
        axpy(step, &grad, &mut w);
    }
    let correct = count_correct_primal(data, dim, &labels, &w);
    finish(train, w, cfg.max_iters, true, correct, trace)
}

fn count_correct_primal(data: &[f64], dim: usize, labels: &[f64], w: &[f64]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| (dot(&data[i * dim..(i + 1) * dim], w) >= 0.0) == (y > 0.0))
        .count()
}

fn fit_dual(train: &LabeledDataset, xa: &DMatrix<f64>, cfg: &LogisticConfig) -> Result<(LinearModel, TrainTrace)> {
    let (dim, n) = xa.shape();
    let d = dim - 1;
    let kernel = xa.tr_mul(xa);
    let k = kernel.as_slice();
    let labels: Vec<f64> = train.labels.iter().map(|&y| f64::from(y)).collect();
    let xnorms: Vec<f64> = (0..n).map(|i| kernel[(i, i)].sqrt()).collect();
    let lr = resolve_lr(cfg, lambda_max_psd(&kernel), n)?;
    let step = lr / n as f64;

    // Row 0, row 1 and the bias row of Xa, needed for the weight-ratio diagnostics.
    let row0: Vec<f64> = (0..n).map(|i| xa[(0, i)]).collect();
    let row1: Vec<f64> = (0..n).map(|i| xa[(1.min(d), i)]).collect();

    let mut a = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut checkpoint_a = a.clone();
    let mut traced_a = a.clone();
    let mut trace = TrainTrace::default();

    let dual_cos = |a: &[f64], fa: &[f64], b: &[f64]| -> f64 {
        // cos(Xaᵀa, Xaᵀb) = aᵀKb / sqrt(aᵀKa · bᵀKb)
        let kb: Vec<f64> = (0..n).map(|i| dot(&k[i * n..(i + 1) * n], b)).collect();
        let (ab, aa, bb) = (dot(a, &kb), dot(a, fa), dot(b, &kb));
        if aa <= 0.0 || bb <= 0.0 {
            0.0
        } else {
            ab / (aa * bb).sqrt()
        }
    };

    for t in 0..cfg.max_iters {
        let tracing = cfg.trace_every.is_some_and(|e| t % e == 0);
        let mut correct = 0;
        let mut loss = 0.0;
        for i in 0..n {
            let m = labels[i] * f[i];
            if (f[i] >= 0.0) == (labels[i] > 0.0) {
                correct += 1;
            }
            let s = sigmoid(-m);
            if tracing {
                loss += softplus(-m);
            }
            delta[i] = step * labels[i] * s;
        }
        if tracing {
            let (maj, min) = group_norms((0..n).map(|i| (delta[i].abs() / step, xnorms[i], train.agreement[i])));
            let w0 = dot(&row0, &a);
            let w1 = dot(&row1, &a);
            let b: f64 = a.iter().sum();
            let wsq = dot(&a, &f);
            let (rs, rn) = ratios(&[w0, w1], d, wsq - w0 * w0 - w1 * w1 - b * b);
            trace.records.push(TraceRecord {
                epoch: t,
                loss: loss / n as f64,
                grad_norm_majority: maj,
                grad_norm_minority: min,
                ratio_spu: rs,
                ratio_noise: rn,
                cosine: dual_cos(&a, &f, &traced_a),
            });
            traced_a.copy_from_slice(&a);
        }
        if t > 0 && t % cfg.check_every == 0 {
            let stable = 1.0 - dual_cos(&a, &f, &checkpoint_a) < cfg.stop_cosine_tol;
            if correct == n && stable {
                return finish(train, primal_from_dual(xa, &a), t, false, correct, trace);
            }
            if !a.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite dual coefficients at iteration {t}")));
            }
            checkpoint_a.copy_from_slice(&a);
        }
        for i in 0..n {
            a[i] += delta[i];
        }
        // f += K δ, K symmetric so rows and columns coincide.
        for j in 0..n {
            let dj = delta[j];
            if dj != 0.0 {
                axpy(dj, &k[j * n..(j + 1) * n], &mut f);
            }
        }
    }
    let correct = (0..n).filter(|&i| (f[i] >= 0.0) == (labels[i] > 0.0)).count();
    finish(train, primal_from_dual(xa, &a), cfg.max_iters, true, correct, trace)
}

fn primal_from_dual(xa: &DMatrix<f64>, a: &[f64]) -> Vec<f64> {
    (xa * DVector::from_column_slice(a)).as_slice().to_vec()
}
