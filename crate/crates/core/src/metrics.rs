//! Group-aware accuracy reports.
//!
//! Toy convention: the "OOD" accuracy of a run is its minority-group accuracy,
//! since the toy setting has no separate test domain. Aggregates weight the
//! four groups equally, which on group-balanced test sets equals pooling the
//! examples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_models::{sign_label, LinearModel};
use crate::stats::normal_cdf;
use crate::synth_data::{group_agrees, group_label, GaussianDataConfig, N_GROUPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// `None` for an empty group.
    pub group_acc: [Option<f64>; N_GROUPS],
    pub counts: [usize; N_GROUPS],
    pub majority_acc: f64,
    pub minority_acc: f64,
    pub worst_group_acc: f64,
    pub mean_acc: f64,
    pub class_balanced_acc: f64,
    pub warnings: Vec<String>,
}

fn avg_defined(xs: &[Option<f64>]) -> f64 {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl GroupReport {
    fn from_parts(group_acc: [Option<f64>; N_GROUPS], counts: [usize; N_GROUPS], correct: Option<(usize, usize)>) -> Self {
        let mut warnings = Vec::new();
        for (g, a) in group_acc.iter().enumerate() {
            if a.is_none() {
                warnings.push(format!("group {g} is empty; excluded from worst-group accuracy"));
            }
        }
        // Majority groups are 0 and 2, minority 1 and 3.
        let pooled = |gs: [usize; 2]| -> f64 {
            match correct {
                Some(_) => {
                    let (c, n) = gs.iter().fold((0.0, 0usize), |(c, n), &g| {
                        (c + group_acc[g].unwrap_or(0.0) * counts[g] as f64, n + counts[g])
                    });
                    if n == 0 {
                        f64::NAN
                    } else {
                        c / n as f64
                    }
                }
                None => avg_defined(&[group_acc[gs[0]], group_acc[gs[1]]]),
            }
        };
        let majority_acc = pooled([0, 2]);
        let minority_acc = pooled([1, 3]);
        let neg = pooled([0, 1]);
        let pos = pooled([2, 3]);
        let class_balanced_acc = avg_defined(&[Some(neg).filter(|v| !v.is_nan()), Some(pos).filter(|v| !v.is_nan())]);
        let mean_acc = match correct {
            Some((c, n)) if n > 0 => c as f64 / n as f64,
            Some(_) => f64::NAN,
            None => avg_defined(&group_acc),
        };
        let worst_group_acc = group_acc.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        Self {
            group_acc,
            counts,
            majority_acc,
            minority_acc,
            worst_group_acc: if worst_group_acc.is_finite() { worst_group_acc } else { f64::NAN },
            mean_acc,
            class_balanced_acc,
            warnings,
        }
    }

    /// Report from population-level group accuracies, all groups weighted equally.
    pub fn from_group_accuracies(acc: [f64; N_GROUPS]) -> Self {
        Self::from_parts(acc.map(Some), [0; N_GROUPS], None)
    }

    /// In-distribution accuracy under spurious-agreement rate `rho`.
    pub fn id_accuracy(&self, rho: f64) -> f64 {
        rho * self.majority_acc + (1.0 - rho) * self.minority_acc
    }

    pub fn ood_accuracy(&self) -> f64 {
        self.minority_acc
    }

    pub fn group_acc_or_nan(&self, g: usize) -> f64 {
        self.group_acc[g].unwrap_or(f64::NAN)
    }
}

/// Accuracy statistics of `predictions` against labels and group ids.
pub fn group_accuracies(predictions: &[i8], labels: &[i8], group_id: &[u8]) -> Result<GroupReport> {
    if predictions.len() != labels.len() || labels.len() != group_id.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    let mut counts = [0usize; N_GROUPS];
    let mut correct = [0usize; N_GROUPS];
    for ((&p, &y), &g) in predictions.iter().zip(labels).zip(group_id) {
        let g = g as usize;
        if g >= N_GROUPS {
            return Err(Error::Config(format!("group id {g} out of range")));
        }
        counts[g] += 1;
        correct[g] += usize::from(p == y);
    }
    let acc = std::array::from_fn(|g| (counts[g] > 0).then(|| correct[g] as f64 / counts[g] as f64));
    Ok(GroupReport::from_parts(acc, counts, Some((correct.iter().sum(), labels.len()))))
}

/// Exact group accuracies of a linear model on the Gaussian population of `cfg`.
///
/// For group (y, s) the score w·x + b is Gaussian with mean
/// `w0·y + w1·s·y·B + b` and variance `w0²σ² + σ_noise²‖w_noise‖²`, so the
/// accuracy is Φ(y·mean / sd).
pub fn analytic_group_accuracy(model: &LinearModel, cfg: &GaussianDataConfig) -> Result<[f64; N_GROUPS]> {
    if model.dim() != cfg.d {
        return Err(Error::Dimension {
            expected: cfg.d,
            got: model.dim(),
        });
    }
    let w = &model.weights;
    let noise_sq: f64 = w[2..].iter().map(|v| v * v).sum();
    let var = w[0] * w[0] * cfg.sigma_core * cfg.sigma_core + cfg.sigma_noise * cfg.sigma_noise * noise_sq;
    let sd = var.sqrt();
    Ok(std::array::from_fn(|g| {
        let y = f64::from(group_label(g as u8));
        let s = if group_agrees(g as u8) { 1.0 } else { -1.0 };
        let mean = w[0] * y + w[1] * s * y * cfg.spurious_scale + model.bias;
        if sd > 0.0 {
            normal_cdf(y * mean / sd)
        } else {
            f64::from(u8::from(sign_label(mean) == group_label(g as u8)))
        }
    }))
}

pub fn analytic_report(model: &LinearModel, cfg: &GaussianDataConfig) -> Result<GroupReport> {
    Ok(GroupReport::from_group_accuracies(analytic_group_accuracy(model, cfg)?))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id_acc: Option<f64>,
    pub ood_acc: Option<f64>,
    pub method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub id_acc: f64,
    pub ood_acc: f64,
    pub method: String,
}

pub fn robustness_points(records: &[RunRecord]) -> Result<Vec<RobustnessPoint>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| match (r.id_acc, r.ood_acc, &r.method) {
            (Some(id_acc), Some(ood_acc), Some(m)) => Ok(RobustnessPoint {
                id_acc,
                ood_acc,
                method: m.clone(),
            }),
            _ => Err(Error::Config(format!("run record {i} is missing id_acc, ood_acc or method"))),
        })
        .collect()
}

/// Least-squares line ood = intercept + slope · id through the points.
pub fn fit_trend_line(points: &[RobustnessPoint]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.id_acc).sum::<f64>() / n;
    let my = points.iter().map(|p| p.ood_acc).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.id_acc - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.id_acc - mx) * (p.ood_acc - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

/// Vertical distance of a point above a trend line.
pub fn effective_robustness(point: &RobustnessPoint, line: (f64, f64)) -> f64 {
    point.ood_acc - (line.0 + line.1 * point.id_acc)
}
