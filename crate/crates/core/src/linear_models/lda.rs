//! Linear discriminant analysis with a shared covariance.
//!
//! Two inversions are offered:
//!
//! - `PseudoInverse`: the pooled covariance is standardized to a correlation
//!   matrix by the pooled within-class standard deviations, pseudo-inverted
//!   through its eigen-decomposition (eigenvalues below `threshold · λ_max`
//!   are dropped), and scaled back. With n ≤ d the eigen-decomposition runs on
//!   the n × n Gram matrix of the standardized centered data, which has the
//!   same non-zero spectrum.
//! - `Shrinkage`: `(Σ + λI)⁻¹` by Cholesky. This variant commutes with
//!   rotations of the feature space.
//!
//! The bias places the boundary at the midpoint of the class means, corrected
//! by the log prior ratio when the classes are unbalanced.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_labels, FitMetadata, LinearModel, Method};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::synth_data::LabeledDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Inversion {
    PseudoInverse { threshold: f64 },
    Shrinkage { lambda: f64 },
}

impl Default for Inversion {
    fn default() -> Self {
        Inversion::PseudoInverse { threshold: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub mu_plus: DVector<f64>,
    pub mu_minus: DVector<f64>,
    /// Class-centered covariance with denominator n − 2.
    pub pooled_cov: DMatrix<f64>,
    pub inversion: Inversion,
}

struct Moments {
    mu_plus: DVector<f64>,
    mu_minus: DVector<f64>,
    /// n × d class-centered data.
    centered: DMatrix<f64>,
    denom: f64,
    log_prior_ratio: f64,
}

fn moments(data: &LabeledDataset) -> Result<Moments> {
    check_labels(data)?;
    let (n, d) = data.features.shape();
    let mut mu_plus = DVector::zeros(d);
    let mut mu_minus = DVector::zeros(d);
    let (mut n_plus, mut n_minus) = (0usize, 0usize);
    for (i, &y) in data.labels.iter().enumerate() {
        let row = data.features.row(i).transpose();
        if y > 0 {
            mu_plus += row;
            n_plus += 1;
        } else {
            mu_minus += row;
            n_minus += 1;
        }
    }
    mu_plus /= n_plus as f64;
    mu_minus /= n_minus as f64;
    let mut centered = data.features.clone();
    for (i, &y) in data.labels.iter().enumerate() {
        let mu = if y > 0 { &mu_plus } else { &mu_minus };
        for j in 0..d {
            centered[(i, j)] -= mu[j];
        }
    }
    Ok(Moments {
        mu_plus,
        mu_minus,
        centered,
        denom: (n as f64 - 2.0).max(1.0),
        log_prior_ratio: (n_plus as f64 / n_minus as f64).ln(),
    })
}

/// Returns Σ⁻¹δ (or its regularized stand-in) and the retained rank.
fn solve_direction(m: &Moments, inversion: Inversion) -> Result<(DVector<f64>, usize, bool)> {
    let delta = &m.mu_plus - &m.mu_minus;
    match inversion {
        Inversion::PseudoInverse { threshold } => {
            if !(threshold >= 0.0) {
                return Err(Error::Config(format!("pseudo-inverse threshold must be >= 0, got {threshold}")));
            }
            Ok(standardized_pinv_solve(&m.centered, m.denom, &delta, threshold))
        }
        Inversion::Shrinkage { lambda } => {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::Config(format!("shrinkage must be finite and >= 0, got {lambda}")));
            }
            let d = delta.len();
            let mut cov = m.centered.tr_mul(&m.centered) / m.denom;
            for j in 0..d {
                cov[(j, j)] += lambda;
            }
            match cov.clone().cholesky() {
                Some(ch) => Ok((ch.solve(&delta), d, false)),
                None => {
                    // Singular with λ = 0: fall back to the plain pseudo-inverse and flag it.
                    let eig = sym_eigen(&cov);
                    let lmax = eig.eigenvalues.max().max(0.0);
                    let mut out = DVector::zeros(d);
                    let mut rank = 0;
                    for k in 0..d {
                        let lam = eig.eigenvalues[k];
                        if lam > 1e-10 * lmax && lam > 0.0 {
                            let v = eig.eigenvectors.column(k);
                            out += v * (v.dot(&delta) / lam);
                            rank += 1;
                        }
                    }
                    Ok((out, rank, true))
                }
            }
        }
    }
}

fn standardized_pinv_solve(
    centered: &DMatrix<f64>,
    denom: f64,
    delta: &DVector<f64>,
    threshold: f64,
) -> (DVector<f64>, usize, bool) {
    let (n, d) = centered.shape();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let s = (centered.column(j).norm_squared() / denom).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let norm = denom.sqrt();
    let mut z = centered.clone();
    for j in 0..d {
        let f = 1.0 / (scale[j] * norm);
        z.column_mut(j).scale_mut(f);
    }
    let delta_s = DVector::from_iterator(d, (0..d).map(|j| delta[j] / scale[j]));
    let (solution, rank) = if n <= d {
        // pinv(ZᵀZ) δ = Zᵀ U Λ⁻² Uᵀ Z δ with Z Zᵀ = U Λ Uᵀ.
        let gram = &z * z.transpose();
        let eig = sym_eigen(&gram);
        let lmax = eig.eigenvalues.max().max(0.0);
        let zd = &z * &delta_s;
        let mut coef = DVector::zeros(n);
        let mut rank = 0;
        for k in 0..n {
            let lam = eig.eigenvalues[k];
            if lam > threshold * lmax && lam > 0.0 {
                let u = eig.eigenvectors.column(k);
                coef += u * (u.dot(&zd) / (lam * lam));
                rank += 1;
            }
        }
        (z.tr_mul(&coef), rank)
    } else {
        let r = z.tr_mul(&z);
        let eig = sym_eigen(&r);
        let lmax = eig.eigenvalues.max().max(0.0);
        let mut out = DVector::zeros(d);
        let mut rank = 0;
        for k in 0..d {
            let lam = eig.eigenvalues[k];
            if lam > threshold * lmax && lam > 0.0 {
                let v = eig.eigenvectors.column(k);
                out += v * (v.dot(&delta_s) / lam);
                rank += 1;
            }
        }
        (out, rank)
    };
    let w = DVector::from_iterator(d, (0..d).map(|j| solution[j] / scale[j]));
    (w, rank, rank < d)
}

fn to_linear(m: &Moments, w: DVector<f64>, rank: usize, deficient: bool, inversion: Inversion) -> LinearModel {
    let mid = (&m.mu_plus + &m.mu_minus) * 0.5;
    let bias = -w.dot(&mid) + m.log_prior_ratio;
    let inversion_param = match inversion {
        Inversion::PseudoInverse { threshold } => threshold,
        Inversion::Shrinkage { lambda } => lambda,
    };
    let mut model = LinearModel {
        weights: w.as_slice().to_vec(),
        bias,
        method: Method::Lda,
        meta: FitMetadata {
            inversion_param,
            rank,
            rank_deficient: deficient,
            ..Default::default()
        },
    };
    model.meta.train_accuracy = f64::NAN;
    model
}

/// Fits LDA and returns the full model (means and pooled covariance) along with
/// the equivalent linear classifier.
pub fn fit_lda(train: &LabeledDataset, inversion: Inversion) -> Result<(LdaModel, LinearModel)> {
    let m = moments(train)?;
    let (w, rank, deficient) = solve_direction(&m, inversion)?;
    let mut linear = to_linear(&m, w, rank, deficient, inversion);
    linear.meta.train_accuracy = super::train_accuracy(&linear, train)?;
    let pooled_cov = m.centered.tr_mul(&m.centered) / m.denom;
    let lda = LdaModel {
        mu_plus: m.mu_plus,
        mu_minus: m.mu_minus,
        pooled_cov,
        inversion,
    };
    Ok((lda, linear))
}

/// Same classifier as [`fit_lda`] without materializing the d × d covariance.
pub fn fit_lda_linear(train: &LabeledDataset, inversion: Inversion) -> Result<LinearModel> {
    let m = moments(train)?;
    let (w, rank, deficient) = solve_direction(&m, inversion)?;
    let mut linear = to_linear(&m, w, rank, deficient, inversion);
    if !linear.weights.iter().all(|v| v.is_finite()) || !linear.bias.is_finite() {
        return Err(Error::Numerical("LDA produced non-finite weights".into()));
    }
    linear.meta.train_accuracy = super::train_accuracy(&linear, train)?;
    Ok(linear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth_data::{generate_gaussian, group_of, GaussianDataConfig};

    fn dataset(rows: &[f64], d: usize, labels: &[i8]) -> LabeledDataset {
        LabeledDataset {
            features: DMatrix::from_row_slice(labels.len(), d, rows),
            labels: labels.to_vec(),
            agreement: vec![true; labels.len()],
            group_id: labels.iter().map(|&y| group_of(y, true)).collect(),
        }
    }

    #[test]
    fn one_dimensional_closed_form() {
        // Class means ±1; deviations ±0.5 around each mean over 4 + 4 points give
        // a pooled variance of 8·0.25/(8−2) = 1/3. Use n−2 weighting explicitly.
        let xs = [1.5, 0.5, 1.5, 0.5, -0.5, -1.5, -0.5, -1.5];
        let ys = [1, 1, 1, 1, -1, -1, -1, -1];
        let data = dataset(&xs, 1, &ys);
        let (lda, lin) = fit_lda(&data, Inversion::default()).unwrap();
        let var = 8.0 * 0.25 / 6.0;
        assert!((lda.pooled_cov[(0, 0)] - var).abs() < 1e-12);
        assert!((lin.weights[0] - 2.0 / var).abs() < 1e-9);
        assert!(lin.bias.abs() < 1e-12);
    }

    #[test]
    fn pooled_variance_quarter_gives_weight_eight() {
        // Deviations chosen so that Σ dev² / (n − 2) = 0.25 exactly: n = 6, Σ dev² = 1.
        let xs = [1.5, 0.5, 1.0, -0.5, -1.5, -1.0];
        let ys = [1, 1, 1, -1, -1, -1];
        let data = dataset(&xs, 1, &ys);
        let (lda, lin) = fit_lda(&data, Inversion::default()).unwrap();
        assert!((lda.pooled_cov[(0, 0)] - 0.25).abs() < 1e-12);
        assert!((lin.weights[0] - 8.0).abs() < 1e-9);
        assert!(lin.bias.abs() < 1e-12);
    }

    #[test]
    fn gram_and_covariance_paths_agree() {
        let cfg = GaussianDataConfig {
            d: 12,
            n_train: 12,
            n_test_per_group: 1,
            sigma_noise: 0.5,
            seed: 4,
            ..Default::default()
        };
        let (train, _) = generate_gaussian(&cfg).unwrap();
        let m = moments(&train).unwrap();
        let delta = &m.mu_plus - &m.mu_minus;
        // Padding the data with a duplicate copy of itself switches to the d × d
        // path; the correlation matrix (denominator aside) is unchanged.
        let (w_gram, _, _) = standardized_pinv_solve(&m.centered, m.denom, &delta, 1e-10);
        let doubled = DMatrix::from_fn(24, 12, |i, j| m.centered[(i % 12, j)]);
        let (w_cov, _, _) = standardized_pinv_solve(&doubled, 2.0 * m.denom, &delta, 1e-10);
        for j in 0..12 {
            assert!((w_gram[j] - w_cov[j]).abs() < 1e-6 * w_gram.norm(), "{j}");
        }
    }

    #[test]
    fn full_rank_pinv_equals_direct_inverse() {
        let cfg = GaussianDataConfig {
            d: 5,
            n_train: 200,
            n_test_per_group: 1,
            seed: 9,
            ..Default::default()
        };
        let (train, _) = generate_gaussian(&cfg).unwrap();
        let (lda, lin) = fit_lda(&train, Inversion::default()).unwrap();
        let direct = lda
            .pooled_cov
            .clone()
            .try_inverse()
            .unwrap()
            * (&lda.mu_plus - &lda.mu_minus);
        for j in 0..5 {
            assert!((lin.weights[j] - direct[j]).abs() < 1e-8 * direct.norm());
        }
        assert_eq!(lin.meta.rank, 5);
        assert!(!lin.meta.rank_deficient);
    }

    #[test]
    fn rejects_single_class_and_flags_singular_shrinkage() {
        let single = dataset(&[1.0, 2.0, 3.0], 1, &[1, 1, 1]);
        assert!(fit_lda(&single, Inversion::default()).is_err());
        let cfg = GaussianDataConfig {
            d: 30,
            n_train: 10,
            n_test_per_group: 1,
            ..Default::default()
        };
        let (train, _) = generate_gaussian(&cfg).unwrap();
        let (_, lin) = fit_lda(&train, Inversion::Shrinkage { lambda: 0.0 }).unwrap();
        assert!(lin.meta.rank_deficient);
        assert!(lin.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn linear_only_fit_matches_full_fit() {
        let cfg = GaussianDataConfig {
            d: 40,
            n_train: 16,
            n_test_per_group: 1,
            seed: 2,
            ..Default::default()
        };
        let (train, _) = generate_gaussian(&cfg).unwrap();
        let (_, a) = fit_lda(&train, Inversion::default()).unwrap();
        let b = fit_lda_linear(&train, Inversion::default()).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }
}
