//! Diffusion-classifier inference against Gaussian class-conditionals.
//!
//! For each candidate class the classifier estimates the mean denoising error
//! `E_{t,ε} ‖ε̂(x_t, y) − ε‖²` with `x_t = √ᾱ_t x + √(1−ᾱ_t) ε` and returns
//! the class with the lowest error. With class priors π the score is
//! `−error_y + ln π_y`, which reduces to the plain argmin for uniform priors.
//!
//! The analytic denoiser is the exact MMSE predictor for x ~ N(μ, Σ):
//!
//! ```text
//! ε̂ = √(1−ᾱ) M⁻¹ (x_t − √ᾱ μ),   M = ᾱΣ + (1−ᾱ)I
//! ```
//!
//! which equals `(x_t − √ᾱ E[x | x_t]) / √(1−ᾱ)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::seeds::{derive_seed, rng_for, TAG_DENOISER, TAG_DIFFUSION};
use crate::synth_data::LabeledDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    /// ᾱ_1..ᾱ_T, stored zero-based.
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn len(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bar.is_empty()
    }
}

/// Linearly spaced β_1..β_T and ᾱ_t = Π_{s≤t} (1 − β_s).
pub fn make_schedule(t: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if t < 1 {
        return config_err("schedule needs at least one timestep");
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return config_err(format!("need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"));
    }
    let mut alpha_bar = Vec::with_capacity(t);
    let mut acc = 1.0;
    for s in 0..t {
        let beta = if t == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * s as f64 / (t - 1) as f64
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule { alpha_bar })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClassParams {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub priors: Vec<f64>,
}

impl GaussianClassParams {
    pub fn shared(means: Vec<DVector<f64>>, cov: DMatrix<f64>) -> Result<Self> {
        let k = means.len();
        let p = Self {
            covs: vec![cov; k],
            priors: vec![1.0 / k as f64; k],
            means,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.means.len();
        if k == 0 || self.covs.len() != k || self.priors.len() != k {
            return config_err("means, covariances and priors must have the same non-zero length");
        }
        let d = self.dim();
        for (c, (m, s)) in self.means.iter().zip(&self.covs).enumerate() {
            if m.len() != d || s.shape() != (d, d) {
                return Err(Error::Dimension { expected: d, got: m.len() });
            }
            if (s - s.transpose()).amax() > 1e-8 * s.amax().max(1.0) {
                return config_err(format!("covariance of class {c} is not symmetric"));
            }
            if s.clone().cholesky().is_none() {
                return config_err(format!("covariance of class {c} is not positive definite"));
            }
        }
        if (self.priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.priors.iter().any(|&p| p <= 0.0) {
            return config_err("priors must be positive and sum to 1");
        }
        Ok(())
    }

    /// Exact Gaussian log-density rule argmax_y log N(x; μ_y, Σ_y) + ln π_y, ties to the lowest index.
    pub fn bayes_classify(&self, x: &DVector<f64>) -> usize {
        let scores: Vec<f64> = (0..self.n_classes())
            .map(|c| {
                let ch = self.covs[c].clone().cholesky().expect("validated SPD");
                let diff = x - &self.means[c];
                let sol = ch.solve(&diff);
                let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                -0.5 * diff.dot(&sol) - 0.5 * logdet + self.priors[c].ln()
            })
            .collect();
        argmax_low_tie(&scores)
    }

    pub fn sample(&self, class: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let l = self.covs[class].clone().cholesky().expect("validated SPD").l();
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.means[class] + l * z
    }

    /// `n_per_class` draws per class; labels are class indices.
    pub fn sample_points(&self, n_per_class: usize, seed: u64) -> (Vec<DVector<f64>>, Vec<usize>) {
        let mut rng = rng_for(seed, &[TAG_DIFFUSION, 0]);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for c in 0..self.n_classes() {
            for _ in 0..n_per_class {
                xs.push(self.sample(c, &mut rng));
                ys.push(c);
            }
        }
        (xs, ys)
    }
}

fn argmax_low_tie(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

/// Affine ε-predictor `ε̂ = A x_t + c` for one (class, timestep bucket).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenoiserSpec {
    Analytic(AnalyticDenoiser),
    LinearFit(LinearDenoiser),
}

/// Precomputed analytic maps for every (class, timestep).
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticDenoiser {
    /// `maps[class][t]`.
    pub maps: Vec<Vec<AffineMap>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDenoiser {
    /// `maps[class][bucket]`.
    pub maps: Vec<Vec<AffineMap>>,
    pub buckets: usize,
    pub t_total: usize,
    /// Residual MSE per (class, bucket) on the simulated fitting samples.
    pub residual_mse: Vec<Vec<f64>>,
    /// Per-sample residual summed over everything, divided by the sample count.
    pub total_residual_mse: f64,
    pub ridge_fallback: bool,
}

impl LinearDenoiser {
    pub fn bucket_of(&self, t: usize) -> usize {
        bucket_of(t, self.t_total, self.buckets)
    }
}

fn bucket_of(t: usize, t_total: usize, buckets: usize) -> usize {
    (t * buckets / t_total).min(buckets - 1)
}

/// Coefficients of the analytic ε̂ at zero-based timestep `t`.
pub fn analytic_map(schedule: &NoiseSchedule, t: usize, mean: &DVector<f64>, cov: &DMatrix<f64>) -> AffineMap {
    let ab = schedule.alpha_bar[t];
    let d = mean.len();
    let m = cov * ab + DMatrix::identity(d, d) * (1.0 - ab);
    let m_inv = m.cholesky().expect("ᾱΣ + (1−ᾱ)I is SPD for SPD Σ").inverse();
    let a = &m_inv * (1.0 - ab).sqrt();
    let c = -(&a * mean) * ab.sqrt();
    AffineMap { a, c }
}

/// E[ε | x_t, y] under the Gaussian class model.
pub fn analytic_epsilon(
    x_t: &DVector<f64>,
    t: usize,
    schedule: &NoiseSchedule,
    params: &GaussianClassParams,
    class: usize,
) -> Result<DVector<f64>> {
    if t >= schedule.len() {
        return config_err(format!("timestep {t} outside schedule of length {}", schedule.len()));
    }
    if class >= params.n_classes() {
        return config_err(format!("class {class} out of range"));
    }
    let map = analytic_map(schedule, t, &params.means[class], &params.covs[class]);
    Ok(&map.a * x_t + &map.c)
}

pub fn analytic_denoiser(schedule: &NoiseSchedule, params: &GaussianClassParams) -> Result<DenoiserSpec> {
    params.validate()?;
    let maps = (0..params.n_classes())
        .map(|c| {
            (0..schedule.len())
                .map(|t| analytic_map(schedule, t, &params.means[c], &params.covs[c]))
                .collect()
        })
        .collect();
    Ok(DenoiserSpec::Analytic(AnalyticDenoiser { maps }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearFitConfig {
    pub buckets: usize,
    /// Simulated (t, ε) draws per training example.
    pub draws_per_example: usize,
    pub seed: u64,
}

impl Default for LinearFitConfig {
    fn default() -> Self {
        Self {
            buckets: 10,
            draws_per_example: 20,
            seed: 0,
        }
    }
}

pub const RIDGE_FALLBACK: f64 = 1e-6;

/// Least-squares affine fit of ε from x_t for every (class, bucket).
///
/// `class_of` maps each training label to a class index. Simulated draws are
/// keyed by (example, draw) only, so different bucket counts see the same samples.
pub fn fit_linear_denoiser(
    train: &LabeledDataset,
    class_of: impl Fn(i8) -> usize,
    n_classes: usize,
    schedule: &NoiseSchedule,
    cfg: &LinearFitConfig,
) -> Result<DenoiserSpec> {
    if cfg.buckets == 0 || cfg.buckets > schedule.len() {
        return config_err(format!("bucket count must be in 1..={}", schedule.len()));
    }
    let d = train.dim();
    let t_total = schedule.len();
    let p = d + 1;
    // Normal equations per (class, bucket): XᵀX (p × p) and XᵀE (p × d).
    let mut xtx = vec![vec![DMatrix::<f64>::zeros(p, p); cfg.buckets]; n_classes];
    let mut xte = vec![vec![DMatrix::<f64>::zeros(p, d); cfg.buckets]; n_classes];
    let mut ete = vec![vec![0.0; cfg.buckets]; n_classes];
    let mut counts = vec![vec![0usize; cfg.buckets]; n_classes];
    let mut per_class = vec![0usize; n_classes];
    for i in 0..train.len() {
        let c = class_of(train.labels[i]);
        if c >= n_classes {
            return config_err(format!("class index {c} out of range"));
        }
        per_class[c] += 1;
        let x = train.features.row(i).transpose();
        let mut rng = rng_for(cfg.seed, &[TAG_DENOISER, i as u64]);
        for _ in 0..cfg.draws_per_example {
            let t = rng.random_range(0..t_total);
            let eps = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let ab = schedule.alpha_bar[t];
            let xt = &x * ab.sqrt() + &eps * (1.0 - ab).sqrt();
            let mut feat = DVector::zeros(p);
            feat.rows_mut(0, d).copy_from(&xt);
            feat[d] = 1.0;
            let b = bucket_of(t, t_total, cfg.buckets);
            xtx[c][b].ger(1.0, &feat, &feat, 1.0);
            xte[c][b].ger(1.0, &feat, &eps, 1.0);
            ete[c][b] += eps.norm_squared();
            counts[c][b] += 1;
        }
    }
    if let Some(c) = per_class.iter().position(|&n| n < d + 1) {
        return config_err(format!("class {c} has fewer than d + 1 = {} examples", d + 1));
    }
    let mut ridge_fallback = false;
    let mut maps = Vec::with_capacity(n_classes);
    let mut residual_mse = Vec::with_capacity(n_classes);
    let (mut sse_total, mut n_total) = (0.0, 0usize);
    for c in 0..n_classes {
        let mut row = Vec::with_capacity(cfg.buckets);
        let mut res = Vec::with_capacity(cfg.buckets);
        for b in 0..cfg.buckets {
            let mut g = xtx[c][b].clone();
            let chol = if counts[c][b] >= p { g.clone().cholesky() } else { None };
            let coef = match chol {
                Some(ch) => ch.solve(&xte[c][b]),
                None => {
                    ridge_fallback = true;
                    for k in 0..p {
                        g[(k, k)] += RIDGE_FALLBACK;
                    }
                    g.cholesky()
                        .ok_or_else(|| Error::Numerical("ridge-regularized normal equations not SPD".into()))?
                        .solve(&xte[c][b])
                }
            };
            // SSE = tr(EᵀE) − 2 tr(Bᵀ XᵀE) + tr(Bᵀ XᵀX B)
            let sse = ete[c][b] - 2.0 * coef.dot(&xte[c][b]) + coef.dot(&(&xtx[c][b] * &coef));
            let sse = sse.max(0.0);
            sse_total += sse;
            n_total += counts[c][b];
            res.push(if counts[c][b] > 0 { sse / (counts[c][b] * d) as f64 } else { f64::NAN });
            row.push(AffineMap {
                a: coef.rows(0, d).transpose(),
                c: coef.row(d).transpose(),
            });
        }
        maps.push(row);
        residual_mse.push(res);
    }
    Ok(DenoiserSpec::LinearFit(LinearDenoiser {
        maps,
        buckets: cfg.buckets,
        t_total,
        residual_mse,
        total_residual_mse: sse_total / (n_total * d).max(1) as f64,
        ridge_fallback,
    }))
}

impl DenoiserSpec {
    pub fn n_classes(&self) -> usize {
        match self {
            DenoiserSpec::Analytic(a) => a.maps.len(),
            DenoiserSpec::LinearFit(l) => l.maps.len(),
        }
    }

    fn map(&self, class: usize, t: usize) -> &AffineMap {
        match self {
            DenoiserSpec::Analytic(a) => &a.maps[class][t],
            DenoiserSpec::LinearFit(l) => &l.maps[class][l.bucket_of(t)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Staged {
    pub k1: usize,
    pub k2: usize,
    pub top_m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MCConfig {
    pub n_samples: usize,
    /// Reuse the same (t, ε) draws for every class.
    pub pairing: bool,
    pub seed: u64,
    pub staged: Option<Staged>,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            pairing: true,
            seed: 0,
            staged: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyResult {
    pub class: usize,
    /// NaN for classes pruned before evaluation.
    pub mean_errors: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub samples_used: Vec<usize>,
}

/// Running sum and sum of squares of one class's per-sample errors.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Acc {
    fn push(&mut self, e: f64) {
        self.n += 1;
        self.sum += e;
        self.sum_sq += e * e;
    }
    fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }
    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let m = self.mean();
        let var = ((self.sum_sq - self.n as f64 * m * m) / (self.n - 1) as f64).max(0.0);
        (var / self.n as f64).sqrt()
    }
}

fn draw_pair(rng: &mut ChaCha8Rng, t_total: usize, d: usize) -> (usize, DVector<f64>) {
    let t = rng.random_range(0..t_total);
    let eps = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
    (t, eps)
}

fn sample_error(
    x: &DVector<f64>,
    denoiser: &DenoiserSpec,
    schedule: &NoiseSchedule,
    class: usize,
    t: usize,
    eps: &DVector<f64>,
) -> Result<f64> {
    let ab = schedule.alpha_bar[t];
    let xt = x * ab.sqrt() + eps * (1.0 - ab).sqrt();
    let map = denoiser.map(class, t);
    let pred = &map.a * &xt + &map.c;
    let e = (pred - eps).norm_squared();
    if !e.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite denoising error for class {class} at t = {} with eps[0] = {}",
            t + 1,
            eps[0]
        )));
    }
    Ok(e)
}

struct Evaluator<'a> {
    x: &'a DVector<f64>,
    denoiser: &'a DenoiserSpec,
    schedule: &'a NoiseSchedule,
    pairing: bool,
    shared: ChaCha8Rng,
    per_class: Vec<ChaCha8Rng>,
    acc: Vec<Acc>,
}

impl<'a> Evaluator<'a> {
    fn new(x: &'a DVector<f64>, denoiser: &'a DenoiserSpec, schedule: &'a NoiseSchedule, mc: &MCConfig, point: u64) -> Self {
        let k = denoiser.n_classes();
        Self {
            x,
            denoiser,
            schedule,
            pairing: mc.pairing,
            shared: rng_for(mc.seed, &[TAG_DIFFUSION, 1, point]),
            per_class: (0..k).map(|c| rng_for(mc.seed, &[TAG_DIFFUSION, 2, point, c as u64])).collect(),
            acc: vec![Acc::default(); k],
        }
    }

    /// Adds `k` samples for each class in `classes`.
    fn run(&mut self, classes: &[usize], k: usize) -> Result<()> {
        let d = self.x.len();
        let t_total = self.schedule.len();
        for _ in 0..k {
            if self.pairing {
                let (t, eps) = draw_pair(&mut self.shared, t_total, d);
                for &c in classes {
                    let e = sample_error(self.x, self.denoiser, self.schedule, c, t, &eps)?;
                    self.acc[c].push(e);
                }
            } else {
                for &c in classes {
                    let (t, eps) = draw_pair(&mut self.per_class[c], t_total, d);
                    let e = sample_error(self.x, self.denoiser, self.schedule, c, t, &eps)?;
                    self.acc[c].push(e);
                }
            }
        }
        Ok(())
    }

    fn score(&self, c: usize, priors: &[f64]) -> f64 {
        -self.acc[c].mean() + priors[c].ln()
    }

    fn result(&self, class: usize) -> ClassifyResult {
        ClassifyResult {
            class,
            mean_errors: self.acc.iter().map(Acc::mean).collect(),
            stderrs: self.acc.iter().map(Acc::stderr).collect(),
            samples_used: self.acc.iter().map(|a| a.n).collect(),
        }
    }
}

fn check_inputs(x: &DVector<f64>, denoiser: &DenoiserSpec, priors: &[f64], mc: &MCConfig) -> Result<()> {
    if mc.n_samples == 0 {
        return config_err("n_samples must be at least 1");
    }
    if priors.len() != denoiser.n_classes() {
        return config_err("prior count does not match denoiser classes");
    }
    let d = denoiser.map(0, 0).c.len();
    if x.len() != d {
        return Err(Error::Dimension { expected: d, got: x.len() });
    }
    Ok(())
}

/// Monte Carlo estimate of each class's mean denoising error and the decision.
///
/// `point` keys the random stream, so each test point owns an independent stream.
pub fn diffusion_classify(
    x: &DVector<f64>,
    denoiser: &DenoiserSpec,
    schedule: &NoiseSchedule,
    mc: &MCConfig,
    priors: &[f64],
    point: u64,
) -> Result<ClassifyResult> {
    check_inputs(x, denoiser, priors, mc)?;
    let mut ev = Evaluator::new(x, denoiser, schedule, mc, point);
    let classes: Vec<usize> = (0..denoiser.n_classes()).collect();
    ev.run(&classes, mc.n_samples)?;
    let scores: Vec<f64> = classes.iter().map(|&c| ev.score(c, priors)).collect();
    Ok(ev.result(argmax_low_tie(&scores)))
}

/// Two-stage evaluation: `k1` samples for every class, then `k2` more for the
/// `top_m` classes with the lowest stage-one error; the decision uses all
/// accumulated samples of the survivors. Draws continue the same stream.
pub fn staged_classify(
    x: &DVector<f64>,
    denoiser: &DenoiserSpec,
    schedule: &NoiseSchedule,
    mc: &MCConfig,
    priors: &[f64],
    point: u64,
) -> Result<ClassifyResult> {
    let Some(st) = mc.staged else {
        return config_err("staged_classify needs a staged configuration");
    };
    let k = denoiser.n_classes();
    if st.top_m == 0 || st.top_m > k {
        return config_err(format!("top_m must be in 1..={k}, got {}", st.top_m));
    }
    if st.k1 == 0 {
        return config_err("k1 must be at least 1");
    }
    check_inputs(x, denoiser, priors, &MCConfig { n_samples: st.k1, ..mc.clone() })?;
    let mut ev = Evaluator::new(x, denoiser, schedule, mc, point);
    let all: Vec<usize> = (0..k).collect();
    ev.run(&all, st.k1)?;
    let mut ranked = all.clone();
    // Stable sort keeps lower indices first on equal scores.
    ranked.sort_by(|&a, &b| ev.score(b, priors).partial_cmp(&ev.score(a, priors)).unwrap_or(std::cmp::Ordering::Equal));
    let mut survivors: Vec<usize> = ranked[..st.top_m].to_vec();
    survivors.sort_unstable();
    if st.top_m > 1 {
        ev.run(&survivors, st.k2)?;
    }
    let best = survivors
        .iter()
        .copied()
        .fold(None::<usize>, |best, c| match best {
            Some(b) if ev.score(b, priors) >= ev.score(c, priors) => Some(b),
            _ => Some(c),
        })
        .expect("at least one survivor");
    let mut res = ev.result(best);
    for c in 0..k {
        if !survivors.contains(&c) {
            // Pruned classes keep their stage-one estimate.
            res.samples_used[c] = st.k1;
        }
    }
    Ok(res)
}

/// Random orthogonal d × d matrix (QR of a Gaussian matrix with sign-fixed R diagonal).
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut *rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(geomspace(1/√cond, √cond)) Qᵀ`.
pub fn anisotropic_cov(d: usize, cond: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q = random_orthogonal(d, rng);
    let (lo, hi) = ((1.0 / cond.sqrt()).ln(), cond.sqrt().ln());
    let ev = DVector::from_fn(d, |k, _| if d == 1 { 1.0 } else { (lo + (hi - lo) * k as f64 / (d - 1) as f64).exp() });
    &q * DMatrix::from_diagonal(&ev) * q.transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionCheckConfig {
    pub d: usize,
    /// Eigenvalue ratio of the shared covariance.
    pub cond: f64,
    /// Distance between the two class means.
    pub mean_separation: f64,
    pub points_per_class: usize,
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub n_samples: usize,
    pub pairing: bool,
    pub staged_classes: usize,
    /// Standard deviation of the multi-class means around the origin.
    pub staged_mean_scale: f64,
    pub staged_points: usize,
    pub staged: Staged,
    pub seed: u64,
}

impl Default for DiffusionCheckConfig {
    fn default() -> Self {
        Self {
            d: 8,
            cond: 4.0,
            mean_separation: 3.0,
            points_per_class: 1000,
            t_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            n_samples: 1000,
            pairing: true,
            staged_classes: 10,
            staged_mean_scale: 1.5,
            staged_points: 1000,
            staged: Staged { k1: 100, k2: 400, top_m: 5 },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionPointRow {
    pub index: usize,
    pub label: usize,
    pub bayes: usize,
    pub diffusion: usize,
    pub err0: f64,
    pub err1: f64,
    pub stderr0: f64,
    pub stderr1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionCheckSummary {
    pub bayes_agreement: f64,
    pub diffusion_accuracy: f64,
    pub bayes_accuracy: f64,
    pub staged_agreement: f64,
    pub staged_accuracy: f64,
    pub full_accuracy: f64,
    pub staged_sample_fraction: f64,
}

/// Two-class Bayes agreement of the analytic-denoiser classifier, and
/// staged-versus-full agreement on a multi-class mixture with the same covariance.
pub fn run_diffusion_check(cfg: &DiffusionCheckConfig) -> Result<(DiffusionCheckSummary, Vec<DiffusionPointRow>)> {
    if cfg.d == 0 || !(cfg.cond >= 1.0) || cfg.points_per_class == 0 || cfg.staged_points == 0 {
        return config_err("diffusion check needs d >= 1, cond >= 1 and positive point counts");
    }
    let schedule = make_schedule(cfg.t_steps, cfg.beta_start, cfg.beta_end)?;
    let mut rng = rng_for(cfg.seed, &[TAG_DIFFUSION, 10]);
    let cov = anisotropic_cov(cfg.d, cfg.cond, &mut rng);
    let a = DVector::<f64>::from_fn(cfg.d, |_, _| StandardNormal.sample(&mut rng));
    let b = DVector::<f64>::from_fn(cfg.d, |_, _| StandardNormal.sample(&mut rng));
    let scale = cfg.mean_separation / (&a - &b).norm();
    let two = GaussianClassParams::shared(vec![a * scale, b * scale], cov.clone())?;
    let den = analytic_denoiser(&schedule, &two)?;
    let mc = MCConfig {
        n_samples: cfg.n_samples,
        pairing: cfg.pairing,
        seed: derive_seed(cfg.seed, &[TAG_DIFFUSION, 11]),
        staged: None,
    };
    let (xs, ys) = two.sample_points(cfg.points_per_class, derive_seed(cfg.seed, &[TAG_DIFFUSION, 12]));
    let mut rows = Vec::with_capacity(xs.len());
    for (i, (x, &y)) in xs.iter().zip(&ys).enumerate() {
        let r = diffusion_classify(x, &den, &schedule, &mc, &two.priors, i as u64)?;
        rows.push(DiffusionPointRow {
            index: i,
            label: y,
            bayes: two.bayes_classify(x),
            diffusion: r.class,
            err0: r.mean_errors[0],
            err1: r.mean_errors[1],
            stderr0: r.stderrs[0],
            stderr1: r.stderrs[1],
        });
    }
    let frac = |f: &dyn Fn(&DiffusionPointRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / rows.len() as f64;
    let bayes_agreement = frac(&|r| r.bayes == r.diffusion);
    let diffusion_accuracy = frac(&|r| r.label == r.diffusion);
    let bayes_accuracy = frac(&|r| r.label == r.bayes);

    let k = cfg.staged_classes;
    if k < cfg.staged.top_m || k < 2 {
        return config_err(format!("staged_classes must be at least max(2, top_m), got {k}"));
    }
    let means = (0..k)
        .map(|_| DVector::<f64>::from_fn(cfg.d, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            cfg.staged_mean_scale * z
        }))
        .collect();
    let many = GaussianClassParams::shared(means, cov)?;
    let den_many = analytic_denoiser(&schedule, &many)?;
    let per = cfg.staged_points.div_ceil(k);
    let (xm, ym) = many.sample_points(per, derive_seed(cfg.seed, &[TAG_DIFFUSION, 13]));
    let full_cfg = MCConfig {
        n_samples: cfg.staged.k1 + cfg.staged.k2,
        staged: None,
        ..mc.clone()
    };
    let staged_cfg = MCConfig {
        staged: Some(cfg.staged),
        ..mc
    };
    let (mut agree, mut acc_s, mut acc_f, mut used) = (0usize, 0usize, 0usize, 0usize);
    let m = cfg.staged_points.min(xm.len());
    for i in 0..m {
        let f = diffusion_classify(&xm[i], &den_many, &schedule, &full_cfg, &many.priors, i as u64)?;
        let s = staged_classify(&xm[i], &den_many, &schedule, &staged_cfg, &many.priors, i as u64)?;
        agree += usize::from(f.class == s.class);
        acc_f += usize::from(f.class == ym[i]);
        acc_s += usize::from(s.class == ym[i]);
        used += s.samples_used.iter().sum::<usize>();
    }
    let summary = DiffusionCheckSummary {
        bayes_agreement,
        diffusion_accuracy,
        bayes_accuracy,
        staged_agreement: agree as f64 / m as f64,
        staged_accuracy: acc_s as f64 / m as f64,
        full_accuracy: acc_f as f64 / m as f64,
        staged_sample_fraction: used as f64 / (m * k * full_cfg.n_samples) as f64,
    };
    Ok((summary, rows))
}
