//! Seeded experiment sweeps: generalization phase grids and sample-complexity curves.
//!
//! Every (cell, replicate) task derives its own seed, runs on a bounded rayon
//! pool, and returns its accuracies; results are collected in task order and
//! reduced sequentially, so output does not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::linear_models::{
    decompose_weights, fit_lda_linear, fit_logistic_gd, fit_svm_hard_margin, predict, Inversion, LinearModel,
    LogisticConfig, Method, SvmConfig,
};
use crate::metrics::{analytic_report, group_accuracies, GroupReport};
use crate::seeds::{derive_seed, TAG_PHASE, TAG_SAMPLE_COMPLEXITY};
use crate::synth_data::{gaussian_test, gaussian_train, GaussianDataConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Exact population group accuracies of the fitted linear rule.
    Analytic,
    /// Group-balanced sampled test set of `n_test_per_group` per group.
    Sampled,
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseGridConfig {
    pub b_values: Vec<f64>,
    pub sigma_noise2_values: Vec<f64>,
    pub sigma_core: f64,
    pub n_train: usize,
    pub d: usize,
    pub rho: f64,
    pub seeds_per_cell: usize,
    pub tie_tolerance: f64,
    pub base_seed: u64,
    /// Discriminative fitter: `logistic_gd` or `svm_hard_margin`.
    pub disc_method: Method,
    pub eval: EvalMode,
    pub n_test_per_group: usize,
    pub lda: Inversion,
    pub logistic: LogisticConfig,
    pub svm: SvmConfig,
}

impl Default for PhaseGridConfig {
    fn default() -> Self {
        Self {
            b_values: log_axis(0.1, 10.0, 20),
            sigma_noise2_values: log_axis(0.01, 4.0, 20),
            sigma_core: 0.15,
            n_train: 32,
            d: 1024,
            rho: 0.9,
            seeds_per_cell: 25,
            tie_tolerance: 0.005,
            base_seed: 0,
            disc_method: Method::LogisticGd,
            eval: EvalMode::Analytic,
            n_test_per_group: 500,
            lda: Inversion::default(),
            logistic: LogisticConfig::default(),
            svm: SvmConfig::default(),
        }
    }
}

fn check_axis(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return config_err(format!("{name} must be non-empty"));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return config_err(format!("{name} values must be finite and non-negative"));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return config_err(format!("{name} must be strictly increasing"));
    }
    Ok(())
}

impl PhaseGridConfig {
    pub fn validate(&self) -> Result<()> {
        check_axis("b_values", &self.b_values)?;
        check_axis("sigma_noise2_values", &self.sigma_noise2_values)?;
        if self.seeds_per_cell == 0 {
            return config_err("seeds_per_cell must be at least 1");
        }
        if !(self.tie_tolerance >= 0.0) {
            return config_err("tie_tolerance must be non-negative");
        }
        if self.disc_method == Method::Lda {
            return config_err("disc_method must be logistic_gd or svm_hard_margin");
        }
        self.data_config(self.b_values[0], self.sigma_noise2_values[0], 0).validate()
    }

    /// Data configuration of one cell replicate.
    pub fn data_config(&self, b: f64, sigma_noise2: f64, seed: u64) -> GaussianDataConfig {
        GaussianDataConfig {
            d: self.d,
            rho: self.rho,
            sigma_core: self.sigma_core,
            spurious_scale: b,
            sigma_noise: sigma_noise2.sqrt(),
            n_train: self.n_train,
            n_test_per_group: self.n_test_per_group,
            seed,
        }
    }
}

/// Seed of replicate `r` in the cell at axis values (b, σ_noise²).
///
/// Keyed by the axis values rather than their indices, so a grid whose axes
/// are a subset of another's reproduces the shared cells exactly.
pub fn cell_seed(base: u64, b: f64, sigma_noise2: f64, replicate: usize) -> u64 {
    derive_seed(base, &[TAG_PHASE, b.to_bits(), sigma_noise2.to_bits(), replicate as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Generative better in distribution and out of distribution.
    One,
    /// Discriminative better on both.
    Two,
    /// Discriminative better in distribution, generative better out of distribution.
    Three,
    /// Generative better in distribution, discriminative better out of distribution.
    Four,
    Boundary,
}

impl Phase {
    pub fn tag(&self) -> &'static str {
        match self {
            Phase::One => "1",
            Phase::Two => "2",
            Phase::Three => "3",
            Phase::Four => "4",
            Phase::Boundary => "boundary",
        }
    }

    /// 1..4 for labeled phases, 0 for boundary.
    pub fn code(&self) -> u8 {
        match self {
            Phase::Boundary => 0,
            Phase::One => 1,
            Phase::Two => 2,
            Phase::Three => 3,
            Phase::Four => 4,
        }
    }
}

pub fn classify_phase(gen_id: f64, gen_ood: f64, disc_id: f64, disc_ood: f64, tie_tolerance: f64) -> Result<Phase> {
    for v in [gen_id, gen_ood, disc_id, disc_ood] {
        if !(0.0..=1.0).contains(&v) {
            return config_err(format!("accuracy {v} outside [0, 1]"));
        }
    }
    let (did, dood) = (gen_id - disc_id, gen_ood - disc_ood);
    if did.abs() < tie_tolerance || dood.abs() < tie_tolerance {
        return Ok(Phase::Boundary);
    }
    Ok(match (did > 0.0, dood > 0.0) {
        (true, true) => Phase::One,
        (false, false) => Phase::Two,
        (false, true) => Phase::Three,
        (true, false) => Phase::Four,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    /// Sequential summation in the given order; NaN mean for no values.
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count > 1 { crate::stats::std_dev(values) } else { 0.0 };
        Self { mean, std, count }
    }
}

/// Fits one method on a dataset.
pub fn fit_method(
    method: Method,
    train: &crate::synth_data::LabeledDataset,
    lda: Inversion,
    logistic: &LogisticConfig,
    svm: &SvmConfig,
) -> Result<LinearModel> {
    match method {
        Method::Lda => fit_lda_linear(train, lda),
        Method::LogisticGd => fit_logistic_gd(train, logistic).map(|(m, _)| m),
        Method::SvmHardMargin => fit_svm_hard_margin(train, svm),
    }
}

/// Group report of a fitted model under the chosen evaluation mode.
pub fn evaluate_model(model: &LinearModel, data_cfg: &GaussianDataConfig, eval: EvalMode) -> Result<GroupReport> {
    match eval {
        EvalMode::Analytic => analytic_report(model, data_cfg),
        EvalMode::Sampled => {
            let test = gaussian_test(data_cfg);
            let pred = predict(model, &test.features)?;
            group_accuracies(&pred, &test.labels, &test.group_id)
        }
    }
}

fn run_pool<T: Send, F: Fn(usize) -> T + Sync + Send>(workers: usize, n_tasks: usize, f: F) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(|| (0..n_tasks).into_par_iter().map(&f).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub gen_id: f64,
    pub gen_ood: f64,
    pub disc_id: f64,
    pub disc_ood: f64,
}

/// One replicate of one cell: LDA and the discriminative method on the same draw.
pub fn run_phase_replicate(cfg: &PhaseGridConfig, b: f64, sigma_noise2: f64, seed: u64) -> Result<ReplicateOutcome> {
    let data_cfg = cfg.data_config(b, sigma_noise2, seed);
    let train = gaussian_train(&data_cfg);
    let gen = fit_method(Method::Lda, &train, cfg.lda, &cfg.logistic, &cfg.svm)?;
    let disc = fit_method(cfg.disc_method, &train, cfg.lda, &cfg.logistic, &cfg.svm)?;
    let g = evaluate_model(&gen, &data_cfg, cfg.eval)?;
    let d = evaluate_model(&disc, &data_cfg, cfg.eval)?;
    Ok(ReplicateOutcome {
        gen_id: g.id_accuracy(cfg.rho),
        gen_ood: g.ood_accuracy(),
        disc_id: d.id_accuracy(cfg.rho),
        disc_ood: d.ood_accuracy(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub i: usize,
    pub j: usize,
    pub b: f64,
    pub sigma_noise2: f64,
    pub gen_id: MeanStd,
    pub gen_ood: MeanStd,
    pub disc_id: MeanStd,
    pub disc_ood: MeanStd,
    /// `None` when every replicate failed.
    pub phase: Option<Phase>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub config: PhaseGridConfig,
    /// Row-major over (i = B index, j = σ_noise² index).
    pub cells: Vec<PhaseCell>,
}

impl PhaseGrid {
    pub fn cell(&self, i: usize, j: usize) -> &PhaseCell {
        &self.cells[i * self.config.sigma_noise2_values.len() + j]
    }

    /// Counts of boundary, 1, 2, 3, 4 (indexed by [`Phase::code`]).
    pub fn phase_counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for cell in &self.cells {
            if let Some(p) = cell.phase {
                c[p.code() as usize] += 1;
            }
        }
        c
    }

    /// Fraction of each labeled phase 1..4 among non-boundary cells.
    pub fn non_boundary_fractions(&self) -> [f64; 4] {
        let c = self.phase_counts();
        let total: usize = c[1..].iter().sum();
        let mut out = [0.0; 4];
        if total > 0 {
            for k in 0..4 {
                out[k] = c[k + 1] as f64 / total as f64;
            }
        }
        out
    }
}

pub fn run_phase_grid(cfg: &PhaseGridConfig, workers: usize) -> Result<PhaseGrid> {
    cfg.validate()?;
    let (nb, ns, r) = (cfg.b_values.len(), cfg.sigma_noise2_values.len(), cfg.seeds_per_cell);
    let outcomes = run_pool(workers, nb * ns * r, |task| {
        let (cell, rep) = (task / r, task % r);
        let (b, s2) = (cfg.b_values[cell / ns], cfg.sigma_noise2_values[cell % ns]);
        run_phase_replicate(cfg, b, s2, cell_seed(cfg.base_seed, b, s2, rep))
    })?;
    let mut cells = Vec::with_capacity(nb * ns);
    for (cell, chunk) in outcomes.chunks(r).enumerate() {
        let (i, j) = (cell / ns, cell % ns);
        let mut failures = Vec::new();
        let mut ok = Vec::new();
        for (rep, o) in chunk.iter().enumerate() {
            match o {
                Ok(v) => ok.push(*v),
                Err(e) => failures.push(format!("replicate {rep}: {e}")),
            }
        }
        let stat = |f: fn(&ReplicateOutcome) -> f64| MeanStd::of(&ok.iter().map(f).collect::<Vec<_>>());
        let (gen_id, gen_ood, disc_id, disc_ood) =
            (stat(|o| o.gen_id), stat(|o| o.gen_ood), stat(|o| o.disc_id), stat(|o| o.disc_ood));
        let phase = if ok.is_empty() {
            None
        } else {
            Some(classify_phase(gen_id.mean, gen_ood.mean, disc_id.mean, disc_ood.mean, cfg.tie_tolerance)?)
        };
        cells.push(PhaseCell {
            i,
            j,
            b: cfg.b_values[i],
            sigma_noise2: cfg.sigma_noise2_values[j],
            gen_id,
            gen_ood,
            disc_id,
            disc_ood,
            phase,
            failures,
        });
    }
    Ok(PhaseGrid { config: cfg.clone(), cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleComplexityConfig {
    pub n_values: Vec<usize>,
    pub d: usize,
    pub rho: f64,
    pub sigma_core: f64,
    pub spurious_scale: f64,
    pub sigma_noise: f64,
    pub seeds: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub eval: EvalMode,
    pub n_test_per_group: usize,
    pub lda: Inversion,
    pub logistic: LogisticConfig,
    /// Iteration cap for logistic GD when n exceeds d; `None` keeps `logistic.max_iters`.
    pub logistic_max_iters_large_n: Option<usize>,
    pub svm: SvmConfig,
}

impl Default for SampleComplexityConfig {
    fn default() -> Self {
        Self {
            n_values: (4..=12).map(|k| 1usize << k).collect(),
            d: 1026,
            rho: 0.9,
            sigma_core: 0.15,
            spurious_scale: 1.0,
            sigma_noise: 0.6,
            seeds: 25,
            base_seed: 0,
            methods: vec![Method::Lda, Method::LogisticGd],
            eval: EvalMode::Analytic,
            n_test_per_group: 500,
            lda: Inversion::default(),
            logistic: LogisticConfig::default(),
            logistic_max_iters_large_n: Some(5_000),
            svm: SvmConfig::default(),
        }
    }
}

impl SampleComplexityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.n_values.windows(2).any(|w| w[1] <= w[0]) {
            return config_err("n_values must be non-empty and strictly increasing");
        }
        if self.seeds == 0 {
            return config_err("seeds must be at least 1");
        }
        if self.methods.is_empty() {
            return config_err("methods must be non-empty");
        }
        self.data_config(self.n_values[0], 0).validate()
    }

    pub fn data_config(&self, n: usize, seed: u64) -> GaussianDataConfig {
        GaussianDataConfig {
            d: self.d,
            rho: self.rho,
            sigma_core: self.sigma_core,
            spurious_scale: self.spurious_scale,
            sigma_noise: self.sigma_noise,
            n_train: n,
            n_test_per_group: self.n_test_per_group,
            seed,
        }
    }

    fn logistic_for(&self, n: usize) -> LogisticConfig {
        let mut c = self.logistic.clone();
        if n > self.d {
            if let Some(cap) = self.logistic_max_iters_large_n {
                c.max_iters = c.max_iters.min(cap);
            }
        }
        c
    }
}

pub fn sample_complexity_seed(base: u64, n: usize, replicate: usize) -> u64 {
    derive_seed(base, &[TAG_SAMPLE_COMPLEXITY, n as u64, replicate as u64])
}

/// Per-seed outcome of one method at one n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub report: GroupReport,
    pub id_acc: f64,
    pub ood_acc: f64,
    pub ratio_spu: f64,
    pub ratio_noise: f64,
    pub hit_max_iters: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub method: Method,
    pub id_acc: MeanStd,
    pub ood_acc: MeanStd,
    pub majority_acc: MeanStd,
    pub minority_acc: MeanStd,
    /// Majority minus minority accuracy.
    pub gap: MeanStd,
    pub worst_group_acc: MeanStd,
    /// Over seeds where w_core ≠ 0.
    pub ratio_spu: MeanStd,
    pub ratio_noise: MeanStd,
    pub hit_max_iters: usize,
    pub failures: Vec<String>,
}

pub fn run_sample_complexity_replicate(cfg: &SampleComplexityConfig, n: usize, seed: u64) -> Vec<Result<MethodRun>> {
    let data_cfg = cfg.data_config(n, seed);
    let train = gaussian_train(&data_cfg);
    cfg.methods
        .iter()
        .map(|&m| {
            let model = fit_method(m, &train, cfg.lda, &cfg.logistic_for(n), &cfg.svm)?;
            let report = evaluate_model(&model, &data_cfg, cfg.eval)?;
            let wd = decompose_weights(&model)?;
            Ok(MethodRun {
                id_acc: report.id_accuracy(cfg.rho),
                ood_acc: report.ood_accuracy(),
                ratio_spu: wd.ratio_spu.unwrap_or(f64::NAN),
                ratio_noise: wd.ratio_noise.unwrap_or(f64::NAN),
                hit_max_iters: model.meta.hit_max_iters,
                report,
            })
        })
        .collect()
}

pub fn run_sample_complexity(cfg: &SampleComplexityConfig, workers: usize) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    let r = cfg.seeds;
    let runs = run_pool(workers, cfg.n_values.len() * r, |task| {
        let n = cfg.n_values[task / r];
        run_sample_complexity_replicate(cfg, n, sample_complexity_seed(cfg.base_seed, n, task % r))
    })?;
    let mut out = Vec::new();
    for (k, &n) in cfg.n_values.iter().enumerate() {
        let chunk = &runs[k * r..(k + 1) * r];
        for (mi, &method) in cfg.methods.iter().enumerate() {
            let mut ok: Vec<&MethodRun> = Vec::new();
            let mut failures = Vec::new();
            for (rep, per) in chunk.iter().enumerate() {
                match &per[mi] {
                    Ok(v) => ok.push(v),
                    Err(e) => failures.push(format!("replicate {rep}: {e}")),
                }
            }
            let stat = |f: &dyn Fn(&MethodRun) -> f64| {
                MeanStd::of(&ok.iter().map(|v| f(v)).filter(|v| !v.is_nan()).collect::<Vec<_>>())
            };
            out.push(CurvePoint {
                n,
                method,
                id_acc: stat(&|v| v.id_acc),
                ood_acc: stat(&|v| v.ood_acc),
                majority_acc: stat(&|v| v.report.majority_acc),
                minority_acc: stat(&|v| v.report.minority_acc),
                gap: stat(&|v| v.report.majority_acc - v.report.minority_acc),
                worst_group_acc: stat(&|v| v.report.worst_group_acc),
                ratio_spu: stat(&|v| v.ratio_spu),
                ratio_noise: stat(&|v| v.ratio_noise),
                hit_max_iters: ok.iter().filter(|v| v.hit_max_iters).count(),
                failures,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_grid() -> PhaseGridConfig {
        PhaseGridConfig {
            b_values: vec![0.3, 3.0],
            sigma_noise2_values: vec![0.05, 1.0],
            n_train: 16,
            d: 40,
            seeds_per_cell: 3,
            logistic: LogisticConfig {
                max_iters: 20_000,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn phase_examples() {
        assert_eq!(classify_phase(0.9, 0.8, 0.7, 0.6, 0.005).unwrap(), Phase::One);
        assert_eq!(classify_phase(0.7, 0.8, 0.9, 0.6, 0.005).unwrap(), Phase::Three);
        assert_eq!(classify_phase(0.800, 0.7, 0.801, 0.6, 0.005).unwrap(), Phase::Boundary);
        assert_eq!(classify_phase(0.6, 0.5, 0.7, 0.6, 0.005).unwrap(), Phase::Two);
        assert_eq!(classify_phase(0.9, 0.5, 0.7, 0.6, 0.005).unwrap(), Phase::Four);
        assert!(classify_phase(1.1, 0.5, 0.7, 0.6, 0.005).is_err());
    }

    #[test]
    fn log_axis_endpoints() {
        let a = log_axis(0.1, 10.0, 20);
        assert_eq!(a.len(), 20);
        assert!((a[0] - 0.1).abs() < 1e-15 && (a[19] - 10.0).abs() < 1e-12);
        assert!(a.windows(2).all(|w| w[1] > w[0]));
        assert!(((a[1] / a[0]) - (a[19] / a[18])).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = small_grid();
        c.b_values = vec![];
        assert!(run_phase_grid(&c, 1).unwrap_err().is_config());
        let mut c = small_grid();
        c.sigma_noise2_values = vec![1.0, 0.5];
        assert!(c.validate().is_err());
        let mut c = small_grid();
        c.seeds_per_cell = 0;
        assert!(c.validate().is_err());
        let mut c = small_grid();
        c.disc_method = Method::Lda;
        assert!(c.validate().is_err());
        let s = SampleComplexityConfig {
            n_values: vec![32, 16],
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn single_cell_matches_manual_run() {
        let mut c = small_grid();
        c.b_values = vec![1.0];
        c.sigma_noise2_values = vec![0.36];
        c.seeds_per_cell = 1;
        let grid = run_phase_grid(&c, 1).unwrap();
        let seed = cell_seed(c.base_seed, 1.0, 0.36, 0);
        let data = c.data_config(1.0, 0.36, seed);
        let train = gaussian_train(&data);
        let lda = fit_lda_linear(&train, Inversion::default()).unwrap();
        let (lg, _) = fit_logistic_gd(&train, &c.logistic).unwrap();
        let rl = analytic_report(&lda, &data).unwrap();
        let rg = analytic_report(&lg, &data).unwrap();
        let cell = grid.cell(0, 0);
        assert_eq!(cell.gen_id.mean, rl.id_accuracy(0.9));
        assert_eq!(cell.gen_ood.mean, rl.minority_acc);
        assert_eq!(cell.disc_id.mean, rg.id_accuracy(0.9));
        assert_eq!(cell.disc_ood.mean, rg.minority_acc);
    }

    #[test]
    fn grid_is_deterministic_and_schedule_invariant() {
        let c = small_grid();
        let a = run_phase_grid(&c, 1).unwrap();
        let b = run_phase_grid(&c, 1).unwrap();
        let w = run_phase_grid(&c, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, w);
    }

    #[test]
    fn labels_recompute_from_stored_means() {
        let grid = run_phase_grid(&small_grid(), 2).unwrap();
        for cell in &grid.cells {
            let p = classify_phase(
                cell.gen_id.mean,
                cell.gen_ood.mean,
                cell.disc_id.mean,
                cell.disc_ood.mean,
                grid.config.tie_tolerance,
            )
            .unwrap();
            assert_eq!(Some(p), cell.phase);
            assert_eq!(cell.gen_id.count, 3);
        }
    }

    #[test]
    fn subsampled_axes_give_sub_grid() {
        let fine = run_phase_grid(&small_grid(), 1).unwrap();
        let mut c = small_grid();
        c.b_values = vec![3.0];
        c.sigma_noise2_values = vec![0.05];
        let coarse = run_phase_grid(&c, 1).unwrap();
        let (f, k) = (fine.cell(1, 0), coarse.cell(0, 0));
        assert_eq!((f.gen_id, f.gen_ood, f.disc_id, f.disc_ood, f.phase), (k.gen_id, k.gen_ood, k.disc_id, k.disc_ood, k.phase));
    }

    #[test]
    fn failed_replicates_are_recorded() {
        // A zero-variance core with B = 0 and no noise makes every point sit
        // on the two class means; the fits succeed, so force a failure with
        // an invalid logistic rate instead and check the grid still completes.
        let mut c = small_grid();
        c.logistic.lr = Some(-1.0);
        let grid = run_phase_grid(&c, 1).unwrap();
        for cell in &grid.cells {
            assert_eq!(cell.failures.len(), 3);
            assert_eq!(cell.phase, None);
        }
    }

    fn small_curve() -> SampleComplexityConfig {
        SampleComplexityConfig {
            n_values: vec![8, 32, 128],
            d: 40,
            seeds: 3,
            methods: vec![Method::Lda, Method::LogisticGd, Method::SvmHardMargin],
            logistic: LogisticConfig {
                max_iters: 20_000,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn curve_is_schedule_invariant() {
        let c = small_curve();
        let a = run_sample_complexity(&c, 1).unwrap();
        let b = run_sample_complexity(&c, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 9);
    }

    #[test]
    fn single_point_curve_matches_manual_run() {
        let mut c = small_curve();
        c.n_values = vec![32];
        c.seeds = 1;
        c.methods = vec![Method::Lda];
        let pts = run_sample_complexity(&c, 1).unwrap();
        let data = c.data_config(32, sample_complexity_seed(c.base_seed, 32, 0));
        let m = fit_lda_linear(&gaussian_train(&data), Inversion::default()).unwrap();
        let r = analytic_report(&m, &data).unwrap();
        let wd = decompose_weights(&m).unwrap();
        assert_eq!(pts[0].minority_acc.mean, r.minority_acc);
        assert_eq!(pts[0].gap.mean, r.majority_acc - r.minority_acc);
        assert_eq!(pts[0].ratio_spu.mean, wd.ratio_spu.unwrap());
        assert_eq!(pts[0].ratio_spu.std, 0.0);
    }

    #[test]
    fn core_only_data_reaches_bayes_accuracy() {
        let c = SampleComplexityConfig {
            n_values: vec![4096],
            d: 20,
            sigma_noise: 0.0,
            spurious_scale: 0.0,
            seeds: 2,
            ..Default::default()
        };
        let bayes = crate::synth_data::bayes_core_accuracy(&c.data_config(4096, 0)).unwrap();
        for p in run_sample_complexity(&c, 1).unwrap() {
            assert!(p.failures.is_empty(), "{:?}", p.failures);
            assert!((p.id_acc.mean - bayes).abs() < 0.01, "{:?} {}", p.method, p.id_acc.mean);
        }
    }

    #[test]
    fn sampled_and_analytic_evaluation_agree() {
        let mut c = small_curve();
        c.n_values = vec![64];
        c.methods = vec![Method::Lda];
        c.n_test_per_group = 20_000;
        let a = run_sample_complexity(&c, 1).unwrap();
        c.eval = EvalMode::Sampled;
        let s = run_sample_complexity(&c, 1).unwrap();
        assert!((a[0].minority_acc.mean - s[0].minority_acc.mean).abs() < 0.01);
        assert!((a[0].majority_acc.mean - s[0].majority_acc.mean).abs() < 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn phase_is_antisymmetric(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0, tol in 0.0f64..0.05) {
            let p = classify_phase(a, b, c, d, tol).unwrap();
            let q = classify_phase(c, d, a, b, tol).unwrap();
            let swapped = match p {
                Phase::One => Phase::Two,
                Phase::Two => Phase::One,
                Phase::Three => Phase::Four,
                Phase::Four => Phase::Three,
                Phase::Boundary => Phase::Boundary,
            };
            prop_assert_eq!(q, swapped);
        }

        #[test]
        fn mean_std_is_order_independent_for_permutations(v in proptest::collection::vec(0.0f64..1.0, 1..30)) {
            let a = MeanStd::of(&v);
            let mut r = v.clone();
            r.reverse();
            let b = MeanStd::of(&r);
            prop_assert!((a.mean - b.mean).abs() < 1e-12);
            prop_assert!((a.std - b.std).abs() < 1e-12);
            prop_assert!(v.iter().all(|x| *x >= a.mean - a.std * (v.len() as f64).sqrt() - 1e-12));
        }
    }
}
