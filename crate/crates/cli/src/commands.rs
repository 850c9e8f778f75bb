//! Subcommand implementations. Column orders are documented in SCHEMAS.md.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gencls_core::ar_textgen::{predict_labels, run_objective_ablation, AblationConfig, AblationRun, Objective};
use gencls_core::diffusion_core::run_diffusion_check;
use gencls_core::linear_models::{
    decompose_weights, fit_logistic_gd, predict, LogisticConfig, TraceRecord,
};
use gencls_core::metrics::{analytic_report, fit_trend_line, group_accuracies, GroupReport, RobustnessPoint};
use gencls_core::sweep::{fit_method, run_phase_grid, run_sample_complexity, CurvePoint, MeanStd, PhaseGrid};
use gencls_core::synth_data::{gaussian_train, generate_gaussian, generate_tokens};
use serde::{Deserialize, Serialize};

use crate::binio::{self, Object};
use crate::config::{parse_config, Config};
use crate::manifest::{read_manifest, verify_manifest, RunOutputs, MANIFEST_NAME};
use crate::svg::{self, HeatScale, LineSeries, PlotSpec, ScatterSeries};
use crate::{Cli, Command, DataKind, InputError};

struct Ctx {
    seed: u64,
    workers: usize,
    out: PathBuf,
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        bail!(InputError("--workers must be at least 1".into()));
    }
    let ctx = Ctx {
        seed: cli.seed,
        workers,
        out: cli.out,
    };
    match cli.command {
        Command::GenData { config, kind } => gen_data(&ctx, &load(&ctx, config.as_deref())?, kind),
        Command::Train { config, data, method } => {
            let mut cfg = load(&ctx, config.as_deref())?;
            if let Some(m) = method {
                cfg.train.method = m.into();
            }
            train(&ctx, &cfg, data.as_deref())
        }
        Command::TrainAr { config } => train_ar(&ctx, &load(&ctx, config.as_deref())?),
        Command::Evaluate { model, data } => evaluate(&ctx, &model, &data),
        Command::DiffusionCheck { config } => diffusion_check(&ctx, &load(&ctx, config.as_deref())?),
        Command::SweepPhase { config, disc } => {
            let mut cfg = load(&ctx, config.as_deref())?;
            if let Some(m) = disc {
                cfg.phase.disc_method = m.into();
            }
            sweep_phase(&ctx, &cfg)
        }
        Command::SweepN { config } => sweep_n(&ctx, &load(&ctx, config.as_deref())?),
        Command::GradTrace { config } => grad_trace(&ctx, &load(&ctx, config.as_deref())?),
        Command::Report => report(&ctx),
    }
}

fn load(ctx: &Ctx, path: Option<&Path>) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => parse_config(p)?,
        None => Config::default(),
    };
    cfg.apply_seed(ctx.seed);
    Ok(cfg)
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?)
}

fn start(ctx: &Ctx, config: Option<&Path>) -> Result<RunOutputs> {
    let mut out = RunOutputs::new(&ctx.out)?;
    if let Some(p) = config {
        out.add_input(p)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group0: f64,
    pub group1: f64,
    pub group2: f64,
    pub group3: f64,
    pub majority: f64,
    pub minority: f64,
    pub worst_group: f64,
    pub mean: f64,
    pub class_balanced: f64,
}

impl From<&GroupReport> for GroupRow {
    fn from(r: &GroupReport) -> Self {
        Self {
            group0: r.group_acc_or_nan(0),
            group1: r.group_acc_or_nan(1),
            group2: r.group_acc_or_nan(2),
            group3: r.group_acc_or_nan(3),
            majority: r.majority_acc,
            minority: r.minority_acc,
            worst_group: r.worst_group_acc,
            mean: r.mean_acc,
            class_balanced: r.class_balanced_acc,
        }
    }
}

fn gen_data(ctx: &Ctx, cfg: &Config, kind: DataKind) -> Result<()> {
    let mut out = start(ctx, None)?;
    let resolved = match kind {
        DataKind::Gaussian => {
            let (train, test) = generate_gaussian(&cfg.gaussian)?;
            out.write("train.gcl", &binio::encode_gaussian(&train))?;
            out.write("test.gcl", &binio::encode_gaussian(&test))?;
            to_json(&cfg.gaussian)?
        }
        DataKind::Tokens => {
            let (train, test) = generate_tokens(&cfg.tokens)?;
            out.write("train.gcl", &binio::encode_tokens(&train, cfg.tokens.vocab()))?;
            out.write("test.gcl", &binio::encode_tokens(&test, cfg.tokens.vocab()))?;
            to_json(&cfg.tokens)?
        }
    };
    out.finish("gen-data", ctx.seed, ctx.workers, resolved)?;
    Ok(())
}

#[derive(Serialize)]
struct FitRow {
    method: &'static str,
    d: usize,
    bias: f64,
    w_core: f64,
    w_spu: f64,
    w_noise_norm: f64,
    ratio_spu: f64,
    ratio_noise: f64,
    iterations: usize,
    train_accuracy: f64,
    hit_max_iters: bool,
    rank: usize,
    rank_deficient: bool,
    margin: f64,
    kkt_residual: f64,
}

#[derive(Serialize)]
struct WeightRow {
    index: usize,
    weight: f64,
}

fn train(ctx: &Ctx, cfg: &Config, data: Option<&Path>) -> Result<()> {
    let mut out = start(ctx, None)?;
    let train = match data {
        Some(p) => {
            out.add_input(p)?;
            match binio::read_object(p)? {
                Object::Gaussian(d) => d,
                _ => bail!(InputError(format!("{} is not a Gaussian dataset", p.display()))),
            }
        }
        None => {
            cfg.gaussian.validate()?;
            gaussian_train(&cfg.gaussian)
        }
    };
    let t = &cfg.train;
    let model = fit_method(t.method, &train, t.lda, &t.logistic, &t.svm)?;
    let wd = decompose_weights(&model)?;
    let m = &model.meta;
    out.write("model.gcl", &binio::encode_linear(&model))?;
    out.write(
        "fit.csv",
        &csv_bytes(&[FitRow {
            method: model.method.tag(),
            d: model.dim(),
            bias: model.bias,
            w_core: wd.w_core,
            w_spu: wd.w_spu,
            w_noise_norm: wd.w_noise_norm,
            ratio_spu: wd.ratio_spu.unwrap_or(f64::NAN),
            ratio_noise: wd.ratio_noise.unwrap_or(f64::NAN),
            iterations: m.iterations,
            train_accuracy: m.train_accuracy,
            hit_max_iters: m.hit_max_iters,
            rank: m.rank,
            rank_deficient: m.rank_deficient,
            margin: m.margin,
            kkt_residual: m.kkt_residual,
        }])?,
    )?;
    let weights: Vec<WeightRow> = model.weights.iter().enumerate().map(|(index, &weight)| WeightRow { index, weight }).collect();
    out.write("weights.csv", &csv_bytes(&weights)?)?;
    if data.is_none() {
        let report = analytic_report(&model, &cfg.gaussian)?;
        out.write("population.csv", &csv_bytes(&[GroupRow::from(&report)])?)?;
    }
    out.finish("train", ctx.seed, ctx.workers, to_json(&(&cfg.gaussian, &cfg.train))?)?;
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    replicate: usize,
    objective: &'static str,
    group0: f64,
    group1: f64,
    group2: f64,
    group3: f64,
    majority: f64,
    minority: f64,
    worst_group: f64,
    mean: f64,
    class_balanced: f64,
}

#[derive(Serialize)]
struct AblationSummaryRow {
    objective: &'static str,
    seeds: usize,
    worst_group_mean: f64,
    worst_group_std: f64,
    mean_mean: f64,
    mean_std: f64,
    minority_mean: f64,
    majority_mean: f64,
}

pub fn ablation_config(cfg: &Config) -> AblationConfig {
    AblationConfig {
        data: cfg.tokens.clone(),
        sgd: cfg.ar.sgd.clone(),
        objectives: cfg.ar.objectives.clone(),
        seeds: cfg.ar.seeds,
        base_seed: cfg.tokens.seed,
    }
}

fn summarize_ablation(runs: &[AblationRun], objectives: &[Objective]) -> Vec<AblationSummaryRow> {
    objectives
        .iter()
        .map(|&o| {
            let reports: Vec<&GroupReport> = runs.iter().filter(|r| r.objective == o).map(|r| &r.report).collect();
            let stat = |f: fn(&GroupReport) -> f64| MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (wg, mean) = (stat(|r| r.worst_group_acc), stat(|r| r.mean_acc));
            AblationSummaryRow {
                objective: o.tag(),
                seeds: reports.len(),
                worst_group_mean: wg.mean,
                worst_group_std: wg.std,
                mean_mean: mean.mean,
                mean_std: mean.std,
                minority_mean: stat(|r| r.minority_acc).mean,
                majority_mean: stat(|r| r.majority_acc).mean,
            }
        })
        .collect()
}

fn train_ar(ctx: &Ctx, cfg: &Config) -> Result<()> {
    let mut out = start(ctx, None)?;
    let ab = ablation_config(cfg);
    let runs = run_objective_ablation(&ab)?;
    let rows: Vec<AblationRow> = runs
        .iter()
        .map(|r| {
            let g = GroupRow::from(&r.report);
            AblationRow {
                replicate: r.replicate,
                objective: r.objective.tag(),
                group0: g.group0,
                group1: g.group1,
                group2: g.group2,
                group3: g.group3,
                majority: g.majority,
                minority: g.minority,
                worst_group: g.worst_group,
                mean: g.mean,
                class_balanced: g.class_balanced,
            }
        })
        .collect();
    out.write("ablation.csv", &csv_bytes(&rows)?)?;
    out.write("ablation_summary.csv", &csv_bytes(&summarize_ablation(&runs, &ab.objectives))?)?;
    for r in runs.iter().filter(|r| r.replicate == 0) {
        out.write(&format!("ar_{}.gcl", r.objective.tag()), &binio::encode_ar(&r.model))?;
    }
    out.finish("train-ar", ctx.seed, ctx.workers, to_json(&ab)?)?;
    Ok(())
}

fn evaluate(ctx: &Ctx, model_path: &Path, data_path: &Path) -> Result<()> {
    let model = binio::read_object(model_path)?;
    let data = binio::read_object(data_path)?;
    let report = match (&model, &data) {
        (Object::Linear(m), Object::Gaussian(d)) => {
            if m.dim() != d.dim() {
                bail!(InputError(format!("model has dimension {}, data has {}", m.dim(), d.dim())));
            }
            group_accuracies(&predict(m, &d.features)?, &d.labels, &d.group_id)?
        }
        (Object::Ar(m), Object::Tokens(d, vocab)) => {
            if m.vocab != *vocab {
                bail!(InputError("model and data use different vocabularies".into()));
            }
            group_accuracies(&predict_labels(m, d)?, &d.labels, &d.group_id)?
        }
        _ => bail!(InputError("model and data kinds do not match (linear + Gaussian or AR + tokens)".into())),
    };
    let is_csv = ctx.out.extension().is_some_and(|e| e == "csv");
    let (dir, name) = if is_csv {
        let dir = ctx.out.parent().filter(|p| !p.as_os_str().is_empty()).map_or(PathBuf::from("."), Path::to_path_buf);
        let name = ctx.out.file_name().and_then(|n| n.to_str()).context("invalid --out file name")?.to_string();
        (dir, name)
    } else {
        (ctx.out.clone(), "evaluation.csv".to_string())
    };
    let mut out = RunOutputs::new(&dir)?;
    if is_csv {
        out.set_manifest_name(&format!("{name}.manifest.json"));
    }
    out.add_input(model_path)?;
    out.add_input(data_path)?;
    out.write(&name, &csv_bytes(&[GroupRow::from(&report)])?)?;
    out.finish("evaluate", ctx.seed, ctx.workers, serde_json::json!({ "warnings": report.warnings }))?;
    Ok(())
}

fn diffusion_check(ctx: &Ctx, cfg: &Config) -> Result<()> {
    let mut out = start(ctx, None)?;
    let (summary, rows) = run_diffusion_check(&cfg.diffusion)?;
    out.write("diffusion_points.csv", &csv_bytes(&rows)?)?;
    out.write("diffusion_summary.csv", &csv_bytes(&[summary])?)?;
    out.finish("diffusion-check", ctx.seed, ctx.workers, to_json(&cfg.diffusion)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "B")]
    pub b: f64,
    pub sigma_noise2: f64,
    pub gen_id_mean: f64,
    pub gen_id_std: f64,
    pub gen_ood_mean: f64,
    pub gen_ood_std: f64,
    pub disc_id_mean: f64,
    pub disc_id_std: f64,
    pub disc_ood_mean: f64,
    pub disc_ood_std: f64,
    /// "1".."4", "boundary", or "failed" when no replicate succeeded.
    pub phase: String,
    pub n_ok: usize,
    pub n_failed: usize,
}

pub fn phase_rows(grid: &PhaseGrid) -> Vec<PhaseRow> {
    grid.cells
        .iter()
        .map(|c| PhaseRow {
            i: c.i,
            j: c.j,
            b: c.b,
            sigma_noise2: c.sigma_noise2,
            gen_id_mean: c.gen_id.mean,
            gen_id_std: c.gen_id.std,
            gen_ood_mean: c.gen_ood.mean,
            gen_ood_std: c.gen_ood.std,
            disc_id_mean: c.disc_id.mean,
            disc_id_std: c.disc_id.std,
            disc_ood_mean: c.disc_ood.mean,
            disc_ood_std: c.disc_ood.std,
            phase: c.phase.map_or("failed".to_string(), |p| p.tag().to_string()),
            n_ok: c.gen_id.count,
            n_failed: c.failures.len(),
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct PhaseCountRow {
    phase: String,
    count: usize,
    fraction_non_boundary: f64,
}

fn sweep_phase(ctx: &Ctx, cfg: &Config) -> Result<()> {
    let mut out = start(ctx, None)?;
    let grid = run_phase_grid(&cfg.phase, ctx.workers)?;
    out.write("phase_grid.csv", &csv_bytes(&phase_rows(&grid))?)?;
    let counts = grid.phase_counts();
    let fr = grid.non_boundary_fractions();
    let mut count_rows = vec![PhaseCountRow {
        phase: "boundary".into(),
        count: counts[0],
        fraction_non_boundary: f64::NAN,
    }];
    for k in 1..=4 {
        count_rows.push(PhaseCountRow {
            phase: k.to_string(),
            count: counts[k],
            fraction_non_boundary: fr[k - 1],
        });
    }
    count_rows.push(PhaseCountRow {
        phase: "failed".into(),
        count: grid.cells.iter().filter(|c| c.phase.is_none()).count(),
        fraction_non_boundary: f64::NAN,
    });
    out.write("phase_counts.csv", &csv_bytes(&count_rows)?)?;
    let (nb, ns) = (cfg.phase.b_values.len(), cfg.phase.sigma_noise2_values.len());
    // Code 5 marks cells where every replicate failed.
    let values: Vec<Vec<f64>> = (0..nb)
        .map(|i| (0..ns).map(|j| grid.cell(i, j).phase.map_or(5.0, |p| f64::from(p.code()))).collect())
        .collect();
    let HeatScale::Categorical { mut colors, mut labels } = svg::phase_scale() else { unreachable!() };
    colors.push("#ffffff".into());
    labels.push("failed".into());
    let plot = svg::heatmap(
        &PlotSpec {
            title: format!("Phases ({} vs LDA)", cfg.phase.disc_method.tag()),
            x_label: "noise variance".into(),
            y_label: "spurious scale B".into(),
            log_x: false,
        },
        &cfg.phase.b_values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
        &cfg.phase.sigma_noise2_values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
        &values,
        &HeatScale::Categorical { colors, labels },
    )?;
    out.write("phase_heatmap.svg", plot.as_bytes())?;
    out.finish("sweep-phase", ctx.seed, ctx.workers, to_json(&cfg.phase)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: usize,
    pub method: String,
    pub id_mean: f64,
    pub id_std: f64,
    pub ood_mean: f64,
    pub ood_std: f64,
    pub majority_mean: f64,
    pub majority_std: f64,
    pub minority_mean: f64,
    pub minority_std: f64,
    pub gap_mean: f64,
    pub gap_std: f64,
    pub worst_mean: f64,
    pub worst_std: f64,
    pub ratio_spu_mean: f64,
    pub ratio_spu_std: f64,
    pub ratio_noise_mean: f64,
    pub ratio_noise_std: f64,
    pub hit_max_iters: usize,
    pub n_ok: usize,
    pub n_failed: usize,
}

pub fn curve_rows(points: &[CurvePoint]) -> Vec<CurveRow> {
    points
        .iter()
        .map(|p| CurveRow {
            n: p.n,
            method: p.method.tag().to_string(),
            id_mean: p.id_acc.mean,
            id_std: p.id_acc.std,
            ood_mean: p.ood_acc.mean,
            ood_std: p.ood_acc.std,
            majority_mean: p.majority_acc.mean,
            majority_std: p.majority_acc.std,
            minority_mean: p.minority_acc.mean,
            minority_std: p.minority_acc.std,
            gap_mean: p.gap.mean,
            gap_std: p.gap.std,
            worst_mean: p.worst_group_acc.mean,
            worst_std: p.worst_group_acc.std,
            ratio_spu_mean: p.ratio_spu.mean,
            ratio_spu_std: p.ratio_spu.std,
            ratio_noise_mean: p.ratio_noise.mean,
            ratio_noise_std: p.ratio_noise.std,
            hit_max_iters: p.hit_max_iters,
            n_ok: p.id_acc.count,
            n_failed: p.failures.len(),
        })
        .collect()
}

/// One line per method from (n, mean, std) triples, skipping undefined points.
fn method_lines(rows: &[CurveRow], f: fn(&CurveRow) -> (f64, f64), suffix: &str) -> Vec<LineSeries> {
    let mut by_method: BTreeMap<String, LineSeries> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows {
        let (m, s) = f(r);
        if !m.is_finite() || !s.is_finite() {
            continue;
        }
        let e = by_method.entry(r.method.clone()).or_insert_with(|| {
            order.push(r.method.clone());
            LineSeries {
                name: format!("{}{suffix}", r.method),
                x: Vec::new(),
                y: Vec::new(),
                band: Some(Vec::new()),
            }
        });
        e.x.push(r.n as f64);
        e.y.push(m);
        e.band.as_mut().expect("band").push(s);
    }
    order.into_iter().filter_map(|m| by_method.remove(&m)).collect()
}

fn curve_plot(title: &str, y_label: &str, series: Vec<LineSeries>) -> Result<String> {
    Ok(svg::line_with_band(
        &PlotSpec {
            title: title.into(),
            x_label: "training examples n".into(),
            y_label: y_label.into(),
            log_x: true,
        },
        &series,
    )?)
}

fn sweep_n(ctx: &Ctx, cfg: &Config) -> Result<()> {
    let mut out = start(ctx, None)?;
    let points = run_sample_complexity(&cfg.sample_complexity, ctx.workers)?;
    let rows = curve_rows(&points);
    out.write("curve.csv", &csv_bytes(&rows)?)?;
    let gap = method_lines(&rows, |r| (r.gap_mean, r.gap_std), "");
    out.write("gap.svg", curve_plot("Majority minus minority accuracy", "accuracy gap", gap)?.as_bytes())?;
    let ratio = method_lines(&rows, |r| (r.ratio_spu_mean, r.ratio_spu_std), "");
    if !ratio.is_empty() {
        out.write("ratio_spu.svg", curve_plot("Spurious-to-core weight ratio", "|w_spu| / |w_core|", ratio)?.as_bytes())?;
    }
    let mut acc = method_lines(&rows, |r| (r.majority_mean, r.majority_std), " majority");
    acc.extend(method_lines(&rows, |r| (r.minority_mean, r.minority_std), " minority"));
    out.write("accuracy.svg", curve_plot("Group accuracy", "accuracy", acc)?.as_bytes())?;
    out.finish("sweep-n", ctx.seed, ctx.workers, to_json(&cfg.sample_complexity)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArTraceRow {
    pub objective: String,
    pub epoch: usize,
    pub seeds: usize,
    pub loss_mean: f64,
    pub grad_norm_majority_mean: f64,
    pub grad_norm_minority_mean: f64,
}

#[derive(Serialize)]
struct LogisticTraceRow {
    iteration: usize,
    loss: f64,
    grad_norm_majority: f64,
    grad_norm_minority: f64,
    ratio_spu: f64,
    ratio_noise: f64,
    cosine: f64,
}

/// Seed-mean normalized traces per objective and epoch.
pub fn mean_traces(runs: &[AblationRun], objectives: &[Objective]) -> Vec<ArTraceRow> {
    let mut rows = Vec::new();
    for &o in objectives {
        let traces: Vec<&[TraceRecord]> = runs.iter().filter(|r| r.objective == o).map(|r| r.trace.records.as_slice()).collect();
        let epochs = traces.iter().map(|t| t.len()).min().unwrap_or(0);
        for e in 0..epochs {
            let avg = |f: fn(&TraceRecord) -> f64| traces.iter().map(|t| f(&t[e])).sum::<f64>() / traces.len() as f64;
            rows.push(ArTraceRow {
                objective: o.tag().to_string(),
                epoch: traces[0][e].epoch,
                seeds: traces.len(),
                loss_mean: avg(|r| r.loss),
                grad_norm_majority_mean: avg(|r| r.grad_norm_majority),
                grad_norm_minority_mean: avg(|r| r.grad_norm_minority),
            });
        }
    }
    rows
}

pub fn trace_ablation_config(cfg: &Config) -> AblationConfig {
    let mut ab = ablation_config(cfg);
    ab.data.eta_core = cfg.trace.ar_eta_core;
    ab.sgd.epochs = cfg.trace.ar_epochs;
    ab.seeds = cfg.trace.seeds;
    ab
}

fn grad_trace(ctx: &Ctx, cfg: &Config) -> Result<()> {
    let mut out = start(ctx, None)?;
    let ab = trace_ablation_config(cfg);
    let runs = run_objective_ablation(&ab)?;
    let rows = mean_traces(&runs, &ab.objectives);
    out.write("ar_trace.csv", &csv_bytes(&rows)?)?;
    let series: Vec<LineSeries> = ab
        .objectives
        .iter()
        .map(|o| {
            let pts: Vec<&ArTraceRow> = rows.iter().filter(|r| r.objective == o.tag()).collect();
            LineSeries {
                name: o.tag().into(),
                x: pts.iter().map(|r| r.epoch as f64).collect(),
                y: pts.iter().map(|r| r.grad_norm_majority_mean).collect(),
                band: None,
            }
        })
        .collect();
    let plot = svg::line_with_band(
        &PlotSpec {
            title: "Majority-group gradient norm (relative to epoch 5)".into(),
            x_label: "epoch".into(),
            y_label: "normalized gradient norm".into(),
            log_x: false,
        },
        &series,
    )?;
    out.write("ar_trace.svg", plot.as_bytes())?;

    cfg.gaussian.validate()?;
    let train = gaussian_train(&cfg.gaussian);
    let lcfg = LogisticConfig {
        trace_every: Some(cfg.trace.logistic_every.max(1)),
        max_iters: cfg.trace.logistic_max_iters,
        ..cfg.train.logistic.clone()
    };
    let (_, trace) = fit_logistic_gd(&train, &lcfg)?;
    let lrows: Vec<LogisticTraceRow> = trace
        .records
        .iter()
        .map(|r| LogisticTraceRow {
            iteration: r.epoch,
            loss: r.loss,
            grad_norm_majority: r.grad_norm_majority,
            grad_norm_minority: r.grad_norm_minority,
            ratio_spu: r.ratio_spu,
            ratio_noise: r.ratio_noise,
            cosine: r.cosine,
        })
        .collect();
    out.write("logistic_trace.csv", &csv_bytes(&lrows)?)?;
    out.finish("grad-trace", ctx.seed, ctx.workers, to_json(&(&ab, &cfg.gaussian, &lcfg))?)?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>().with_context(|| format!("malformed {}", path.display()))?;
    Ok(rows)
}

#[derive(Serialize)]
struct VerifyRow {
    run: String,
    command: String,
    outputs: usize,
    mismatched: usize,
}

fn report(ctx: &Ctx) -> Result<()> {
    let root = &ctx.out;
    if !root.is_dir() {
        bail!(InputError(format!("{} is not a directory", root.display())));
    }
    let mut dirs = vec![root.clone()];
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n != "report"))
        .collect();
    subdirs.sort();
    dirs.extend(subdirs);

    let mut verify = Vec::new();
    let mut md = String::from("# gencls report\n\n");
    let mut bad = Vec::new();
    let mut robustness: Vec<RobustnessPoint> = Vec::new();
    let mut method_points: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for dir in &dirs {
        let mpath = dir.join(MANIFEST_NAME);
        if !mpath.is_file() {
            continue;
        }
        let m = read_manifest(&mpath)?;
        let mismatched = verify_manifest(dir, &m);
        let run = dir.strip_prefix(root).unwrap_or(dir).display().to_string();
        let run = if run.is_empty() { ".".to_string() } else { run };
        md.push_str(&format!("## {run} (`{}`)\n\n", m.command));
        if !mismatched.is_empty() {
            md.push_str(&format!("Hash mismatch: {}\n\n", mismatched.join(", ")));
            bad.push(run.clone());
        }
        let curve = dir.join("curve.csv");
        if curve.is_file() {
            let rows: Vec<CurveRow> = read_csv(&curve)?;
            md.push_str("| n | method | ID | OOD | gap | ratio_spu |\n|---|---|---|---|---|---|\n");
            for r in &rows {
                md.push_str(&format!(
                    "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
                    r.n, r.method, r.id_mean, r.ood_mean, r.gap_mean, r.ratio_spu_mean
                ));
                if r.id_mean.is_finite() && r.ood_mean.is_finite() {
                    robustness.push(RobustnessPoint {
                        id_acc: r.id_mean,
                        ood_acc: r.ood_mean,
                        method: r.method.clone(),
                    });
                    let e = method_points.entry(r.method.clone()).or_default();
                    e.0.push(r.id_mean);
                    e.1.push(r.ood_mean);
                }
            }
            md.push('\n');
        }
        let phase = dir.join("phase_counts.csv");
        if phase.is_file() {
            let rows: Vec<PhaseCountRow> = read_csv(&phase)?;
            md.push_str("| phase | cells | fraction of non-boundary |\n|---|---|---|\n");
            for r in &rows {
                md.push_str(&format!("| {} | {} | {:.3} |\n", r.phase, r.count, r.fraction_non_boundary));
            }
            md.push('\n');
        }
        for name in ["ablation_summary.csv", "diffusion_summary.csv"] {
            let p = dir.join(name);
            if p.is_file() {
                md.push_str(&format!("```\n{}```\n\n", std::fs::read_to_string(&p)?));
            }
        }
        verify.push(VerifyRow {
            run,
            command: m.command.clone(),
            outputs: m.outputs.len(),
            mismatched: mismatched.len(),
        });
    }
    if verify.is_empty() {
        bail!(InputError(format!("no run manifests found under {}", root.display())));
    }
    let mut out = RunOutputs::new(&root.join("report"))?;
    out.write("verify.csv", &csv_bytes(&verify)?)?;
    out.write("report.md", md.as_bytes())?;
    if !method_points.is_empty() {
        let series: Vec<ScatterSeries> = method_points
            .into_iter()
            .map(|(name, (x, y))| ScatterSeries { name, x, y })
            .collect();
        let line = fit_trend_line(&robustness);
        let plot = svg::scatter(
            &PlotSpec {
                title: "ID vs OOD accuracy".into(),
                x_label: "ID accuracy".into(),
                y_label: "OOD (minority) accuracy".into(),
                log_x: false,
            },
            &series,
            line,
        )?;
        out.write("robustness.svg", plot.as_bytes())?;
    }
    out.finish("report", ctx.seed, ctx.workers, serde_json::json!({ "root": root.display().to_string() }))?;
    if !bad.is_empty() {
        bail!(InputError(format!("output hashes do not match manifests in: {}", bad.join(", "))));
    }
    Ok(())
}
