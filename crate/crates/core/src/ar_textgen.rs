//! Class-conditional bigram token classifiers.
//!
//! Three objectives over the same token data:
//!
//! - `GenPrefix`: a bigram table per class, `p(x_i | x_{i−1}, y)`, with the
//!   class token standing in for BOS. Classification picks the class with the
//!   highest sequence log-likelihood.
//! - `Disc`: a two-way softmax head on the mean-pooled token counts
//!   `h_v = count_v / L` plus a bias, trained on `log p(y | x)`.
//! - `JointSuffix`: an unconditional bigram `p(x_i | x_{i−1})` plus the same
//!   pooled head predicting the class token after the last position, trained
//!   on `log p(x) + log p(y | x)`.
//!
//! All tables are logits; every conditional is a softmax over content tokens,
//! so normalization holds by construction. Losses are per-sequence sums
//! averaged over the batch, and gradients are exact.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::linear_models::{TraceRecord, TrainTrace};
use crate::metrics::{group_accuracies, GroupReport};
use crate::seeds::{derive_seed, rng_for, TAG_AR};
use crate::stats::log_softmax;
use crate::synth_data::{class_index, generate_tokens, TokenDataConfig, TokenDataset, TokenVocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    GenPrefix,
    Disc,
    JointSuffix,
}

impl Objective {
    pub fn tag(&self) -> &'static str {
        match self {
            Objective::GenPrefix => "gen_prefix",
            Objective::Disc => "disc",
            Objective::JointSuffix => "joint_suffix",
        }
    }

    pub fn code(&self) -> u32 {
        match self {
            Objective::GenPrefix => 0,
            Objective::Disc => 1,
            Objective::JointSuffix => 2,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(Objective::GenPrefix),
            1 => Some(Objective::Disc),
            2 => Some(Objective::JointSuffix),
            _ => None,
        }
    }
}

pub const N_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ARClassLM {
    pub objective: Objective,
    pub vocab: TokenVocab,
    /// Bigram logits, rows of length `vocab.content`. GenPrefix rows are indexed
    /// `class · (V + 1) + ctx`, JointSuffix rows by `ctx`; ctx `V` is the start
    /// context. Empty for Disc.
    pub lm: Vec<f64>,
    /// Class-head weights, `class · (V + 1) + feature`, the last feature being the bias.
    pub head: Vec<f64>,
}

impl ARClassLM {
    /// Zero-initialized model: uniform conditionals and an indifferent head.
    pub fn new(objective: Objective, vocab: TokenVocab) -> Self {
        let v = vocab.content;
        let lm_rows = match objective {
            Objective::GenPrefix => N_CLASSES * (v + 1),
            Objective::JointSuffix => v + 1,
            Objective::Disc => 0,
        };
        let head_len = match objective {
            Objective::GenPrefix => 0,
            _ => N_CLASSES * (v + 1),
        };
        Self {
            objective,
            vocab,
            lm: vec![0.0; lm_rows * v],
            head: vec![0.0; head_len],
        }
    }

    fn v(&self) -> usize {
        self.vocab.content
    }

    pub fn n_params(&self) -> usize {
        self.lm.len() + self.head.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.lm.clone();
        p.extend_from_slice(&self.head);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let k = self.lm.len();
        self.lm.copy_from_slice(&p[..k]);
        self.head.copy_from_slice(&p[k..]);
    }

    fn row_index(&self, class: usize, ctx: usize) -> usize {
        match self.objective {
            Objective::GenPrefix => class * (self.v() + 1) + ctx,
            _ => ctx,
        }
    }

    fn lm_rows(&self) -> usize {
        self.lm.len() / self.v().max(1)
    }

    /// Log-softmax of every bigram row.
    fn log_probs(&self) -> Vec<f64> {
        let v = self.v();
        let mut out = self.lm.clone();
        for r in 0..self.lm_rows() {
            log_softmax(&mut out[r * v..(r + 1) * v]);
        }
        out
    }

    /// Conditional distribution p(· | ctx, class) over content tokens.
    pub fn conditional(&self, class: usize, ctx: usize) -> Vec<f64> {
        let v = self.v();
        let r = self.row_index(class, ctx);
        let mut row = self.lm[r * v..(r + 1) * v].to_vec();
        log_softmax(&mut row);
        row.iter().map(|x| x.exp()).collect()
    }

    fn pooled(&self, tokens: &[u32]) -> Vec<f64> {
        let v = self.v();
        let mut h = vec![0.0; v + 1];
        let inv = 1.0 / tokens.len() as f64;
        for &t in tokens {
            h[t as usize] += inv;
        }
        h[v] = 1.0;
        h
    }

    /// Class log-probabilities from the pooled head.
    fn head_log_probs(&self, h: &[f64]) -> [f64; N_CLASSES] {
        let v1 = self.v() + 1;
        let mut z: Vec<f64> = (0..N_CLASSES)
            .map(|c| crate::linalg::dot(&self.head[c * v1..(c + 1) * v1], h))
            .collect();
        log_softmax(&mut z);
        [z[0], z[1]]
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return config_err("empty token sequence");
        }
        for &t in tokens {
            if t as usize >= self.vocab.total() {
                return config_err(format!("token id {t} outside vocabulary of {}", self.vocab.total()));
            }
            if t as usize >= self.v() {
                return config_err(format!("reserved token {t} (class or padding) inside the sequence body"));
            }
        }
        Ok(())
    }
}

/// Σ_i log p(x_i | x_{i−1}, y) with the class token as the first context.
pub fn score_sequence(model: &ARClassLM, tokens: &[u32], class: usize) -> Result<f64> {
    if model.objective != Objective::GenPrefix {
        return config_err(format!("score_sequence needs a gen_prefix model, got {}", model.objective.tag()));
    }
    if class >= N_CLASSES {
        return config_err(format!("class {class} out of range"));
    }
    model.check_tokens(tokens)?;
    let v = model.v();
    let mut total = 0.0;
    let mut ctx = v;
    let mut row = vec![0.0; v];
    for &t in tokens {
        let r = model.row_index(class, ctx);
        row.copy_from_slice(&model.lm[r * v..(r + 1) * v]);
        log_softmax(&mut row);
        total += row[t as usize];
        ctx = t as usize;
    }
    Ok(total)
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

/// Class with the highest sequence log-likelihood; ties go to class 0.
pub fn classify_ar(model: &ARClassLM, tokens: &[u32]) -> Result<usize> {
    let scores = (0..N_CLASSES)
        .map(|c| score_sequence(model, tokens, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax_low_tie(&scores))
}

/// Prediction for any objective: likelihood for GenPrefix, the class head otherwise.
pub fn predict_class(model: &ARClassLM, tokens: &[u32]) -> Result<usize> {
    match model.objective {
        Objective::GenPrefix => classify_ar(model, tokens),
        _ => {
            model.check_tokens(tokens)?;
            let lp = model.head_log_probs(&model.pooled(tokens));
            Ok(argmax_low_tie(&lp))
        }
    }
}

pub fn predict_labels(model: &ARClassLM, data: &TokenDataset) -> Result<Vec<i8>> {
    (0..data.len())
        .map(|i| predict_class(model, data.sequence(i)).map(crate::synth_data::class_label))
        .collect()
}

/// Bigram logits set to log((count + α) / (row total + Vα)) per class.
pub fn fit_gen_by_counts(data: &TokenDataset, vocab: TokenVocab, alpha: f64) -> ARClassLM {
    let mut model = ARClassLM::new(Objective::GenPrefix, vocab);
    let v = vocab.content;
    let mut counts = vec![0.0; model.lm.len()];
    for i in 0..data.len() {
        let c = class_index(data.labels[i]);
        let mut ctx = v;
        for &t in data.sequence(i) {
            counts[model.row_index(c, ctx) * v + t as usize] += 1.0;
            ctx = t as usize;
        }
    }
    for r in 0..model.lm_rows() {
        let row = &counts[r * v..(r + 1) * v];
        let total: f64 = row.iter().sum::<f64>() + alpha * v as f64;
        for k in 0..v {
            model.lm[r * v + k] = if total > 0.0 { ((row[k] + alpha) / total).ln() } else { 0.0 };
        }
    }
    model
}

/// Loss of one sequence and its gradient, accumulated into `grad` with weight
/// `scale`; returns (loss, per-example gradient norm).
fn example_loss_grad(
    model: &ARClassLM,
    log_probs: &[f64],
    tokens: &[u32],
    class: usize,
    scale: f64,
    grad: &mut [f64],
    rows_buf: &mut Vec<(usize, Vec<f64>)>,
) -> (f64, f64) {
    let v = model.v();
    let mut loss = 0.0;
    let mut norm_sq = 0.0;
    if model.objective != Objective::Disc {
        rows_buf.clear();
        let mut ctx = v;
        for &t in tokens {
            let r = model.row_index(class, ctx);
            let lp = &log_probs[r * v..(r + 1) * v];
            loss -= lp[t as usize];
            let slot = match rows_buf.iter().position(|(rr, _)| *rr == r) {
                Some(s) => s,
                None => {
                    rows_buf.push((r, vec![0.0; v]));
                    rows_buf.len() - 1
                }
            };
            let g = &mut rows_buf[slot].1;
            for k in 0..v {
                g[k] += lp[k].exp();
            }
            g[t as usize] -= 1.0;
            ctx = t as usize;
        }
        for (r, g) in rows_buf.iter() {
            for k in 0..v {
                grad[r * v + k] += scale * g[k];
            }
            norm_sq += crate::linalg::dot(g, g);
        }
    }
    if model.objective != Objective::GenPrefix {
        let h = model.pooled(tokens);
        let lp = model.head_log_probs(&h);
        loss -= lp[class];
        let off = model.lm.len();
        let v1 = v + 1;
        let hn = crate::linalg::dot(&h, &h);
        for c in 0..N_CLASSES {
            let coef = lp[c].exp() - if c == class { 1.0 } else { 0.0 };
            norm_sq += coef * coef * hn;
            for k in 0..v1 {
                grad[off + c * v1 + k] += scale * coef * h[k];
            }
        }
    }
    (loss, norm_sq.sqrt())
}

/// Mean per-sequence loss and its gradient over the examples in `idx`.
fn batch_loss_grad(model: &ARClassLM, data: &TokenDataset, idx: &[usize], norms: Option<&mut Vec<f64>>) -> (f64, Vec<f64>) {
    let log_probs = model.log_probs();
    let mut grad = vec![0.0; model.n_params()];
    let scale = 1.0 / idx.len() as f64;
    let mut buf = Vec::new();
    let mut loss = 0.0;
    let mut per = Vec::with_capacity(idx.len());
    for &i in idx {
        let (l, nrm) = example_loss_grad(
            model,
            &log_probs,
            data.sequence(i),
            class_index(data.labels[i]),
            scale,
            &mut grad,
            &mut buf,
        );
        loss += l;
        per.push(nrm);
    }
    if let Some(out) = norms {
        *out = per;
    }
    (loss * scale, grad)
}

/// Mean per-sequence training loss and its exact gradient in [`ARClassLM::params`] order.
pub fn loss_and_grad(model: &ARClassLM, data: &TokenDataset) -> (f64, Vec<f64>) {
    let idx: Vec<usize> = (0..data.len()).collect();
    batch_loss_grad(model, data, &idx, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub lr: f64,
    pub epochs: usize,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Epoch whose majority gradient norm normalizes the trace.
    pub norm_epoch: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 2.0,
            epochs: 600,
            batch_size: None,
            seed: 0,
            norm_epoch: 5,
        }
    }
}

/// Head-difference weights for the trace: core, spurious and filler norm.
fn token_weights(model: &ARClassLM) -> (f64, f64, f64) {
    let v = model.v();
    let delta: Vec<f64> = match model.objective {
        Objective::GenPrefix => {
            let lp = model.log_probs();
            (0..v)
                .map(|k| {
                    (0..=v)
                        .map(|ctx| lp[model.row_index(1, ctx) * v + k] - lp[model.row_index(0, ctx) * v + k])
                        .sum::<f64>()
                        / (v + 1) as f64
                })
                .collect()
        }
        _ => (0..v).map(|k| model.head[(v + 1) + k] - model.head[k]).collect(),
    };
    let core = 0.5 * (delta[TokenVocab::CORE_POS as usize] - delta[TokenVocab::CORE_NEG as usize]);
    let spu = 0.5 * (delta[TokenVocab::SPU_POS as usize] - delta[TokenVocab::SPU_NEG as usize]);
    let filler = crate::linalg::norm(&delta[4.min(v)..]);
    (core, spu, filler)
}

/// Gradient descent on the chosen objective.
///
/// The trace holds one record per epoch (1-based), computed on the full
/// training set at the parameters the epoch starts from. Group gradient norms
/// are per-example norms averaged over the majority (spurious agrees) and
/// minority groups, then divided by the majority value at `norm_epoch`.
pub fn train_ar(init: &ARClassLM, data: &TokenDataset, objective: Objective, cfg: &SgdConfig) -> Result<(ARClassLM, TrainTrace)> {
    if init.objective != objective {
        return config_err(format!(
            "initial model is {}, requested objective {}",
            init.objective.tag(),
            objective.tag()
        ));
    }
    if !(cfg.lr >= 0.0) || !cfg.lr.is_finite() {
        return config_err(format!("learning rate must be finite and non-negative, got {}", cfg.lr));
    }
    if cfg.epochs == 0 {
        return config_err("epochs must be at least 1");
    }
    if data.is_empty() {
        return config_err("empty training set");
    }
    for i in 0..data.len() {
        init.check_tokens(data.sequence(i))?;
    }
    let mut model = init.clone();
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let mut rng = rng_for(cfg.seed, &[TAG_AR]);
    let mut trace = TrainTrace::default();
    let mut prev = model.params();
    let mut norms = Vec::new();
    for epoch in 1..=cfg.epochs {
        let all: Vec<usize> = (0..n).collect();
        let (loss, full_grad) = batch_loss_grad(&model, data, &all, Some(&mut norms));
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "{} loss became non-finite at epoch {epoch}",
                objective.tag()
            )));
        }
        let (mut smaj, mut nmaj, mut smin, mut nmin) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..n {
            if data.agreement[i] {
                smaj += norms[i];
                nmaj += 1;
            } else {
                smin += norms[i];
                nmin += 1;
            }
        }
        let (core, spu, filler) = token_weights(&model);
        let params = model.params();
        let undefined = core.abs() < 1e-12;
        trace.records.push(TraceRecord {
            epoch,
            loss,
            grad_norm_majority: if nmaj > 0 { smaj / nmaj as f64 } else { f64::NAN },
            grad_norm_minority: if nmin > 0 { smin / nmin as f64 } else { f64::NAN },
            ratio_spu: if undefined { f64::NAN } else { spu.abs() / core.abs() },
            ratio_noise: if undefined { f64::NAN } else { filler / core.abs() },
            cosine: crate::linalg::cosine(&params, &prev),
        });
        prev = params;
        if batch == n {
            let mut p = model.params();
            crate::linalg::axpy(-cfg.lr, &full_grad, &mut p);
            model.set_params(&p);
        } else {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let (_, g) = batch_loss_grad(&model, data, chunk, None);
                let mut p = model.params();
                crate::linalg::axpy(-cfg.lr, &g, &mut p);
                model.set_params(&p);
            }
        }
        if !model.params().iter().all(|p| p.is_finite()) {
            return Err(Error::Numerical(format!(
                "{} parameters became non-finite after epoch {epoch}",
                objective.tag()
            )));
        }
    }
    trace.normalize_by_majority_at(cfg.norm_epoch);
    Ok((model, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub data: TokenDataConfig,
    pub sgd: SgdConfig,
    pub objectives: Vec<Objective>,
    pub seeds: usize,
    pub base_seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            data: TokenDataConfig::default(),
            sgd: SgdConfig::default(),
            objectives: vec![Objective::GenPrefix, Objective::Disc, Objective::JointSuffix],
            seeds: 10,
            base_seed: 0,
        }
    }
}

/// One trained objective on one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRun {
    pub replicate: usize,
    pub objective: Objective,
    pub report: GroupReport,
    pub trace: TrainTrace,
    pub model: ARClassLM,
}

pub fn ablation_seed(base: u64, replicate: usize) -> u64 {
    derive_seed(base, &[TAG_AR, replicate as u64])
}

/// Trains every objective from zero initialization on each seed's token data
/// and evaluates on the group-balanced test split.
pub fn run_objective_ablation(cfg: &AblationConfig) -> Result<Vec<AblationRun>> {
    if cfg.seeds == 0 || cfg.objectives.is_empty() {
        return config_err("ablation needs at least one seed and one objective");
    }
    let mut out = Vec::new();
    for r in 0..cfg.seeds {
        let seed = ablation_seed(cfg.base_seed, r);
        let (train, test) = generate_tokens(&TokenDataConfig { seed, ..cfg.data.clone() })?;
        let sgd = SgdConfig { seed, ..cfg.sgd.clone() };
        for &objective in &cfg.objectives {
            let init = ARClassLM::new(objective, cfg.data.vocab());
            let (model, trace) = train_ar(&init, &train, objective, &sgd)?;
            let pred = predict_labels(&model, &test)?;
            let report = group_accuracies(&pred, &test.labels, &test.group_id)?;
            out.push(AblationRun {
                replicate: r,
                objective,
                report,
                trace,
                model,
            });
        }
    }
    Ok(out)
}
