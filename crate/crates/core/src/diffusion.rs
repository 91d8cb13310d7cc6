//! Conditional continuous diffusion over concatenated sentence
//! representations. Document rows condition the process and are never
//! noised after the initial transition; summary rows are diffused and
//! regenerated. The denoiser predicts the clean representation `x₀`.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::layers::{gaussian, row_mask_matrix, standard_normal, Dropout, Linear, StackShape, TransformerStack};
use crate::tensor::Matrix;

const SQRT_SCHEDULE_OFFSET: f64 = 1e-4;
const BETA_MIN: f64 = 1e-5;
const BETA_MAX: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Sqrt,
    Linear,
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(Self::Sqrt),
            "linear" => Ok(Self::Linear),
            other => Err(Error::Config(format!(
                "unknown schedule kind {other:?} (expected sqrt or linear)"
            ))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sqrt => "sqrt",
            Self::Linear => "linear",
        })
    }
}

/// β₁..β_T with the cumulative quantities derived from them. Step indices
/// passed to accessors are 1-based; `alpha_bar(0)` is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_variance: Vec<f64>,
    beta_0: f64,
}

impl NoiseSchedule {
    pub fn make(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("diffusion steps must be at least 1".into()));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Sqrt => {
                let abar = |u: f64| 1.0 - (u + SQRT_SCHEDULE_OFFSET).sqrt();
                (1..=steps)
                    .map(|t| {
                        let ratio = abar(t as f64 / steps as f64) / abar((t - 1) as f64 / steps as f64);
                        (1.0 - ratio).clamp(BETA_MIN, BETA_MAX)
                    })
                    .collect()
            }
            ScheduleKind::Linear => {
                let (lo, hi) = (1e-4, 0.02);
                if steps == 1 {
                    vec![lo]
                } else {
                    (0..steps)
                        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
                        .collect()
                }
            }
        };
        let beta_0 = betas[0];
        Self::from_betas(betas, beta_0)
    }

    /// Arbitrary schedule; zero betas are allowed so tests can build
    /// noiseless processes.
    pub fn from_betas(betas: Vec<f64>, beta_0: f64) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if betas
            .iter()
            .chain(std::iter::once(&beta_0))
            .any(|b| !(0.0..1.0).contains(b))
        {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        let posterior_variance = (1..=betas.len())
            .map(|t| {
                let prev = if t == 1 { 1.0 } else { alpha_bars[t - 2] };
                let denom = 1.0 - alpha_bars[t - 1];
                if denom == 0.0 {
                    0.0
                } else {
                    betas[t - 1] * (1.0 - prev) / denom
                }
            })
            .collect();
        Ok(Self {
            betas,
            alpha_bars,
            posterior_variance,
            beta_0,
        })
    }

    /// Same forward process, but every reverse step is deterministic.
    pub fn without_posterior_noise(mut self) -> Self {
        self.posterior_variance.iter_mut().for_each(|v| *v = 0.0);
        self
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn beta_0(&self) -> f64 {
        self.beta_0
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.posterior_variance[t - 1]
    }

    pub fn has_posterior_noise(&self) -> bool {
        self.posterior_variance.iter().any(|&v| v > 0.0)
    }

    /// Coefficients `(c_x0, c_xt)` of the posterior mean
    /// `μ = c_x0·x̂₀ + c_xt·x_t` for step `t`.
    pub fn posterior_mean_coefs(&self, t: usize) -> (f64, f64) {
        let denom = 1.0 - self.alpha_bar(t);
        if denom == 0.0 {
            return (1.0, 0.0);
        }
        let prev = self.alpha_bar(t - 1);
        (
            prev.sqrt() * self.beta(t) / denom,
            self.alpha(t).sqrt() * (1.0 - prev) / denom,
        )
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::invalid(format!(
                "diffusion step {t} outside [1, {}]",
                self.steps()
            )))
        } else {
            Ok(())
        }
    }
}

/// `x₀ = H_in + sqrt(β₀)·ε` on every row.
pub fn initial_transition(h_in: &Matrix, schedule: &NoiseSchedule, rng: &mut ChaCha8Rng) -> Matrix {
    let eps = standard_normal(rng, h_in.rows(), h_in.cols());
    let s = schedule.beta_0().sqrt();
    h_in.zip_map(&eps, |h, e| h + s * e)
}

/// Samples `x_t ~ q(x_t | x₀)` for the summary rows (rows `n_doc..`); document
/// rows are copied unchanged.
pub fn forward_noise(
    x0: &Matrix,
    n_doc: usize,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    schedule.check_step(t)?;
    let ab = schedule.alpha_bar(t);
    Ok(noise_summary_rows(x0, n_doc, ab.sqrt(), (1.0 - ab).sqrt(), rng))
}

/// One step of the partial-noising chain: `x_t^s ~ N(sqrt(1−β_t)·x_{t−1}^s, β_t·I)`.
pub fn forward_step(
    x_prev: &Matrix,
    n_doc: usize,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    schedule.check_step(t)?;
    let b = schedule.beta(t);
    Ok(noise_summary_rows(x_prev, n_doc, (1.0 - b).sqrt(), b.sqrt(), rng))
}

fn noise_summary_rows(x: &Matrix, n_doc: usize, keep: f64, noise: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let mut out = x.clone();
    let m = x.rows() - n_doc;
    let eps = standard_normal(rng, m, x.cols());
    for j in 0..m {
        for (o, e) in out.row_mut(n_doc + j).iter_mut().zip(eps.row(j)) {
            *o = keep * *o + noise * e;
        }
    }
    out
}

/// Predicts `x₀` for every row of a partially noised sequence.
pub trait Denoiser {
    fn predict_x0(&self, x_t: &Matrix, t: usize, n_doc: usize) -> Result<Matrix>;
}

/// Sinusoidal embedding of a diffusion step.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_width: usize,
    pub ffn_width: usize,
    pub io_dim: usize,
    pub time_dim: usize,
    pub dropout: f64,
    pub max_positions: usize,
    pub init_std: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            layers: 12,
            heads: 12,
            model_width: 768,
            ffn_width: 4 * 768,
            io_dim: 128,
            time_dim: 128,
            dropout: 0.1,
            max_positions: 512,
            init_std: 0.02,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.model_width.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "denoiser width {} is not divisible by {} heads",
                self.model_width, self.heads
            )));
        }
        if self.io_dim == 0 || self.time_dim < 2 || self.max_positions == 0 {
            return Err(Error::Config(
                "denoiser dimensions must be positive (time_dim >= 2)".into(),
            ));
        }
        Ok(())
    }
}

/// Row layout of a padded batch of `document ‖ summary` sequences. Sequence
/// `b` occupies rows `b·L .. (b+1)·L` with `L = doc_len + sum_len`; its
/// document rows start at offset 0 and its summary rows at `doc_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqLayout {
    pub doc_len: usize,
    pub sum_len: usize,
    pub docs: Vec<usize>,
    pub sums: Vec<usize>,
}

impl SeqLayout {
    pub fn new(docs: Vec<usize>, sums: Vec<usize>) -> Self {
        assert_eq!(docs.len(), sums.len());
        Self {
            doc_len: docs.iter().copied().max().unwrap_or(0),
            sum_len: sums.iter().copied().max().unwrap_or(0),
            docs,
            sums,
        }
    }

    pub fn single(n: usize, m: usize) -> Self {
        Self::new(vec![n], vec![m])
    }

    pub fn batch(&self) -> usize {
        self.docs.len()
    }

    pub fn seq_len(&self) -> usize {
        self.doc_len + self.sum_len
    }

    pub fn rows(&self) -> usize {
        self.batch() * self.seq_len()
    }

    pub fn doc_row(&self, b: usize, i: usize) -> usize {
        b * self.seq_len() + i
    }

    pub fn sum_row(&self, b: usize, j: usize) -> usize {
        b * self.seq_len() + self.doc_len + j
    }

    pub fn row_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.rows()];
        for b in 0..self.batch() {
            (0..self.docs[b]).for_each(|i| mask[self.doc_row(b, i)] = true);
            (0..self.sums[b]).for_each(|j| mask[self.sum_row(b, j)] = true);
        }
        mask
    }

    /// True for summary-side rows (including their padding).
    pub fn is_summary_row(&self, r: usize) -> bool {
        r % self.seq_len() >= self.doc_len
    }

    pub fn real_rows(&self) -> usize {
        self.docs.iter().sum::<usize>() + self.sums.iter().sum::<usize>()
    }
}

/// Transformer `f̃_θ(x_t, t)` predicting `x₀` for every row.
#[derive(Debug, Clone)]
pub struct DenoiserNet {
    pub config: DenoiserConfig,
    lift: Linear,
    positions: ParamId,
    segments: ParamId,
    time: Linear,
    stack: TransformerStack,
    out: Linear,
}

impl DenoiserNet {
    pub fn new(store: &mut ParamStore, config: DenoiserConfig, rng: &mut ChaCha8Rng) -> Self {
        let std = config.init_std;
        let w = config.model_width;
        Self {
            config,
            lift: Linear::new(store, "denoiser.lift", config.io_dim, w, std, rng),
            positions: store.add("denoiser.positions", gaussian(rng, config.max_positions, w, std)),
            segments: store.add("denoiser.segments", gaussian(rng, 2, w, std)),
            time: Linear::new(store, "denoiser.time", config.time_dim, w, std, rng),
            stack: TransformerStack::new(
                store,
                "denoiser",
                StackShape {
                    layers: config.layers,
                    heads: config.heads,
                    width: w,
                    ffn_width: config.ffn_width,
                },
                std,
                rng,
            ),
            out: Linear::new(store, "denoiser.out", w, config.io_dim, std, rng),
        }
    }

    /// `x` is laid out per `layout`; `steps[b]` is the diffusion step of
    /// sequence `b`. Padded rows come back as zeros.
    pub fn forward(&self, g: &mut Graph, x: Var, layout: &SeqLayout, steps: &[usize], dropout: &mut Dropout) -> Var {
        assert_eq!(steps.len(), layout.batch());
        let seq_len = layout.seq_len();
        let rows = layout.rows();
        let mask = layout.row_mask();
        let mut h = self.lift.forward(g, x);

        let pos_idx: Vec<usize> = (0..rows)
            .map(|r| {
                let off = r % seq_len;
                if off < layout.doc_len {
                    off
                } else {
                    off - layout.doc_len
                }
            })
            .collect();
        let table = g.param(self.positions);
        let pos = g.gather_rows(table, pos_idx);
        h = g.add(h, pos);

        let seg_idx: Vec<usize> = (0..rows).map(|r| usize::from(layout.is_summary_row(r))).collect();
        let seg_table = g.param(self.segments);
        let seg = g.gather_rows(seg_table, seg_idx);
        h = g.add(h, seg);

        let td = self.config.time_dim;
        let mut temb = Matrix::zeros(rows, td);
        for (b, &t) in steps.iter().enumerate() {
            let e = timestep_embedding(t, td);
            for r in b * seq_len..(b + 1) * seq_len {
                temb.row_mut(r).copy_from_slice(&e);
            }
        }
        let temb = g.constant(temb);
        let temb = self.time.forward(g, temb);
        h = g.add(h, temb);

        let h = dropout.apply(g, h);
        let h = self.stack.forward(g, h, seq_len, &mask, dropout);
        let y = self.out.forward(g, h);
        g.mul_const(y, row_mask_matrix(&mask, self.config.io_dim))
    }

    pub fn bind<'a>(&'a self, store: &'a ParamStore) -> BoundDenoiser<'a> {
        BoundDenoiser { net: self, store }
    }
}

/// Evaluation-mode denoiser over a fixed parameter store.
pub struct BoundDenoiser<'a> {
    net: &'a DenoiserNet,
    store: &'a ParamStore,
}

impl Denoiser for BoundDenoiser<'_> {
    fn predict_x0(&self, x_t: &Matrix, t: usize, n_doc: usize) -> Result<Matrix> {
        if !x_t.is_finite() {
            return Err(Error::NonFinite("denoiser input".into()));
        }
        if x_t.cols() != self.net.config.io_dim || n_doc > x_t.rows() {
            return Err(Error::invalid("denoiser input shape mismatch"));
        }
        let m = x_t.rows() - n_doc;
        if n_doc.max(m) > self.net.config.max_positions {
            return Err(Error::invalid("sequence exceeds denoiser max_positions"));
        }
        let layout = SeqLayout::single(n_doc, m);
        let mut g = Graph::new(self.store);
        let x = g.constant(x_t.clone());
        let y = self.net.forward(&mut g, x, &layout, &[t], &mut Dropout::eval());
        Ok(g.value(y).clone())
    }
}

/// One reverse step `x_t → x_{t−1}`. Summary rows move to the posterior mean
/// around the predicted `x̂₀` (plus `sqrt(β̃_t)·ε` for `t > 1`); document
/// rows are reset to `x0_doc`.
pub fn reverse_step(
    denoiser: &dyn Denoiser,
    x_t: &Matrix,
    t: usize,
    x0_doc: &Matrix,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    schedule.check_step(t)?;
    let n = x0_doc.rows();
    let x0_hat = denoiser.predict_x0(x_t, t, n)?;
    if x0_hat.shape() != x_t.shape() {
        return Err(Error::invalid("denoiser output shape mismatch"));
    }
    let (c0, ct) = schedule.posterior_mean_coefs(t);
    let m = x_t.rows() - n;
    let var = schedule.posterior_variance(t);
    let eps = if t > 1 && var > 0.0 {
        Some(standard_normal(rng, m, x_t.cols()))
    } else {
        None
    };
    let sd = var.sqrt();
    let mut out = x_t.clone();
    for i in 0..n {
        out.row_mut(i).copy_from_slice(x0_doc.row(i));
    }
    for j in 0..m {
        let r = n + j;
        for c in 0..x_t.cols() {
            let mut v = c0 * x0_hat[(r, c)] + ct * x_t[(r, c)];
            if let Some(e) = &eps {
                v += sd * e[(j, c)];
            }
            out[(r, c)] = v;
        }
    }
    Ok(out)
}

/// Generates `m` summary rows conditioned on the (transitioned) document rows
/// by running the reverse chain from pure noise.
pub fn sample(
    denoiser: &dyn Denoiser,
    doc_x0: &Matrix,
    m: usize,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    if m == 0 {
        return Err(Error::invalid("sample needs m >= 1"));
    }
    let noise = standard_normal(rng, m, doc_x0.cols());
    let mut x = Matrix::vstack(&[doc_x0, &noise]);
    for t in (1..=schedule.steps()).rev() {
        x = reverse_step(denoiser, &x, t, doc_x0, schedule, rng)?;
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("reverse step {t}")));
        }
    }
    Ok(x.slice_rows(doc_x0.rows(), m))
}

/// Pre-drawn randomness for one diffusion-loss evaluation.
#[derive(Debug, Clone)]
pub struct DiffusionNoise {
    /// Initial-transition noise, all rows.
    pub eps_init: Matrix,
    /// Step sampled uniformly from `2..=T` per sequence (`None` when `T < 2`).
    pub steps: Option<Vec<usize>>,
    pub eps_t: Matrix,
    pub eps_1: Matrix,
}

impl DiffusionNoise {
    pub fn draw(layout: &SeqLayout, dim: usize, schedule: &NoiseSchedule, rng: &mut ChaCha8Rng) -> Self {
        use rand::Rng;
        let rows = layout.rows();
        let eps_init = standard_normal(rng, rows, dim);
        let steps = (schedule.steps() >= 2).then(|| {
            (0..layout.batch())
                .map(|_| rng.random_range(2..=schedule.steps()))
                .collect()
        });
        let eps_t = standard_normal(rng, rows, dim);
        let eps_1 = standard_normal(rng, rows, dim);
        Self {
            eps_init,
            steps,
            eps_t,
            eps_1,
        }
    }
}

pub struct DiffusionTerms {
    pub x0: Var,
    pub term_t: Var,
    pub term_1: Var,
    pub reg: Var,
    pub total: Var,
}

/// Builds `(coef, additive)` so that `x_t = coef ⊙ x₀ + additive` matches
/// the closed-form forward marginal at the per-sequence steps.
fn forward_affine(
    layout: &SeqLayout,
    dim: usize,
    steps: &[usize],
    schedule: &NoiseSchedule,
    eps: &Matrix,
) -> (Matrix, Matrix) {
    let mut coef = Matrix::zeros(layout.rows(), dim);
    let mut add = Matrix::zeros(layout.rows(), dim);
    for (b, &t) in steps.iter().enumerate() {
        for i in 0..layout.docs[b] {
            coef.row_mut(layout.doc_row(b, i)).fill(1.0);
        }
        let ab = schedule.alpha_bar(t);
        let (keep, sd) = (ab.sqrt(), (1.0 - ab).sqrt());
        for j in 0..layout.sums[b] {
            let r = layout.sum_row(b, j);
            coef.row_mut(r).fill(keep);
            for (a, e) in add.row_mut(r).iter_mut().zip(eps.row(r)) {
                *a = sd * e;
            }
        }
    }
    (coef, add)
}

/// Stochastic estimate of the diffusion loss:
/// `mean‖x₀ − f̃(x_t, t)‖² + mean‖H_in − f̃(x₁, 1)‖² + λ·mean‖x₀‖²`, each mean
/// taken over the real (unpadded) elements.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_loss_graph(
    g: &mut Graph,
    net: &DenoiserNet,
    h_in: Var,
    layout: &SeqLayout,
    schedule: &NoiseSchedule,
    noise: &DiffusionNoise,
    lambda_reg: f64,
    dropout: &mut Dropout,
) -> DiffusionTerms {
    let dim = g.value(h_in).cols();
    let mask = row_mask_matrix(&layout.row_mask(), dim);
    let count = (layout.real_rows() * dim) as f64;

    let init = noise
        .eps_init
        .zip_map(&mask, |e, k| e * k)
        .scale(schedule.beta_0().sqrt());
    let x0 = g.add_const(h_in, init);

    let term_t = match &noise.steps {
        Some(steps) => {
            let (coef, add) = forward_affine(layout, dim, steps, schedule, &noise.eps_t);
            let xt = g.mul_const(x0, coef);
            let xt = g.add_const(xt, add);
            let pred = net.forward(g, xt, layout, steps, dropout);
            let diff = g.sub(x0, pred);
            let diff = g.mul_const(diff, mask.clone());
            let ss = g.sum_squares(diff);
            g.scale(ss, 1.0 / count)
        }
        None => g.constant(Matrix::scalar(0.0)),
    };

    let ones = vec![1; layout.batch()];
    let (coef, add) = forward_affine(layout, dim, &ones, schedule, &noise.eps_1);
    let x1 = g.mul_const(x0, coef);
    let x1 = g.add_const(x1, add);
    let pred1 = net.forward(g, x1, layout, &ones, dropout);
    let diff1 = g.sub(h_in, pred1);
    let diff1 = g.mul_const(diff1, mask.clone());
    let ss1 = g.sum_squares(diff1);
    let term_1 = g.scale(ss1, 1.0 / count);

    let x0m = g.mul_const(x0, mask);
    let sq = g.sum_squares(x0m);
    let reg = g.scale(sq, lambda_reg / count);

    let partial = g.add(term_t, term_1);
    let total = g.add(partial, reg);
    DiffusionTerms {
        x0,
        term_t,
        term_1,
        reg,
        total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionLossValue {
    pub term_t: f64,
    pub term_1: f64,
    pub reg: f64,
}

impl DiffusionLossValue {
    pub fn total(&self) -> f64 {
        self.term_t + self.term_1 + self.reg
    }
}

/// Value-only diffusion loss for one sequence with any [`Denoiser`].
pub fn diffusion_loss(
    denoiser: &dyn Denoiser,
    h_in: &Matrix,
    n_doc: usize,
    schedule: &NoiseSchedule,
    noise: &DiffusionNoise,
    lambda_reg: f64,
) -> Result<DiffusionLossValue> {
    let layout = SeqLayout::single(n_doc, h_in.rows() - n_doc);
    let dim = h_in.cols();
    let count = h_in.len() as f64;
    let s0 = schedule.beta_0().sqrt();
    let x0 = h_in.zip_map(&noise.eps_init, |h, e| h + s0 * e);
    let term_t = match &noise.steps {
        Some(steps) => {
            let (coef, add) = forward_affine(&layout, dim, steps, schedule, &noise.eps_t);
            let xt = x0.zip_map(&coef, |x, c| x * c).zip_map(&add, |x, a| x + a);
            let pred = denoiser.predict_x0(&xt, steps[0], n_doc)?;
            x0.zip_map(&pred, |a, b| a - b).sum_squares() / count
        }
        None => 0.0,
    };
    let (coef, add) = forward_affine(&layout, dim, &[1], schedule, &noise.eps_1);
    let x1 = x0.zip_map(&coef, |x, c| x * c).zip_map(&add, |x, a| x + a);
    let pred1 = denoiser.predict_x0(&x1, 1, n_doc)?;
    let term_1 = h_in.zip_map(&pred1, |a, b| a - b).sum_squares() / count;
    let reg = lambda_reg * x0.sum_squares() / count;
    Ok(DiffusionLossValue { term_t, term_1, reg })
}
