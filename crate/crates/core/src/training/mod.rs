//! Losses, reverse-mode gradients, Adam and the training epoch.

pub mod backward;
pub mod model;
pub mod proximal;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, DripError, Result};
use crate::linalg::{all_finite, norm, sub};
use crate::operators::{add_noise, LinearMap, NoiseSpec, Operator};
use crate::seeding::derive_seed;
use crate::solvers::CglsConfig;

pub use backward::{backward_gradients, evaluate_loss, GradientOutcome, Instance};
pub use model::{ModelBundle, ModelConfig, ModelGrad, ModelKind, NamedTensor, Reconstruction};
pub use proximal::{default_step, proximal_baseline_apply, ProxBlock, ProxBlockGrad, ProxNet, PROX_BLOCKS};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Learning rate multiplier applied every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_range: (f64, f64),
    pub loss_alpha: f64,
    pub loss_beta: f64,
    pub seed: u64,
    /// Inner data-fit budget for forward and implicit backward solves.
    pub cgls: CglsConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay_factor: 0.8,
            decay_every: 20,
            weight_decay: 1e-4,
            epochs: 60,
            batch_size: 16,
            noise_range: (0.05, 0.10),
            loss_alpha: 1.0,
            loss_beta: 0.1,
            seed: 0,
            cgls: CglsConfig::training(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.noise_range;
        let ok = self.learning_rate > 0.0
            && self.decay_factor > 0.0
            && self.decay_every > 0
            && self.weight_decay >= 0.0
            && self.epochs > 0
            && self.batch_size > 0
            && lo >= 0.0
            && lo <= hi
            && self.loss_alpha >= 0.0
            && self.loss_beta >= 0.0;
        if !ok {
            return Err(DripError::precondition(format!("invalid training config: {self:?}")));
        }
        Ok(())
    }

    pub fn effective_learning_rate(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub total: f64,
    pub error: f64,
    pub residual: f64,
    pub sim: f64,
}

impl Losses {
    fn accumulate(&mut self, other: &Losses) {
        self.total += other.total;
        self.error += other.error;
        self.residual += other.residual;
        self.sim += other.sim;
    }

    fn scaled(&self, f: f64) -> Losses {
        Losses { total: self.total * f, error: self.error * f, residual: self.residual * f, sim: self.sim * f }
    }
}

/// Per-sample training losses.
pub fn compute_losses(
    u_star: &[f64],
    u_true: &[f64],
    u_ref: &[f64],
    a: &LinearMap,
    r_s: &[f64],
    cfg: &TrainConfig,
) -> Result<Losses> {
    ensure_len("u_star", u_star.len(), a.cols())?;
    ensure_len("u_true", u_true.len(), a.cols())?;
    ensure_len("u_ref", u_ref.len(), a.cols())?;
    let diff = sub(u_star, u_true);
    let error = norm(&diff).powi(2);
    let residual = norm(&a.apply_vec(&diff)).powi(2) + norm(r_s).powi(2);
    let sim = norm(&sub(u_star, u_ref)).powi(2);
    Ok(Losses { total: error + cfg.loss_alpha * residual + cfg.loss_beta * sim, error, residual, sim })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// Bias-corrected Adam with decoupled weight decay and the step schedule.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<()> {
    ensure_len("gradient", grads.len(), params.len())?;
    ensure_len("first moment", state.m.len(), params.len())?;
    ensure_len("second moment", state.v.len(), params.len())?;
    if !all_finite(grads) {
        return Err(DripError::numerical("adam_step", state.step as usize + 1, "non-finite gradient"));
    }
    let lr = cfg.effective_learning_rate(epoch);
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] = params[i] * decay - lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub losses: Losses,
    /// Mean `‖Au − b‖/‖b‖`.
    pub residual: f64,
    /// Mean `‖u − u_true‖/‖u_true‖`.
    pub error: f64,
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Noisy data for sample `index` of `epoch`; level drawn from `noise_range`.
pub fn training_data(a: &LinearMap, u: &[f64], cfg: &TrainConfig, epoch: usize, index: usize) -> Result<Vec<f64>> {
    let seed = derive_seed(cfg.seed, &[epoch as u64, index as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = cfg.noise_range;
    let level = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let clean = a.apply(u)?;
    if norm(&clean) == 0.0 {
        return Ok(clean);
    }
    let spec = NoiseSpec { relative_level: level, seed: rng.random() };
    Ok(add_noise(&clean, &spec)?.0)
}

struct SampleResult {
    losses: Losses,
    gradient: Vec<f64>,
    residual: f64,
    error: f64,
}

/// One pass over the shuffled dataset with a batched Adam update.
pub fn train_epoch(
    model: &mut ModelBundle,
    adam: &mut AdamState,
    dataset: &[Vec<f64>],
    a: &LinearMap,
    e: &LinearMap,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochMetrics> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(DripError::precondition("empty training set"));
    }
    ensure_len("optimizer state", adam.m.len(), model.num_params())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64, u64::MAX])));

    let mut totals = EpochMetrics { epoch, ..Default::default() };
    for batch in order.chunks(cfg.batch_size) {
        let frozen: &ModelBundle = model;
        let results: Vec<Result<SampleResult>> = batch
            .par_iter()
            .map(|&j| {
                let u_true = &dataset[j];
                let b = training_data(a, u_true, cfg, epoch, j)?;
                let inst = Instance { a, e, b: &b, u_true };
                let out = backward_gradients(frozen, &inst, cfg)?;
                let fit = a.apply_vec(&out.u_star);
                Ok(SampleResult {
                    losses: out.losses,
                    gradient: out.gradient,
                    residual: relative(norm(&sub(&fit, &b)), norm(&b)),
                    error: relative(norm(&sub(&out.u_star, u_true)), norm(u_true)),
                })
            })
            .collect();
        let mut grad = vec![0.0; adam.m.len()];
        for (res, &j) in results.into_iter().zip(batch) {
            let r = res.map_err(|err| DripError::Numerical {
                stage: "train_epoch",
                iteration: j,
                detail: err.to_string(),
            })?;
            for (g, v) in grad.iter_mut().zip(&r.gradient) {
                *g += v;
            }
            totals.losses.accumulate(&r.losses);
            totals.residual += r.residual;
            totals.error += r.error;
        }
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        let mut params = model.flatten();
        adam_step(&mut params, &grad, adam, cfg, epoch)?;
        model.unflatten(&params)?;
    }
    let inv = 1.0 / dataset.len() as f64;
    totals.losses = totals.losses.scaled(inv);
    totals.residual *= inv;
    totals.error *= inv;
    Ok(totals)
}

/// Runs `cfg.epochs` epochs, reporting each epoch to `on_epoch`.
pub fn train(
    model: &mut ModelBundle,
    dataset: &[Vec<f64>],
    a: &LinearMap,
    e: &LinearMap,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    let mut adam = AdamState::new(model.num_params());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let m = train_epoch(model, &mut adam, dataset, a, e, cfg, epoch)?;
        on_epoch(&m);
        history.push(m);
    }
    Ok(history)
}
