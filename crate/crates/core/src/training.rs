//! Adam training of the single-view network and of the multi-view adapters.
//!
//! Each step draws a batch, a uniform timestep `t ∈ [1, T]` and Gaussian
//! noise per sample, noises the clean motion, and regresses the clean motion
//! with mean squared error. Text is replaced by the null embedding with the
//! configured dropout probability. Only trainable parameters are updated.
//!
//! Per-sample randomness is drawn sequentially from the run seed before the
//! batch is evaluated, and gradients are summed over fixed chunks in a fixed
//! order, so results do not depend on the thread count.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::CameraEmbedding;
use crate::data::{TrainingSample2D, TrainingSampleMV};
use crate::denoiser::{Denoiser2D, DenoiserMV, HasParams};
use crate::diffusion::{q_sample, NoiseSchedule};
use crate::error::{ensure, Error, Result};
use crate::nn::{Grads, ParamSet};
use crate::text::TextEncoder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "2d")]
    Single,
    #[serde(rename = "mv")]
    Multi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub text_dropout: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Learning rate 1e-4, batch 128.
    pub fn stage1(epochs: usize, seed: u64) -> Self {
        Self { stage: Stage::Single, lr: 1e-4, batch_size: 128, epochs, text_dropout: 0.1, beta1: 0.9, beta2: 0.999, adam_eps: 1e-8, seed }
    }

    /// Learning rate 1e-4, batch 32.
    pub fn stage2(epochs: usize, seed: u64) -> Self {
        Self { stage: Stage::Multi, batch_size: 32, ..Self::stage1(epochs, seed) }
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.lr.is_finite() && self.lr > 0.0, Invalid, "learning rate must be positive");
        ensure!(self.batch_size >= 1, Invalid, "batch size must be positive");
        ensure!((0.0..1.0).contains(&self.text_dropout), Invalid, "text dropout must be in [0, 1)");
        ensure!((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0, Invalid, "invalid Adam constants");
        Ok(())
    }
}

/// Adam over the trainable entries of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(ps: &ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || ps.entries.iter().map(|e| if e.trainable { vec![0.0; e.value.len()] } else { Vec::new() }).collect();
        Self { lr, beta1, beta2, eps, step: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, ps: &mut ParamSet, g: &Grads) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, e) in ps.entries.iter_mut().enumerate() {
            if !e.trainable {
                continue;
            }
            for (j, p) in e.value.iter_mut().enumerate() {
                let gr = g.data[i][j];
                let m = &mut self.m[i][j];
                let v = &mut self.v[i][j];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gr;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gr * gr;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub phase: String,
    pub loss: f64,
}

/// Per-step batch losses, possibly over several phases.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub points: Vec<LossPoint>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,phase,loss\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.step, p.phase, p.loss);
        }
        s
    }

    pub fn extend(&mut self, other: LossCurve) {
        self.points.extend(other.points);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean sample loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub curve: LossCurve,
}

/// A network that can be trained by [`train_stage`].
pub trait Trainable: HasParams + Sync {
    type Sample: Sync;

    fn stage(&self) -> Stage;
    fn text_encoder(&self) -> TextEncoder;
    fn text_of(sample: &Self::Sample) -> &str;
    fn clean(&self, sample: &Self::Sample) -> Result<Vec<f64>>;
    /// Loss at noisy input `x_t`; adds `scale · gradient` when `grads` is given.
    fn loss(&self, sample: &Self::Sample, x0: &[f64], x_t: &[f64], t: usize, text: &[f64], grads: Option<&mut Grads>, scale: f64) -> Result<f64>;
}

impl Trainable for Denoiser2D {
    type Sample = TrainingSample2D;

    fn stage(&self) -> Stage {
        Stage::Single
    }

    fn text_encoder(&self) -> TextEncoder {
        Denoiser2D::text_encoder(self)
    }

    fn text_of(sample: &TrainingSample2D) -> &str {
        &sample.text
    }

    fn clean(&self, sample: &TrainingSample2D) -> Result<Vec<f64>> {
        ensure!(sample.local.joints == self.config().local_joints, Shape, "sample has {} local joints, network {}", sample.local.joints, self.config().local_joints);
        Ok(sample.local.to_flat())
    }

    fn loss(&self, _: &TrainingSample2D, x0: &[f64], x_t: &[f64], t: usize, text: &[f64], grads: Option<&mut Grads>, scale: f64) -> Result<f64> {
        self.loss_and_grad(x0, x_t, t, text, grads, scale)
    }
}

impl Trainable for DenoiserMV {
    type Sample = TrainingSampleMV;

    fn stage(&self) -> Stage {
        Stage::Multi
    }

    fn text_encoder(&self) -> TextEncoder {
        DenoiserMV::text_encoder(self)
    }

    fn text_of(sample: &TrainingSampleMV) -> &str {
        &sample.text
    }

    fn clean(&self, sample: &TrainingSampleMV) -> Result<Vec<f64>> {
        ensure!(sample.motion.joints == self.config().local_joints, Shape, "sample has {} local joints, network {}", sample.motion.joints, self.config().local_joints);
        Ok(sample.motion.to_state())
    }

    fn loss(&self, sample: &TrainingSampleMV, x0: &[f64], x_t: &[f64], t: usize, text: &[f64], grads: Option<&mut Grads>, scale: f64) -> Result<f64> {
        let cams: &CameraEmbedding = &sample.cams;
        self.loss_and_grad(x0, x_t, t, text, cams, grads, scale)
    }
}

/// Fixed number of gradient partial sums per batch, independent of threads.
const GRAD_CHUNKS: usize = 8;

struct Draw {
    index: usize,
    t: usize,
    drop_text: bool,
    noise_seed: u64,
}

fn batch_loss<M: Trainable>(model: &M, data: &[M::Sample], texts: &HashMap<&str, Vec<f64>>, null: &[f64], draws: &[Draw], sched: &NoiseSchedule) -> Result<(f64, Grads)> {
    let scale = 1.0 / draws.len() as f64;
    let chunk = draws.len().div_ceil(GRAD_CHUNKS);
    let parts = crate::par::try_map(&draws.chunks(chunk).collect::<Vec<_>>(), |part| {
        let mut g = model.param_set().zero_grads();
        let mut loss = 0.0;
        for d in *part {
            let sample = &data[d.index];
            let x0 = model.clean(sample)?;
            let mut rng = ChaCha8Rng::seed_from_u64(d.noise_seed);
            let eps: Vec<f64> = (0..x0.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x_t = q_sample(&x0, d.t, &eps, sched)?;
            let text = if d.drop_text { null } else { &texts[M::text_of(sample)] };
            loss += model.loss(sample, &x0, &x_t, d.t, text, Some(&mut g), scale)?;
        }
        Ok::<_, Error>((loss, g))
    })?;
    let mut iter = parts.into_iter();
    let (mut loss, mut grads) = iter.next().expect("batch is nonempty");
    for (l, g) in iter {
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss * scale, grads))
}

/// Trains `model` in place. Returns per-epoch mean losses and the per-step
/// loss curve labelled with `phase`.
pub fn train_stage<M: Trainable>(model: &mut M, data: &[M::Sample], sched: &NoiseSchedule, cfg: &TrainConfig, phase: &str) -> Result<TrainReport> {
    cfg.validate()?;
    ensure!(!data.is_empty(), Invalid, "training set is empty");
    ensure!(cfg.stage == model.stage(), Invalid, "config is for stage {:?}, network is {:?}", cfg.stage, model.stage());
    let encoder = model.text_encoder();
    let mut texts: HashMap<&str, Vec<f64>> = HashMap::new();
    for s in data {
        let t = M::text_of(s);
        texts.entry(t).or_insert_with(|| encoder.encode(t).pooled());
    }
    let null = encoder.null().pooled();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.param_set(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let draws: Vec<Draw> = batch
                .iter()
                .map(|&index| Draw {
                    index,
                    t: rng.random_range(1..=sched.steps()),
                    drop_text: rng.random_bool(cfg.text_dropout),
                    noise_seed: rng.random(),
                })
                .collect();
            let (loss, grads) = batch_loss(&*model, data, &texts, &null, &draws, sched)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch, batch: b });
            }
            adam.step(model.param_set_mut(), &grads);
            total += loss * batch.len() as f64;
            report.curve.points.push(LossPoint { step, phase: phase.to_string(), loss });
            step += 1;
        }
        report.epoch_losses.push(total / data.len() as f64);
    }
    Ok(report)
}

/// Two-phase single-view pretraining: `synthetic` alone at `first.lr`, then
/// `synthetic ∪ mixed` at `second.lr`. An empty `mixed` skips phase two.
pub fn lr_staged_pretrain(
    model: &mut Denoiser2D,
    synthetic: &[TrainingSample2D],
    mixed: &[TrainingSample2D],
    sched: &NoiseSchedule,
    first: &TrainConfig,
    second: &TrainConfig,
) -> Result<TrainReport> {
    let mut report = train_stage(model, synthetic, sched, first, "synthetic")?;
    if mixed.is_empty() {
        return Ok(report);
    }
    let all: Vec<TrainingSample2D> = synthetic.iter().chain(mixed).cloned().collect();
    let offset = report.curve.points.len();
    let mut r2 = train_stage(model, &all, sched, second, "mixed")?;
    r2.curve.points.iter_mut().for_each(|p| p.step += offset);
    report.epoch_losses.extend(r2.epoch_losses);
    report.curve.extend(r2.curve);
    Ok(report)
}
