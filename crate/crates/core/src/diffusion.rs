//! Denoising diffusion: cosine noise schedule, forward noising, and ancestral
//! sampling with a clean-sample (x̂0) predicting network and
//! classifier-free guidance.

use std::ops::RangeInclusive;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

/// `ᾱ_t = f(t/T) / f(0)` with `f(u) = cos²(((u + s)/(1 + s))·π/2)`; per-step
/// betas are clipped to 0.999 and `ᾱ` is the running product of `1 - β`.
pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    ensure!(steps >= 1, Invalid, "schedule needs at least one step");
    let f = |u: f64| (((u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)) * std::f64::consts::FRAC_PI_2).cos().powi(2);
    let f0 = f(0.0);
    let raw: Vec<f64> = (0..=steps).map(|t| f(t as f64 / steps as f64) / f0).collect();
    let mut betas = vec![0.0];
    let mut alpha_bar = vec![1.0];
    for t in 1..=steps {
        let beta = (1.0 - raw[t] / raw[t - 1]).min(MAX_BETA);
        betas.push(beta);
        alpha_bar.push(alpha_bar[t - 1] * (1.0 - beta));
    }
    Ok(NoiseSchedule { kind, betas, alpha_bar })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    /// Coefficients `(c_x0, c_xt, variance)` of the Gaussian posterior
    /// `q(x_{t-1} | x_t, x0)` for `t ≥ 1`.
    pub fn posterior(&self, t: usize) -> (f64, f64, f64) {
        let ab = self.alpha_bar[t];
        let ab_prev = self.alpha_bar[t - 1];
        let beta = self.betas[t];
        let c_x0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let c_xt = (1.0 - beta).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let var = beta * (1.0 - ab_prev) / (1.0 - ab);
        (c_x0, c_xt, var)
    }
}

/// `x_t = √ᾱ_t·x0 + √(1-ᾱ_t)·eps`.
pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    ensure!(x0.len() == eps.len(), Shape, "x0 has {} values, eps {}", x0.len(), eps.len());
    ensure!(t <= sched.steps(), Invalid, "step {t} outside 0..={}", sched.steps());
    if t == 0 {
        return Ok(x0.to_vec());
    }
    let a = sched.alpha_bar(t).sqrt();
    let s = (1.0 - sched.alpha_bar(t)).sqrt();
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + s * e).collect())
}

/// Which conditioning a denoiser call should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guidance {
    Conditional,
    Unconditional,
}

/// A network predicting the clean sample from a noisy one.
pub trait Denoise {
    fn predict_x0(&self, x_t: &[f64], t: usize, guidance: Guidance) -> Result<Vec<f64>>;
}

impl<F> Denoise for F
where
    F: Fn(&[f64], usize, Guidance) -> Result<Vec<f64>>,
{
    fn predict_x0(&self, x_t: &[f64], t: usize, guidance: Guidance) -> Result<Vec<f64>> {
        self(x_t, t, guidance)
    }
}

/// Replaces the guided x̂0 by a projection of it while `t` is in `steps`.
pub struct ConsistencyHook<'a> {
    pub steps: RangeInclusive<usize>,
    pub project: &'a (dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerOptions {
    pub guidance_scale: f64,
    pub seed: u64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self { guidance_scale: 2.5, seed: 0 }
    }
}

/// Ancestral sampling from `x_T ~ N(0, I)` down to `x_0`.
///
/// At each step the guided prediction is `u + s·(c - u)`; with `s = 1` only
/// the conditional branch is evaluated and with `s = 0` only the
/// unconditional one. The final step returns the guided x̂0 itself (the
/// posterior mean at `t = 1` since `ᾱ_0 = 1`). `observer` sees the x̂0 used at
/// every step, after the consistency hook.
pub fn sample_loop<D: Denoise + ?Sized>(
    denoiser: &D,
    len: usize,
    sched: &NoiseSchedule,
    opts: SamplerOptions,
    hook: Option<&ConsistencyHook<'_>>,
    mut observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<Vec<f64>> {
    let s = opts.guidance_scale;
    ensure!(s.is_finite() && s >= 0.0, Invalid, "guidance scale must be nonnegative, got {s}");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();

    for t in (1..=sched.steps()).rev() {
        let mut x0 = if s == 1.0 {
            checked(denoiser.predict_x0(&x, t, Guidance::Conditional)?, len, t, "conditional")?
        } else if s == 0.0 {
            checked(denoiser.predict_x0(&x, t, Guidance::Unconditional)?, len, t, "unconditional")?
        } else {
            let c = checked(denoiser.predict_x0(&x, t, Guidance::Conditional)?, len, t, "conditional")?;
            let u = checked(denoiser.predict_x0(&x, t, Guidance::Unconditional)?, len, t, "unconditional")?;
            u.iter().zip(&c).map(|(u, c)| u + s * (c - u)).collect()
        };
        if let Some(h) = hook.filter(|h| h.steps.contains(&t)) {
            x0 = checked((h.project)(&x0)?, len, t, "consistency projection")?;
        }
        if let Some(obs) = observer.as_mut() {
            obs(t, &x0);
        }
        if t == 1 {
            return Ok(x0);
        }
        let (cx0, cxt, var) = sched.posterior(t);
        let sd = var.sqrt();
        for (xi, x0i) in x.iter_mut().zip(&x0) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *xi = cx0 * x0i + cxt * *xi + sd * z;
        }
    }
    // Only reachable with zero steps, which make_schedule rejects.
    Ok(x)
}

fn checked(v: Vec<f64>, len: usize, t: usize, what: &str) -> Result<Vec<f64>> {
    ensure!(v.len() == len, Shape, "{what} prediction at step {t} has {} values, expected {len}", v.len());
    let bad = v.iter().filter(|x| !x.is_finite()).count();
    if bad > 0 {
        let first = v.iter().position(|x| !x.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite(format!(
            "{what} prediction at step {t}: {bad} of {len} values non-finite (first at index {first})"
        )));
    }
    Ok(v)
}
