//! Text-conditioned sampling from trained networks, and lifting of the
//! sampled multi-view motion to 3D.

use std::f64::consts::TAU;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{camera_embedding, make_rig, CameraRig, MultiView2DMotion};
use crate::denoiser::{Denoiser2D, DenoiserMV};
use crate::diffusion::{sample_loop, ConsistencyHook, Guidance, NoiseSchedule, SamplerOptions};
use crate::error::{ensure, Result};
use crate::lifting::{consistency_project, lift_multiview, max_inconsistency, LiftResult};
use crate::motion::{LocalMotion2D, Motion3D, Skeleton};

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub guidance_scale: f64,
    /// Steps at which x̂0 is replaced by its consistent projection; `None`
    /// disables the block.
    pub consistency: Option<RangeInclusive<usize>>,
    /// Record the triangulation residual of x̂0 at every consistency step.
    pub track_inconsistency: bool,
    pub seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { guidance_scale: 2.5, consistency: None, track_inconsistency: false, seed: 0 }
    }
}

/// A sampled multi-view motion with the rig it was generated for.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMV {
    pub text: String,
    pub label: Option<String>,
    pub motion: MultiView2DMotion,
    pub rig: CameraRig,
    /// `(step, residual)` for each step where the consistency block ran.
    pub inconsistency: Vec<(usize, f64)>,
}

/// Samples one multi-view motion. The first camera azimuth is drawn from
/// the seed; the remaining cameras follow on an even ring.
pub fn generate_mv(model: &DenoiserMV, sched: &NoiseSchedule, text: &str, frames: usize, opts: &GenerateOptions) -> Result<GeneratedMV> {
    ensure!(frames >= 2, Invalid, "need at least 2 frames");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let rig = make_rig(model.views(), rng.random_range(0.0..TAU))?;
    let noise_seed: u64 = rng.random();
    let cams = camera_embedding(&rig);
    let enc = model.text_encoder();
    let cond = enc.encode(text).pooled();
    let null = enc.null().pooled();
    let (views, joints) = (model.views(), model.config().local_joints);

    let predict = |x: &[f64], t: usize, g: Guidance| match g {
        Guidance::Conditional => model.predict(x, t, &cond, &cams),
        Guidance::Unconditional => model.predict(x, t, &null, &cams),
    };
    let project = |x: &[f64]| -> Result<Vec<f64>> {
        let mv = MultiView2DMotion::from_state(frames, views, joints, x)?;
        Ok(consistency_project(&rig, &mv)?.to_state())
    };
    let hook = opts.consistency.clone().map(|steps| ConsistencyHook { steps, project: &project });

    let mut inconsistency = Vec::new();
    let mut track_err = None;
    let mut observer = |t: usize, x0: &[f64]| {
        let in_block = opts.consistency.as_ref().is_some_and(|s| s.contains(&t));
        if opts.track_inconsistency && in_block && track_err.is_none() {
            match MultiView2DMotion::from_state(frames, views, joints, x0).and_then(|mv| max_inconsistency(&rig, &mv)) {
                Ok(r) => inconsistency.push((t, r)),
                Err(e) => track_err = Some(e),
            }
        }
    };
    let len = views * frames * model.row_width();
    let sopts = SamplerOptions { guidance_scale: opts.guidance_scale, seed: noise_seed };
    let state = sample_loop(&predict, len, sched, sopts, hook.as_ref(), Some(&mut observer))?;
    if let Some(e) = track_err {
        return Err(e);
    }
    Ok(GeneratedMV { text: text.to_string(), label: None, motion: MultiView2DMotion::from_state(frames, views, joints, &state)?, rig, inconsistency })
}

/// A prompt to sample, with an optional class label carried through.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub text: String,
    pub label: Option<String>,
}

/// `per_prompt` samples for each prompt, in prompt-major order. Sample `i`
/// uses a seed derived from `opts.seed` and `i`, so results do not depend on
/// the thread count.
pub fn generate_batch(model: &DenoiserMV, sched: &NoiseSchedule, prompts: &[Prompt], per_prompt: usize, frames: usize, opts: &GenerateOptions) -> Result<Vec<GeneratedMV>> {
    let seeds: Vec<u64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        (0..prompts.len() * per_prompt).map(|_| rng.random()).collect()
    };
    crate::par::map_range(seeds.len(), |i| {
        let p = &prompts[i / per_prompt];
        let mut g = generate_mv(model, sched, &p.text, frames, &GenerateOptions { seed: seeds[i], ..opts.clone() })?;
        g.label = p.label.clone();
        Ok(g)
    })
    .into_iter()
    .collect()
}

/// Samples one root-relative 2D motion from a single-view network.
pub fn generate_2d(model: &Denoiser2D, sched: &NoiseSchedule, text: &str, frames: usize, guidance_scale: f64, seed: u64) -> Result<LocalMotion2D> {
    ensure!(frames >= 1, Invalid, "need at least 1 frame");
    let enc = model.text_encoder();
    let cond = enc.encode(text).pooled();
    let null = enc.null().pooled();
    let predict = |x: &[f64], t: usize, g: Guidance| match g {
        Guidance::Conditional => model.predict(x, t, &cond),
        Guidance::Unconditional => model.predict(x, t, &null),
    };
    let len = frames * model.config().feature_dim();
    let out = sample_loop(&predict, len, sched, SamplerOptions { guidance_scale, seed }, None, None)?;
    LocalMotion2D::from_flat(model.config().local_joints, &out)
}

/// A lifted sample: 3D motion and the triangulation residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Lifted {
    pub motion: Motion3D,
    pub lift: LiftResult,
}

pub fn lift_generated(g: &GeneratedMV, skel: &Skeleton) -> Result<Lifted> {
    let lift = lift_multiview(&g.rig, &g.motion, skel.fps())?;
    Ok(Lifted { motion: lift.motion(skel)?, lift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{init_mv_from_2d, ArchConfig};
    use crate::diffusion::{make_schedule, ScheduleKind};

    fn tiny() -> DenoiserMV {
        let cfg = ArchConfig { d_model: 16, layers: 1, heads: 2, d_ff: 16, d_text: 8, text_tokens: 4, root_hidden: 8, ..ArchConfig::desk(3) };
        init_mv_from_2d(&Denoiser2D::new(cfg, 1).unwrap(), 3, 2).unwrap()
    }

    #[test]
    fn consistency_block_makes_every_step_consistent() {
        let model = tiny();
        let sched = make_schedule(6, ScheduleKind::Cosine).unwrap();
        let opts = GenerateOptions { consistency: Some(1..=6), track_inconsistency: true, seed: 4, ..Default::default() };
        let g = generate_mv(&model, &sched, "a person walks", 5, &opts).unwrap();
        assert_eq!(g.inconsistency.len(), 6);
        assert!(g.inconsistency.iter().all(|(_, r)| *r <= 1e-9), "{:?}", g.inconsistency);
        assert!(max_inconsistency(&g.rig, &g.motion).unwrap() <= 1e-9);
        let free = generate_mv(&model, &sched, "a person walks", 5, &GenerateOptions { seed: 4, ..Default::default() }).unwrap();
        assert!(max_inconsistency(&free.rig, &free.motion).unwrap() > 1e-6);
    }

    #[test]
    fn batch_is_deterministic_and_labelled() {
        let model = tiny();
        let sched = make_schedule(3, ScheduleKind::Cosine).unwrap();
        let prompts = vec![Prompt { text: "a".into(), label: Some("x".into()) }, Prompt { text: "b".into(), label: None }];
        let opts = GenerateOptions { seed: 9, ..Default::default() };
        let a = generate_batch(&model, &sched, &prompts, 2, 4, &opts).unwrap();
        let b = generate_batch(&model, &sched, &prompts, 2, 4, &opts).unwrap();
        assert_eq!(a, b);
        let labels: Vec<Option<&str>> = a.iter().map(|g| g.label.as_deref()).collect();
        assert_eq!(labels, vec![Some("x"), Some("x"), None, None]);
        assert_ne!(a[0].motion, a[1].motion);
        let skel = Skeleton::new((0..4).map(|i| format!("j{i}")).collect(), 0, 20.0).unwrap();
        let l = lift_generated(&a[0], &skel).unwrap();
        assert_eq!(l.motion.frames(), 4);
    }

    #[test]
    fn single_view_sampling_shape() {
        let cfg = ArchConfig { d_model: 16, layers: 1, heads: 2, d_ff: 16, d_text: 8, text_tokens: 4, root_hidden: 8, ..ArchConfig::desk(3) };
        let m = Denoiser2D::new(cfg, 1).unwrap();
        let sched = make_schedule(3, ScheduleKind::Cosine).unwrap();
        let out = generate_2d(&m, &sched, "hi", 6, 2.5, 0).unwrap();
        assert_eq!((out.joints, out.frames()), (3, 6));
    }
}
