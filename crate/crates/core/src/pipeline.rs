//! Config-driven end-to-end steps: synthesize, train both stages, sample,
//! lift and evaluate. The command-line tool is a thin file wrapper around
//! these functions.

use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::data::{build_samples, synth_dataset, LabeledMotion, SampleMode, Samples, SourceMotion, TrainingSample2D};
use crate::denoiser::{init_mv_from_2d, Denoiser2D, DenoiserMV};
use crate::diffusion::{make_schedule, NoiseSchedule};
use crate::error::{ensure, Error, Result};
use crate::evaluation::{evaluate, EvalReport, EvalSettings};
use crate::generate::{generate_batch, lift_generated, GenerateOptions, GeneratedMV, Lifted, Prompt};
use crate::motion::{Motion3D, Skeleton};
use crate::training::{lr_staged_pretrain, train_stage, Stage, TrainReport};

/// Independent seed for one named pipeline step.
pub fn derive_seed(seed: u64, step: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(step.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn schedule(cfg: &Config) -> Result<NoiseSchedule> {
    make_schedule(cfg.schedule.steps, cfg.schedule.kind)
}

/// `count` procedural clips cycling through the configured kinds.
pub fn synth(cfg: &Config, count: usize, seed: u64) -> Result<Vec<LabeledMotion>> {
    synth_dataset(&cfg.data.kinds, count, cfg.data.duration, &cfg.skeleton()?, derive_seed(seed, "synth"))
}

pub fn sources(clips: &[LabeledMotion]) -> Vec<SourceMotion> {
    clips
        .iter()
        .map(|c| SourceMotion { motion: c.motion.clone(), text: c.text.clone(), label: Some(c.kind.name().to_string()) })
        .collect()
}

/// Canonical prompt of each configured kind, labelled by kind name.
pub fn default_prompts(cfg: &Config) -> Vec<Prompt> {
    cfg.data.kinds.iter().map(|k| Prompt { text: k.canonical_prompt().to_string(), label: Some(k.name().to_string()) }).collect()
}

/// Stage 1: single-view pretraining on one random projection per clip,
/// followed by the lower-rate phase when `extra` 2D samples are given.
pub fn train_2d(cfg: &Config, clips: &[SourceMotion], extra: &[TrainingSample2D], seed: u64) -> Result<(Denoiser2D, TrainReport)> {
    let skel = cfg.skeleton()?;
    let sched = schedule(cfg)?;
    let mut rng = crate::data::samples::sample_rng(derive_seed(seed, "stage1-views"));
    let Samples::Single(samples) = build_samples(clips, SampleMode::Single, &skel, &mut rng)? else {
        unreachable!("single mode yields single-view samples")
    };
    let mut model = Denoiser2D::new(cfg.arch_config()?, derive_seed(seed, "stage1-init"))?;
    let first = cfg.train_config(Stage::Single, &cfg.stage1, derive_seed(seed, "stage1-synthetic"));
    let second = cfg.train_config(Stage::Single, &cfg.stage1_mixed, derive_seed(seed, "stage1-mixed"));
    let report = lr_staged_pretrain(&mut model, &samples, extra, &sched, &first, &second)?;
    Ok((model, report))
}

/// Stage 2: frozen-base multi-view fine-tuning on projected clips.
pub fn train_mv(cfg: &Config, base: &Denoiser2D, clips: &[SourceMotion], seed: u64) -> Result<(DenoiserMV, TrainReport)> {
    ensure!(base.config() == &cfg.arch_config()?, Invalid, "base network architecture does not match the config");
    let skel = cfg.skeleton()?;
    let sched = schedule(cfg)?;
    let mut rng = crate::data::samples::sample_rng(derive_seed(seed, "stage2-views"));
    let Samples::Multi(samples) = build_samples(clips, SampleMode::Multi { views: cfg.data.views }, &skel, &mut rng)? else {
        unreachable!("multi mode yields multi-view samples")
    };
    let mut model = init_mv_from_2d(base, cfg.data.views, derive_seed(seed, "stage2-init"))?;
    let tc = cfg.train_config(Stage::Multi, &cfg.stage2, derive_seed(seed, "stage2"));
    let report = train_stage(&mut model, &samples, &sched, &tc, "multiview")?;
    Ok((model, report))
}

/// Generation options from the sampling section.
pub fn generate_options(cfg: &Config, seed: u64) -> GenerateOptions {
    let s = &cfg.sampling;
    let consistency = s.consistency.then(|| match s.consistency_steps {
        Some([a, b]) => a..=b,
        None => 1..=cfg.schedule.steps,
    });
    GenerateOptions { guidance_scale: s.guidance_scale, consistency, track_inconsistency: s.consistency, seed: derive_seed(seed, "sample") }
}

pub fn sample(cfg: &Config, model: &DenoiserMV, sched: &NoiseSchedule, prompts: &[Prompt], seed: u64) -> Result<Vec<GeneratedMV>> {
    ensure!(model.views() == cfg.data.views, Invalid, "network has {} views, config {}", model.views(), cfg.data.views);
    generate_batch(model, sched, prompts, cfg.sampling.per_prompt, cfg.frames(), &generate_options(cfg, seed))
}

pub fn lift_all(gens: &[GeneratedMV], skel: &Skeleton) -> Result<Vec<Lifted>> {
    crate::par::try_map(gens, |g| lift_generated(g, skel))
}

/// Mean per-joint reprojection RMSE over lifted samples.
pub fn mean_reprojection_rmse(lifted: &[Lifted]) -> Result<f64> {
    ensure!(!lifted.is_empty(), Invalid, "no lifted motions");
    Ok(lifted.iter().map(|l| l.lift.mean_rmse()).sum::<f64>() / lifted.len() as f64)
}

pub fn eval_settings(cfg: &Config, seed: u64) -> EvalSettings {
    let e = &cfg.eval;
    EvalSettings {
        diversity_pairs: e.diversity_pairs,
        retrieval_batch: e.retrieval_batch,
        top_k: e.top_k,
        retrieval_rounds: e.retrieval_rounds,
        seed: derive_seed(seed, "eval"),
    }
}

fn labeled(set: &[(Motion3D, String)]) -> Vec<(&Motion3D, &str)> {
    set.iter().map(|(m, l)| (m, l.as_str())).collect()
}

/// Metrics for labelled generated clips against labelled reference clips.
pub fn eval(cfg: &Config, generated: &[(Motion3D, String)], reference: &[(Motion3D, String)], seed: u64) -> Result<EvalReport> {
    let skel = cfg.skeleton()?;
    if let Some((m, _)) = generated.iter().chain(reference).find(|(m, _)| m.joints != skel.joint_count()) {
        return Err(Error::Shape(format!("motion has {} joints, configured skeleton {}", m.joints, skel.joint_count())));
    }
    evaluate(&labeled(generated), &labeled(reference), &skel, &eval_settings(cfg, seed), Some(cfg.fingerprint()))
}
