//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvmotion::camera::{camera_embedding, make_rig, project_motion, CameraRig};
use mvmotion::config::Config;
use mvmotion::data::{ingest::moving_average, read_jsonl, synth_dataset, MotionKind, MotionRecord, MultiViewRecord};
use mvmotion::denoiser::{grad_check, init_mv_from_2d, ArchConfig, Denoiser2D};
use mvmotion::diffusion::{make_schedule, q_sample, sample_loop, Guidance, SamplerOptions, ScheduleKind};
use mvmotion::evaluation::{diversity, fid, retrieval_metrics};
use mvmotion::generate::{generate_mv, lift_generated, GenerateOptions, GeneratedMV};
use mvmotion::lifting::{lift_multiview, max_inconsistency, triangulate_point};
use mvmotion::motion::{normalize_bbox, Motion2D, Motion3D, Skeleton, Trajectory3D};
use mvmotion::pipeline;
use mvmotion::training::{train_stage, TrainConfig};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const CONFIGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 geometry round trip", geometry_round_trip),
        ("2 hand-computed oracles", hand_oracles),
        ("3 diffusion engine", diffusion_engine),
        ("4 denoiser correctness", denoiser_correctness),
        ("5 metrics", metrics),
        ("6 end-to-end toy run", toy_run),
        ("7 command-line equivalence", cli_equivalence),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  criterion {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name} ({secs:.1} s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn geometry_round_trip() -> Outcome {
    let skel = Skeleton::toy(20.0).map_err(err)?;
    let start = Instant::now();
    let clips = synth_dataset(&MotionKind::ALL, 100, 1.95, &skel, 11).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for c in &clips {
        check!(c.motion.joints == 8 && c.motion.frames() == 40, "clip shape {}x{}", c.motion.frames(), c.motion.joints);
        let rig = make_rig(4, rng.random_range(0.0..2.0 * PI)).map_err(err)?;
        let mv = project_motion(&rig, &c.motion, &skel).map_err(err)?;
        let back = lift_multiview(&rig, &mv, skel.fps()).map_err(err)?.motion(&skel).map_err(err)?;
        let source = c.motion.rebased(skel.root_index());
        worst = worst.max(back.rmse(&source).map_err(err)?);
    }
    let secs = start.elapsed().as_secs_f64();
    check!(worst <= 1e-6, "max RMSE {worst:.3e} > 1e-6");
    check!(secs < 1.0, "took {secs:.3} s");
    Ok(format!("max RMSE {worst:.2e} over 100 clips in {secs:.3} s"))
}

fn hand_oracles() -> Outcome {
    let rig = CameraRig::from_azimuths(&[0.0, PI / 2.0]).map_err(err)?;
    let (x, r) = triangulate_point(&rig, &[[1.0, 0.5], [-2.0, 0.5]], None).map_err(err)?;
    let dx = x.iter().zip([1.0, 0.5, 2.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check!(dx <= 1e-12 && r <= 1e-12, "triangulation {x:?} residual {r}");

    let (norm, _) = normalize_bbox(&Motion2D::new(2, vec![[0.0, 0.0], [10.0, 5.0]]).map_err(err)?).map_err(err)?;
    check!(norm.points == vec![[-1.0, -0.5], [1.0, 0.5]], "bbox {:?}", norm.points);

    let smooth = moving_average(&[1.0, 4.0, 1.0], 3).map_err(err)?;
    check!(smooth == vec![3.0, 2.0, 3.0], "smoothing {smooth:?}");

    let q = camera_embedding(&CameraRig::from_azimuths(&[0.0, PI]).map_err(err)?).quats[1];
    let dq = q.iter().zip([0.0, 0.0, 1.0, 0.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check!(dq <= 1e-15, "quaternion {q:?}");

    let traj = Trajectory3D::accumulate([0.0; 3], vec![[1.0, 0.0, 0.0]; 21], 1.0 / 20.0);
    let end = traj.positions[20];
    check!((end[0] - 1.0).abs() <= 1e-12 && end[1] == 0.0 && end[2] == 0.0, "trajectory end {end:?}");
    Ok(format!("triangulation {x:?}; quaternion error {dq:.1e}; trajectory end {end:?}"))
}

fn diffusion_engine() -> Outcome {
    let sched = make_schedule(100, ScheduleKind::Cosine).map_err(err)?;
    let ab = sched.alpha_bars();
    check!(ab[0] == 1.0, "alpha_bar_0 = {}", ab[0]);
    check!(ab.windows(2).all(|w| w[1] < w[0]), "alpha_bar not strictly decreasing");
    check!(ab[100] <= 1e-3, "alpha_bar_T = {}", ab[100]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut worst_var: f64 = 0.0;
    for t in [1, 25, 50, 75, 100] {
        let eps: Vec<f64> = (0..n).map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let xt = q_sample(&vec![0.0; n], t, &eps, &sched).map_err(err)?;
        let mean = xt.iter().sum::<f64>() / n as f64;
        let var = xt.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let rel = (var / (1.0 - ab[t]) - 1.0).abs();
        worst_var = worst_var.max(rel);
        check!(rel <= 0.02, "q_sample variance off by {:.2}% at t={t}", 100.0 * rel);
    }

    let uncond_calls = AtomicUsize::new(0);
    let toy = |x: &[f64], t: usize, g: Guidance| -> mvmotion::Result<Vec<f64>> {
        let shift = match g {
            Guidance::Conditional => 0.3,
            Guidance::Unconditional => {
                uncond_calls.fetch_add(1, Ordering::SeqCst);
                -0.3
            }
        };
        Ok(x.iter().map(|v| 0.8 * v + shift + 0.001 * t as f64).collect())
    };
    let cond_only = |x: &[f64], t: usize, _: Guidance| toy(x, t, Guidance::Conditional);
    let opts = SamplerOptions { guidance_scale: 1.0, seed: 5 };
    let a = sample_loop(&toy, 24, &sched, opts, None, None).map_err(err)?;
    let b = sample_loop(&cond_only, 24, &sched, opts, None, None).map_err(err)?;
    check!(a == b, "guidance 1 differs from the conditional path");
    check!(uncond_calls.load(Ordering::SeqCst) == 0, "unconditional branch evaluated at guidance 1");
    let guided = SamplerOptions { guidance_scale: 2.5, seed: 5 };
    let c = sample_loop(&toy, 24, &sched, guided, None, None).map_err(err)?;
    let d = sample_loop(&toy, 24, &sched, guided, None, None).map_err(err)?;
    check!(c.iter().zip(&d).all(|(x, y)| x.to_bits() == y.to_bits()), "sampling not bitwise deterministic");
    Ok(format!("alpha_bar_T {:.2e}; worst q_sample variance error {:.2}%", ab[100], 100.0 * worst_var))
}

fn toy_arch() -> ArchConfig {
    ArchConfig { local_joints: 3, d_model: 32, layers: 2, heads: 2, d_ff: 48, d_text: 16, text_tokens: 77, root_hidden: 16, text_seed: 1 }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn denoiser_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut base = Denoiser2D::new(toy_arch(), 1).map_err(err)?;
    let x0 = uniform(&mut rng, 6 * 6);
    let xt = uniform(&mut rng, 6 * 6);
    let text = base.text_encoder().encode("a person walks").pooled();
    let g2 = grad_check(&mut base, |m, g| m.loss_and_grad(&x0, &xt, 40, &text, g, 1.0), 1e-4, 400, 1).map_err(err)?;
    check!(g2.max_rel_error <= 1e-3, "single-view grad check {:.3e}", g2.max_rel_error);

    let (views, frames, row) = (4, 6, 8);
    let mut mv = init_mv_from_2d(&base, views, 2).map_err(err)?;
    let cams = camera_embedding(&make_rig(views, 0.4).map_err(err)?);
    let state = uniform(&mut rng, views * frames * row);
    let out = mv.predict(&state, 20, &text, &cams).map_err(err)?;
    let mut zero_init: f64 = 0.0;
    for v in 0..views {
        let local: Vec<f64> = (0..frames).flat_map(|f| state[(v * frames + f) * row..(v * frames + f) * row + 6].to_vec()).collect();
        let want = base.predict(&local, 20, &text).map_err(err)?;
        for f in 0..frames {
            for c in 0..6 {
                zero_init = zero_init.max((out[(v * frames + f) * row + c] - want[f * 6 + c]).abs());
            }
        }
    }
    check!(zero_init <= 1e-6, "zero-init deviation {zero_init:.3e}");

    for e in &mut mv.params_mut().entries {
        e.value.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
    }
    let out = mv.predict(&state, 33, &text, &cams).map_err(err)?;
    let perm = [2, 0, 3, 1];
    let block = frames * row;
    let permute = |s: &[f64]| -> Vec<f64> { perm.iter().flat_map(|&p| s[p * block..(p + 1) * block].to_vec()).collect() };
    let out_p = mv.predict(&permute(&state), 33, &text, &cams.permuted(&perm)).map_err(err)?;
    check!(out_p == permute(&out), "view permutation is not exactly equivariant");

    let x0 = uniform(&mut rng, views * frames * row);
    let xt = uniform(&mut rng, views * frames * row);
    let gmv = grad_check(&mut mv, |m, g| m.loss_and_grad(&x0, &xt, 40, &text, &cams, g, 1.0), 1e-4, 400, 3).map_err(err)?;
    check!(gmv.max_rel_error <= 1e-3, "multi-view grad check {:.3e}", gmv.max_rel_error);

    // Frozen-base invariance through real stage-2 training.
    let skel = Skeleton::new((0..4).map(|i| format!("j{i}")).collect(), 0, 20.0).map_err(err)?;
    let clips: Vec<_> = (0..12)
        .map(|i| {
            let pts = (0..6 * 4).map(|k| [0.1 * (k % 4) as f64 + 0.01 * i as f64, 0.05 * (k / 4) as f64, 0.2 * (i % 3) as f64]).collect();
            mvmotion::data::SourceMotion { motion: Motion3D::new(4, pts, 20.0).unwrap(), text: format!("class {}", i % 3), label: None }
        })
        .collect();
    let mut srng = ChaCha8Rng::seed_from_u64(4);
    let mvmotion::data::Samples::Multi(samples) = mvmotion::data::build_samples(&clips, mvmotion::data::SampleMode::Multi { views }, &skel, &mut srng).map_err(err)? else {
        return Err("expected multi-view samples".into());
    };
    let mut trained = init_mv_from_2d(&base, views, 5).map_err(err)?;
    let before = trained.params().clone();
    let sched = make_schedule(20, ScheduleKind::Cosine).map_err(err)?;
    train_stage(&mut trained, &samples, &sched, &TrainConfig { batch_size: 4, lr: 1e-2, ..TrainConfig::stage2(2, 6) }, "check").map_err(err)?;
    let mut frozen = 0;
    let mut moved = 0;
    for (a, b) in before.entries.iter().zip(&trained.params().entries) {
        let same = a.value.iter().zip(&b.value).all(|(x, y)| x.to_bits() == y.to_bits());
        if a.trainable {
            moved += usize::from(!same);
        } else {
            frozen += 1;
            check!(same, "frozen array {} changed", a.name);
        }
    }
    check!(moved > 0, "no trainable array changed");
    Ok(format!(
        "grad check {:.2e} (2D) / {:.2e} (multi-view); zero-init deviation {zero_init:.1e}; {frozen} frozen arrays bitwise unchanged",
        g2.max_rel_error, gmv.max_rel_error
    ))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    use rand_distr::Distribution;
    (0..n)
        .map(|_| (0..d).map(|i| { let z: f64 = rand_distr::StandardNormal.sample(rng); z + if i == 0 { shift } else { 0.0 } }).collect())
        .collect()
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let a = gaussian(&mut rng, 500, 10, 0.0);
    let self_fid = fid(&a, &a).map_err(err)?;
    check!(self_fid.abs() <= 1e-8, "fid(a, a) = {self_fid:e}");

    let p = gaussian(&mut rng, 10_000, 8, 0.0);
    let q = gaussian(&mut rng, 10_000, 8, 1.0);
    let unit = fid(&p, &q).map_err(err)?;
    check!((unit - 1.0).abs() <= 0.1, "shifted unit Gaussians give FID {unit}");

    let cents = gaussian(&mut rng, 500, 4, 0.0);
    let gen: Vec<(usize, Vec<f64>)> = (0..500).map(|i| (i, gaussian(&mut rng, 1, 4, 0.0).remove(0))).collect();
    let chance = retrieval_metrics(&cents, &gen, 32, 3, 1000, &mut rng).map_err(err)?.r_precision;
    check!((chance - 0.09375).abs() <= 0.02, "chance R-precision {chance}");

    let mut worst_div: f64 = 0.0;
    for trial in 0..20 {
        let items = gaussian(&mut rng, 10, 3, trial as f64);
        let mut total = 0.0;
        for i in 0..10 {
            for j in i + 1..10 {
                total += items[i].iter().zip(&items[j]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            }
        }
        let oracle = total / 45.0;
        let got = diversity(&items, 300, &mut rng).map_err(err)?;
        worst_div = worst_div.max((got - oracle).abs());
    }
    check!(worst_div <= 1e-12, "diversity differs from the exhaustive oracle by {worst_div:e}");
    Ok(format!("fid(a,a) {self_fid:.1e}; unit-shift FID {unit:.4}; chance R-precision {chance:.4}; diversity error {worst_div:.1e}"))
}

fn toy_config() -> Result<Config, String> {
    Config::load(format!("{CONFIGS}/toy.toml")).map_err(err)
}

fn toy_run() -> Outcome {
    let cfg = toy_config()?;
    let seed = cfg.seed;
    let skel = cfg.skeleton().map_err(err)?;
    check!(skel.joint_count() == 8 && cfg.frames() == 40 && cfg.data.count == 600 && cfg.data.fps == 20.0, "toy config shape");
    let start = Instant::now();
    let clips = pipeline::synth(&cfg, cfg.data.count, seed).map_err(err)?;
    let held_out = pipeline::synth(&cfg, 150, pipeline::derive_seed(seed, "held-out")).map_err(err)?;
    let sources = pipeline::sources(&clips);
    let (base, r1) = pipeline::train_2d(&cfg, &sources, &[], seed).map_err(err)?;
    let (model, r2) = pipeline::train_mv(&cfg, &base, &sources, seed).map_err(err)?;
    let train_secs = start.elapsed().as_secs_f64();

    let sched = pipeline::schedule(&cfg).map_err(err)?;
    let prompts = pipeline::default_prompts(&cfg);
    let gens = pipeline::sample(&cfg, &model, &sched, &prompts, seed).map_err(err)?;
    check!(gens.len() == 60, "{} samples", gens.len());
    let lifted = pipeline::lift_all(&gens, &skel).map_err(err)?;
    let rmse = pipeline::mean_reprojection_rmse(&lifted).map_err(err)?;

    let generated: Vec<(Motion3D, String)> = lifted.iter().zip(&gens).map(|(l, g)| (l.motion.clone(), g.label.clone().unwrap_or_default())).collect();
    let reference: Vec<(Motion3D, String)> = held_out.iter().map(|c| (c.motion.clone(), c.kind.name().to_string())).collect();
    let report = pipeline::eval(&cfg, &generated, &reference, seed).map_err(err)?;

    // Consistency-block variant: one sample per prompt with the block on at
    // every step.
    let cons = GenerateOptions { consistency: Some(1..=sched.steps()), track_inconsistency: true, ..pipeline::generate_options(&cfg, seed) };
    let mut worst_step: f64 = 0.0;
    let mut steps_seen = 0;
    for (i, p) in prompts.iter().enumerate() {
        let g = generate_mv(&model, &sched, &p.text, cfg.frames(), &GenerateOptions { seed: pipeline::derive_seed(seed, &format!("consistency-{i}")), ..cons.clone() }).map_err(err)?;
        steps_seen += g.inconsistency.len();
        worst_step = g.inconsistency.iter().fold(worst_step, |a, (_, r)| a.max(*r));
    }
    let secs = start.elapsed().as_secs_f64();

    let fids: Vec<String> = report.fid_by_label.iter().map(|e| format!("{}/{} {:.3}", e.generated, e.reference, e.fid)).collect();
    let detail = format!(
        "train {train_secs:.0} s (final losses {:.4} / {:.4}), total {secs:.0} s; (a) reprojection RMSE {rmse:.4}; (b) accuracy {:.3}; (c) FID {}; (d) worst step residual {worst_step:.2e} over {steps_seen} steps",
        r1.epoch_losses.last().unwrap_or(&f64::NAN),
        r2.epoch_losses.last().unwrap_or(&f64::NAN),
        report.centroid_accuracy,
        fids.join(", "),
    );
    let mut failures = Vec::new();
    if rmse > 0.05 {
        failures.push("(a) reprojection RMSE above 0.05");
    }
    if report.centroid_accuracy < 0.8 {
        failures.push("(b) accuracy below 0.8");
    }
    if !report.same_label_fid_is_lowest() {
        failures.push("(c) same-prompt FID not lowest for every prompt");
    }
    if worst_step > 1e-9 || steps_seen != 3 * sched.steps() {
        failures.push("(d) consistency block residual above 1e-9");
    }
    if secs > 1800.0 {
        failures.push("runtime above 30 min");
    }
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join(", ")))
    }
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mvmotion")).args(args).current_dir(dir).output().map_err(err)?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

const ARTIFACTS: [&str; 11] = [
    "train.jsonl",
    "reference.jsonl",
    "stage1.ckpt",
    "stage1.ckpt.loss.csv",
    "stage2.ckpt",
    "stage2.ckpt.loss.csv",
    "samples.jsonl",
    "lifted.jsonl",
    "report.json",
    "plot.svg",
    "config.toml",
];

fn cli_pipeline(dir: &Path, seed: &str) -> Result<(), String> {
    std::fs::copy(format!("{CONFIGS}/tiny.toml"), dir.join("config.toml")).map_err(err)?;
    let c = ["--config", "config.toml", "--seed", seed];
    let run = |rest: &[&str]| run_cli(dir, &[&c[..], rest].concat());
    run(&["synth", "--count", "24", "--out", "train.jsonl"])?;
    let ref_seed = (seed.parse::<u64>().map_err(err)? + 1).to_string();
    run_cli(dir, &["--config", "config.toml", "--seed", &ref_seed, "synth", "--count", "24", "--out", "reference.jsonl"])?;
    run(&["train2d", "--data", "train.jsonl", "--out", "stage1.ckpt"])?;
    run(&["trainmv", "--base", "stage1.ckpt", "--data", "train.jsonl", "--out", "stage2.ckpt"])?;
    run(&["sample", "--model", "stage2.ckpt", "--out", "samples.jsonl"])?;
    run(&["lift", "--input", "samples.jsonl", "--out", "lifted.jsonl"])?;
    run(&["eval", "--generated", "lifted.jsonl", "--reference", "reference.jsonl", "--out", "report.json"])?;
    run(&["plot", "--input", "lifted.jsonl", "--out", "plot.svg"])?;
    Ok(())
}

fn cli_equivalence() -> Outcome {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    cli_pipeline(a.path(), "17")?;
    cli_pipeline(b.path(), "17")?;
    for name in ARTIFACTS {
        let (x, y) = (std::fs::read(a.path().join(name)).map_err(err)?, std::fs::read(b.path().join(name)).map_err(err)?);
        check!(x == y, "{name} differs between two runs with the same seed");
    }

    // The same chain through the library, from the same seed.
    let mut cfg = Config::load(format!("{CONFIGS}/tiny.toml")).map_err(err)?;
    cfg.seed = 17;
    let skel = cfg.skeleton().map_err(err)?;
    let train = pipeline::sources(&pipeline::synth(&cfg, 24, 17).map_err(err)?);
    let reference = pipeline::synth(&cfg, 24, 18).map_err(err)?;
    let (base, _) = pipeline::train_2d(&cfg, &train, &[], 17).map_err(err)?;
    let (model, _) = pipeline::train_mv(&cfg, &base, &train, 17).map_err(err)?;
    let gens = pipeline::sample(&cfg, &model, &pipeline::schedule(&cfg).map_err(err)?, &pipeline::default_prompts(&cfg), 17).map_err(err)?;
    let generated: Vec<(Motion3D, String)> =
        gens.iter().map(|g| Ok((lift_generated(g, &skel)?.motion, g.label.clone().unwrap_or_default()))).collect::<mvmotion::Result<_>>().map_err(err)?;
    let reference: Vec<(Motion3D, String)> = reference.iter().map(|c| (c.motion.clone(), c.kind.name().to_string())).collect();
    let lib = pipeline::eval(&cfg, &generated, &reference, 17).map_err(err)?;
    let cli: mvmotion::evaluation::EvalReport = serde_json::from_slice(&std::fs::read(a.path().join("report.json")).map_err(err)?).map_err(err)?;
    check!(cli == lib, "CLI report differs from the library:\n{cli:?}\nvs\n{lib:?}");

    // Intermediate artifacts agree too.
    let samples: Vec<MultiViewRecord> = read_jsonl(a.path().join("samples.jsonl")).map_err(err)?;
    let same_samples = samples.len() == gens.len() && samples.iter().zip(&gens).all(|(r, g): (&MultiViewRecord, &GeneratedMV)| r.motion().map(|m| m == g.motion).unwrap_or(false));
    check!(same_samples, "sampled motions differ from the library");
    let lifted: Vec<MotionRecord> = read_jsonl(a.path().join("lifted.jsonl")).map_err(err)?;
    let same_lift = lifted.iter().zip(&generated).all(|(r, (m, _))| r.to_motion3d().map(|x| &x == m).unwrap_or(false));
    check!(same_lift, "lifted motions differ from the library");
    let inconsistency = gens.iter().map(|g| max_inconsistency(&g.rig, &g.motion).unwrap_or(f64::NAN)).fold(0.0, f64::max);
    Ok(format!(
        "{} artifacts byte-identical across runs; report matches library exactly (FID {:.6}, R-precision {:.4}); largest sample inconsistency {inconsistency:.2e}",
        ARTIFACTS.len(),
        lib.fid,
        lib.r_precision
    ))
}
