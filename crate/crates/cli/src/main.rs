use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use mvmotion::checkpoint::{self, Model, ModelKind};
use mvmotion::config::Config;
use mvmotion::data::{ingest_2d, read_jsonl, write_jsonl, LocalRecord, MotionKind, MotionRecord, MultiViewRecord, SourceMotion, TrainingSample2D};
use mvmotion::generate::{generate_2d, lift_generated, GeneratedMV, Prompt};
use mvmotion::motion::Motion3D;
use mvmotion::pipeline::{self, derive_seed};
use mvmotion::plot::{render_svg, PlotOptions};
use mvmotion::training::TrainReport;

/// Text-to-motion diffusion over multi-view 2D motion, lifted to 3D.
#[derive(Debug, Parser)]
#[command(name = "mvmotion", version)]
struct Cli {
    /// Seed for every random draw; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write procedural 3D motion records.
    Synth {
        #[arg(long)]
        count: usize,
        /// Comma-separated motion kinds; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<MotionKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean 2D pose records into stage-1 training samples.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 1: train the single-view network.
    Train2d {
        /// 3D motion records, projected to one random view each.
        #[arg(long)]
        data: PathBuf,
        /// Ingested 2D samples for the second, lower-rate phase.
        #[arg(long)]
        mixed: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 2: fine-tune multi-view adapters on a frozen stage-1 network.
    Trainmv {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample motions for text prompts.
    Sample {
        #[arg(long)]
        model: PathBuf,
        /// Prompt text; repeat for several. Defaults to one canonical prompt
        /// per configured motion kind.
        #[arg(long)]
        prompt: Vec<String>,
        /// Samples per prompt; defaults to the config value.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Triangulate multi-view samples into 3D motion records.
    Lift {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of generated 3D motion against reference motion.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one 3D motion record as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let seed = cfg.seed;
    match cli.command {
        Command::Synth { count, kinds, out } => {
            if !kinds.is_empty() {
                cfg.data.kinds = kinds;
            }
            let skel = cfg.skeleton()?;
            let clips = pipeline::synth(&cfg, count, seed)?;
            let recs = clips.iter().map(|c| MotionRecord::from_labeled(c, &skel)).collect::<mvmotion::Result<Vec<_>>>()?;
            write_jsonl(&out, &recs)?;
            println!("{}", json!({ "records": recs.len(), "out": out }));
        }
        Command::Ingest { input, out } => {
            let recs: Vec<MotionRecord> = read_jsonl(&input)?;
            let raw = recs.iter().map(MotionRecord::to_ingest).collect::<mvmotion::Result<Vec<_>>>()?;
            let samples = ingest_2d(&raw, &cfg.ingest)?;
            write_jsonl(&out, &samples.iter().map(LocalRecord::from).collect::<Vec<_>>())?;
            println!("{}", json!({ "input": raw.len(), "kept": samples.len() }));
        }
        Command::Train2d { data, mixed, out } => {
            let clips = read_sources(&data)?;
            let extra = match mixed {
                Some(p) => read_jsonl::<LocalRecord>(&p)?.iter().map(LocalRecord::to_sample).collect::<mvmotion::Result<Vec<TrainingSample2D>>>()?,
                None => Vec::new(),
            };
            let (model, report) = pipeline::train_2d(&cfg, &clips, &extra, seed)?;
            checkpoint::save(&out, &Model::Single(model), &pipeline::schedule(&cfg)?)?;
            write_losses(&out, &report)?;
        }
        Command::Trainmv { base, data, out } => {
            let ckpt = checkpoint::load_expecting(&base, ModelKind::Single, &cfg.arch_config()?)?;
            let Model::Single(base) = ckpt.model else { bail!("{} is not a single-view checkpoint", base.display()) };
            let clips = read_sources(&data)?;
            let (model, report) = pipeline::train_mv(&cfg, &base, &clips, seed)?;
            checkpoint::save(&out, &Model::Multi(model), &ckpt.schedule)?;
            write_losses(&out, &report)?;
        }
        Command::Sample { model, prompt, count, out } => {
            if let Some(n) = count {
                cfg.sampling.per_prompt = n;
            }
            let prompts = if prompt.is_empty() {
                pipeline::default_prompts(&cfg)
            } else {
                prompt.into_iter().map(|text| Prompt { text, label: None }).collect()
            };
            let ckpt = checkpoint::load(&model)?;
            if ckpt.model.arch() != &cfg.arch_config()? {
                bail!("{} was trained with a different architecture than the config describes", model.display());
            }
            match &ckpt.model {
                Model::Multi(m) => {
                    let skel = cfg.skeleton()?;
                    let gens = pipeline::sample(&cfg, m, &ckpt.schedule, &prompts, seed)?;
                    write_jsonl(&out, &gens.iter().map(|g| mv_record(g, &skel)).collect::<Vec<_>>())?;
                    let worst = gens.iter().flat_map(|g| g.inconsistency.iter().map(|x| x.1)).fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.max(b))));
                    println!("{}", json!({ "samples": gens.len(), "max_step_inconsistency": worst }));
                }
                Model::Single(m) => {
                    let n = cfg.sampling.per_prompt;
                    let mut recs = Vec::with_capacity(prompts.len() * n);
                    for (i, p) in prompts.iter().enumerate() {
                        for k in 0..n {
                            let s = derive_seed(seed, &format!("sample-2d-{}", i * n + k));
                            let local = generate_2d(m, &ckpt.schedule, &p.text, cfg.frames(), cfg.sampling.guidance_scale, s)?;
                            recs.push(LocalRecord { joints: local.joints, offsets: local.to_flat(), text: p.text.clone(), label: p.label.clone() });
                        }
                    }
                    write_jsonl(&out, &recs)?;
                    println!("{}", json!({ "samples": recs.len() }));
                }
            }
        }
        Command::Lift { input, out } => {
            let recs: Vec<MultiViewRecord> = read_jsonl(&input)?;
            let lifted = mvmotion::par::try_map(&recs, |r| -> mvmotion::Result<(MotionRecord, f64)> {
                let skel = r.skeleton()?;
                let g = GeneratedMV { text: r.text.clone(), label: r.label.clone(), motion: r.motion()?, rig: r.rig()?, inconsistency: Vec::new() };
                let l = lift_generated(&g, &skel)?;
                Ok((MotionRecord::from_motion3d(&l.motion, &skel, &r.text, r.label.as_deref())?, l.lift.mean_rmse()))
            })?;
            let total: f64 = lifted.iter().map(|x| x.1).sum();
            let lifted: Vec<MotionRecord> = lifted.into_iter().map(|x| x.0).collect();
            write_jsonl(&out, &lifted)?;
            let mean = if recs.is_empty() { None } else { Some(total / recs.len() as f64) };
            println!("{}", json!({ "motions": lifted.len(), "mean_reprojection_rmse": mean }));
        }
        Command::Eval { generated, reference, out } => {
            let report = pipeline::eval(&cfg, &read_labeled(&generated)?, &read_labeled(&reference)?, seed)?;
            fs::write(&out, serde_json::to_string_pretty(&report)? + "\n")?;
            println!("{}", json!({ "fid": report.fid, "r_precision": report.r_precision, "accuracy": report.centroid_accuracy }));
        }
        Command::Plot { input, index, out } => {
            let recs: Vec<MotionRecord> = read_jsonl(&input)?;
            let Some(r) = recs.get(index) else { bail!("{} has {} records, no index {index}", input.display(), recs.len()) };
            let svg = render_svg(&r.to_motion3d()?, &r.skeleton()?, &r.text, &PlotOptions::default())?;
            fs::write(&out, svg)?;
        }
    }
    Ok(())
}

fn read_sources(path: &Path) -> Result<Vec<SourceMotion>> {
    let recs: Vec<MotionRecord> = read_jsonl(path)?;
    if recs.is_empty() {
        bail!("{} has no records", path.display());
    }
    Ok(recs.iter().map(MotionRecord::to_source).collect::<mvmotion::Result<Vec<_>>>()?)
}

/// 3D records with their label, falling back to the text.
fn read_labeled(path: &Path) -> Result<Vec<(Motion3D, String)>> {
    let recs: Vec<MotionRecord> = read_jsonl(path)?;
    recs.iter().map(|r| Ok((r.to_motion3d()?, r.label.clone().unwrap_or_else(|| r.text.clone())))).collect()
}

fn mv_record(g: &GeneratedMV, skel: &mvmotion::motion::Skeleton) -> MultiViewRecord {
    MultiViewRecord::new(&g.motion, &g.rig, skel, &g.text, g.label.as_deref())
}

fn write_losses(ckpt: &Path, report: &TrainReport) -> Result<()> {
    let mut path = ckpt.as_os_str().to_owned();
    path.push(".loss.csv");
    fs::write(&path, report.curve.to_csv())?;
    println!("{}", json!({ "epochs": report.epoch_losses.len(), "final_epoch_loss": report.epoch_losses.last() }));
    Ok(())
}
