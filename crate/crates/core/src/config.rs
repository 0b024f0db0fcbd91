//! Run configuration, read from and written to TOML.
//!
//! Every field has a default, so a config file only needs the values it
//! changes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{IngestConfig, MotionKind};
use crate::denoiser::ArchConfig;
use crate::diffusion::ScheduleKind;
use crate::error::{ensure, Error, Result};
use crate::motion::Skeleton;
use crate::training::{Stage, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkeletonKind {
    Toy,
    Smpl22,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchPreset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSection {
    pub preset: ArchPreset,
    pub d_model: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub d_ff: Option<usize>,
    pub d_text: Option<usize>,
    pub text_tokens: Option<usize>,
    pub root_hidden: Option<usize>,
    pub text_seed: u64,
}

impl Default for ArchSection {
    fn default() -> Self {
        Self { preset: ArchPreset::Desk, d_model: None, layers: None, heads: None, d_ff: None, d_text: None, text_tokens: None, root_hidden: None, text_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub steps: usize,
    pub kind: ScheduleKind,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { steps: 100, kind: ScheduleKind::Cosine }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub skeleton: SkeletonKind,
    pub fps: f64,
    /// Clip length in seconds; clips have `round(duration·fps) + 1` frames.
    pub duration: f64,
    pub count: usize,
    pub kinds: Vec<MotionKind>,
    pub views: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            skeleton: SkeletonKind::Toy,
            fps: 20.0,
            duration: 1.95,
            count: 600,
            kinds: vec![MotionKind::Walk, MotionKind::Turn, MotionKind::Wave],
            views: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub text_dropout: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl StageSection {
    fn with(lr: f64, batch_size: usize, epochs: usize) -> Self {
        Self { lr, batch_size, epochs, text_dropout: 0.1, beta1: 0.9, beta2: 0.999, adam_eps: 1e-8 }
    }
}

impl Default for StageSection {
    fn default() -> Self {
        Self::with(1e-4, 128, 100)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub guidance_scale: f64,
    pub consistency: bool,
    /// Inclusive step range for the consistency block; `None` = all steps.
    pub consistency_steps: Option<[usize; 2]>,
    pub per_prompt: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self { guidance_scale: 2.5, consistency: false, consistency_steps: None, per_prompt: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub diversity_pairs: usize,
    pub retrieval_batch: usize,
    pub top_k: usize,
    pub retrieval_rounds: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { diversity_pairs: 300, retrieval_batch: 32, top_k: 3, retrieval_rounds: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub arch: ArchSection,
    pub schedule: ScheduleSection,
    pub data: DataSection,
    pub ingest: IngestConfig,
    /// Stage-1 first phase (synthetic data).
    pub stage1: StageSection,
    /// Stage-1 second phase (all 2D data, lower rate).
    pub stage1_mixed: StageSection,
    pub stage2: StageSection,
    pub sampling: SamplingSection,
    pub eval: EvalSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            arch: ArchSection::default(),
            schedule: ScheduleSection::default(),
            data: DataSection::default(),
            ingest: IngestConfig::default(),
            stage1: StageSection::with(1e-4, 128, 100),
            stage1_mixed: StageSection::with(1e-5, 128, 100),
            stage2: StageSection::with(1e-4, 32, 100),
            sampling: SamplingSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Format { what: "config", msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.schedule.steps >= 1, Invalid, "schedule needs at least one step");
        ensure!(self.data.fps > 0.0 && self.data.duration * self.data.fps >= 1.0, Invalid, "clips need at least 2 frames");
        ensure!(self.data.views >= 2, Invalid, "need at least 2 views");
        ensure!(!self.data.kinds.is_empty(), Invalid, "no motion kinds configured");
        for s in [&self.stage1, &self.stage1_mixed, &self.stage2] {
            ensure!(s.lr > 0.0 && s.batch_size >= 1, Invalid, "learning rate and batch size must be positive");
            ensure!((0.0..1.0).contains(&s.text_dropout), Invalid, "text dropout must be in [0, 1)");
        }
        ensure!(self.sampling.guidance_scale >= 0.0, Invalid, "guidance scale must be non-negative");
        if let Some([a, b]) = self.sampling.consistency_steps {
            ensure!(1 <= a && a <= b && b <= self.schedule.steps, Invalid, "consistency steps {a}..={b} outside 1..={}", self.schedule.steps);
        }
        ensure!(self.eval.top_k >= 1 && self.eval.retrieval_batch >= self.eval.top_k, Invalid, "retrieval batch must hold top-k candidates");
        self.arch_config()?.validate()
    }

    pub fn skeleton(&self) -> Result<Skeleton> {
        match self.data.skeleton {
            SkeletonKind::Toy => Skeleton::toy(self.data.fps),
            SkeletonKind::Smpl22 => Skeleton::smpl22(self.data.fps),
        }
    }

    pub fn frames(&self) -> usize {
        (self.data.duration * self.data.fps).round() as usize + 1
    }

    pub fn arch_config(&self) -> Result<ArchConfig> {
        let local = self.skeleton()?.joint_count() - 1;
        let a = &self.arch;
        let mut cfg = match a.preset {
            ArchPreset::Desk => ArchConfig::desk(local),
            ArchPreset::Paper => ArchConfig::paper(local),
        };
        cfg.d_model = a.d_model.unwrap_or(cfg.d_model);
        cfg.layers = a.layers.unwrap_or(cfg.layers);
        cfg.heads = a.heads.unwrap_or(cfg.heads);
        cfg.d_ff = a.d_ff.unwrap_or(cfg.d_ff);
        cfg.d_text = a.d_text.unwrap_or(cfg.d_text);
        cfg.text_tokens = a.text_tokens.unwrap_or(cfg.text_tokens);
        cfg.root_hidden = a.root_hidden.unwrap_or(cfg.root_hidden);
        cfg.text_seed = a.text_seed;
        Ok(cfg)
    }

    pub fn train_config(&self, stage: Stage, section: &StageSection, seed: u64) -> TrainConfig {
        TrainConfig {
            stage,
            lr: section.lr,
            batch_size: section.batch_size,
            epochs: section.epochs,
            text_dropout: section.text_dropout,
            beta1: section.beta1,
            beta2: section.beta2,
            adam_eps: section.adam_eps,
            seed,
        }
    }

    /// SHA-256 of the canonical JSON form of the whole config.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}
