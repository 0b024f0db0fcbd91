//! Binary parameter checkpoints.
//!
//! Layout: the 8-byte magic `MVMCKPT1`, a little-endian `u64` header length,
//! a JSON header, then every array's values as little-endian `f64` in header
//! order. The header records the architecture, view count, schedule, and a
//! SHA-256 fingerprint of the parameter layout; loading rebuilds the layout
//! from the recorded architecture and rejects any mismatch.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::denoiser::{ArchConfig, Denoiser2D, DenoiserMV};
use crate::diffusion::{make_schedule, NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::nn::ParamSet;

const MAGIC: &[u8; 8] = b"MVMCKPT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Single,
    Multi,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScheduleMeta {
    steps: usize,
    kind: ScheduleKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayMeta {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    fingerprint: String,
    arch: ArchConfig,
    views: usize,
    schedule: ScheduleMeta,
    arrays: Vec<ArrayMeta>,
}

#[derive(Debug, Clone)]
pub enum Model {
    Single(Denoiser2D),
    Multi(DenoiserMV),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Single(_) => ModelKind::Single,
            Model::Multi(_) => ModelKind::Multi,
        }
    }

    pub fn arch(&self) -> &ArchConfig {
        match self {
            Model::Single(m) => m.config(),
            Model::Multi(m) => m.config(),
        }
    }

    fn params(&self) -> &ParamSet {
        match self {
            Model::Single(m) => m.params(),
            Model::Multi(m) => m.params(),
        }
    }

    fn views(&self) -> usize {
        match self {
            Model::Single(_) => 1,
            Model::Multi(m) => m.views(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub schedule: NoiseSchedule,
}

/// SHA-256 over the model kind, architecture, view count, and every array's
/// name and shape.
pub fn fingerprint(kind: ModelKind, arch: &ArchConfig, views: usize, params: &ParamSet) -> String {
    let layout: Vec<(&str, &[usize])> = params.entries.iter().map(|e| (e.name.as_str(), e.shape.as_slice())).collect();
    let canonical = serde_json::to_vec(&(kind, arch, views, layout)).expect("layout serializes");
    hex(&Sha256::digest(&canonical))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format { what: "checkpoint", msg: msg.into() }
}

pub fn to_bytes(model: &Model, schedule: &NoiseSchedule) -> Vec<u8> {
    let ps = model.params();
    let header = Header {
        kind: model.kind(),
        fingerprint: fingerprint(model.kind(), model.arch(), model.views(), ps),
        arch: model.arch().clone(),
        views: model.views(),
        schedule: ScheduleMeta { steps: schedule.steps(), kind: schedule.kind() },
        arrays: ps.entries.iter().map(|e| ArrayMeta { name: e.name.clone(), shape: e.shape.clone(), trainable: e.trainable }).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * ps.scalar_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for e in &ps.entries {
        for v in &e.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(format_err("missing magic bytes"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16usize.saturating_add(hlen)).ok_or_else(|| format_err("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| format_err(e.to_string()))?;
    let mut data = &bytes[16 + hlen..];

    let mut model = match header.kind {
        ModelKind::Single => Model::Single(Denoiser2D::new(header.arch.clone(), 0)?),
        ModelKind::Multi => Model::Multi(DenoiserMV::skeleton(header.arch.clone(), header.views)?),
    };
    let expected = fingerprint(header.kind, &header.arch, header.views, model.params());
    if expected != header.fingerprint {
        return Err(Error::Fingerprint { expected, found: header.fingerprint });
    }
    let ps = match &mut model {
        Model::Single(m) => m.params_mut(),
        Model::Multi(m) => m.params_mut(),
    };
    if ps.len() != header.arrays.len() {
        return Err(format_err(format!("{} arrays stored, layout has {}", header.arrays.len(), ps.len())));
    }
    for (e, meta) in ps.entries.iter_mut().zip(&header.arrays) {
        if e.name != meta.name || e.shape != meta.shape {
            return Err(format_err(format!("array {} does not match layout entry {}", meta.name, e.name)));
        }
        let n = e.value.len() * 8;
        if data.len() < n {
            return Err(format_err(format!("truncated data in {}", e.name)));
        }
        for (v, chunk) in e.value.iter_mut().zip(data[..n].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        e.trainable = meta.trainable;
        data = &data[n..];
    }
    if !data.is_empty() {
        return Err(format_err(format!("{} trailing bytes", data.len())));
    }
    let schedule = make_schedule(header.schedule.steps, header.schedule.kind)?;
    Ok(Checkpoint { model, schedule })
}

pub fn save(path: impl AsRef<Path>, model: &Model, schedule: &NoiseSchedule) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&to_bytes(model, schedule))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    from_bytes(&fs::read(path)?)
}

/// Loads a checkpoint and requires it to match `kind` and `arch`.
pub fn load_expecting(path: impl AsRef<Path>, kind: ModelKind, arch: &ArchConfig) -> Result<Checkpoint> {
    let ck = load(path)?;
    if ck.model.kind() != kind || ck.model.arch() != arch {
        let views = ck.model.views();
        let want = match kind {
            ModelKind::Single => fingerprint(kind, arch, 1, Denoiser2D::new(arch.clone(), 0)?.params()),
            ModelKind::Multi => fingerprint(kind, arch, views, DenoiserMV::skeleton(arch.clone(), views)?.params()),
        };
        return Err(Error::Fingerprint { expected: want, found: fingerprint(ck.model.kind(), ck.model.arch(), views, ck.model.params()) });
    }
    Ok(ck)
}
