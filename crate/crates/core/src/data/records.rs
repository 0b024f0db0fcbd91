//! Line-delimited JSON record files.
//!
//! One record per line, UTF-8. Numbers are written in shortest round-trip
//! decimal form, so every `f64` reads back bit for bit.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::{make_rig, CameraRig, MultiView2DMotion};
use crate::data::ingest::IngestRecord;
use crate::data::procedural::LabeledMotion;
use crate::data::samples::{SourceMotion, TrainingSample2D};
use crate::error::{ensure, Error, Result};
use crate::motion::{LocalMotion2D, Motion3D, Skeleton};

/// A 2D or 3D joint-position sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub fps: Option<f64>,
    pub joint_names: Vec<String>,
    /// Coordinates per joint: 2 or 3.
    pub dims: usize,
    /// `frames × joints × dims`, row-major.
    pub frames: Vec<f64>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Vec<f64>>,
}

impl MotionRecord {
    pub fn from_motion3d(m: &Motion3D, skel: &Skeleton, text: &str, label: Option<&str>) -> Result<Self> {
        ensure!(m.joints == skel.joint_count(), Shape, "motion has {} joints, skeleton {}", m.joints, skel.joint_count());
        Ok(Self {
            fps: Some(m.fps),
            joint_names: skel.joint_names().to_vec(),
            dims: 3,
            frames: m.points.iter().flatten().copied().collect(),
            text: text.to_string(),
            label: label.map(str::to_string),
            confidence: None,
        })
    }

    pub fn from_labeled(m: &LabeledMotion, skel: &Skeleton) -> Result<Self> {
        Self::from_motion3d(&m.motion, skel, &m.text, Some(m.kind.name()))
    }

    pub fn frame_count(&self) -> usize {
        let per = self.joint_names.len() * self.dims;
        if per == 0 {
            0
        } else {
            self.frames.len() / per
        }
    }

    fn check(&self) -> Result<()> {
        let per = self.joint_names.len() * self.dims;
        ensure!(per > 0 && self.frames.len() % per == 0, Shape, "{} values do not fit {} joints x {} dims", self.frames.len(), self.joint_names.len(), self.dims);
        Ok(())
    }

    /// Skeleton described by this record, root at index 0.
    pub fn skeleton(&self) -> Result<Skeleton> {
        let fps = self.fps.ok_or_else(|| Error::Invalid("record has no fps".into()))?;
        Skeleton::new(self.joint_names.clone(), 0, fps)
    }

    pub fn to_motion3d(&self) -> Result<Motion3D> {
        ensure!(self.dims == 3, Shape, "expected a 3D record, got {} dims", self.dims);
        self.check()?;
        let fps = self.fps.ok_or_else(|| Error::Invalid("record has no fps".into()))?;
        Motion3D::new(self.joint_names.len(), self.frames.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(), fps)
    }

    pub fn to_source(&self) -> Result<SourceMotion> {
        Ok(SourceMotion { motion: self.to_motion3d()?, text: self.text.clone(), label: self.label.clone() })
    }

    /// 2D record as ingestion input; missing confidence counts as fully
    /// confident.
    pub fn to_ingest(&self) -> Result<IngestRecord> {
        ensure!(self.dims == 2, Shape, "expected a 2D record, got {} dims", self.dims);
        self.check()?;
        let points: Vec<[f64; 2]> = self.frames.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let confidence = self.confidence.clone().unwrap_or_else(|| vec![1.0; points.len()]);
        ensure!(confidence.len() == points.len(), Shape, "confidence has {} entries, expected {}", confidence.len(), points.len());
        ensure!(confidence.iter().all(|c| (0.0..=1.0).contains(c)), Invalid, "confidence outside [0, 1]");
        Ok(IngestRecord { fps: self.fps, joint_names: self.joint_names.clone(), points, confidence, text: self.text.clone(), label: self.label.clone() })
    }
}

/// Root-relative 2D training motion (stage-1 input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRecord {
    /// Local joints `J - 1`.
    pub joints: usize,
    /// `frames × joints × 2`.
    pub offsets: Vec<f64>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl From<&TrainingSample2D> for LocalRecord {
    fn from(s: &TrainingSample2D) -> Self {
        Self { joints: s.local.joints, offsets: s.local.to_flat(), text: s.text.clone(), label: s.label.clone() }
    }
}

impl LocalRecord {
    pub fn to_sample(&self) -> Result<TrainingSample2D> {
        Ok(TrainingSample2D { text: self.text.clone(), local: LocalMotion2D::from_flat(self.joints, &self.offsets)?, label: self.label.clone() })
    }
}

/// Multi-view 2D motion on a camera ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewRecord {
    pub fps: f64,
    /// Full skeleton joint names, root first.
    pub joint_names: Vec<String>,
    pub frames: usize,
    pub views: usize,
    pub first_azimuth: f64,
    /// `frames × views × (joints - 1) × 2`.
    pub local: Vec<f64>,
    /// `frames × views × 2`.
    pub root_vel: Vec<f64>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl MultiViewRecord {
    pub fn new(mv: &MultiView2DMotion, rig: &CameraRig, skel: &Skeleton, text: &str, label: Option<&str>) -> Self {
        Self {
            fps: skel.fps(),
            joint_names: skel.joint_names().to_vec(),
            frames: mv.frames,
            views: mv.views,
            first_azimuth: rig.first_azimuth(),
            local: mv.local.iter().flatten().copied().collect(),
            root_vel: mv.root_vel.iter().flatten().copied().collect(),
            text: text.to_string(),
            label: label.map(str::to_string),
        }
    }

    pub fn motion(&self) -> Result<MultiView2DMotion> {
        let j = self.joint_names.len();
        ensure!(j >= 2, Shape, "record needs at least 2 joints");
        ensure!(self.local.len() % 2 == 0 && self.root_vel.len() % 2 == 0, Shape, "odd coordinate count");
        let pairs = |v: &[f64]| v.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        MultiView2DMotion::new(self.frames, self.views, j - 1, pairs(&self.local), pairs(&self.root_vel))
    }

    pub fn rig(&self) -> Result<CameraRig> {
        make_rig(self.views, self.first_azimuth)
    }

    pub fn skeleton(&self) -> Result<Skeleton> {
        Skeleton::new(self.joint_names.clone(), 0, self.fps)
    }
}

fn record_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format { what: "record file", msg: format!("{}:{line}: {msg}", path.display()) }
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| record_err(path, i + 1, e))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::Format { what: "record", msg: e.to_string() })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::project_motion;
    use crate::data::procedural::{synth_dataset, MotionKind};
    use proptest::prelude::*;

    #[test]
    fn motion_record_round_trip() {
        let skel = Skeleton::toy(20.0).unwrap();
        let ds = synth_dataset(&[MotionKind::Walk, MotionKind::Wave], 3, 1.0, &skel, 2).unwrap();
        let recs: Vec<MotionRecord> = ds.iter().map(|m| MotionRecord::from_labeled(m, &skel).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_jsonl(&path, &recs).unwrap();
        let back: Vec<MotionRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, recs);
        for (r, m) in back.iter().zip(&ds) {
            assert_eq!(r.to_motion3d().unwrap(), m.motion);
        }
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 3);
    }

    #[test]
    fn multiview_record_round_trip() {
        let skel = Skeleton::toy(20.0).unwrap();
        let ds = synth_dataset(&[MotionKind::Turn], 1, 1.0, &skel, 2).unwrap();
        let rig = make_rig(4, 0.7).unwrap();
        let mv = project_motion(&rig, &ds[0].motion, &skel).unwrap();
        let rec = MultiViewRecord::new(&mv, &rig, &skel, "turn", None);
        let line = serde_json::to_string(&rec).unwrap();
        let back: MultiViewRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back.motion().unwrap(), mv);
        assert_eq!(back.rig().unwrap(), rig);
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(&path, "{\"joints\":1,\"offsets\":[],\"text\":\"\"}\nnot json\n").unwrap();
        let err = read_jsonl::<LocalRecord>(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn two_d_record_defaults_to_full_confidence() {
        let rec = MotionRecord {
            fps: Some(30.0),
            joint_names: vec!["r".into(), "a".into()],
            dims: 2,
            frames: vec![0.0, 0.0, 1.0, 1.0],
            text: "x".into(),
            label: None,
            confidence: None,
        };
        assert_eq!(rec.to_ingest().unwrap().confidence, vec![1.0, 1.0]);
        assert!(rec.to_motion3d().is_err());
    }

    proptest! {
        #[test]
        fn floats_round_trip_bitwise(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..50)) {
            let rec = LocalRecord { joints: 1, offsets: vals.clone(), text: String::new(), label: None };
            let back: LocalRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
            for (a, b) in back.offsets.iter().zip(&vals) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
