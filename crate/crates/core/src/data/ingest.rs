//! Cleaning of externally estimated 2D pose sequences.
//!
//! Steps, in order: drop short sequences, fill low-confidence detections by
//! linear interpolation in time, smooth each coordinate with a centered
//! moving average (reflect padding), normalize by the sequence bounding box,
//! and keep the root-relative motion.

use serde::{Deserialize, Serialize};

use crate::data::samples::TrainingSample2D;
use crate::error::{ensure, Error, Result};
use crate::motion::{decompose_2d, normalize_bbox, Motion2D, Skeleton, Vec2};

/// One detected 2D pose sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestRecord {
    pub fps: Option<f64>,
    pub joint_names: Vec<String>,
    /// `frames × joints` positions.
    pub points: Vec<Vec2>,
    /// `frames × joints` detection confidences in `[0, 1]`.
    pub confidence: Vec<f64>,
    pub text: String,
    pub label: Option<String>,
}

impl IngestRecord {
    pub fn frames(&self) -> usize {
        if self.joint_names.is_empty() {
            0
        } else {
            self.points.len() / self.joint_names.len()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub conf_thresh: f64,
    pub min_len: usize,
    pub smooth_window: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { conf_thresh: 0.5, min_len: 16, smooth_window: 5 }
    }
}

/// Fraction of frames a joint must be confident in to be kept.
const MIN_CONFIDENT_FRACTION: f64 = 0.5;

/// Reflect-padding index for position `i` (possibly outside `0..n`), without
/// repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Centered moving average of odd width `window` with reflect padding.
pub fn moving_average(signal: &[f64], window: usize) -> Result<Vec<f64>> {
    ensure!(window % 2 == 1, Invalid, "smoothing window must be odd, got {window}");
    let n = signal.len();
    let half = (window / 2) as isize;
    Ok((0..n as isize)
        .map(|i| (-half..=half).map(|d| signal[reflect(i + d, n)]).sum::<f64>() / window as f64)
        .collect())
}

/// Replaces entries whose `keep` flag is false by linear interpolation between
/// the nearest kept neighbors, holding the nearest value past either end.
fn interpolate_gaps(values: &mut [Vec2], keep: &[bool]) {
    let known: Vec<usize> = (0..values.len()).filter(|&i| keep[i]).collect();
    if known.is_empty() {
        return;
    }
    for i in 0..values.len() {
        if keep[i] {
            continue;
        }
        let after = known.partition_point(|&k| k < i);
        values[i] = match (after.checked_sub(1).map(|b| known[b]), known.get(after).copied()) {
            (Some(a), Some(b)) => {
                let w = (i - a) as f64 / (b - a) as f64;
                [values[a][0] + w * (values[b][0] - values[a][0]), values[a][1] + w * (values[b][1] - values[a][1])]
            }
            (Some(a), None) => values[a],
            (None, Some(b)) => values[b],
            (None, None) => unreachable!("known is nonempty"),
        };
    }
}

/// Cleans one record. `Ok(None)` means the record was filtered out.
pub fn ingest_one(rec: &IngestRecord, cfg: &IngestConfig) -> Result<Option<TrainingSample2D>> {
    ensure!((0.0..=1.0).contains(&cfg.conf_thresh), Invalid, "confidence threshold must be in [0, 1]");
    ensure!(cfg.smooth_window >= 1 && cfg.smooth_window % 2 == 1, Invalid, "smoothing window must be odd and at least 1");
    let fps = rec.fps.ok_or_else(|| Error::Invalid("record has no fps".into()))?;
    let j = rec.joint_names.len();
    ensure!(j >= 2, Invalid, "record needs at least 2 joints");
    ensure!(rec.points.len() % j == 0 && rec.confidence.len() == rec.points.len(), Shape, "record arrays do not match {j} joints");
    let n = rec.frames();
    if n < cfg.min_len.max(2) {
        return Ok(None);
    }

    let confident = |f: usize, k: usize| rec.confidence[f * j + k] >= cfg.conf_thresh;
    let counts: Vec<usize> = (0..j).map(|k| (0..n).filter(|&f| confident(f, k)).count()).collect();
    ensure!(counts.iter().any(|&c| c > 0), Invalid, "no joint is ever detected with confidence >= {}", cfg.conf_thresh);
    if counts.iter().any(|&c| (c as f64) < MIN_CONFIDENT_FRACTION * n as f64) {
        return Ok(None);
    }

    let mut cleaned = vec![[0.0; 2]; n * j];
    for k in 0..j {
        let mut track: Vec<Vec2> = (0..n).map(|f| rec.points[f * j + k]).collect();
        let keep: Vec<bool> = (0..n).map(|f| confident(f, k)).collect();
        interpolate_gaps(&mut track, &keep);
        for axis in 0..2 {
            let sig: Vec<f64> = track.iter().map(|p| p[axis]).collect();
            for (f, v) in moving_average(&sig, cfg.smooth_window)?.into_iter().enumerate() {
                cleaned[f * j + k][axis] = v;
            }
        }
    }
    let (normalized, _) = normalize_bbox(&Motion2D::new(j, cleaned)?)?;
    let skel = Skeleton::new(rec.joint_names.clone(), 0, fps)?;
    let (_, local) = decompose_2d(&normalized, &skel)?;
    Ok(Some(TrainingSample2D { text: rec.text.clone(), local, label: rec.label.clone() }))
}

/// Cleans every record, keeping input order and dropping filtered ones.
pub fn ingest_2d(records: &[IngestRecord], cfg: &IngestConfig) -> Result<Vec<TrainingSample2D>> {
    let out = crate::par::map(records, |r| ingest_one(r, cfg));
    Ok(out.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}
