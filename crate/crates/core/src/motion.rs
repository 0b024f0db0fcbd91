//! Motion containers and the root/local decomposition.
//!
//! World space is Y-up, in meters. Screen space is x right, y up; after
//! normalization the sequence fits in `[-1, 1]²`.
//!
//! Velocities are sampled per frame with the repeat-last convention:
//! `v[f] = (p[f+1] - p[f]) * fps` for `f < N-1` and `v[N-1] = v[N-2]`, so
//! velocity channels line up frame for frame with position channels.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub type Vec2 = [f64; 2];
pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    joint_names: Vec<String>,
    root_index: usize,
    fps: f64,
}

impl Skeleton {
    pub fn new(joint_names: Vec<String>, root_index: usize, fps: f64) -> Result<Self> {
        ensure!(joint_names.len() >= 2, Invalid, "skeleton needs at least 2 joints, got {}", joint_names.len());
        ensure!(root_index < joint_names.len(), Invalid, "root index {root_index} out of range");
        ensure!(fps.is_finite() && fps > 0.0, Invalid, "fps must be positive, got {fps}");
        Ok(Self { joint_names, root_index, fps })
    }

    /// Eight-joint body used for fast experiments.
    pub fn toy(fps: f64) -> Result<Self> {
        Self::new(TOY_JOINTS.iter().map(|s| s.to_string()).collect(), 0, fps)
    }

    /// 22-joint body with the usual SMPL joint order.
    pub fn smpl22(fps: f64) -> Result<Self> {
        Self::new(SMPL22_JOINTS.iter().map(|s| s.to_string()).collect(), 0, fps)
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn with_fps(&self, fps: f64) -> Result<Self> {
        Self::new(self.joint_names.clone(), self.root_index, fps)
    }

    /// Non-root joint indices in ascending order; position `k` in a local
    /// motion tensor refers to joint `non_root()[k]`.
    pub fn non_root(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.joint_count()).filter(move |&j| j != self.root_index)
    }
}

pub const TOY_JOINTS: [&str; 8] = [
    "pelvis", "chest", "neck", "head", "left_hand", "right_hand", "left_foot", "right_foot",
];

pub const SMPL22_JOINTS: [&str; 22] = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot", "neck", "left_collar",
    "right_collar", "head", "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
];

/// 2D joint positions, `frames × joints`, with optional detection confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion2D {
    pub joints: usize,
    pub points: Vec<Vec2>,
    pub confidence: Option<Vec<f64>>,
}

impl Motion2D {
    pub fn new(joints: usize, points: Vec<Vec2>) -> Result<Self> {
        ensure!(joints > 0 && !points.is_empty(), Shape, "empty 2D motion");
        ensure!(points.len() % joints == 0, Shape, "{} points is not a multiple of {joints} joints", points.len());
        ensure!(points.iter().flatten().all(|v| v.is_finite()), NonFinite, "2D motion contains non-finite coordinates");
        Ok(Self { joints, points, confidence: None })
    }

    pub fn with_confidence(mut self, confidence: Vec<f64>) -> Result<Self> {
        ensure!(confidence.len() == self.points.len(), Shape, "confidence length {} != {}", confidence.len(), self.points.len());
        ensure!(confidence.iter().all(|c| (0.0..=1.0).contains(c)), Invalid, "confidence outside [0, 1]");
        self.confidence = Some(confidence);
        Ok(self)
    }

    pub fn frames(&self) -> usize {
        self.points.len() / self.joints
    }

    pub fn at(&self, frame: usize, joint: usize) -> Vec2 {
        self.points[frame * self.joints + joint]
    }

    pub fn frame(&self, frame: usize) -> &[Vec2] {
        &self.points[frame * self.joints..(frame + 1) * self.joints]
    }
}

/// Root-relative 2D joint offsets, `frames × (J-1)`; the root is excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMotion2D {
    pub joints: usize,
    pub offsets: Vec<Vec2>,
}

impl LocalMotion2D {
    pub fn frames(&self) -> usize {
        self.offsets.len() / self.joints
    }

    /// Row-major `frames × joints × 2` flattening.
    pub fn to_flat(&self) -> Vec<f64> {
        self.offsets.iter().flatten().copied().collect()
    }

    pub fn from_flat(joints: usize, flat: &[f64]) -> Result<Self> {
        ensure!(joints > 0 && flat.len() % (2 * joints) == 0 && !flat.is_empty(), Shape, "flat length {} does not fit {joints} joints", flat.len());
        let offsets = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Ok(Self { joints, offsets })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootTrack2D {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
}

/// 3D joint positions, `frames × joints`, world Y-up meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion3D {
    pub joints: usize,
    pub points: Vec<Vec3>,
    pub fps: f64,
}

impl Motion3D {
    pub fn new(joints: usize, points: Vec<Vec3>, fps: f64) -> Result<Self> {
        ensure!(joints > 0 && !points.is_empty(), Shape, "empty 3D motion");
        ensure!(points.len() % joints == 0, Shape, "{} points is not a multiple of {joints} joints", points.len());
        ensure!(fps.is_finite() && fps > 0.0, Invalid, "fps must be positive, got {fps}");
        ensure!(points.iter().flatten().all(|v| v.is_finite()), NonFinite, "3D motion contains non-finite coordinates");
        Ok(Self { joints, points, fps })
    }

    pub fn frames(&self) -> usize {
        self.points.len() / self.joints
    }

    pub fn at(&self, frame: usize, joint: usize) -> Vec3 {
        self.points[frame * self.joints + joint]
    }

    pub fn frame(&self, frame: usize) -> &[Vec3] {
        &self.points[frame * self.joints..(frame + 1) * self.joints]
    }

    /// Copy with every joint translated so the root starts at the origin.
    pub fn rebased(&self, root: usize) -> Self {
        let r0 = self.at(0, root);
        let points = self.points.iter().map(|p| sub3(*p, r0)).collect();
        Self { joints: self.joints, points, fps: self.fps }
    }

    /// Root-mean-square joint distance between two motions of equal shape.
    pub fn rmse(&self, other: &Self) -> Result<f64> {
        ensure!(self.joints == other.joints && self.points.len() == other.points.len(), Shape, "motion shapes differ");
        let sq: f64 = self.points.iter().zip(&other.points).map(|(a, b)| norm2_3(sub3(*a, *b))).sum();
        Ok((sq / self.points.len() as f64).sqrt())
    }
}

/// Global root path: `positions[f+1] = positions[f] + velocities[f] * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory3D {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub dt: f64,
}

impl Trajectory3D {
    /// Integrates velocities forward from `start`.
    pub fn accumulate(start: Vec3, velocities: Vec<Vec3>, dt: f64) -> Self {
        let mut positions = Vec::with_capacity(velocities.len());
        if !velocities.is_empty() {
            positions.push(start);
        }
        for v in velocities.iter().take(velocities.len().saturating_sub(1)) {
            let x = positions[positions.len() - 1];
            positions.push([x[0] + v[0] * dt, x[1] + v[1] * dt, x[2] + v[2] * dt]);
        }
        Self { positions, velocities, dt }
    }
}

/// Sequence-level bounding-box normalization: `out = (p - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBoxNorm {
    pub center: Vec2,
    pub scale: f64,
}

impl BBoxNorm {
    pub fn apply(&self, p: Vec2) -> Vec2 {
        [(p[0] - self.center[0]) * self.scale, (p[1] - self.center[1]) * self.scale]
    }

    pub fn invert(&self, p: Vec2) -> Vec2 {
        [p[0] / self.scale + self.center[0], p[1] / self.scale + self.center[1]]
    }
}

pub(crate) fn sub2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn add2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub(crate) fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn norm2_3(a: Vec3) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

/// Repeat-last finite-difference velocities. Requires at least 2 samples.
pub fn velocities<const D: usize>(positions: &[[f64; D]], fps: f64) -> Result<Vec<[f64; D]>> {
    let n = positions.len();
    ensure!(n >= 2, Invalid, "velocity needs at least 2 frames, got {n}");
    let mut out = Vec::with_capacity(n);
    for w in positions.windows(2) {
        out.push(std::array::from_fn(|i| (w[1][i] - w[0][i]) * fps));
    }
    out.push(out[n - 2]);
    Ok(out)
}

fn check_joints(joints: usize, skel: &Skeleton) -> Result<()> {
    if joints != skel.joint_count() {
        return Err(Error::Shape(format!("motion has {joints} joints, skeleton has {}", skel.joint_count())));
    }
    Ok(())
}

pub fn decompose_2d(m: &Motion2D, skel: &Skeleton) -> Result<(RootTrack2D, LocalMotion2D)> {
    check_joints(m.joints, skel)?;
    let root = skel.root_index();
    let positions: Vec<Vec2> = (0..m.frames()).map(|f| m.at(f, root)).collect();
    let velocities = velocities(&positions, skel.fps())?;
    let mut offsets = Vec::with_capacity(m.frames() * (m.joints - 1));
    for f in 0..m.frames() {
        let r = positions[f];
        offsets.extend(skel.non_root().map(|j| sub2(m.at(f, j), r)));
    }
    Ok((RootTrack2D { positions, velocities }, LocalMotion2D { joints: m.joints - 1, offsets }))
}

pub fn recompose_2d(root: &RootTrack2D, local: &LocalMotion2D, skel: &Skeleton) -> Result<Motion2D> {
    ensure!(local.joints + 1 == skel.joint_count(), Shape, "local motion has {} joints, skeleton expects {}", local.joints, skel.joint_count() - 1);
    ensure!(root.positions.len() == local.frames(), Shape, "root has {} frames, local motion {}", root.positions.len(), local.frames());
    let j = skel.joint_count();
    let ri = skel.root_index();
    let mut points = Vec::with_capacity(root.positions.len() * j);
    for (f, &r) in root.positions.iter().enumerate() {
        let row = &local.offsets[f * local.joints..(f + 1) * local.joints];
        let mut k = 0;
        for joint in 0..j {
            if joint == ri {
                points.push(r);
            } else {
                points.push(add2(r, row[k]));
                k += 1;
            }
        }
    }
    Motion2D::new(j, points)
}

pub fn normalize_bbox(m: &Motion2D) -> Result<(Motion2D, BBoxNorm)> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in m.points.iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    ensure!(lo[0].is_finite(), Invalid, "no finite points to bound");
    let half = ((hi[0] - lo[0]) / 2.0).max((hi[1] - lo[1]) / 2.0);
    ensure!(half > 0.0, Invalid, "degenerate bounding box: all points coincide");
    let norm = BBoxNorm { center: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0], scale: 1.0 / half };
    let points = m.points.iter().map(|&p| norm.apply(p)).collect();
    Ok((Motion2D { joints: m.joints, points, confidence: m.confidence.clone() }, norm))
}

/// Root-relative 3D offsets, `frames × (J-1)`, non-root joints ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMotion3D {
    pub joints: usize,
    pub offsets: Vec<Vec3>,
}

impl LocalMotion3D {
    pub fn frames(&self) -> usize {
        self.offsets.len() / self.joints
    }
}

pub fn decompose_3d(m: &Motion3D, skel: &Skeleton) -> Result<(Trajectory3D, LocalMotion3D)> {
    check_joints(m.joints, skel)?;
    let root = skel.root_index();
    let positions: Vec<Vec3> = (0..m.frames()).map(|f| m.at(f, root)).collect();
    let velocities = velocities(&positions, m.fps)?;
    let mut offsets = Vec::with_capacity(m.frames() * (m.joints - 1));
    for (f, &r) in positions.iter().enumerate() {
        offsets.extend(skel.non_root().map(|j| sub3(m.at(f, j), r)));
    }
    Ok((
        Trajectory3D { positions, velocities, dt: 1.0 / m.fps },
        LocalMotion3D { joints: m.joints - 1, offsets },
    ))
}

/// Places local offsets on a trajectory; inverse of [`decompose_3d`] when the
/// trajectory positions are the decomposed ones.
pub fn recompose_3d(traj: &Trajectory3D, local: &LocalMotion3D, skel: &Skeleton) -> Result<Motion3D> {
    ensure!(local.joints + 1 == skel.joint_count(), Shape, "local motion has {} joints, skeleton expects {}", local.joints, skel.joint_count() - 1);
    ensure!(traj.positions.len() == local.frames(), Shape, "trajectory has {} frames, local motion {}", traj.positions.len(), local.frames());
    let j = skel.joint_count();
    let ri = skel.root_index();
    let mut points = Vec::with_capacity(traj.positions.len() * j);
    for (f, &r) in traj.positions.iter().enumerate() {
        let row = &local.offsets[f * local.joints..(f + 1) * local.joints];
        let mut k = 0;
        for joint in 0..j {
            if joint == ri {
                points.push(r);
            } else {
                points.push(add3(r, row[k]));
                k += 1;
            }
        }
    }
    Motion3D::new(j, points, 1.0 / traj.dt)
}
