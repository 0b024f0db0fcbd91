//! Orthographic root-tracking cameras on a horizontal ring.
//!
//! A camera at azimuth `θ` (rotation about world +Y) projects with
//! `Π(θ) = [[cos θ, 0, -sin θ], [0, 1, 0]]`. Cameras follow the root, so the
//! root always lands on the screen center and only root-relative offsets and
//! root velocities are projected.

use std::f64::consts::PI;

use crate::error::{ensure, Result};
use crate::motion::{decompose_3d, Motion3D, Skeleton, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthoCamera {
    pub azimuth: f64,
}

impl OrthoCamera {
    pub fn rows(&self) -> [[f64; 3]; 2] {
        let (s, c) = self.azimuth.sin_cos();
        [[c, 0.0, -s], [0.0, 1.0, 0.0]]
    }

    pub fn project(&self, p: Vec3) -> Vec2 {
        let [r0, r1] = self.rows();
        [r0[0] * p[0] + r0[1] * p[1] + r0[2] * p[2], r1[0] * p[0] + r1[1] * p[1] + r1[2] * p[2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    cameras: Vec<OrthoCamera>,
}

impl CameraRig {
    /// Rig from explicit azimuths. Used for the ring and for tests of
    /// degenerate arrangements; at least one camera is required.
    pub fn from_azimuths(azimuths: &[f64]) -> Result<Self> {
        ensure!(!azimuths.is_empty(), Invalid, "rig needs at least one camera");
        ensure!(azimuths.iter().all(|a| a.is_finite()), NonFinite, "camera azimuth is not finite");
        Ok(Self { cameras: azimuths.iter().map(|&azimuth| OrthoCamera { azimuth }).collect() })
    }

    pub fn cameras(&self) -> &[OrthoCamera] {
        &self.cameras
    }

    pub fn views(&self) -> usize {
        self.cameras.len()
    }

    pub fn first_azimuth(&self) -> f64 {
        self.cameras[0].azimuth
    }

    /// Azimuth of each view relative to the first one.
    pub fn relative_azimuths(&self) -> Vec<f64> {
        let a0 = self.first_azimuth();
        self.cameras.iter().map(|c| c.azimuth - a0).collect()
    }
}

/// `views` cameras spaced `2π / views` apart, starting at `first_azimuth`.
pub fn make_rig(views: usize, first_azimuth: f64) -> Result<CameraRig> {
    ensure!(views >= 2, Invalid, "a rig needs at least 2 views, got {views}");
    let step = 2.0 * PI / views as f64;
    let az: Vec<f64> = (0..views).map(|v| first_azimuth + v as f64 * step).collect();
    CameraRig::from_azimuths(&az)
}

/// Per-view relative pose as a unit quaternion `(w, x, y, z)` about +Y.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraEmbedding {
    pub quats: Vec<[f64; 4]>,
}

impl CameraEmbedding {
    pub fn views(&self) -> usize {
        self.quats.len()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { quats: perm.iter().map(|&p| self.quats[p]).collect() }
    }
}

pub fn camera_embedding(rig: &CameraRig) -> CameraEmbedding {
    let a0 = rig.first_azimuth();
    let quats = rig
        .cameras()
        .iter()
        .enumerate()
        .map(|(v, c)| {
            if v == 0 {
                return [1.0, 0.0, 0.0, 0.0];
            }
            let (s, co) = ((c.azimuth - a0) / 2.0).sin_cos();
            [co, 0.0, s, 0.0]
        })
        .collect();
    CameraEmbedding { quats }
}

/// Multi-view root-relative 2D motion plus per-view 2D root velocities,
/// indexed `[frame][view][joint]` and `[frame][view]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiView2DMotion {
    pub frames: usize,
    pub views: usize,
    pub joints: usize,
    pub local: Vec<Vec2>,
    pub root_vel: Vec<Vec2>,
}

impl MultiView2DMotion {
    pub fn new(frames: usize, views: usize, joints: usize, local: Vec<Vec2>, root_vel: Vec<Vec2>) -> Result<Self> {
        ensure!(frames >= 1 && views >= 1 && joints >= 1, Shape, "empty multi-view motion");
        ensure!(local.len() == frames * views * joints, Shape, "local has {} points, expected {}x{}x{}", local.len(), frames, views, joints);
        ensure!(root_vel.len() == frames * views, Shape, "root velocity has {} entries, expected {}x{}", root_vel.len(), frames, views);
        ensure!(
            local.iter().chain(&root_vel).flatten().all(|x| x.is_finite()),
            NonFinite,
            "multi-view motion contains non-finite values"
        );
        Ok(Self { frames, views, joints, local, root_vel })
    }

    pub fn local_at(&self, f: usize, v: usize, k: usize) -> Vec2 {
        self.local[(f * self.views + v) * self.joints + k]
    }

    pub fn root_at(&self, f: usize, v: usize) -> Vec2 {
        self.root_vel[f * self.views + v]
    }

    /// Diffusion-state layout: per view, `frames × (joints·2 + 2)` rows where
    /// the last two channels hold the root velocity.
    pub fn to_state(&self) -> Vec<f64> {
        let c = self.joints * 2 + 2;
        let mut out = Vec::with_capacity(self.views * self.frames * c);
        for v in 0..self.views {
            for f in 0..self.frames {
                for k in 0..self.joints {
                    out.extend_from_slice(&self.local_at(f, v, k));
                }
                out.extend_from_slice(&self.root_at(f, v));
            }
        }
        out
    }

    pub fn from_state(frames: usize, views: usize, joints: usize, state: &[f64]) -> Result<Self> {
        let c = joints * 2 + 2;
        ensure!(state.len() == views * frames * c, Shape, "state length {} != {views}x{frames}x{c}", state.len());
        let mut local = vec![[0.0; 2]; frames * views * joints];
        let mut root_vel = vec![[0.0; 2]; frames * views];
        for v in 0..views {
            for f in 0..frames {
                let row = &state[(v * frames + f) * c..(v * frames + f + 1) * c];
                for k in 0..joints {
                    local[(f * views + v) * joints + k] = [row[2 * k], row[2 * k + 1]];
                }
                root_vel[f * views + v] = [row[c - 2], row[c - 1]];
            }
        }
        Self::new(frames, views, joints, local, root_vel)
    }

    /// Reorders views: output view `i` is input view `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for f in 0..self.frames {
            for (i, &p) in perm.iter().enumerate() {
                for k in 0..self.joints {
                    out.local[(f * self.views + i) * self.joints + k] = self.local_at(f, p, k);
                }
                out.root_vel[f * self.views + i] = self.root_at(f, p);
            }
        }
        out
    }
}

/// Projects a 3D motion into every camera of the rig.
pub fn project_motion(rig: &CameraRig, m: &Motion3D, skel: &Skeleton) -> Result<MultiView2DMotion> {
    let (traj, local3) = decompose_3d(m, skel)?;
    let (n, v, j) = (m.frames(), rig.views(), local3.joints);
    let mut local = Vec::with_capacity(n * v * j);
    let mut root_vel = Vec::with_capacity(n * v);
    for f in 0..n {
        let offs = &local3.offsets[f * j..(f + 1) * j];
        for cam in rig.cameras() {
            local.extend(offs.iter().map(|&o| cam.project(o)));
            root_vel.push(cam.project(traj.velocities[f]));
        }
    }
    MultiView2DMotion::new(n, v, j, local, root_vel)
}
