//! Training samples derived from 3D clips by virtual-camera projection.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{camera_embedding, make_rig, project_motion, CameraEmbedding, CameraRig, MultiView2DMotion};
use crate::error::{ensure, Result};
use crate::motion::{LocalMotion2D, Motion3D, Skeleton};

/// Stage-1 sample: text and root-relative 2D motion only.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample2D {
    pub text: String,
    pub local: LocalMotion2D,
    pub label: Option<String>,
}

/// Stage-2 sample: multi-view 2D motion and its cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSampleMV {
    pub text: String,
    pub motion: MultiView2DMotion,
    pub rig: CameraRig,
    pub cams: CameraEmbedding,
    pub label: Option<String>,
}

/// A source clip for [`build_samples`].
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMotion {
    pub motion: Motion3D,
    pub text: String,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Single,
    Multi { views: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Single(Vec<TrainingSample2D>),
    Multi(Vec<TrainingSampleMV>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Single(s) => s.len(),
            Samples::Multi(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Projects each clip through a camera ring whose first azimuth is drawn from
/// `rng`. Single mode uses one camera and keeps local motion only.
pub fn build_samples(motions: &[SourceMotion], mode: SampleMode, skel: &Skeleton, rng: &mut ChaCha8Rng) -> Result<Samples> {
    ensure!(!motions.is_empty(), Invalid, "no motions to build samples from");
    let azimuths: Vec<f64> = motions.iter().map(|_| rng.random_range(0.0..TAU)).collect();
    match mode {
        SampleMode::Single => {
            let out = crate::par::map_range(motions.len(), |i| {
                let rig = CameraRig::from_azimuths(&[azimuths[i]])?;
                let mv = project_motion(&rig, &motions[i].motion, skel)?;
                Ok(TrainingSample2D {
                    text: motions[i].text.clone(),
                    local: LocalMotion2D { joints: mv.joints, offsets: mv.local },
                    label: motions[i].label.clone(),
                })
            });
            Ok(Samples::Single(out.into_iter().collect::<Result<_>>()?))
        }
        SampleMode::Multi { views } => {
            ensure!(views >= 2, Invalid, "multi-view samples need at least 2 views, got {views}");
            let out = crate::par::map_range(motions.len(), |i| {
                let rig = make_rig(views, azimuths[i])?;
                let motion = project_motion(&rig, &motions[i].motion, skel)?;
                Ok(TrainingSampleMV {
                    text: motions[i].text.clone(),
                    motion,
                    cams: camera_embedding(&rig),
                    rig,
                    label: motions[i].label.clone(),
                })
            });
            Ok(Samples::Multi(out.into_iter().collect::<Result<_>>()?))
        }
    }
}

/// Convenience: a seeded generator for [`build_samples`].
pub fn sample_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
