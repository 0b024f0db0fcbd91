//! Procedural 3D motion clips on a simple kinematic body.
//!
//! Every clip starts with the root (pelvis) at the world origin. Frame `f`
//! sits at time `f / fps`; a clip of duration `D` has `round(D·fps) + 1`
//! frames so its last frame is at `t = D`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::motion::{Motion3D, Skeleton, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    Walk,
    Turn,
    Jump,
    Wave,
    Idle,
}

impl MotionKind {
    pub const ALL: [MotionKind; 5] = [MotionKind::Walk, MotionKind::Turn, MotionKind::Jump, MotionKind::Wave, MotionKind::Idle];

    pub fn name(self) -> &'static str {
        match self {
            MotionKind::Walk => "walk",
            MotionKind::Turn => "turn",
            MotionKind::Jump => "jump",
            MotionKind::Wave => "wave",
            MotionKind::Idle => "idle",
        }
    }

    pub fn canonical_prompt(self) -> &'static str {
        match self {
            MotionKind::Walk => "a person walks forward",
            MotionKind::Turn => "a person turns around",
            MotionKind::Jump => "a person jumps in place",
            MotionKind::Wave => "a person waves with the right hand",
            MotionKind::Idle => "a person stands still",
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MotionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown motion kind {s:?}")))
    }
}

/// Parameters of one clip. Field meaning per kind:
///
/// | kind | `speed` | `amplitude` | `frequency` |
/// |------|---------|-------------|-------------|
/// | walk | root speed, m/s | leg swing, rad | stride cycles per second |
/// | turn | yaw rate, rad/s (sign = direction) | step swing, rad | step cycles per second |
/// | jump | unused | apex height, m | unused |
/// | wave | unused | forearm swing, rad | waves per second |
/// | idle | unused | sway, rad | unused |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProceduralSpec {
    pub kind: MotionKind,
    pub duration: f64,
    pub fps: f64,
    pub speed: f64,
    pub amplitude: f64,
    pub frequency: f64,
    /// Initial facing yaw, radians.
    pub heading: f64,
    pub seed: u64,
}

impl ProceduralSpec {
    /// Draws kind-appropriate parameters from `seed`.
    pub fn random(kind: MotionKind, duration: f64, fps: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heading = rng.random_range(0.0..TAU);
        let (speed, amplitude, frequency) = match kind {
            MotionKind::Walk => (rng.random_range(0.6..1.6), rng.random_range(0.3..0.6), 0.0),
            MotionKind::Turn => {
                let rate = rng.random_range(0.8..1.6);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (sign * rate, rng.random_range(0.1..0.25), rng.random_range(1.0..1.8))
            }
            MotionKind::Jump => (0.0, rng.random_range(0.2..0.5), 0.0),
            MotionKind::Wave => (0.0, rng.random_range(0.3..0.6), rng.random_range(1.0..2.5)),
            MotionKind::Idle => (0.0, rng.random_range(0.02..0.08), 0.0),
        };
        let frequency = if kind == MotionKind::Walk { 0.8 + 0.4 * speed } else { frequency };
        Self { kind, duration, fps, speed, amplitude, frequency, heading, seed }
    }

    pub fn frames(&self) -> usize {
        (self.duration * self.fps).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.fps.is_finite() && self.fps > 0.0, Invalid, "fps must be positive, got {}", self.fps);
        ensure!(self.duration.is_finite() && self.duration * self.fps >= 1.0, Invalid, "duration {} s at {} fps gives fewer than 2 frames", self.duration, self.fps);
        let needs_speed = matches!(self.kind, MotionKind::Walk | MotionKind::Turn);
        let needs_freq = matches!(self.kind, MotionKind::Walk | MotionKind::Turn | MotionKind::Wave);
        ensure!(self.amplitude.is_finite() && self.amplitude > 0.0, Invalid, "amplitude must be positive");
        ensure!(!needs_speed || (self.speed.is_finite() && self.speed != 0.0 && (self.kind == MotionKind::Turn || self.speed > 0.0)), Invalid, "speed must be positive");
        ensure!(!needs_freq || (self.frequency.is_finite() && self.frequency > 0.0), Invalid, "frequency must be positive");
        ensure!(self.heading.is_finite(), Invalid, "heading must be finite");
        Ok(())
    }

    /// Canonical prompt plus a phrase describing the clip's parameters.
    pub fn text(&self) -> String {
        let base = self.kind.canonical_prompt();
        let phrase = match self.kind {
            MotionKind::Walk if self.speed < 0.9 => " slowly",
            MotionKind::Walk if self.speed > 1.3 => " quickly",
            MotionKind::Turn if self.speed.abs() < 1.0 => " slowly",
            MotionKind::Turn if self.speed.abs() > 1.4 => " quickly",
            MotionKind::Jump if self.amplitude < 0.28 => " slightly",
            MotionKind::Jump if self.amplitude > 0.42 => " high",
            MotionKind::Wave if self.frequency < 1.5 => " slowly",
            MotionKind::Wave if self.frequency > 2.0 => " quickly",
            _ => "",
        };
        format!("{base}{phrase}")
    }
}

/// Kinematic pose parameters for one frame. Angles in radians; index 0 is
/// the left side, 1 the right.
#[derive(Debug, Clone, Copy, Default)]
struct Pose {
    root: Vec3,
    yaw: f64,
    /// Forward pitch of the upper arm.
    arm_swing: [f64; 2],
    /// Sideways raise of the upper arm.
    arm_raise: [f64; 2],
    /// Absolute forearm angle from vertical-up in the body's side plane, when
    /// the forearm is held up (waving).
    forearm_up: [Option<f64>; 2],
    leg_swing: [f64; 2],
    knee: [f64; 2],
}

const UPPER_ARM: f64 = 0.28;
const FOREARM: f64 = 0.25;
const THIGH: f64 = 0.42;
const SHIN: f64 = 0.42;

fn side_sign(s: usize) -> f64 {
    if s == 0 {
        1.0
    } else {
        -1.0
    }
}

fn add(a: Vec3, b: Vec3, k: f64) -> Vec3 {
    [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2]]
}

impl Pose {
    /// Landmark in body coordinates `(lateral, up, forward)`, left = +lateral.
    fn body_point(&self, name: &str) -> Option<Vec3> {
        let (side, part) = match name.split_once('_') {
            Some(("left", p)) => (Some(0), p),
            Some(("right", p)) => (Some(1), p),
            _ => (None, name),
        };
        let Some(s) = side else {
            return match part {
                "pelvis" => Some([0.0; 3]),
                "spine1" => Some([0.0, 0.1, 0.0]),
                "spine2" => Some([0.0, 0.2, 0.0]),
                "spine3" | "chest" => Some([0.0, 0.3, 0.0]),
                "neck" => Some([0.0, 0.5, 0.0]),
                "head" => Some([0.0, 0.65, 0.03]),
                _ => None,
            };
        };
        let sg = side_sign(s);
        let shoulder = [sg * 0.18, 0.45, 0.0];
        let (a, r) = (self.arm_swing[s], self.arm_raise[s]);
        let upper = [sg * r.sin(), -r.cos() * a.cos(), r.cos() * a.sin()];
        let elbow = add(shoulder, upper, UPPER_ARM);
        let fore = match self.forearm_up[s] {
            Some(psi) => [sg * psi.sin(), psi.cos(), 0.0],
            None => [sg * r.sin(), -r.cos() * (a + 0.3).cos(), r.cos() * (a + 0.3).sin()],
        };
        let wrist = add(elbow, fore, FOREARM);
        let hip = [sg * 0.1, -0.05, 0.0];
        let (b, k) = (self.leg_swing[s], self.knee[s]);
        let knee = add(hip, [0.0, -b.cos(), b.sin()], THIGH);
        let ankle = add(knee, [0.0, -(b - k).cos(), (b - k).sin()], SHIN);
        match part {
            "collar" => Some([sg * 0.07, 0.44, 0.0]),
            "shoulder" => Some(shoulder),
            "elbow" => Some(elbow),
            "wrist" | "hand" => Some(wrist),
            "hip" => Some(hip),
            "knee" => Some(knee),
            "ankle" => Some(ankle),
            "foot" => Some(add(ankle, [0.0, -0.06, 0.12], 1.0)),
            _ => None,
        }
    }

    fn world_point(&self, name: &str) -> Option<Vec3> {
        let p = self.body_point(name)?;
        let (s, c) = self.yaw.sin_cos();
        let fwd = [s, 0.0, c];
        let lat = [c, 0.0, -s];
        Some([
            self.root[0] + p[0] * lat[0] + p[2] * fwd[0],
            self.root[1] + p[1],
            self.root[2] + p[0] * lat[2] + p[2] * fwd[2],
        ])
    }
}

fn ease(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    0.5 * (1.0 - (PI * u).cos())
}

/// Sum of a few seeded low-frequency sinusoids, zero at `t = 0`.
struct Wobble {
    terms: Vec<(f64, f64, f64)>,
}

impl Wobble {
    fn new(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        let terms = (0..3)
            .map(|_| (amplitude * rng.random_range(0.3..1.0), rng.random_range(0.2..1.2), rng.random_range(0.0..TAU)))
            .collect();
        Self { terms }
    }

    fn at(&self, t: f64) -> f64 {
        self.terms.iter().map(|(a, f, p)| a * ((TAU * f * t + p).sin() - p.sin())).sum()
    }
}

fn pose_at(spec: &ProceduralSpec, t: f64, idle: &[Wobble]) -> Pose {
    let mut pose = Pose { yaw: spec.heading, ..Pose::default() };
    let u = t / spec.duration;
    match spec.kind {
        MotionKind::Walk => {
            let phase = TAU * spec.frequency * t;
            let swing = spec.amplitude * phase.sin();
            pose.root = [spec.heading.sin() * spec.speed * t, -0.03 * phase.sin().powi(2), spec.heading.cos() * spec.speed * t];
            pose.leg_swing = [swing, -swing];
            pose.knee = [0.6 * spec.amplitude * (phase.cos().max(0.0)), 0.6 * spec.amplitude * ((-phase.cos()).max(0.0))];
            pose.arm_swing = [-0.7 * swing, 0.7 * swing];
        }
        MotionKind::Turn => {
            let total = spec.speed * spec.duration;
            pose.yaw = spec.heading + total * ease(u);
            let step = spec.amplitude * (TAU * spec.frequency * t).sin();
            pose.leg_swing = [step, -step];
            pose.knee = [step.abs(), step.abs()];
            pose.arm_raise = [0.1, 0.1];
        }
        MotionKind::Jump => {
            let lift = (PI * u).sin();
            pose.root = [0.0, 4.0 * spec.amplitude * u * (1.0 - u), 0.0];
            pose.knee = [0.5 * (1.0 - lift), 0.5 * (1.0 - lift)];
            pose.leg_swing = [0.25 * (1.0 - lift), 0.25 * (1.0 - lift)];
            pose.arm_swing = [1.8 * lift, 1.8 * lift];
        }
        MotionKind::Wave => {
            let raise = ease(t / 0.3);
            pose.arm_raise = [0.1, 0.1 + 2.3 * raise];
            pose.forearm_up[1] = Some(PI * (1.0 - raise) + raise * (0.3 + spec.amplitude * (TAU * spec.frequency * t).sin()));
        }
        MotionKind::Idle => {
            pose.root = [0.1 * idle[0].at(t), 0.0, 0.1 * idle[1].at(t)];
            pose.yaw += idle[2].at(t);
            pose.arm_swing = [idle[3].at(t), idle[4].at(t)];
            pose.arm_raise = [0.1 + idle[5].at(t).abs(), 0.1 + idle[6].at(t).abs()];
            pose.leg_swing = [idle[7].at(t), idle[7].at(t)];
        }
    }
    pose
}

/// Generates a clip and its text description. Deterministic in `spec`.
pub fn gen_procedural(spec: &ProceduralSpec, skel: &Skeleton) -> Result<(Motion3D, String)> {
    spec.validate()?;
    let names = skel.joint_names();
    let root_name = &names[skel.root_index()];
    ensure!(root_name == "pelvis", Invalid, "procedural body needs the pelvis as root, skeleton root is {root_name:?}");
    let probe = Pose::default();
    if let Some(bad) = names.iter().find(|n| probe.body_point(n).is_none()) {
        return Err(Error::Invalid(format!("procedural body has no joint named {bad:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x1D1E);
    let idle: Vec<Wobble> = (0..8).map(|_| Wobble::new(&mut rng, spec.amplitude)).collect();
    let n = spec.frames();
    let mut points = Vec::with_capacity(n * names.len());
    for f in 0..n {
        let pose = pose_at(spec, f as f64 / spec.fps, &idle);
        points.extend(names.iter().map(|j| pose.world_point(j).expect("joint checked above")));
    }
    Ok((Motion3D::new(names.len(), points, spec.fps)?, spec.text()))
}

/// One generated clip with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMotion {
    pub motion: Motion3D,
    pub text: String,
    pub kind: MotionKind,
}

/// `count` clips cycling through `kinds`, seeded per clip from `seed`.
pub fn synth_dataset(kinds: &[MotionKind], count: usize, duration: f64, skel: &Skeleton, seed: u64) -> Result<Vec<LabeledMotion>> {
    ensure!(!kinds.is_empty(), Invalid, "no motion kinds requested");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..count).map(|_| rng.random()).collect();
    let fps = skel.fps();
    let out = crate::par::map_range(count, |i| {
        let kind = kinds[i % kinds.len()];
        let spec = ProceduralSpec::random(kind, duration, fps, seeds[i]);
        gen_procedural(&spec, skel).map(|(motion, text)| LabeledMotion { motion, text, kind })
    });
    out.into_iter().collect()
}
