//! SVG rendering of 3D motion: stick-figure snapshots and a top-down root
//! trajectory.

use std::fmt::Write as _;

use crate::error::{ensure, Result};
use crate::motion::{Motion3D, Skeleton, Vec3};

const BONES: &[(&str, &str)] = &[
    ("pelvis", "chest"),
    ("chest", "neck"),
    ("neck", "head"),
    ("chest", "left_hand"),
    ("chest", "right_hand"),
    ("pelvis", "left_foot"),
    ("pelvis", "right_foot"),
    ("pelvis", "left_hip"),
    ("pelvis", "right_hip"),
    ("pelvis", "spine1"),
    ("left_hip", "left_knee"),
    ("right_hip", "right_knee"),
    ("spine1", "spine2"),
    ("left_knee", "left_ankle"),
    ("right_knee", "right_ankle"),
    ("spine2", "spine3"),
    ("left_ankle", "left_foot"),
    ("right_ankle", "right_foot"),
    ("spine3", "neck"),
    ("spine3", "left_collar"),
    ("spine3", "right_collar"),
    ("neck", "head"),
    ("left_collar", "left_shoulder"),
    ("right_collar", "right_shoulder"),
    ("left_shoulder", "left_elbow"),
    ("right_shoulder", "right_elbow"),
    ("left_elbow", "left_wrist"),
    ("right_elbow", "right_wrist"),
];

/// Bones as joint index pairs. Known joint names are connected anatomically;
/// any joint left unconnected is attached to the root.
pub fn bones(skel: &Skeleton) -> Vec<(usize, usize)> {
    let names = skel.joint_names();
    let idx = |n: &str| names.iter().position(|x| x == n);
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (a, b) in BONES {
        if let (Some(i), Some(j)) = (idx(a), idx(b)) {
            if !out.contains(&(i, j)) {
                out.push((i, j));
            }
        }
    }
    let root = skel.root_index();
    for j in skel.non_root() {
        if !out.iter().any(|&(a, b)| a == j || b == j) {
            out.push((root, j));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotOptions {
    pub width: f64,
    pub height: f64,
    /// Number of evenly spaced frames drawn as stick figures.
    pub snapshots: usize,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { width: 800.0, height: 400.0, snapshots: 5 }
    }
}

struct Frame {
    min: [f64; 2],
    scale: f64,
    origin: [f64; 2],
    height: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>, origin: [f64; 2], w: f64, h: f64) -> Self {
        let (mut min, mut max) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for i in 0..2 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
        let span = (max[0] - min[0]).max(max[1] - min[1]).max(1e-9);
        Self { min, scale: 0.9 * w.min(h) / span, origin: [origin[0] + 0.05 * w, origin[1] + 0.05 * h], height: 0.9 * h }
    }

    fn map(&self, p: [f64; 2]) -> [f64; 2] {
        [self.origin[0] + (p[0] - self.min[0]) * self.scale, self.origin[1] + self.height - (p[1] - self.min[1]) * self.scale]
    }
}

fn side(p: Vec3) -> [f64; 2] {
    [p[0], p[1]]
}

fn top(p: Vec3) -> [f64; 2] {
    [p[0], p[2]]
}

/// Left panel: side view (x, y) of evenly spaced snapshots. Right panel:
/// top-down (x, z) root trajectory.
pub fn render_svg(m: &Motion3D, skel: &Skeleton, title: &str, opts: &PlotOptions) -> Result<String> {
    ensure!(m.joints == skel.joint_count(), Shape, "motion has {} joints, skeleton {}", m.joints, skel.joint_count());
    ensure!(opts.snapshots >= 1 && opts.width > 0.0 && opts.height > 0.0, Invalid, "invalid plot size");
    let n = m.frames();
    let (w, h) = (opts.width, opts.height);
    let pw = w / 2.0;
    let body = Frame::fit(m.points.iter().map(|&p| side(p)), [0.0, 0.0], pw, h);
    let root: Vec<Vec3> = (0..n).map(|f| m.at(f, skel.root_index())).collect();
    let path = Frame::fit(root.iter().map(|&p| top(p)), [pw, 0.0], pw, h);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="8" y="16" font-family="sans-serif" font-size="12">{}</text>"#, escape(title));
    let shots: Vec<usize> = if opts.snapshots == 1 || n == 1 {
        vec![0]
    } else {
        (0..opts.snapshots).map(|i| i * (n - 1) / (opts.snapshots - 1)).collect()
    };
    let bones = bones(skel);
    for (s, &f) in shots.iter().enumerate() {
        let shade = 200 - (150 * s / shots.len().max(1)) as i32;
        let _ = writeln!(svg, r#"<g stroke="rgb({shade},{shade},255)" stroke-width="2">"#);
        for &(a, b) in &bones {
            let (p, q) = (body.map(side(m.at(f, a))), body.map(side(m.at(f, b))));
            let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#, p[0], p[1], q[0], q[1]);
        }
        let _ = writeln!(svg, "</g>");
    }
    let pts: Vec<String> = root.iter().map(|&p| path.map(top(p))).map(|p| format!("{:.2},{:.2}", p[0], p[1])).collect();
    let _ = writeln!(svg, r#"<polyline fill="none" stroke="crimson" stroke-width="2" points="{}"/>"#, pts.join(" "));
    let start = path.map(top(root[0]));
    let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="crimson"/>"#, start[0], start[1]);
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
