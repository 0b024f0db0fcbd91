//! Transformer denoisers predicting clean motion from noisy motion.
//!
//! The single-view network sees one token sequence
//! `[text, timestep, frame_0 .. frame_{N-1}]` and returns root-relative 2D
//! offsets per frame. The multi-view network runs the same (frozen) layers on
//! every view and interleaves, inside each layer, an attention block across
//! views at fixed frame. Camera embeddings and noisy root velocities enter
//! through new projections added to each view's frame tokens, and a new MLP
//! head reads root velocities off the final frame features. All new output
//! paths that touch the frozen stream start at zero.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraEmbedding, MultiView2DMotion};
use crate::error::{ensure, Error, Result};
use crate::nn::{sinusoidal, Activation, AttnCache, Attention, Grads, Init, LayerNorm, Linear, LnCache, Mat, Mlp, MlpCache, ParamSet};
use crate::text::{TextEmbedding, TextEncoder};

pub const TEXT_TOKENS: usize = 77;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Non-root joints `J - 1`.
    pub local_joints: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub d_text: usize,
    pub text_tokens: usize,
    pub root_hidden: usize,
    pub text_seed: u64,
}

impl ArchConfig {
    /// 8 layers, 4 heads, width 512, feed-forward 1024, 768-wide text.
    pub fn paper(local_joints: usize) -> Self {
        Self {
            local_joints,
            d_model: 512,
            layers: 8,
            heads: 4,
            d_ff: 1024,
            d_text: 768,
            text_tokens: TEXT_TOKENS,
            root_hidden: 256,
            text_seed: 0,
        }
    }

    pub fn desk(local_joints: usize) -> Self {
        Self {
            local_joints,
            d_model: 64,
            layers: 4,
            heads: 4,
            d_ff: 128,
            d_text: 64,
            text_tokens: TEXT_TOKENS,
            root_hidden: 256,
            text_seed: 0,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.local_joints * 2
    }

    pub fn text_encoder(&self) -> TextEncoder {
        TextEncoder::new(self.text_tokens, self.d_text, self.text_seed)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.local_joints >= 1, Invalid, "need at least one local joint");
        ensure!(self.d_model >= 2 && self.d_model % 2 == 0, Invalid, "model width must be even, got {}", self.d_model);
        ensure!(self.heads >= 1 && self.d_model % self.heads == 0, Invalid, "width {} not divisible by {} heads", self.d_model, self.heads);
        ensure!(self.layers >= 1 && self.d_ff >= 1 && self.d_text >= 2 && self.text_tokens >= 1 && self.root_hidden >= 1, Invalid, "architecture sizes must be positive");
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct BaseLayer {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    ff: Mlp,
}

#[derive(Debug, Clone)]
struct BaseLayout {
    input: Linear,
    text: Linear,
    time: Mlp,
    layers: Vec<BaseLayer>,
    final_ln: LayerNorm,
    output: Linear,
}

#[derive(Debug, Clone)]
struct ViewLayer {
    ln: LayerNorm,
    attn: Attention,
}

#[derive(Debug, Clone)]
struct MvLayout {
    views: Vec<ViewLayer>,
    camera: Linear,
    root_in: Linear,
    root_head: Mlp,
}

fn build_base(cfg: &ArchConfig, ps: &mut ParamSet, rng: &mut ChaCha8Rng) -> BaseLayout {
    let d = cfg.d_model;
    let input = Linear::new(ps, "input", cfg.feature_dim(), d, Init::Uniform, rng);
    let text = Linear::new(ps, "text", cfg.d_text, d, Init::Uniform, rng);
    let time = Mlp {
        l1: Linear::new(ps, "time.l1", d, d, Init::Uniform, rng),
        l2: Linear::new(ps, "time.l2", d, d, Init::Uniform, rng),
        act: Activation::Silu,
    };
    let layers = (0..cfg.layers)
        .map(|l| BaseLayer {
            ln1: LayerNorm::new(ps, &format!("layers.{l}.ln1"), d, rng),
            attn: Attention::new(ps, &format!("layers.{l}.attn"), d, cfg.heads, false, false, rng),
            ln2: LayerNorm::new(ps, &format!("layers.{l}.ln2"), d, rng),
            ff: Mlp {
                l1: Linear::new(ps, &format!("layers.{l}.ff.l1"), d, cfg.d_ff, Init::Uniform, rng),
                l2: Linear::new(ps, &format!("layers.{l}.ff.l2"), cfg.d_ff, d, Init::Uniform, rng),
                act: Activation::Gelu,
            },
        })
        .collect();
    let final_ln = LayerNorm::new(ps, "final_ln", d, rng);
    let output = Linear::new(ps, "output", d, cfg.feature_dim(), Init::Uniform, rng);
    BaseLayout { input, text, time, layers, final_ln, output }
}

fn build_mv(cfg: &ArchConfig, ps: &mut ParamSet, rng: &mut ChaCha8Rng) -> MvLayout {
    let d = cfg.d_model;
    let views = (0..cfg.layers)
        .map(|l| ViewLayer {
            ln: LayerNorm::new(ps, &format!("layers.{l}.view.ln"), d, rng),
            attn: Attention::new(ps, &format!("layers.{l}.view.attn"), d, cfg.heads, true, true, rng),
        })
        .collect();
    let camera = Linear::new(ps, "camera", 4, d, Init::Zeros, rng);
    let root_in = Linear::new(ps, "root_in", 2, d, Init::Zeros, rng);
    let root_head = Mlp {
        l1: Linear::new(ps, "root_head.l1", d, cfg.root_hidden, Init::Uniform, rng),
        l2: Linear::new(ps, "root_head.l2", cfg.root_hidden, 2, Init::Uniform, rng),
        act: Activation::Gelu,
    };
    MvLayout { views, camera, root_in, root_head }
}

/// Adapter parameter count in closed form.
pub fn adapter_param_count(cfg: &ArchConfig) -> usize {
    let d = cfg.d_model;
    let h = cfg.root_hidden;
    cfg.layers * (2 * d + 4 * (d * d + d)) + (4 * d + d) + (2 * d + d) + (d * h + h) + (h * 2 + 2)
}

// ---------------------------------------------------------------------------
// Shared forward/backward over V views

struct Conditioning<'a> {
    t: usize,
    text: &'a [f64],
    /// `V × 4` camera rows, present for the multi-view network.
    cams: Option<&'a [[f64; 4]]>,
}

struct LayerCache {
    ln1: LnCache,
    attn: AttnCache,
    view: Option<(LnCache, AttnCache)>,
    ln2: LnCache,
    ff: MlpCache,
}

struct Cache {
    views: usize,
    frames: usize,
    text_in: Mat,
    time: MlpCache,
    frames_in: Mat,
    cams_in: Option<Mat>,
    root_in: Option<Mat>,
    layers: Vec<LayerCache>,
    final_ln: LnCache,
    feats: Mat,
    root_head: Option<MlpCache>,
}

struct Outputs {
    local: Mat,
    root: Option<Mat>,
}

/// Row index of frame `f` of view `v` in the token matrix.
#[inline]
fn tok(seq: usize, v: usize, f: usize) -> usize {
    v * seq + 2 + f
}

fn gather_frames_view_major(x: &Mat, views: usize, frames: usize) -> Mat {
    let seq = frames + 2;
    let mut out = Mat::zeros(views * frames, x.cols);
    for v in 0..views {
        for f in 0..frames {
            out.row_mut(v * frames + f).copy_from_slice(x.row(tok(seq, v, f)));
        }
    }
    out
}

fn gather_frames_frame_major(x: &Mat, views: usize, frames: usize) -> Mat {
    let seq = frames + 2;
    let mut out = Mat::zeros(views * frames, x.cols);
    for f in 0..frames {
        for v in 0..views {
            out.row_mut(f * views + v).copy_from_slice(x.row(tok(seq, v, f)));
        }
    }
    out
}

fn scatter_add_frame_major(x: &mut Mat, z: &Mat, views: usize, frames: usize) {
    let seq = frames + 2;
    for f in 0..frames {
        for v in 0..views {
            let src = z.row(f * views + v).to_vec();
            for (a, b) in x.row_mut(tok(seq, v, f)).iter_mut().zip(src) {
                *a += b;
            }
        }
    }
}

fn forward_core(
    base: &BaseLayout,
    mv: Option<&MvLayout>,
    ps: &ParamSet,
    views: usize,
    frames: usize,
    local_in: &Mat,
    root_in: Option<&Mat>,
    cond: &Conditioning<'_>,
) -> (Outputs, Cache) {
    let d = base.final_ln.dim;
    let seq = frames + 2;

    let text_in = Mat::from_vec(1, cond.text.len(), cond.text.to_vec());
    let text_tok = base.text.forward(ps, &text_in);
    let (time_tok, time_cache) = base.time.forward(ps, &Mat::from_vec(1, d, sinusoidal(cond.t as f64, d)));

    let mut frame_tok = base.input.forward(ps, local_in);
    for v in 0..views {
        for f in 0..frames {
            let pe = sinusoidal(f as f64, d);
            for (a, p) in frame_tok.row_mut(v * frames + f).iter_mut().zip(pe) {
                *a += p;
            }
        }
    }
    let mut cams_in = None;
    let mut root_in_mat = None;
    if let (Some(mv), Some(cams)) = (mv, cond.cams) {
        let mut cm = Mat::zeros(views * frames, 4);
        for v in 0..views {
            for f in 0..frames {
                cm.row_mut(v * frames + f).copy_from_slice(&cams[v]);
            }
        }
        frame_tok.add_assign(&mv.camera.forward(ps, &cm));
        let r = root_in.expect("multi-view forward needs root input").clone();
        frame_tok.add_assign(&mv.root_in.forward(ps, &r));
        cams_in = Some(cm);
        root_in_mat = Some(r);
    }

    let mut x = Mat::zeros(views * seq, d);
    for v in 0..views {
        x.row_mut(v * seq).copy_from_slice(text_tok.row(0));
        x.row_mut(v * seq + 1).copy_from_slice(time_tok.row(0));
        for f in 0..frames {
            x.row_mut(tok(seq, v, f)).copy_from_slice(frame_tok.row(v * frames + f));
        }
    }

    let mut layer_caches = Vec::with_capacity(base.layers.len());
    for (l, layer) in base.layers.iter().enumerate() {
        let (a, ln1) = layer.ln1.forward(ps, &x);
        let (att, attn) = layer.attn.forward(ps, &a, seq);
        x.add_assign(&att);
        let view = mv.map(|mv| {
            let vl = &mv.views[l];
            let z = gather_frames_frame_major(&x, views, frames);
            let (b, lnc) = vl.ln.forward(ps, &z);
            let (va, ac) = vl.attn.forward(ps, &b, views);
            scatter_add_frame_major(&mut x, &va, views, frames);
            (lnc, ac)
        });
        let (c, ln2) = layer.ln2.forward(ps, &x);
        let (ff_out, ff) = layer.ff.forward(ps, &c);
        x.add_assign(&ff_out);
        layer_caches.push(LayerCache { ln1, attn, view, ln2, ff });
    }

    let (y, final_ln) = base.final_ln.forward(ps, &x);
    let feats = gather_frames_view_major(&y, views, frames);
    let local = base.output.forward(ps, &feats);
    let (root, root_head) = match mv {
        Some(mv) => {
            let (r, c) = mv.root_head.forward(ps, &feats);
            (Some(r), Some(c))
        }
        None => (None, None),
    };
    let cache = Cache {
        views,
        frames,
        text_in,
        time: time_cache,
        frames_in: local_in.clone(),
        cams_in,
        root_in: root_in_mat,
        layers: layer_caches,
        final_ln,
        feats,
        root_head,
    };
    (Outputs { local, root }, cache)
}

fn backward_core(
    base: &BaseLayout,
    mv: Option<&MvLayout>,
    ps: &ParamSet,
    cache: &Cache,
    d_local: &Mat,
    d_root: Option<&Mat>,
    g: &mut Grads,
) {
    let (views, frames) = (cache.views, cache.frames);
    let seq = frames + 2;
    let d = base.final_ln.dim;

    let mut d_feats = base.output.backward(ps, &cache.feats, d_local, g);
    if let (Some(mv), Some(dr), Some(rc)) = (mv, d_root, cache.root_head.as_ref()) {
        d_feats.add_assign(&mv.root_head.backward(ps, rc, dr, g));
    }
    let mut dy = Mat::zeros(views * seq, d);
    for v in 0..views {
        for f in 0..frames {
            dy.row_mut(tok(seq, v, f)).copy_from_slice(d_feats.row(v * frames + f));
        }
    }
    let mut dx = base.final_ln.backward(ps, &cache.final_ln, &dy, g);

    for (l, layer) in base.layers.iter().enumerate().rev() {
        let lc = &cache.layers[l];
        let dc = layer.ff.backward(ps, &lc.ff, &dx, g);
        dx.add_assign(&layer.ln2.backward(ps, &lc.ln2, &dc, g));
        if let (Some(mv), Some((lnc, ac))) = (mv, lc.view.as_ref()) {
            let vl = &mv.views[l];
            let dz = gather_frames_frame_major(&dx, views, frames);
            let db = vl.attn.backward(ps, ac, &dz, g);
            let dzin = vl.ln.backward(ps, lnc, &db, g);
            scatter_add_frame_major(&mut dx, &dzin, views, frames);
        }
        let da = layer.attn.backward(ps, &lc.attn, &dx, g);
        dx.add_assign(&layer.ln1.backward(ps, &lc.ln1, &da, g));
    }

    let mut d_text = Mat::zeros(1, d);
    let mut d_time = Mat::zeros(1, d);
    let mut d_frames = Mat::zeros(views * frames, d);
    for v in 0..views {
        for (a, b) in d_text.data.iter_mut().zip(dx.row(v * seq)) {
            *a += b;
        }
        for (a, b) in d_time.data.iter_mut().zip(dx.row(v * seq + 1)) {
            *a += b;
        }
        for f in 0..frames {
            d_frames.row_mut(v * frames + f).copy_from_slice(dx.row(tok(seq, v, f)));
        }
    }
    accumulate_only(&base.text, ps, &cache.text_in, &d_text, g);
    if g.wants(base.time.l1.w) || g.wants(base.time.l2.w) {
        base.time.backward(ps, &cache.time, &d_time, g);
    }
    accumulate_only(&base.input, ps, &cache.frames_in, &d_frames, g);
    if let Some(mv) = mv {
        if let Some(cm) = &cache.cams_in {
            accumulate_only(&mv.camera, ps, cm, &d_frames, g);
        }
        if let Some(r) = &cache.root_in {
            accumulate_only(&mv.root_in, ps, r, &d_frames, g);
        }
    }
}

/// Parameter gradients of an input layer whose input needs no gradient.
fn accumulate_only(lin: &Linear, ps: &ParamSet, x: &Mat, dy: &Mat, g: &mut Grads) {
    if g.wants(lin.w) || g.wants(lin.b) {
        lin.backward(ps, x, dy, g);
    }
}

fn check_params(ps: &ParamSet) -> Result<()> {
    if !ps.all_finite() {
        let bad = ps.entries.iter().find(|e| e.value.iter().any(|v| !v.is_finite())).map(|e| e.name.clone());
        return Err(Error::NonFinite(format!("parameter {} has non-finite values", bad.unwrap_or_default())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Single-view network

#[derive(Debug, Clone)]
pub struct Denoiser2D {
    cfg: ArchConfig,
    params: ParamSet,
    base: BaseLayout,
}

impl Denoiser2D {
    pub fn new(cfg: ArchConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        let base = build_base(&cfg, &mut params, &mut rng);
        Ok(Self { cfg, params, base })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn text_encoder(&self) -> TextEncoder {
        self.cfg.text_encoder()
    }

    fn check_input(&self, x: &[f64], text: &[f64]) -> Result<usize> {
        let f = self.cfg.feature_dim();
        ensure!(!x.is_empty() && x.len() % f == 0, Shape, "input length {} is not frames x {f}", x.len());
        ensure!(text.len() == self.cfg.d_text, Shape, "pooled text has {} dims, expected {}", text.len(), self.cfg.d_text);
        Ok(x.len() / f)
    }

    /// x̂0 for a flattened `N × (J-1) × 2` noisy motion and a pooled text
    /// vector.
    pub fn predict(&self, x_t: &[f64], t: usize, text: &[f64]) -> Result<Vec<f64>> {
        let frames = self.check_input(x_t, text)?;
        check_params(&self.params)?;
        let x = Mat::from_vec(frames, self.cfg.feature_dim(), x_t.to_vec());
        let (out, _) = forward_core(&self.base, None, &self.params, 1, frames, &x, None, &Conditioning { t, text, cams: None });
        Ok(out.local.data)
    }

    /// MSE between x̂0 and `x0`; adds `scale · ∂loss/∂θ` into `grads`.
    pub fn loss_and_grad(&self, x0: &[f64], x_t: &[f64], t: usize, text: &[f64], grads: Option<&mut Grads>, scale: f64) -> Result<f64> {
        let frames = self.check_input(x_t, text)?;
        ensure!(x0.len() == x_t.len(), Shape, "target has {} values, input {}", x0.len(), x_t.len());
        let x = Mat::from_vec(frames, self.cfg.feature_dim(), x_t.to_vec());
        let (out, cache) = forward_core(&self.base, None, &self.params, 1, frames, &x, None, &Conditioning { t, text, cams: None });
        let n = x0.len() as f64;
        let loss = out.local.data.iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        if let Some(g) = grads {
            let d: Vec<f64> = out.local.data.iter().zip(x0).map(|(a, b)| scale * 2.0 * (a - b) / n).collect();
            backward_core(&self.base, None, &self.params, &cache, &Mat::from_vec(frames, self.cfg.feature_dim(), d), None, g);
        }
        Ok(loss)
    }
}

/// Convenience wrapper taking a full [`TextEmbedding`].
pub fn forward_2d(p: &Denoiser2D, x_t: &[f64], t: usize, text: &TextEmbedding) -> Result<Vec<f64>> {
    p.predict(x_t, t, &text.pooled())
}

// ---------------------------------------------------------------------------
// Multi-view network

#[derive(Debug, Clone)]
pub struct DenoiserMV {
    cfg: ArchConfig,
    views: usize,
    params: ParamSet,
    base: BaseLayout,
    mv: MvLayout,
}

/// Copies and freezes the base network and adds zero-initialized adapters.
pub fn init_mv_from_2d(base: &Denoiser2D, views: usize, seed: u64) -> Result<DenoiserMV> {
    ensure!(views >= 1, Invalid, "need at least one view");
    check_params(&base.params)?;
    let mut params = base.params.clone();
    for e in &mut params.entries {
        e.trainable = false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mv = build_mv(&base.cfg, &mut params, &mut rng);
    Ok(DenoiserMV { cfg: base.cfg.clone(), views, params, base: base.base.clone(), mv })
}

impl DenoiserMV {
    /// Fresh network with the same layout as [`init_mv_from_2d`]; used when
    /// loading checkpoints.
    pub fn skeleton(cfg: ArchConfig, views: usize) -> Result<Self> {
        init_mv_from_2d(&Denoiser2D::new(cfg, 0)?, views, 0)
    }

    pub fn config(&self) -> &ArchConfig {
        &self.cfg
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn text_encoder(&self) -> TextEncoder {
        self.cfg.text_encoder()
    }

    /// Channels per frame row in the state layout: local offsets then root
    /// velocity.
    pub fn row_width(&self) -> usize {
        self.cfg.feature_dim() + 2
    }

    fn check_input(&self, state: &[f64], text: &[f64], cams: &CameraEmbedding) -> Result<usize> {
        let c = self.row_width();
        let v = cams.views();
        ensure!(v == self.views, Shape, "camera embedding has {v} views, network expects {}", self.views);
        ensure!(!state.is_empty() && state.len() % (v * c) == 0, Shape, "state length {} is not {v} x frames x {c}", state.len());
        ensure!(text.len() == self.cfg.d_text, Shape, "pooled text has {} dims, expected {}", text.len(), self.cfg.d_text);
        Ok(state.len() / (v * c))
    }

    fn split(&self, state: &[f64], frames: usize) -> (Mat, Mat) {
        let f = self.cfg.feature_dim();
        let c = f + 2;
        let rows = self.views * frames;
        let mut local = Mat::zeros(rows, f);
        let mut root = Mat::zeros(rows, 2);
        for r in 0..rows {
            local.row_mut(r).copy_from_slice(&state[r * c..r * c + f]);
            root.row_mut(r).copy_from_slice(&state[r * c + f..(r + 1) * c]);
        }
        (local, root)
    }

    fn join(&self, local: &Mat, root: &Mat) -> Vec<f64> {
        let mut out = Vec::with_capacity(local.data.len() + root.data.len());
        for r in 0..local.rows {
            out.extend_from_slice(local.row(r));
            out.extend_from_slice(root.row(r));
        }
        out
    }

    /// x̂0 in the state layout of [`MultiView2DMotion::to_state`].
    pub fn predict(&self, state: &[f64], t: usize, text: &[f64], cams: &CameraEmbedding) -> Result<Vec<f64>> {
        let frames = self.check_input(state, text, cams)?;
        check_params(&self.params)?;
        let (local, root) = self.split(state, frames);
        let cond = Conditioning { t, text, cams: Some(&cams.quats) };
        let (out, _) = forward_core(&self.base, Some(&self.mv), &self.params, self.views, frames, &local, Some(&root), &cond);
        Ok(self.join(&out.local, out.root.as_ref().expect("root head output")))
    }

    /// `(MSE_local + MSE_root) / 2`; adds `scale · ∂loss/∂θ` into `grads`.
    pub fn loss_and_grad(
        &self,
        x0: &[f64],
        x_t: &[f64],
        t: usize,
        text: &[f64],
        cams: &CameraEmbedding,
        grads: Option<&mut Grads>,
        scale: f64,
    ) -> Result<f64> {
        let frames = self.check_input(x_t, text, cams)?;
        ensure!(x0.len() == x_t.len(), Shape, "target has {} values, input {}", x0.len(), x_t.len());
        let (local, root) = self.split(x_t, frames);
        let (tl, tr) = self.split(x0, frames);
        let cond = Conditioning { t, text, cams: Some(&cams.quats) };
        let (out, cache) = forward_core(&self.base, Some(&self.mv), &self.params, self.views, frames, &local, Some(&root), &cond);
        let pr = out.root.as_ref().expect("root head output");
        let nl = tl.data.len() as f64;
        let nr = tr.data.len() as f64;
        let ml = out.local.data.iter().zip(&tl.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / nl;
        let mr = pr.data.iter().zip(&tr.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / nr;
        if let Some(g) = grads {
            let dl: Vec<f64> = out.local.data.iter().zip(&tl.data).map(|(a, b)| scale * (a - b) / nl).collect();
            let dr: Vec<f64> = pr.data.iter().zip(&tr.data).map(|(a, b)| scale * (a - b) / nr).collect();
            let dl = Mat::from_vec(out.local.rows, out.local.cols, dl);
            let dr = Mat::from_vec(pr.rows, 2, dr);
            backward_core(&self.base, Some(&self.mv), &self.params, &cache, &dl, Some(&dr), g);
        }
        Ok(0.5 * (ml + mr))
    }
}

/// Typed multi-view forward: returns x̂0 as a [`MultiView2DMotion`].
pub fn forward_mv(p: &DenoiserMV, noisy: &MultiView2DMotion, t: usize, text: &TextEmbedding, cams: &CameraEmbedding) -> Result<MultiView2DMotion> {
    ensure!(noisy.joints == p.cfg.local_joints, Shape, "motion has {} local joints, network expects {}", noisy.joints, p.cfg.local_joints);
    let out = p.predict(&noisy.to_state(), t, &text.pooled(), cams)?;
    MultiView2DMotion::from_state(noisy.frames, noisy.views, noisy.joints, &out)
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Anything that owns a [`ParamSet`].
pub trait HasParams {
    fn param_set(&self) -> &ParamSet;
    fn param_set_mut(&mut self) -> &mut ParamSet;
}

impl HasParams for ParamSet {
    fn param_set(&self) -> &ParamSet {
        self
    }
    fn param_set_mut(&mut self) -> &mut ParamSet {
        self
    }
}

impl HasParams for Denoiser2D {
    fn param_set(&self) -> &ParamSet {
        &self.params
    }
    fn param_set_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl HasParams for DenoiserMV {
    fn param_set(&self) -> &ParamSet {
        &self.params
    }
    fn param_set_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub coords: usize,
}

/// Relative error below this magnitude is measured against the floor instead.
const REL_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient of `loss` with central differences on
/// `coords` randomly chosen scalar parameters (all of them if fewer exist).
///
/// `loss(model, Some(grads))` must add its gradient into `grads`, which has a
/// buffer for every parameter. Relative error is
/// `|a − n| / max(|a|, |n|, 1e−6)`.
pub fn grad_check<M, L>(model: &mut M, loss: L, eps: f64, coords: usize, seed: u64) -> Result<GradCheck>
where
    M: HasParams,
    L: Fn(&M, Option<&mut Grads>) -> Result<f64>,
{
    use rand::seq::index::sample;

    ensure!(eps > 0.0, Invalid, "finite-difference step must be positive");
    let mut grads = model.param_set().full_grads();
    let l0 = loss(model, Some(&mut grads))?;
    ensure!(l0.is_finite(), NonFinite, "loss is {l0}");

    let sizes: Vec<usize> = model.param_set().entries.iter().map(|e| e.value.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = sample(&mut rng, total, coords.min(total)).into_vec();
    picks.sort_unstable();

    let mut max_rel: f64 = 0.0;
    let (mut id, mut start) = (0, 0);
    for flat in &picks {
        while flat - start >= sizes[id] {
            start += sizes[id];
            id += 1;
        }
        let j = flat - start;
        let orig = model.param_set().entries[id].value[j];
        model.param_set_mut().entries[id].value[j] = orig + eps;
        let lp = loss(model, None)?;
        model.param_set_mut().entries[id].value[j] = orig - eps;
        let lm = loss(model, None)?;
        model.param_set_mut().entries[id].value[j] = orig;
        ensure!(lp.is_finite() && lm.is_finite(), NonFinite, "loss is non-finite near {}[{j}]", model.param_set().entries[id].name);
        let numeric = (lp - lm) / (2.0 * eps);
        let analytic = grads.data[id][j];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheck { max_rel_error: max_rel, coords: picks.len() })
}
