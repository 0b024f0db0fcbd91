//! Small dense layers with hand-written backward passes.
//!
//! Matrices are row-major `f64`. Every kernel computes an output row from its
//! input row alone with a fixed summation order, so a row's result does not
//! depend on where it sits in the matrix. Attention over unordered sets
//! (views) can additionally sum with [`sorted_sum`], which makes the result
//! independent of the set's ordering.

use rand::Rng;
use serde::{Deserialize, Serialize};

pub type ParamId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight fixed partial sums (vectorizes, deterministic).
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Sum that is invariant to the order of its terms.
pub fn sorted_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(|a, b| a.total_cmp(b));
    terms.iter().sum()
}

/// `x · W` with `W` given as `k × m` row-major.
pub fn matmul(x: &Mat, w: &[f64], m: usize) -> Mat {
    let k = x.cols;
    debug_assert_eq!(w.len(), k * m);
    let mut out = Mat::zeros(x.rows, m);
    for i in 0..x.rows {
        let xr = &x.data[i * k..(i + 1) * k];
        let orow = &mut out.data[i * m..(i + 1) * m];
        for (kk, &a) in xr.iter().enumerate() {
            axpy(orow, a, &w[kk * m..(kk + 1) * m]);
        }
    }
    out
}

/// `dw += xᵀ · dy`.
pub fn matmul_at_acc(x: &Mat, dy: &Mat, dw: &mut [f64]) {
    let (k, m) = (x.cols, dy.cols);
    debug_assert_eq!(dw.len(), k * m);
    for i in 0..x.rows {
        let dyr = dy.row(i);
        for (kk, &a) in x.row(i).iter().enumerate() {
            axpy(&mut dw[kk * m..(kk + 1) * m], a, dyr);
        }
    }
}

/// `dy · Wᵀ` with `W` given as `k × m`.
pub fn matmul_bt(dy: &Mat, w: &[f64], k: usize) -> Mat {
    let m = dy.cols;
    let wt = Mat::from_vec(k, m, w.to_vec()).transpose();
    matmul(dy, &wt.data, k)
}

// ---------------------------------------------------------------------------
// Parameters

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub trainable: bool,
}

/// Named parameter arrays, addressed by [`ParamId`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    pub entries: Vec<ParamEntry>,
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// `U(-1/√fan_in, 1/√fan_in)` with `fan_in = shape[0]`.
    Uniform,
    /// `U(-scale, scale)`.
    Small(f64),
}

impl ParamSet {
    pub fn add<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut R) -> ParamId {
        let n: usize = shape.iter().product();
        let value = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Uniform => {
                let a = 1.0 / (shape[0] as f64).sqrt();
                (0..n).map(|_| rng.random_range(-a..a)).collect()
            }
            Init::Small(a) => (0..n).map(|_| rng.random_range(-a..a)).collect(),
        };
        self.entries.push(ParamEntry { name: name.into(), shape: shape.to_vec(), value, trainable: true });
        self.entries.len() - 1
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.entries[id].value
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.iter().all(|v| v.is_finite()))
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            data: self.entries.iter().map(|e| if e.trainable { vec![0.0; e.value.len()] } else { Vec::new() }).collect(),
        }
    }

    /// Gradients for every parameter, trainable or not.
    pub fn full_grads(&self) -> Grads {
        Grads { data: self.entries.iter().map(|e| vec![0.0; e.value.len()]).collect() }
    }
}

/// Gradient buffers aligned with a [`ParamSet`]; an empty buffer means the
/// parameter's gradient is not requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub data: Vec<Vec<f64>>,
}

impl Grads {
    #[inline]
    pub fn wants(&self, id: ParamId) -> bool {
        !self.data[id].is_empty()
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().flatten().for_each(|x| *x *= s);
    }
}

// ---------------------------------------------------------------------------
// Layers

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, din: usize, dout: usize, init: Init, rng: &mut R) -> Self {
        let w = ps.add(format!("{name}.w"), &[din, dout], init, rng);
        let b = ps.add(format!("{name}.b"), &[dout], Init::Zeros, rng);
        Self { w, b, din, dout }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> Mat {
        let mut y = matmul(x, ps.get(self.w), self.dout);
        let b = ps.get(self.b);
        for i in 0..y.rows {
            for (v, bb) in y.row_mut(i).iter_mut().zip(b) {
                *v += bb;
            }
        }
        y
    }

    pub fn backward(&self, ps: &ParamSet, x: &Mat, dy: &Mat, g: &mut Grads) -> Mat {
        if g.wants(self.w) {
            matmul_at_acc(x, dy, &mut g.data[self.w]);
        }
        if g.wants(self.b) {
            let gb = &mut g.data[self.b];
            for i in 0..dy.rows {
                for (a, d) in gb.iter_mut().zip(dy.row(i)) {
                    *a += d;
                }
            }
        }
        matmul_bt(dy, ps.get(self.w), self.din)
    }

    pub fn param_count(&self) -> usize {
        self.din * self.dout + self.dout
    }
}

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LnCache {
    xhat: Mat,
    rstd: Vec<f64>,
}

impl LayerNorm {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, dim: usize, rng: &mut R) -> Self {
        let gamma = ps.add(format!("{name}.g"), &[dim], Init::Ones, rng);
        let beta = ps.add(format!("{name}.b"), &[dim], Init::Zeros, rng);
        Self { gamma, beta, dim }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, LnCache) {
        let (g, b) = (ps.get(self.gamma), ps.get(self.beta));
        let d = self.dim as f64;
        let mut xhat = Mat::zeros(x.rows, x.cols);
        let mut y = Mat::zeros(x.rows, x.cols);
        let mut rstd = Vec::with_capacity(x.rows);
        for i in 0..x.rows {
            let r = x.row(i);
            let mean = r.iter().sum::<f64>() / d;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(rs);
            let xh = xhat.row_mut(i);
            for (o, v) in xh.iter_mut().zip(r) {
                *o = (v - mean) * rs;
            }
            let xh = xhat.row(i);
            for (j, o) in y.row_mut(i).iter_mut().enumerate() {
                *o = xh[j] * g[j] + b[j];
            }
        }
        (y, LnCache { xhat, rstd })
    }

    pub fn backward(&self, ps: &ParamSet, c: &LnCache, dy: &Mat, gr: &mut Grads) -> Mat {
        let g = ps.get(self.gamma);
        let d = self.dim as f64;
        if gr.wants(self.gamma) {
            let gg = &mut gr.data[self.gamma];
            for i in 0..dy.rows {
                for ((a, dv), xh) in gg.iter_mut().zip(dy.row(i)).zip(c.xhat.row(i)) {
                    *a += dv * xh;
                }
            }
        }
        if gr.wants(self.beta) {
            let gb = &mut gr.data[self.beta];
            for i in 0..dy.rows {
                for (a, dv) in gb.iter_mut().zip(dy.row(i)) {
                    *a += dv;
                }
            }
        }
        let mut dx = Mat::zeros(dy.rows, dy.cols);
        let mut dxh = vec![0.0; self.dim];
        for i in 0..dy.rows {
            let xh = c.xhat.row(i);
            for (j, v) in dxh.iter_mut().enumerate() {
                *v = dy.row(i)[j] * g[j];
            }
            let m1 = dxh.iter().sum::<f64>() / d;
            let m2 = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
            let rs = c.rstd[i];
            for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
                *o = rs * (dxh[j] - m1 - xh[j] * m2);
            }
        }
        dx
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_C: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_K * (x + GELU_C * x * x * x);
    let th = u.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Silu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Silu => silu(x),
        }
    }

    fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu_grad(x),
            Activation::Silu => silu_grad(x),
        }
    }
}

/// `l2(act(l1(x)))`.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Mat,
    pre: Mat,
    hidden: Mat,
}

impl Mlp {
    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, MlpCache) {
        let pre = self.l1.forward(ps, x);
        let mut hidden = pre.clone();
        hidden.data.iter_mut().for_each(|v| *v = self.act.apply(*v));
        let y = self.l2.forward(ps, &hidden);
        (y, MlpCache { x: x.clone(), pre, hidden })
    }

    pub fn backward(&self, ps: &ParamSet, c: &MlpCache, dy: &Mat, g: &mut Grads) -> Mat {
        let mut dh = self.l2.backward(ps, &c.hidden, dy, g);
        for (d, p) in dh.data.iter_mut().zip(&c.pre.data) {
            *d *= self.act.grad(*p);
        }
        self.l1.backward(ps, &c.x, &dh, g)
    }

    pub fn param_count(&self) -> usize {
        self.l1.param_count() + self.l2.param_count()
    }
}

/// Multi-head self-attention applied independently to consecutive groups of
/// `group` rows.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    /// Sum over keys with [`sorted_sum`] so the output is exactly
    /// equivariant under permutations within a group.
    pub order_free: bool,
}

#[derive(Debug, Clone)]
pub struct AttnCache {
    x: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Per group, per head, `group × group` probabilities.
    probs: Vec<f64>,
    ctx: Mat,
    group: usize,
}

impl Attention {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, dim: usize, heads: usize, zero_out: bool, order_free: bool, rng: &mut R) -> Self {
        assert!(dim % heads == 0, "model width {dim} not divisible by {heads} heads");
        let q = Linear::new(ps, &format!("{name}.q"), dim, dim, Init::Uniform, rng);
        let k = Linear::new(ps, &format!("{name}.k"), dim, dim, Init::Uniform, rng);
        let v = Linear::new(ps, &format!("{name}.v"), dim, dim, Init::Uniform, rng);
        let o_init = if zero_out { Init::Zeros } else { Init::Uniform };
        let o = Linear::new(ps, &format!("{name}.o"), dim, dim, o_init, rng);
        Self { q, k, v, o, heads, order_free }
    }

    pub fn param_count(&self) -> usize {
        self.q.param_count() + self.k.param_count() + self.v.param_count() + self.o.param_count()
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat, group: usize) -> (Mat, AttnCache) {
        assert!(group > 0 && x.rows % group == 0, "rows {} not divisible into groups of {group}", x.rows);
        let q = self.q.forward(ps, x);
        let k = self.k.forward(ps, x);
        let v = self.v.forward(ps, x);
        let d = x.cols;
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let groups = x.rows / group;
        let mut probs = vec![0.0; groups * self.heads * group * group];
        let mut ctx = Mat::zeros(x.rows, d);
        let mut terms = vec![0.0; group];
        for gi in 0..groups {
            let base = gi * group;
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let p0 = (gi * self.heads + h) * group * group;
                for i in 0..group {
                    let qi = &q.row(base + i)[cols.clone()];
                    let prow = &mut probs[p0 + i * group..p0 + (i + 1) * group];
                    for (j, p) in prow.iter_mut().enumerate() {
                        *p = dot(qi, &k.row(base + j)[cols.clone()]) * scale;
                    }
                    let mx = prow.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    prow.iter_mut().for_each(|p| *p = (*p - mx).exp());
                    let z = if self.order_free {
                        terms.copy_from_slice(prow);
                        sorted_sum(&mut terms)
                    } else {
                        prow.iter().sum()
                    };
                    prow.iter_mut().for_each(|p| *p /= z);
                    let out = &mut ctx.data[(base + i) * d + h * dh..(base + i) * d + (h + 1) * dh];
                    if self.order_free {
                        for (c, o) in out.iter_mut().enumerate() {
                            for (j, t) in terms.iter_mut().enumerate() {
                                *t = prow[j] * v.row(base + j)[h * dh + c];
                            }
                            *o = sorted_sum(&mut terms);
                        }
                    } else {
                        for (j, &p) in prow.iter().enumerate() {
                            axpy(out, p, &v.row(base + j)[cols.clone()]);
                        }
                    }
                }
            }
        }
        let y = self.o.forward(ps, &ctx);
        (y, AttnCache { x: x.clone(), q, k, v, probs, ctx, group })
    }

    pub fn backward(&self, ps: &ParamSet, c: &AttnCache, dy: &Mat, g: &mut Grads) -> Mat {
        let dctx = self.o.backward(ps, &c.ctx, dy, g);
        let d = c.x.cols;
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let group = c.group;
        let groups = c.x.rows / group;
        let mut dq = Mat::zeros(c.x.rows, d);
        let mut dk = Mat::zeros(c.x.rows, d);
        let mut dv = Mat::zeros(c.x.rows, d);
        let mut dp = vec![0.0; group];
        for gi in 0..groups {
            let base = gi * group;
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let p0 = (gi * self.heads + h) * group * group;
                for i in 0..group {
                    let prow = &c.probs[p0 + i * group..p0 + (i + 1) * group];
                    let dci = &dctx.row(base + i)[cols.clone()];
                    for j in 0..group {
                        dp[j] = dot(dci, &c.v.row(base + j)[cols.clone()]);
                        axpy(&mut dv.data[(base + j) * d + h * dh..(base + j) * d + (h + 1) * dh], prow[j], dci);
                    }
                    let s: f64 = prow.iter().zip(&dp).map(|(p, q)| p * q).sum();
                    for j in 0..group {
                        let ds = prow[j] * (dp[j] - s) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let kj = &c.k.row(base + j)[cols.clone()];
                        axpy(&mut dq.data[(base + i) * d + h * dh..(base + i) * d + (h + 1) * dh], ds, kj);
                        let qi = &c.q.row(base + i)[cols.clone()];
                        axpy(&mut dk.data[(base + j) * d + h * dh..(base + j) * d + (h + 1) * dh], ds, qi);
                    }
                }
            }
        }
        let mut dx = self.q.backward(ps, &c.x, &dq, g);
        dx.add_assign(&self.k.backward(ps, &c.x, &dk, g));
        dx.add_assign(&self.v.backward(ps, &c.x, &dv, g));
        dx
    }
}

/// Standard sinusoidal embedding of a scalar position into `dim` channels.
pub fn sinusoidal(pos: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = (pos * freq).sin();
        out[half + i] = (pos * freq).cos();
    }
    out
}
