//! Minimal reverse-mode differentiation over dense row-major matrices.
//!
//! Only the operations the trajectory autoencoder needs are provided.
//! Every node keeps its forward value; [`Tape::backward`] walks the nodes
//! in reverse and accumulates adjoints.

use std::rc::Rc;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `a (m x k) * b (k x n)`.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows, "matmul inner dimensions differ");
    let mut out = Mat::zeros(a.rows, b.cols);
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 support was just checked.
            unsafe { avx2::matmul_into(a, b, &mut out) };
            return out;
        }
    }
    matmul_into(a, b, &mut out);
    out
}

/// `a^T (k x m)^T * b (k x n)` -> `m x n`.
fn matmul_tn(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.rows, b.rows);
    let mut out = Mat::zeros(a.cols, b.cols);
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 support was just checked.
            unsafe { avx2::matmul_tn_into(a, b, &mut out) };
            return out;
        }
    }
    matmul_tn_into(a, b, &mut out);
    out
}

// Same kernels compiled with wider vectors. No FMA contraction happens, so
// results are bit-identical to the portable path.
#[cfg(target_arch = "x86_64")]
mod avx2 {
    use super::Mat;

    #[target_feature(enable = "avx2")]
    pub unsafe fn matmul_into(a: &Mat, b: &Mat, out: &mut Mat) {
        super::matmul_into(a, b, out)
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn matmul_tn_into(a: &Mat, b: &Mat, out: &mut Mat) {
        super::matmul_tn_into(a, b, out)
    }
}

#[inline(always)]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

#[inline(always)]
fn matmul_into(a: &Mat, b: &Mat, out: &mut Mat) {
    let n = b.cols;
    for i in 0..a.rows {
        let orow = &mut out.data[i * n..(i + 1) * n];
        for (k, &av) in a.row(i).iter().enumerate() {
            if av != 0.0 {
                axpy(orow, av, &b.data[k * n..(k + 1) * n]);
            }
        }
    }
}

#[inline(always)]
fn matmul_tn_into(a: &Mat, b: &Mat, out: &mut Mat) {
    let n = b.cols;
    for k in 0..a.rows {
        let brow = b.row(k);
        for (i, &av) in a.row(k).iter().enumerate() {
            if av != 0.0 {
                axpy(&mut out.data[i * n..(i + 1) * n], av, brow);
            }
        }
    }
}

/// `a (m x k) * b^T` where `b` is `n x k`.
fn matmul_nt(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.cols);
    let mut bt = Mat::zeros(b.cols, b.rows);
    for r in 0..b.rows {
        for c in 0..b.cols {
            bt.data[c * b.rows + r] = b.data[r * b.cols + c];
        }
    }
    matmul(a, &bt)
}

/// Dot product with four partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    /// Position of the node on its tape, matching the `backward` output.
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Input,
    MatMul(NodeId, NodeId),
    /// Adds a `1 x n` row to every row.
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Gelu(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        groups: Rc<Vec<Vec<usize>>>,
        heads: usize,
        /// Softmax weights per (group, head), each `len x len`.
        probs: Vec<Vec<f64>>,
    },
    MeanRows(NodeId),
    /// Rows flagged false are replaced by the single row of `token`.
    Blend {
        a: NodeId,
        token: NodeId,
        keep: Rc<Vec<bool>>,
    },
}

struct Node {
    value: Mat,
    op: Op,
    /// Whether any trainable leaf feeds this node.
    grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        let grad = match &op {
            Op::Leaf => true,
            Op::Input => false,
            Op::MatMul(a, b) | Op::AddRow(a, b) | Op::Add(a, b) => self.needs(*a) || self.needs(*b),
            Op::Gelu(a) | Op::MeanRows(a) => self.needs(*a),
            Op::LayerNorm { x, gamma, beta, .. } => self.needs(*x) || self.needs(*gamma) || self.needs(*beta),
            Op::Attention { q, k, v, .. } => self.needs(*q) || self.needs(*k) || self.needs(*v),
            Op::Blend { a, token, .. } => self.needs(*a) || self.needs(*token),
        };
        self.nodes.push(Node { value, op, grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].grad
    }

    fn accumulate(&self, grads: &mut [Option<Mat>], id: NodeId, g: impl FnOnce() -> Mat) {
        if !self.needs(id) {
            return;
        }
        let g = g();
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    /// A trainable leaf; `backward` reports its adjoint.
    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// A constant input; no adjoint is computed for it.
    pub fn input(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let r = self.value(row);
        assert_eq!(r.rows, 1, "add_row expects a single row");
        let mut v = self.value(a).clone();
        assert_eq!(v.cols, r.cols, "add_row width mismatch");
        for chunk in v.data.chunks_mut(r.cols) {
            for (x, b) in chunk.iter_mut().zip(&r.data) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// `x * w + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let h = self.matmul(x, w);
        self.add_row(h, b)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x = gelu(*x));
        self.push(v, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows, xv.cols);
        let mut xhat = Mat::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for c in 0..cols {
                xhat.data[r * cols + c] = (row[c] - mean) * is;
            }
            inv_std.push(is);
        }
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut out = xhat.clone();
        for chunk in out.data.chunks_mut(cols) {
            for c in 0..cols {
                chunk[c] = chunk[c] * g.data[c] + b.data[c];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Multi-head scaled dot-product attention applied independently inside
    /// each group of row indices. Every row must belong to exactly one group.
    pub fn grouped_attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        groups: Rc<Vec<Vec<usize>>>,
        heads: usize,
    ) -> NodeId {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.cols;
        assert_eq!(d % heads, 0, "width must divide into heads");
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Mat::zeros(qv.rows, d);
        let mut probs = Vec::with_capacity(groups.len() * heads);
        for g in groups.iter() {
            let len = g.len();
            for h in 0..heads {
                let off = h * dh;
                let mut p = vec![0.0; len * len];
                for (i, &ri) in g.iter().enumerate() {
                    let qrow = &qv.row(ri)[off..off + dh];
                    let mut mx = f64::NEG_INFINITY;
                    for (j, &rj) in g.iter().enumerate() {
                        let s = dot(qrow, &kv.row(rj)[off..off + dh]);
                        let s = s * scale;
                        p[i * len + j] = s;
                        mx = mx.max(s);
                    }
                    let mut z = 0.0;
                    for j in 0..len {
                        let e = (p[i * len + j] - mx).exp();
                        p[i * len + j] = e;
                        z += e;
                    }
                    for j in 0..len {
                        p[i * len + j] /= z;
                    }
                    let orow = &mut out.data[ri * d + off..ri * d + off + dh];
                    for (j, &rj) in g.iter().enumerate() {
                        let w = p[i * len + j];
                        for (o, x) in orow.iter_mut().zip(&vv.row(rj)[off..off + dh]) {
                            *o += w * x;
                        }
                    }
                }
                probs.push(p);
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                groups,
                heads,
                probs,
            },
        )
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut out = Mat::zeros(1, av.cols);
        if av.rows > 0 {
            for r in 0..av.rows {
                for (o, x) in out.data.iter_mut().zip(av.row(r)) {
                    *o += x;
                }
            }
            let inv = 1.0 / av.rows as f64;
            out.data.iter_mut().for_each(|x| *x *= inv);
        }
        self.push(out, Op::MeanRows(a))
    }

    pub fn blend(&mut self, a: NodeId, token: NodeId, keep: Rc<Vec<bool>>) -> NodeId {
        let (av, tv) = (self.value(a), self.value(token));
        assert_eq!(tv.rows, 1);
        assert_eq!(keep.len(), av.rows);
        let mut out = av.clone();
        for (r, k) in keep.iter().enumerate() {
            if !k {
                out.data[r * av.cols..(r + 1) * av.cols].copy_from_slice(&tv.data);
            }
        }
        self.push(out, Op::Blend { a, token, keep })
    }

    /// Back-propagates the given output adjoints. The result is indexed by
    /// node and holds the adjoint of every trainable leaf that received
    /// one; all other entries are `None`.
    pub fn backward(&self, seeds: Vec<(NodeId, Mat)>) -> Vec<Option<Mat>> {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        for (id, g) in seeds {
            self.accumulate(&mut grads, id, || g);
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(mut g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => grads[idx] = Some(g),
                Op::Input => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    self.accumulate(&mut grads, *a, || matmul_nt(&g, bv));
                    self.accumulate(&mut grads, *b, || matmul_tn(av, &g));
                }
                Op::AddRow(a, row) => {
                    let mut gr = Mat::zeros(1, g.cols);
                    for chunk in g.data.chunks(g.cols) {
                        for (o, x) in gr.data.iter_mut().zip(chunk) {
                            *o += x;
                        }
                    }
                    self.accumulate(&mut grads, *row, || gr);
                    self.accumulate(&mut grads, *a, || g);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *b, || g.clone());
                    self.accumulate(&mut grads, *a, || g);
                }
                Op::Gelu(a) => {
                    let av = self.value(*a);
                    for (x, inp) in g.data.iter_mut().zip(&av.data) {
                        *x *= gelu_grad(*inp);
                    }
                    self.accumulate(&mut grads, *a, || g);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let cols = g.cols;
                    let gv = self.value(*gamma);
                    let mut dgamma = Mat::zeros(1, cols);
                    let mut dbeta = Mat::zeros(1, cols);
                    let mut dx = Mat::zeros(g.rows, cols);
                    let mut dxhat = vec![0.0; cols];
                    for r in 0..g.rows {
                        let grow = g.row(r);
                        let xh = xhat.row(r);
                        for c in 0..cols {
                            dgamma.data[c] += grow[c] * xh[c];
                            dbeta.data[c] += grow[c];
                            dxhat[c] = grow[c] * gv.data[c];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
                        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for c in 0..cols {
                            dx.data[r * cols + c] = inv_std[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                        }
                    }
                    self.accumulate(&mut grads, *gamma, || dgamma);
                    self.accumulate(&mut grads, *beta, || dbeta);
                    self.accumulate(&mut grads, *x, || dx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    groups,
                    heads,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = qv.cols;
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut dq = Mat::zeros(qv.rows, d);
                    let mut dk = Mat::zeros(kv.rows, d);
                    let mut dv = Mat::zeros(vv.rows, d);
                    let mut pi = 0;
                    for grp in groups.iter() {
                        let len = grp.len();
                        for h in 0..*heads {
                            let off = h * dh;
                            let p = &probs[pi];
                            pi += 1;
                            for (i, &ri) in grp.iter().enumerate() {
                                let go = &g.row(ri)[off..off + dh];
                                // dP_ij = dO_i . V_j ; dS = P * (dP - sum_j P dP)
                                let mut dp = vec![0.0; len];
                                let mut pdp = 0.0;
                                for (j, &rj) in grp.iter().enumerate() {
                                    let val = dot(go, &vv.row(rj)[off..off + dh]);
                                    dp[j] = val;
                                    pdp += p[i * len + j] * val;
                                    let w = p[i * len + j];
                                    let dvrow = &mut dv.data[rj * d + off..rj * d + off + dh];
                                    for (o, x) in dvrow.iter_mut().zip(go) {
                                        *o += w * x;
                                    }
                                }
                                for (j, &rj) in grp.iter().enumerate() {
                                    let ds = p[i * len + j] * (dp[j] - pdp) * scale;
                                    if ds == 0.0 {
                                        continue;
                                    }
                                    let krow = &kv.data[rj * d + off..rj * d + off + dh];
                                    for (o, x) in dq.data[ri * d + off..ri * d + off + dh].iter_mut().zip(krow) {
                                        *o += ds * x;
                                    }
                                    let qrow = &qv.data[ri * d + off..ri * d + off + dh];
                                    for (o, x) in dk.data[rj * d + off..rj * d + off + dh].iter_mut().zip(qrow) {
                                        *o += ds * x;
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(&mut grads, *q, || dq);
                    self.accumulate(&mut grads, *k, || dk);
                    self.accumulate(&mut grads, *v, || dv);
                }
                Op::MeanRows(a) => {
                    let av = self.value(*a);
                    let mut ga = Mat::zeros(av.rows, av.cols);
                    if av.rows > 0 {
                        let inv = 1.0 / av.rows as f64;
                        for chunk in ga.data.chunks_mut(av.cols) {
                            for (o, x) in chunk.iter_mut().zip(&g.data) {
                                *o = x * inv;
                            }
                        }
                    }
                    self.accumulate(&mut grads, *a, || ga);
                }
                Op::Blend { a, token, keep } => {
                    let cols = g.cols;
                    let mut gt = Mat::zeros(1, cols);
                    for (r, k) in keep.iter().enumerate() {
                        if !k {
                            let row = &mut g.data[r * cols..(r + 1) * cols];
                            for (o, x) in gt.data.iter_mut().zip(row.iter()) {
                                *o += x;
                            }
                            row.iter_mut().for_each(|x| *x = 0.0);
                        }
                    }
                    self.accumulate(&mut grads, *token, || gt);
                    self.accumulate(&mut grads, *a, || g);
                }
            }
        }
        grads
    }
}
