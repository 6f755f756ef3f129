//! Define-by-run recording of dense and edge-valued operations with
//! reverse-mode gradients.
//!
//! A [`Tape`] is rebuilt for every forward pass. Values are plain
//! [`Matrix`] buffers; a [`Var`] is an index into the tape. Edge-valued
//! quantities (attention coefficients) are `E x 1` column vars aligned to a
//! [`Support`] layout.

use std::sync::Arc;

use rand::Rng;

use super::Matrix;
use crate::error::{Error, Result};
use crate::graph::Support;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearities with recorded derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unary {
    Elu,
    Tanh,
    Softplus,
    Sigmoid,
    Exp,
    /// Slope 0.2 on the negative side.
    LeakyRelu,
    Identity,
}

/// Arguments of `exp` are clamped here to keep values finite.
pub const EXP_CLAMP: f64 = 80.0;
pub const LEAKY_SLOPE: f64 = 0.2;

impl Unary {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Unary::Tanh => x.tanh(),
            Unary::Softplus => (-x.abs()).exp().ln_1p() + x.max(0.0),
            Unary::Sigmoid => sigmoid(x),
            Unary::Exp => x.min(EXP_CLAMP).exp(),
            Unary::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Unary::Identity => x,
        }
    }

    /// Derivative at input `x` given output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Unary::Tanh => 1.0 - y * y,
            Unary::Softplus => sigmoid(x),
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Exp => {
                if x < EXP_CLAMP {
                    y
                } else {
                    0.0
                }
            }
            Unary::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Unary::Identity => 1.0,
        }
    }

    pub fn map(self, m: &Matrix) -> Matrix {
        m.map(|x| self.apply(x))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    MulConst(Var, Arc<Vec<f64>>),
    Unary(Var, Unary),
    RowScale(Var, Var),
    HConcat(Var, Var),
    EdgeConcat(Var, Arc<Support>),
    EdgePairScore(Var, Arc<Support>),
    Spmm(Var, Arc<Support>, Var),
    SegmentSoftmax(Var, Arc<Support>),
    SymNormalize(Var, Arc<Support>),
    CrossEntropy(Var, Arc<Vec<usize>>, Arc<Vec<usize>>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op_name: &'static str, value: Matrix, op: Op, needs_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable input: gradients are accumulated for it.
    pub fn param(&mut self, value: Matrix) -> Result<Var> {
        self.push("param", value, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Result<Var> {
        self.push("constant", value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push("matmul", out, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", format!("{:?} + {:?}", va.shape(), vb.shape())));
        }
        let out = va.add(vb);
        let ng = self.needs(a) || self.needs(b);
        self.push("add", out, Op::Add(a, b), ng)
    }

    /// Adds a `1 x cols` row bias to every row, or a `1 x 1` scalar everywhere.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let mut out = vx.clone();
        match vb.shape() {
            (1, 1) => {
                let b = vb.get(0, 0);
                out.data_mut().iter_mut().for_each(|o| *o += b);
            }
            (1, c) if c == vx.cols() => {
                for r in 0..out.rows() {
                    out.row_mut(r).iter_mut().zip(vb.data()).for_each(|(o, b)| *o += b);
                }
            }
            s => return Err(shape_err("add_bias", format!("bias {s:?} for {:?}", vx.shape()))),
        }
        let ng = self.needs(x) || self.needs(bias);
        self.push("add_bias", out, Op::AddBias(x, bias), ng)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.value(x).map(|v| c * v);
        let ng = self.needs(x);
        self.push("scale", out, Op::Scale(x, c), ng)
    }

    /// Multiplies `x` by a recorded `1 x 1` scalar.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).shape() != (1, 1) {
            return Err(shape_err("scale_by", format!("scalar has shape {:?}", self.value(s).shape())));
        }
        let c = self.value(s).get(0, 0);
        let out = self.value(x).map(|v| c * v);
        let ng = self.needs(x) || self.needs(s);
        self.push("scale_by", out, Op::ScaleBy(x, s), ng)
    }

    /// Elementwise product with a constant buffer of the same size.
    pub fn mul_const(&mut self, x: Var, c: Arc<Vec<f64>>) -> Result<Var> {
        let vx = self.value(x);
        if vx.len() != c.len() {
            return Err(shape_err("mul_const", format!("{} values for {:?}", c.len(), vx.shape())));
        }
        let data = vx.data().iter().zip(c.iter()).map(|(a, b)| a * b).collect();
        let out = Matrix::from_vec(vx.rows(), vx.cols(), data)?;
        let ng = self.needs(x);
        self.push("mul_const", out, Op::MulConst(x, c), ng)
    }

    pub fn unary(&mut self, kind: Unary, x: Var) -> Result<Var> {
        let out = kind.map(self.value(x));
        let ng = self.needs(x);
        self.push(unary_name(kind), out, Op::Unary(x, kind), ng)
    }

    /// `diag(gamma) * x` for an `n x 1` column `gamma`.
    pub fn row_scale(&mut self, gamma: Var, x: Var) -> Result<Var> {
        let (vg, vx) = (self.value(gamma), self.value(x));
        if vg.shape() != (vx.rows(), 1) {
            return Err(shape_err("row_scale", format!("{:?} against {:?}", vg.shape(), vx.shape())));
        }
        let mut out = vx.clone();
        for r in 0..out.rows() {
            let g = vg.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|o| *o *= g);
        }
        let ng = self.needs(gamma) || self.needs(x);
        self.push("row_scale", out, Op::RowScale(gamma, x), ng)
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn hconcat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(shape_err("hconcat", format!("{:?} | {:?}", va.shape(), vb.shape())));
        }
        let mut out = Matrix::zeros(va.rows(), va.cols() + vb.cols());
        for r in 0..va.rows() {
            let row = out.row_mut(r);
            row[..va.cols()].copy_from_slice(va.row(r));
            row[va.cols()..].copy_from_slice(vb.row(r));
        }
        let ng = self.needs(a) || self.needs(b);
        self.push("hconcat", out, Op::HConcat(a, b), ng)
    }

    /// Row `e = (i, j)` of the output is `[z_i | z_j]`.
    pub fn edge_concat(&mut self, z: Var, support: &Arc<Support>) -> Result<Var> {
        let vz = self.value(z);
        check_rows("edge_concat", vz, support)?;
        let d = vz.cols();
        let mut out = Matrix::zeros(support.len(), 2 * d);
        for e in 0..support.len() {
            let (i, j) = support.endpoints(e);
            let row = out.row_mut(e);
            row[..d].copy_from_slice(vz.row(i));
            row[d..].copy_from_slice(vz.row(j));
        }
        let ng = self.needs(z);
        self.push("edge_concat", out, Op::EdgeConcat(z, support.clone()), ng)
    }

    /// For an `n x 2` matrix `p`, entry `e = (i, j)` gets `p[i,0] + p[j,1]`.
    ///
    /// This is `w^T [f(z_i) | f(z_j)]` for an elementwise `f`, with the two
    /// halves of `w` applied per node first.
    pub fn edge_pair_score(&mut self, p: Var, support: &Arc<Support>) -> Result<Var> {
        let vp = self.value(p);
        check_rows("edge_pair_score", vp, support)?;
        if vp.cols() != 2 {
            return Err(shape_err("edge_pair_score", format!("expected n x 2, got {:?}", vp.shape())));
        }
        let data = (0..support.len())
            .map(|e| {
                let (i, j) = support.endpoints(e);
                vp.get(i, 0) + vp.get(j, 1)
            })
            .collect();
        let ng = self.needs(p);
        self.push("edge_pair_score", Matrix::column(data), Op::EdgePairScore(p, support.clone()), ng)
    }

    /// Sparse-dense product `out_i = sum_{(i,j)} values_ij * h_j`.
    pub fn spmm(&mut self, values: Var, support: &Arc<Support>, h: Var) -> Result<Var> {
        let (vv, vh) = (self.value(values), self.value(h));
        check_edges("spmm", vv, support)?;
        check_rows("spmm", vh, support)?;
        let out = support.spmm_dense(vv.data(), vh);
        let ng = self.needs(values) || self.needs(h);
        self.push("spmm", out, Op::Spmm(values, support.clone(), h), ng)
    }

    /// Softmax of edge logits within each source row.
    pub fn segment_softmax(&mut self, logits: Var, support: &Arc<Support>) -> Result<Var> {
        let vl = self.value(logits);
        check_edges("segment_softmax", vl, support)?;
        let x = vl.data();
        let mut out = vec![0.0; x.len()];
        for i in 0..support.n() {
            let r = support.row_range(i);
            if r.is_empty() {
                continue;
            }
            let max = x[r.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for e in r.clone() {
                out[e] = (x[e] - max).exp();
                sum += out[e];
            }
            for e in r {
                out[e] /= sum;
            }
        }
        let ng = self.needs(logits);
        self.push("segment_softmax", Matrix::column(out), Op::SegmentSoftmax(logits, support.clone()), ng)
    }

    /// `out_ij = v_ij / sqrt(s_i * s_j)` with `s_i` the row sum of `v` over row `i`.
    /// A zero row sum contributes a zero factor instead of a division by zero.
    pub fn sym_normalize(&mut self, values: Var, support: &Arc<Support>) -> Result<Var> {
        let vv = self.value(values);
        check_edges("sym_normalize", vv, support)?;
        let out = sym_normalize_values(vv.data(), support);
        let ng = self.needs(values);
        self.push("sym_normalize", Matrix::column(out), Op::SymNormalize(values, support.clone()), ng)
    }

    /// Mean negative log-softmax of `logits` rows in `index` against `labels`.
    pub fn cross_entropy(&mut self, logits: Var, labels: Arc<Vec<usize>>, index: Arc<Vec<usize>>) -> Result<Var> {
        if index.is_empty() {
            return Err(Error::EmptyIndexSet("cross_entropy"));
        }
        let vl = self.value(logits);
        if labels.len() != vl.rows() {
            return Err(shape_err("cross_entropy", format!("{} labels for {} rows", labels.len(), vl.rows())));
        }
        let mut total = 0.0;
        for &i in index.iter() {
            let row = vl.row(i);
            let y = labels[i];
            if y >= row.len() {
                return Err(shape_err("cross_entropy", format!("label {y} with {} classes", row.len())));
            }
            total += log_sum_exp(row) - row[y];
        }
        let out = Matrix::scalar(total / index.len() as f64);
        let ng = self.needs(logits);
        self.push("cross_entropy", out, Op::CrossEntropy(logits, labels, index), ng)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        let ng = self.needs(x);
        self.push("sum", Matrix::scalar(s), Op::Sum(x), ng)
    }

    /// Inverted dropout. Identity when `rate == 0` or outside training.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.mul_const(x, Arc::new(mask))
    }

    /// Reverse pass from `output`, seeding its gradient with ones.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        let seed = self.value(output);
        grads[output.0] = Some(Matrix::filled(seed.rows(), seed.cols(), 1.0));
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let g = match (&node.op, grads[idx].as_ref()) {
                (Op::Leaf, _) | (_, None) => continue,
                (_, Some(_)) => grads[idx].take().unwrap(),
            };
            self.propagate(&node.op, &node.value, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let ga = g.matmul(&self.value(*b).transpose()).expect("matmul grad");
                    self.accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let gb = self.value(*a).t_matmul(g).expect("matmul grad");
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.clone());
                if self.needs(*b) {
                    let vb = self.value(*b);
                    let gb = if vb.shape() == (1, 1) {
                        Matrix::scalar(g.data().iter().sum())
                    } else {
                        let mut s = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            s.data_mut().iter_mut().zip(g.row(r)).for_each(|(a, b)| *a += b);
                        }
                        s
                    };
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, g.map(|v| c * v)),
            Op::ScaleBy(x, s) => {
                let c = self.value(*s).get(0, 0);
                self.accumulate(grads, *x, g.map(|v| c * v));
                if self.needs(*s) {
                    let d: f64 = g.data().iter().zip(self.value(*x).data()).map(|(a, b)| a * b).sum();
                    self.accumulate(grads, *s, Matrix::scalar(d));
                }
            }
            Op::MulConst(x, c) => {
                let data = g.data().iter().zip(c.iter()).map(|(a, b)| a * b).collect();
                self.accumulate(grads, *x, Matrix::from_vec(g.rows(), g.cols(), data).unwrap());
            }
            Op::Unary(x, kind) => {
                let vx = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(vx.data().iter().zip(out.data()))
                    .map(|(gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                    .collect();
                self.accumulate(grads, *x, Matrix::from_vec(g.rows(), g.cols(), data).unwrap());
            }
            Op::RowScale(gamma, x) => {
                let (vg, vx) = (self.value(*gamma), self.value(*x));
                if self.needs(*gamma) {
                    let gg = (0..vx.rows())
                        .map(|r| g.row(r).iter().zip(vx.row(r)).map(|(a, b)| a * b).sum())
                        .collect();
                    self.accumulate(grads, *gamma, Matrix::column(gg));
                }
                if self.needs(*x) {
                    let mut gx = g.clone();
                    for r in 0..gx.rows() {
                        let s = vg.get(r, 0);
                        gx.row_mut(r).iter_mut().for_each(|v| *v *= s);
                    }
                    self.accumulate(grads, *x, gx);
                }
            }
            Op::HConcat(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let mut ga = Matrix::zeros(g.rows(), ca);
                let mut gb = Matrix::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::EdgeConcat(z, support) => {
                let d = self.value(*z).cols();
                let mut gz = Matrix::zeros(support.n(), d);
                for e in 0..support.len() {
                    let (i, j) = support.endpoints(e);
                    let ge = g.row(e);
                    gz.row_mut(i).iter_mut().zip(&ge[..d]).for_each(|(a, b)| *a += b);
                    gz.row_mut(j).iter_mut().zip(&ge[d..]).for_each(|(a, b)| *a += b);
                }
                self.accumulate(grads, *z, gz);
            }
            Op::EdgePairScore(p, support) => {
                let mut gp = Matrix::zeros(support.n(), 2);
                for (e, &ge) in g.data().iter().enumerate() {
                    let (i, j) = support.endpoints(e);
                    gp.set(i, 0, gp.get(i, 0) + ge);
                    gp.set(j, 1, gp.get(j, 1) + ge);
                }
                self.accumulate(grads, *p, gp);
            }
            Op::Spmm(values, support, h) => {
                let vh = self.value(*h);
                if self.needs(*values) {
                    let gv = (0..support.len())
                        .map(|e| {
                            let (i, j) = support.endpoints(e);
                            g.row(i).iter().zip(vh.row(j)).map(|(a, b)| a * b).sum()
                        })
                        .collect();
                    self.accumulate(grads, *values, Matrix::column(gv));
                }
                if self.needs(*h) {
                    let vv = self.value(*values).data();
                    let mut gh = Matrix::zeros(vh.rows(), vh.cols());
                    for (e, &v) in vv.iter().enumerate() {
                        let (i, j) = support.endpoints(e);
                        let gi = g.row(i);
                        gh.row_mut(j).iter_mut().zip(gi).for_each(|(a, b)| *a += v * b);
                    }
                    self.accumulate(grads, *h, gh);
                }
            }
            Op::SegmentSoftmax(logits, support) => {
                let (y, gy) = (out.data(), g.data());
                let mut gx = vec![0.0; y.len()];
                for i in 0..support.n() {
                    let r = support.row_range(i);
                    let dot: f64 = r.clone().map(|e| gy[e] * y[e]).sum();
                    for e in r {
                        gx[e] = y[e] * (gy[e] - dot);
                    }
                }
                self.accumulate(grads, *logits, Matrix::column(gx));
            }
            Op::SymNormalize(values, support) => {
                let v = self.value(*values).data();
                let (y, gy) = (out.data(), g.data());
                let inv = inv_sqrt_row_sums(v, support);
                // c_r collects g_e * y_e over entries touching row r as source or target.
                let mut c = vec![0.0; support.n()];
                for e in 0..y.len() {
                    let (i, j) = support.endpoints(e);
                    let t = gy[e] * y[e];
                    c[i] += t;
                    c[j] += t;
                }
                let gv = (0..y.len())
                    .map(|e| {
                        let (i, j) = support.endpoints(e);
                        gy[e] * inv[i] * inv[j] - 0.5 * c[i] * inv[i] * inv[i]
                    })
                    .collect();
                self.accumulate(grads, *values, Matrix::column(gv));
            }
            Op::CrossEntropy(logits, labels, index) => {
                let vl = self.value(*logits);
                let scale = g.get(0, 0) / index.len() as f64;
                let mut gl = Matrix::zeros(vl.rows(), vl.cols());
                for &i in index.iter() {
                    let row = vl.row(i);
                    let lse = log_sum_exp(row);
                    let grow = gl.row_mut(i);
                    for (c, (gv, &x)) in grow.iter_mut().zip(row).enumerate() {
                        let p = (x - lse).exp();
                        *gv += scale * (p - if c == labels[i] { 1.0 } else { 0.0 });
                    }
                }
                self.accumulate(grads, *logits, gl);
            }
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                self.accumulate(grads, *x, Matrix::filled(r, c, g.get(0, 0)));
            }
        }
    }
}

fn unary_name(kind: Unary) -> &'static str {
    match kind {
        Unary::Elu => "elu",
        Unary::Tanh => "tanh",
        Unary::Softplus => "softplus",
        Unary::Sigmoid => "sigmoid",
        Unary::Exp => "exp",
        Unary::LeakyRelu => "leaky_relu",
        Unary::Identity => "identity",
    }
}

fn check_rows(op: &'static str, m: &Matrix, support: &Support) -> Result<()> {
    if m.rows() != support.n() {
        return Err(shape_err(op, format!("{} rows for a {}-node support", m.rows(), support.n())));
    }
    Ok(())
}

fn check_edges(op: &'static str, m: &Matrix, support: &Support) -> Result<()> {
    if m.shape() != (support.len(), 1) {
        return Err(shape_err(op, format!("{:?} for {} support entries", m.shape(), support.len())));
    }
    Ok(())
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn row_sums(v: &[f64], support: &Support) -> Vec<f64> {
    (0..support.n()).map(|i| support.row_range(i).map(|e| v[e]).sum()).collect()
}

/// `1/sqrt(s_i)`, with rows of zero mass mapped to zero.
fn inv_sqrt_row_sums(v: &[f64], support: &Support) -> Vec<f64> {
    row_sums(v, support).into_iter().map(|s| if s > 0.0 { 1.0 / s.sqrt() } else { 0.0 }).collect()
}

/// Detached symmetric normalization shared by the recorded op. Entries on a
/// row whose values sum to zero come out as zero.
pub fn sym_normalize_values(v: &[f64], support: &Support) -> Vec<f64> {
    let inv = inv_sqrt_row_sums(v, support);
    (0..v.len())
        .map(|e| {
            let (i, j) = support.endpoints(e);
            v[e] * inv[i] * inv[j]
        })
        .collect()
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
