//! Reverse-mode gradients over a small set of coarse operations.
//!
//! Each node on the [`Tape`] owns its forward value plus whatever it needs to
//! run its own backward rule. Operations are deliberately coarse (a whole
//! LSTM pass is one node) so that per-sample training stays cheap.

use std::collections::BTreeMap;

use super::loss;
use super::{DenseArray, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct LstmCache {
    /// Activated gates per time position, `[T × 4H]` in order i, f, g, o.
    gates: Vec<f64>,
    /// Cell state per time position, `[T × H]`.
    cell: Vec<f64>,
    hidden: usize,
}

#[derive(Debug)]
enum Op {
    Leaf { param: Option<String> },
    Linear { x: Var, w: Var, b: Var },
    Conv1d { x: Var, k: Var, b: Option<Var>, stride: usize, groups: usize },
    Lstm { x: Var, w_ih: Var, w_hh: Var, b: Var, reverse: bool, cache: LstmCache },
    ConcatCols(Var, Var),
    Relu(Var),
    Tanh(Var),
    Transpose(Var),
    MeanRows(Var),
    LastRow(Var),
    Softmax(Var),
    Index(Var, usize),
    Scale(Var, f64),
    Add(Var, Var),
    Sum(Var),
    Dot(Var, Vec<f64>),
    MeanKl { p: Var, target: Vec<f64> },
    CrossEntropy { p: Var, class: usize },
    Mse { p: Var, target: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: DenseArray,
    op: Op,
}

/// Recorded operation sequence. Build values with the op methods, then call
/// [`Tape::backward`] on a scalar node.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<DenseArray>>,
    params: BTreeMap<String, DenseArray>,
}

impl Gradients {
    /// Gradient of a node, or `None` if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&DenseArray> {
        self.nodes[v.0].as_ref()
    }

    /// Gradient for a named parameter leaf (zeros are not materialized).
    pub fn param(&self, name: &str) -> Option<&DenseArray> {
        self.params.get(name)
    }

    pub fn params(&self) -> &BTreeMap<String, DenseArray> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<String, DenseArray> {
        self.params
    }
}

fn dim_err(msg: String) -> Error {
    Error::Dimension(msg)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: DenseArray, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input (gradients are still tracked and reachable via `wrt`).
    pub fn input(&mut self, value: DenseArray) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// Leaf bound to a named parameter of `store`.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let value = store.get(name)?.clone();
        Ok(self.push(value, Op::Leaf { param: Some(name.to_string()) }))
    }

    /// `x·W + b` for `x` of shape `[R×I]` (or `[I]`), `W` `[I×O]`, `b` `[O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (rows, d_in) = xv.matrix_dims();
        if wv.ndim() != 2 || wv.shape()[0] != d_in {
            return Err(dim_err(format!("linear: x {:?} vs W {:?}", xv.shape(), wv.shape())));
        }
        let d_out = wv.shape()[1];
        if bv.len() != d_out {
            return Err(dim_err(format!("linear: bias {:?} vs {d_out} outputs", bv.shape())));
        }
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        let mut out = vec![0.0; rows * d_out];
        for r in 0..rows {
            let o = &mut out[r * d_out..(r + 1) * d_out];
            o.copy_from_slice(bd);
            for i in 0..d_in {
                let xi = xd[r * d_in + i];
                if xi == 0.0 {
                    continue;
                }
                let wrow = &wd[i * d_out..(i + 1) * d_out];
                for (oj, wj) in o.iter_mut().zip(wrow) {
                    *oj += xi * wj;
                }
            }
        }
        let shape = if xv.ndim() == 1 { vec![d_out] } else { vec![rows, d_out] };
        Ok(self.push(DenseArray::from_parts(shape, out), Op::Linear { x, w, b }))
    }

    /// Grouped valid-mode 1-D correlation. `x` is `[C×T]`, `k` is
    /// `[F×(C/groups)×K]`, optional bias `[F]`; output `[F×T']` with
    /// `T' = (T−K)/stride + 1`.
    pub fn conv1d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize, groups: usize) -> Result<Var> {
        let (xv, kv) = (self.value(x), self.value(k));
        if xv.ndim() != 2 || kv.ndim() != 3 {
            return Err(dim_err(format!("conv1d: x {:?}, kernels {:?}", xv.shape(), kv.shape())));
        }
        let (c, t) = (xv.shape()[0], xv.shape()[1]);
        let (f, cg, kw) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
        if stride == 0 || groups == 0 || c % groups != 0 || f % groups != 0 || cg != c / groups {
            return Err(dim_err(format!(
                "conv1d: C={c}, F={f}, C_g={cg}, groups={groups}, stride={stride} are inconsistent"
            )));
        }
        if kw > t {
            return Err(Error::Window(format!("conv1d: kernel {kw} longer than sequence {t}")));
        }
        if let Some(b) = b {
            if self.value(b).len() != f {
                return Err(dim_err("conv1d: bias length must equal F".into()));
            }
        }
        let t_out = (t - kw) / stride + 1;
        let f_per_group = f / groups;
        let (xd, kd) = (xv.data(), kv.data());
        let mut out = vec![0.0; f * t_out];
        for fi in 0..f {
            let g = fi / f_per_group;
            let bias = b.map_or(0.0, |b| self.value(b).data()[fi]);
            for to in 0..t_out {
                let mut acc = bias;
                for ci in 0..cg {
                    let xrow = &xd[(g * cg + ci) * t..(g * cg + ci + 1) * t];
                    let krow = &kd[(fi * cg + ci) * kw..(fi * cg + ci + 1) * kw];
                    let start = to * stride;
                    acc += krow.iter().zip(&xrow[start..start + kw]).map(|(a, b)| a * b).sum::<f64>();
                }
                out[fi * t_out + to] = acc;
            }
        }
        Ok(self.push(
            DenseArray::from_parts(vec![f, t_out], out),
            Op::Conv1d { x, k, b, stride, groups },
        ))
    }

    /// One LSTM pass over `x` `[T×D]` with `w_ih` `[D×4H]`, `w_hh` `[H×4H]`,
    /// `b` `[4H]` (gate order i, f, g, o). When `reverse` is set the sequence
    /// is consumed back to front but outputs stay aligned with input time.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, b: Var, reverse: bool) -> Result<Var> {
        let (xv, wi, wh, bv) = (self.value(x), self.value(w_ih), self.value(w_hh), self.value(b));
        if xv.ndim() != 2 {
            return Err(dim_err(format!("lstm: input must be [T×D], got {:?}", xv.shape())));
        }
        let (t_len, d) = (xv.shape()[0], xv.shape()[1]);
        if wh.ndim() != 2 || wh.shape()[1] != 4 * wh.shape()[0] {
            return Err(dim_err(format!("lstm: recurrent weights {:?} must be [H×4H]", wh.shape())));
        }
        let h = wh.shape()[0];
        if wi.shape() != [d, 4 * h] || bv.len() != 4 * h {
            return Err(dim_err(format!(
                "lstm: input weights {:?} / bias {:?} inconsistent with D={d}, H={h}",
                wi.shape(),
                bv.shape()
            )));
        }
        let (xd, wid, whd, bd) = (xv.data(), wi.data(), wh.data(), bv.data());
        let g4 = 4 * h;
        let mut gates = vec![0.0; t_len * g4];
        let mut cell = vec![0.0; t_len * h];
        let mut out = vec![0.0; t_len * h];
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut z = vec![0.0; g4];
        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            z.copy_from_slice(bd);
            for i in 0..d {
                let xi = xd[t * d + i];
                if xi == 0.0 {
                    continue;
                }
                for (zj, wj) in z.iter_mut().zip(&wid[i * g4..(i + 1) * g4]) {
                    *zj += xi * wj;
                }
            }
            for (i, &hi) in h_prev.iter().enumerate() {
                if hi == 0.0 {
                    continue;
                }
                for (zj, wj) in z.iter_mut().zip(&whd[i * g4..(i + 1) * g4]) {
                    *zj += hi * wj;
                }
            }
            let gt = &mut gates[t * g4..(t + 1) * g4];
            for j in 0..h {
                let ig = sigmoid(z[j]);
                let fg = sigmoid(z[h + j]);
                let gg = z[2 * h + j].tanh();
                let og = sigmoid(z[3 * h + j]);
                gt[j] = ig;
                gt[h + j] = fg;
                gt[2 * h + j] = gg;
                gt[3 * h + j] = og;
                let c = fg * c_prev[j] + ig * gg;
                cell[t * h + j] = c;
                out[t * h + j] = og * c.tanh();
            }
            c_prev.copy_from_slice(&cell[t * h..(t + 1) * h]);
            h_prev.copy_from_slice(&out[t * h..(t + 1) * h]);
        }
        Ok(self.push(
            DenseArray::from_parts(vec![t_len, h], out),
            Op::Lstm { x, w_ih, w_hh, b, reverse, cache: LstmCache { gates, cell, hidden: h } },
        ))
    }

    /// Column-wise concatenation of two `[R×·]` arrays.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let ((ra, ca), (rb, cb)) = (av.matrix_dims(), bv.matrix_dims());
        if av.ndim() != 2 || bv.ndim() != 2 || ra != rb {
            return Err(dim_err(format!("concat: {:?} vs {:?}", av.shape(), bv.shape())));
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            out.extend_from_slice(av.row(r));
            out.extend_from_slice(bv.row(r));
        }
        Ok(self.push(DenseArray::from_parts(vec![ra, ca + cb], out), Op::ConcatCols(a, b)))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| f(e)).collect();
        let shape = v.shape().to_vec();
        self.push(DenseArray::from_parts(shape, data), op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map(x, |v| v * factor, Op::Scale(x, factor))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.ndim() != 2 {
            return Err(dim_err(format!("transpose needs a matrix, got {:?}", v.shape())));
        }
        let t = v.transpose();
        Ok(self.push(t, Op::Transpose(x)))
    }

    /// Mean over rows of `[R×C]`, giving `[C]`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let (r, c) = v.matrix_dims();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, e) in out.iter_mut().zip(v.row(i)) {
                *o += e;
            }
        }
        out.iter_mut().for_each(|o| *o /= r as f64);
        self.push(DenseArray::from_parts(vec![c], out), Op::MeanRows(x))
    }

    /// Last row of `[R×C]`, giving `[C]`.
    pub fn last_row(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let (r, c) = v.matrix_dims();
        let row = v.row(r - 1).to_vec();
        self.push(DenseArray::from_parts(vec![c], row), Op::LastRow(x))
    }

    /// Softmax over a 1-D array.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.ndim() != 1 {
            return Err(dim_err(format!("softmax expects a vector, got {:?}", v.shape())));
        }
        let s = loss::softmax(v.data());
        Ok(self.push(DenseArray::from_parts(vec![s.len()], s), Op::Softmax(x)))
    }

    /// Scalar element `x[i]` of a flattened array.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var> {
        let v = self.value(x);
        if i >= v.len() {
            return Err(Error::Label(format!("index {i} out of range for {} elements", v.len())));
        }
        let e = v.data()[i];
        Ok(self.push(DenseArray::scalar(e), Op::Index(x, i)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(dim_err(format!("add: {:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let shape = av.shape().to_vec();
        Ok(self.push(DenseArray::from_parts(shape, data), Op::Add(a, b)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(DenseArray::scalar(s), Op::Sum(x))
    }

    /// `Σ x_i w_i` against constant weights of the same element count.
    pub fn dot(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        let v = self.value(x);
        if v.len() != weights.len() {
            return Err(dim_err(format!("dot: {} elements vs {} weights", v.len(), weights.len())));
        }
        let s = v.data().iter().zip(weights).map(|(a, b)| a * b).sum();
        Ok(self.push(DenseArray::scalar(s), Op::Dot(x, weights.to_vec())))
    }

    /// Mean KL divergence of predicted distribution `p` from `target`.
    pub fn mean_kl(&mut self, p: Var, target: &[f64]) -> Result<Var> {
        let v = loss::mean_kl(target, self.value(p).data())?;
        Ok(self.push(DenseArray::scalar(v), Op::MeanKl { p, target: target.to_vec() }))
    }

    /// Cross-entropy of predicted distribution `p` against class `class`.
    pub fn cross_entropy(&mut self, p: Var, class: usize) -> Result<Var> {
        let pv = self.value(p);
        if class >= pv.len() {
            return Err(Error::Label(format!("class {class} out of range for {} classes", pv.len())));
        }
        let v = loss::cross_entropy_index(pv.data(), class);
        Ok(self.push(DenseArray::scalar(v), Op::CrossEntropy { p, class }))
    }

    pub fn mse(&mut self, p: Var, target: &[f64]) -> Result<Var> {
        let v = loss::mse(self.value(p).data(), target)?;
        Ok(self.push(DenseArray::scalar(v), Op::Mse { p, target: target.to_vec() }))
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(dim_err(format!(
                "backward needs a scalar root, got {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<DenseArray>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(DenseArray::scalar(1.0));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let mut params = BTreeMap::new();
        for (node, g) in self.nodes.iter().zip(&grads) {
            if let (Op::Leaf { param: Some(name) }, Some(g)) = (&node.op, g) {
                if !g.is_finite() {
                    return Err(Error::Numeric(format!("gradient of `{name}` is not finite")));
                }
                match params.get_mut(name) {
                    None => {
                        params.insert(name.clone(), g.clone());
                    }
                    Some(acc) => accumulate(acc, g.data()),
                }
            }
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn backprop_node(&self, idx: usize, g: &DenseArray, grads: &mut [Option<DenseArray>]) {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (rows, d_in) = xv.matrix_dims();
                let d_out = wv.shape()[1];
                let (xd, wd) = (xv.data(), wv.data());
                let mut gx = vec![0.0; rows * d_in];
                let mut gw = vec![0.0; d_in * d_out];
                let mut gb = vec![0.0; d_out];
                for r in 0..rows {
                    let grow = &gd[r * d_out..(r + 1) * d_out];
                    for (gbj, gj) in gb.iter_mut().zip(grow) {
                        *gbj += gj;
                    }
                    for i in 0..d_in {
                        let wrow = &wd[i * d_out..(i + 1) * d_out];
                        gx[r * d_in + i] = wrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        let xi = xd[r * d_in + i];
                        if xi != 0.0 {
                            for (gwj, gj) in gw[i * d_out..(i + 1) * d_out].iter_mut().zip(grow) {
                                *gwj += xi * gj;
                            }
                        }
                    }
                }
                add_grad(grads, *x, xv.shape(), gx);
                add_grad(grads, *w, wv.shape(), gw);
                add_grad(grads, *b, &[d_out], gb);
            }
            Op::Conv1d { x, k, b, stride, groups } => {
                let (xv, kv) = (self.value(*x), self.value(*k));
                let (c, t) = (xv.shape()[0], xv.shape()[1]);
                let (f, cg, kw) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
                let t_out = node.value.shape()[1];
                let f_per_group = f / groups;
                let (xd, kd) = (xv.data(), kv.data());
                let mut gx = vec![0.0; c * t];
                let mut gk = vec![0.0; kd.len()];
                let mut gb = vec![0.0; f];
                for fi in 0..f {
                    let grp = fi / f_per_group;
                    for to in 0..t_out {
                        let go = gd[fi * t_out + to];
                        if go == 0.0 {
                            continue;
                        }
                        gb[fi] += go;
                        let start = to * stride;
                        for ci in 0..cg {
                            let ch = grp * cg + ci;
                            for j in 0..kw {
                                gk[(fi * cg + ci) * kw + j] += go * xd[ch * t + start + j];
                                gx[ch * t + start + j] += go * kd[(fi * cg + ci) * kw + j];
                            }
                        }
                    }
                }
                add_grad(grads, *x, &[c, t], gx);
                add_grad(grads, *k, &[f, cg, kw], gk);
                if let Some(b) = b {
                    add_grad(grads, *b, &[f], gb);
                }
            }
            Op::Lstm { x, w_ih, w_hh, b, reverse, cache } => {
                self.backprop_lstm(gd, *x, *w_ih, *w_hh, *b, *reverse, cache, &node.value, grads);
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.value(*a).shape()[1], self.value(*b).shape()[1]);
                let rows = node.value.shape()[0];
                let mut ga = Vec::with_capacity(rows * ca);
                let mut gb = Vec::with_capacity(rows * cb);
                for r in 0..rows {
                    let row = &gd[r * (ca + cb)..(r + 1) * (ca + cb)];
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                add_grad(grads, *a, &[rows, ca], ga);
                add_grad(grads, *b, &[rows, cb], gb);
            }
            Op::Relu(x) => {
                let gx = self.value(*x).data().iter().zip(gd).map(|(v, g)| if *v > 0.0 { *g } else { 0.0 }).collect();
                add_grad(grads, *x, node.value.shape(), gx);
            }
            Op::Tanh(x) => {
                let gx = node.value.data().iter().zip(gd).map(|(y, g)| g * (1.0 - y * y)).collect();
                add_grad(grads, *x, node.value.shape(), gx);
            }
            Op::Scale(x, factor) => {
                let gx = gd.iter().map(|g| g * factor).collect();
                add_grad(grads, *x, node.value.shape(), gx);
            }
            Op::Transpose(x) => {
                let gt = g.transpose();
                add_grad(grads, *x, self.value(*x).shape(), gt.into_data());
            }
            Op::MeanRows(x) => {
                let xv = self.value(*x);
                let (r, _) = xv.matrix_dims();
                let mut gx = Vec::with_capacity(xv.len());
                for _ in 0..r {
                    gx.extend(gd.iter().map(|g| g / r as f64));
                }
                add_grad(grads, *x, xv.shape(), gx);
            }
            Op::LastRow(x) => {
                let xv = self.value(*x);
                let mut gx = vec![0.0; xv.len()];
                let n = gd.len();
                gx[xv.len() - n..].copy_from_slice(gd);
                add_grad(grads, *x, xv.shape(), gx);
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let dot: f64 = y.iter().zip(gd).map(|(a, b)| a * b).sum();
                let gx = y.iter().zip(gd).map(|(yi, gi)| yi * (gi - dot)).collect();
                add_grad(grads, *x, node.value.shape(), gx);
            }
            Op::Index(x, i) => {
                let xv = self.value(*x);
                let mut gx = vec![0.0; xv.len()];
                gx[*i] = gd[0];
                add_grad(grads, *x, xv.shape(), gx);
            }
            Op::Add(a, b) => {
                add_grad(grads, *a, node.value.shape(), gd.to_vec());
                add_grad(grads, *b, node.value.shape(), gd.to_vec());
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                add_grad(grads, *x, xv.shape(), vec![gd[0]; xv.len()]);
            }
            Op::Dot(x, weights) => {
                let xv = self.value(*x);
                add_grad(grads, *x, xv.shape(), weights.iter().map(|w| w * gd[0]).collect());
            }
            Op::MeanKl { p, target } => {
                let pv = self.value(*p);
                let gp = loss::mean_kl_grad(target, pv.data()).into_iter().map(|v| v * gd[0]).collect();
                add_grad(grads, *p, pv.shape(), gp);
            }
            Op::CrossEntropy { p, class } => {
                let pv = self.value(*p);
                let gp = loss::cross_entropy_grad(pv.data(), *class).into_iter().map(|v| v * gd[0]).collect();
                add_grad(grads, *p, pv.shape(), gp);
            }
            Op::Mse { p, target } => {
                let pv = self.value(*p);
                let gp = loss::mse_grad(pv.data(), target).into_iter().map(|v| v * gd[0]).collect();
                add_grad(grads, *p, pv.shape(), gp);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_lstm(
        &self,
        g_out: &[f64],
        x: Var,
        w_ih: Var,
        w_hh: Var,
        b: Var,
        reverse: bool,
        cache: &LstmCache,
        out: &DenseArray,
        grads: &mut [Option<DenseArray>],
    ) {
        let (xv, wi, wh) = (self.value(x), self.value(w_ih), self.value(w_hh));
        let (t_len, d) = (xv.shape()[0], xv.shape()[1]);
        let h = cache.hidden;
        let g4 = 4 * h;
        let (xd, wid, whd, hd) = (xv.data(), wi.data(), wh.data(), out.data());
        let mut gx = vec![0.0; t_len * d];
        let mut gwi = vec![0.0; d * g4];
        let mut gwh = vec![0.0; h * g4];
        let mut gb = vec![0.0; g4];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; g4];
        let zeros = vec![0.0; h];
        for step in (0..t_len).rev() {
            let t = if reverse { t_len - 1 - step } else { step };
            let prev = if step == 0 { None } else if reverse { Some(t + 1) } else { Some(t - 1) };
            let c_prev = prev.map_or(&zeros[..], |p| &cache.cell[p * h..(p + 1) * h]);
            let h_prev = prev.map_or(&zeros[..], |p| &hd[p * h..(p + 1) * h]);
            let gt = &cache.gates[t * g4..(t + 1) * g4];
            for j in 0..h {
                let (ig, fg, gg, og) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let c = cache.cell[t * h + j];
                let tc = c.tanh();
                let dh = g_out[t * h + j] + dh_next[j];
                let dc = dh * og * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * gg * ig * (1.0 - ig);
                dz[h + j] = dc * c_prev[j] * fg * (1.0 - fg);
                dz[2 * h + j] = dc * ig * (1.0 - gg * gg);
                dz[3 * h + j] = dh * tc * og * (1.0 - og);
                dc_next[j] = dc * fg;
            }
            for (gbj, dzj) in gb.iter_mut().zip(&dz) {
                *gbj += dzj;
            }
            for i in 0..d {
                let xi = xd[t * d + i];
                let wrow = &wid[i * g4..(i + 1) * g4];
                gx[t * d + i] = wrow.iter().zip(&dz).map(|(a, b)| a * b).sum();
                if xi != 0.0 {
                    for (gw, dzj) in gwi[i * g4..(i + 1) * g4].iter_mut().zip(&dz) {
                        *gw += xi * dzj;
                    }
                }
            }
            for i in 0..h {
                let wrow = &whd[i * g4..(i + 1) * g4];
                dh_next[i] = wrow.iter().zip(&dz).map(|(a, b)| a * b).sum();
                let hi = h_prev[i];
                if hi != 0.0 {
                    for (gw, dzj) in gwh[i * g4..(i + 1) * g4].iter_mut().zip(&dz) {
                        *gw += hi * dzj;
                    }
                }
            }
        }
        add_grad(grads, x, &[t_len, d], gx);
        add_grad(grads, w_ih, &[d, g4], gwi);
        add_grad(grads, w_hh, &[h, g4], gwh);
        add_grad(grads, b, &[g4], gb);
    }
}

fn accumulate(acc: &mut DenseArray, g: &[f64]) {
    for (a, v) in acc.data_mut().iter_mut().zip(g) {
        *a += v;
    }
}

fn add_grad(grads: &mut [Option<DenseArray>], v: Var, shape: &[usize], g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => accumulate(acc, &g),
        slot @ None => *slot = Some(DenseArray::from_parts(shape.to_vec(), g)),
    }
}
