//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation applied during a forward pass. Calling
//! [`Graph::backward`] walks the tape in reverse and returns the gradient of a
//! scalar (1×1) output with respect to every node that depends on a parameter
//! or on an input registered with [`Graph::input`].

use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Matrix)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulConst(Var, Matrix),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq_len: usize,
        key_mask: Vec<bool>,
        probs: Vec<f64>,
    },
    SliceRows {
        a: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    GatherRows {
        a: Var,
        idx: Vec<usize>,
    },
    L2NormalizeRows {
        a: Var,
        norms: Vec<f64>,
    },
    LogSoftmaxRows {
        a: Var,
        mask: Option<Vec<bool>>,
    },
    WeightedSum {
        a: Var,
        entries: Vec<(usize, f64)>,
    },
    SumSquares(Var),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

const LN_EPS: f64 = 1e-5;
const NORM_EPS: f64 = 1e-12;

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    param_vars: Vec<Option<Var>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for a parameter, `None` if it did not take part in the pass.
    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.param_vars
            .get(id.0)
            .copied()
            .flatten()
            .and_then(|v| self.grads[v.0].as_ref())
    }

    /// Gradients for every parameter, zero-filled where unused.
    pub fn into_param_grads(mut self, store: &ParamStore) -> Vec<Matrix> {
        store
            .iter()
            .map(|(id, _, value)| {
                self.param_vars
                    .get(id.0)
                    .copied()
                    .flatten()
                    .and_then(|v| self.grads[v.0].take())
                    .unwrap_or_else(|| Matrix::zeros(value.rows(), value.cols()))
            })
            .collect()
    }
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// A constant: no gradient flows into it.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, false)
    }

    /// A differentiable input leaf (gradient available after backward).
    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Leaf, true);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Var {
        let value = Matrix::matmul_t(self.value(a), ta, self.value(b), tb);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul { a, b, ta, tb }, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, false, b, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).scale(k);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, k), rg)
    }

    /// Adds a 1×c row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a row vector");
        assert_eq!(r.cols(), self.value(a).cols(), "add_row width mismatch");
        let mut value = self.value(a).clone();
        let rv = r.row(0).to_vec();
        for i in 0..value.rows() {
            for (x, b) in value.row_mut(i).iter_mut().zip(&rv) {
                *x += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(value, Op::AddRow(a, row), rg)
    }

    /// Elementwise product with a constant matrix (masks, dropout, fixed coefficients).
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Var {
        let value = self.value(a).zip_map(&c, |x, y| x * y);
        let rg = self.rg(a);
        self.push(value, Op::MulConst(a, c), rg)
    }

    pub fn add_const(&mut self, a: Var, c: Matrix) -> Var {
        let c = self.constant(c);
        self.add(a, c)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu);
        let rg = self.rg(a);
        self.push(value, Op::Gelu(a), rg)
    }

    /// Row-wise layer normalization with a learned 1×c scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let r = xv.row(i);
            let mean = r.iter().sum::<f64>() / cols as f64;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for (o, v) in xhat.row_mut(i).iter_mut().zip(r) {
                *o = (v - mean) * is;
            }
        }
        let g = self.value(gamma).row(0).to_vec();
        let b = self.value(beta).row(0).to_vec();
        let mut value = xhat.clone();
        for i in 0..rows {
            for ((o, gj), bj) in value.row_mut(i).iter_mut().zip(&g).zip(&b) {
                *o = *o * gj + bj;
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Multi-head scaled dot-product self-attention over a batch of
    /// equal-length sequences laid out as consecutive row blocks of
    /// `seq_len` rows. Rows with `key_mask[r] == false` are never attended
    /// to, and produce zero output as queries.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, seq_len: usize, key_mask: Vec<bool>) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, width) = qv.shape();
        assert_eq!(kv.shape(), (rows, width));
        assert_eq!(vv.shape(), (rows, width));
        assert_eq!(rows % seq_len, 0, "rows must be a multiple of seq_len");
        assert_eq!(width % heads, 0, "width must be divisible by heads");
        assert_eq!(key_mask.len(), rows);
        let batch = rows / seq_len;
        let dh = width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; batch * heads * seq_len * seq_len];
        let mut out = Matrix::zeros(rows, width);
        let mut scores = vec![0.0; seq_len];
        for b in 0..batch {
            let r0 = b * seq_len;
            for h in 0..heads {
                let c0 = h * dh;
                for i in 0..seq_len {
                    if !key_mask[r0 + i] {
                        continue;
                    }
                    let qi = &qv.row(r0 + i)[c0..c0 + dh];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..seq_len {
                        if key_mask[r0 + j] {
                            let s = Matrix::dot_rows(qi, &kv.row(r0 + j)[c0..c0 + dh]) * scale;
                            scores[j] = s;
                            max = max.max(s);
                        }
                    }
                    let base = ((b * heads + h) * seq_len + i) * seq_len;
                    let mut z = 0.0;
                    for j in 0..seq_len {
                        if key_mask[r0 + j] {
                            let e = (scores[j] - max).exp();
                            probs[base + j] = e;
                            z += e;
                        }
                    }
                    let orow = &mut out.row_mut(r0 + i)[c0..c0 + dh];
                    for j in 0..seq_len {
                        if key_mask[r0 + j] {
                            let p = probs[base + j] / z;
                            probs[base + j] = p;
                            for (o, x) in orow.iter_mut().zip(&vv.row(r0 + j)[c0..c0 + dh]) {
                                *o += p * x;
                            }
                        }
                    }
                }
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                key_mask,
                probs,
            },
            rg,
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice_rows(start, len);
        let rg = self.rg(a);
        self.push(value, Op::SliceRows { a, start }, rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::vstack(&mats);
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let value = self.value(a).select_rows(&idx);
        let rg = self.rg(a);
        self.push(value, Op::GatherRows { a, idx }, rg)
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut value = av.clone();
        let mut norms = Vec::with_capacity(av.rows());
        for i in 0..av.rows() {
            let n = (av.row(i).iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt();
            norms.push(n);
            for x in value.row_mut(i) {
                *x /= n;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::L2NormalizeRows { a, norms }, rg)
    }

    /// Row-wise log-softmax. Entries with `mask[i·cols + j] == false` are
    /// excluded from the normalizer and produce 0.
    pub fn log_softmax_rows(&mut self, a: Var, mask: Option<Vec<bool>>) -> Var {
        let av = self.value(a);
        let (rows, cols) = av.shape();
        if let Some(m) = &mask {
            assert_eq!(m.len(), rows * cols);
        }
        let allowed = |i: usize, j: usize| mask.as_ref().is_none_or(|m| m[i * cols + j]);
        let mut value = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let r = av.row(i);
            let max = (0..cols)
                .filter(|&j| allowed(i, j))
                .map(|j| r[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let lse = max
                + (0..cols)
                    .filter(|&j| allowed(i, j))
                    .map(|j| (r[j] - max).exp())
                    .sum::<f64>()
                    .ln();
            for j in (0..cols).filter(|&j| allowed(i, j)) {
                value[(i, j)] = r[j] - lse;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::LogSoftmaxRows { a, mask }, rg)
    }

    /// Σ w · a[flat_index] as a 1×1 value.
    pub fn weighted_sum(&mut self, a: Var, entries: Vec<(usize, f64)>) -> Var {
        let av = self.value(a).as_slice();
        let s = entries.iter().map(|&(i, w)| w * av[i]).sum();
        let rg = self.rg(a);
        self.push(Matrix::scalar(s), Op::WeightedSum { a, entries }, rg)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).sum_squares();
        let rg = self.rg(a);
        self.push(Matrix::scalar(s), Op::SumSquares(a), rg)
    }

    /// Linear map `x·W + b` with `W` of shape (in × out) and `b` of shape (1 × out).
    pub fn linear(&mut self, x: Var, w: ParamId, b: ParamId) -> Var {
        let wv = self.param(w);
        let bv = self.param(b);
        let y = self.matmul(x, wv);
        self.add_row(y, bv)
    }

    /// Reverse pass from a 1×1 output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(&node.op, &node.value, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Gradients {
            grads,
            param_vars: self.param_vars.clone(),
        }
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let da = match (ta, tb) {
                        (false, false) => Matrix::matmul_t(g, false, bv, true),
                        (false, true) => Matrix::matmul_t(g, false, bv, false),
                        (true, false) => Matrix::matmul_t(bv, false, g, true),
                        (true, true) => Matrix::matmul_t(bv, true, g, true),
                    };
                    self.accumulate(grads, *a, da);
                }
                if self.rg(*b) {
                    let db = match (ta, tb) {
                        (false, false) => Matrix::matmul_t(av, true, g, false),
                        (false, true) => Matrix::matmul_t(g, true, av, false),
                        (true, false) => Matrix::matmul_t(av, false, g, false),
                        (true, true) => Matrix::matmul_t(g, true, av, true),
                    };
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, g.scale(*k)),
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*row) {
                    let mut r = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (acc, x) in r.row_mut(0).iter_mut().zip(g.row(i)) {
                            *acc += x;
                        }
                    }
                    self.accumulate(grads, *row, r);
                }
            }
            Op::MulConst(a, c) => self.accumulate(grads, *a, g.zip_map(c, |x, y| x * y)),
            Op::Gelu(a) => {
                let d = self.value(*a).map(gelu_grad);
                self.accumulate(grads, *a, g.zip_map(&d, |x, y| x * y));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = xhat.shape();
                let gam = self.value(*gamma).row(0);
                if self.rg(*gamma) || self.rg(*beta) {
                    let mut dg = Matrix::zeros(1, cols);
                    let mut db = Matrix::zeros(1, cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            dg[(0, j)] += g[(i, j)] * xhat[(i, j)];
                            db[(0, j)] += g[(i, j)];
                        }
                    }
                    self.accumulate(grads, *gamma, dg);
                    self.accumulate(grads, *beta, db);
                }
                if self.rg(*x) {
                    let mut dx = Matrix::zeros(rows, cols);
                    let n = cols as f64;
                    for i in 0..rows {
                        let dxhat: Vec<f64> = (0..cols).map(|j| g[(i, j)] * gam[j]).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n;
                        let mean_dx = dxhat.iter().zip(xhat.row(i)).map(|(d, xh)| d * xh).sum::<f64>() / n;
                        for j in 0..cols {
                            dx[(i, j)] = inv_std[i] * (dxhat[j] - mean_d - xhat[(i, j)] * mean_dx);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                key_mask,
                probs,
            } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let (rows, width) = qv.shape();
                let (heads, seq_len) = (*heads, *seq_len);
                let batch = rows / seq_len;
                let dh = width / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut dq = Matrix::zeros(rows, width);
                let mut dk = Matrix::zeros(rows, width);
                let mut dv = Matrix::zeros(rows, width);
                let mut dp = vec![0.0; seq_len];
                for b in 0..batch {
                    let r0 = b * seq_len;
                    for h in 0..heads {
                        let c0 = h * dh;
                        for i in 0..seq_len {
                            if !key_mask[r0 + i] {
                                continue;
                            }
                            let base = ((b * heads + h) * seq_len + i) * seq_len;
                            let go = &g.row(r0 + i)[c0..c0 + dh];
                            let mut dot = 0.0;
                            for j in 0..seq_len {
                                if !key_mask[r0 + j] {
                                    continue;
                                }
                                let p = probs[base + j];
                                let vj = &vv.row(r0 + j)[c0..c0 + dh];
                                dp[j] = Matrix::dot_rows(go, vj);
                                dot += p * dp[j];
                                for (d, x) in dv.row_mut(r0 + j)[c0..c0 + dh].iter_mut().zip(go) {
                                    *d += p * x;
                                }
                            }
                            for j in 0..seq_len {
                                if !key_mask[r0 + j] {
                                    continue;
                                }
                                let ds = probs[base + j] * (dp[j] - dot) * scale;
                                if ds == 0.0 {
                                    continue;
                                }
                                for d in 0..dh {
                                    dq[(r0 + i, c0 + d)] += ds * kv[(r0 + j, c0 + d)];
                                    dk[(r0 + j, c0 + d)] += ds * qv[(r0 + i, c0 + d)];
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *q, dq);
                self.accumulate(grads, *k, dk);
                self.accumulate(grads, *v, dv);
            }
            Op::SliceRows { a, start } => {
                if self.rg(*a) {
                    let av = self.value(*a);
                    let mut d = Matrix::zeros(av.rows(), av.cols());
                    for i in 0..g.rows() {
                        d.row_mut(start + i).copy_from_slice(g.row(i));
                    }
                    self.accumulate(grads, *a, d);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    if self.rg(p) {
                        self.accumulate(grads, p, g.slice_rows(offset, r));
                    }
                    offset += r;
                }
            }
            Op::GatherRows { a, idx } => {
                if self.rg(*a) {
                    let av = self.value(*a);
                    let mut d = Matrix::zeros(av.rows(), av.cols());
                    for (i, &src) in idx.iter().enumerate() {
                        for (acc, x) in d.row_mut(src).iter_mut().zip(g.row(i)) {
                            *acc += x;
                        }
                    }
                    self.accumulate(grads, *a, d);
                }
            }
            Op::L2NormalizeRows { a, norms } => {
                let mut d = Matrix::zeros(out.rows(), out.cols());
                for (i, &n) in norms.iter().enumerate() {
                    let y = out.row(i);
                    let gi = g.row(i);
                    let yg = Matrix::dot_rows(y, gi);
                    for ((o, yj), gj) in d.row_mut(i).iter_mut().zip(y).zip(gi) {
                        *o = (gj - yj * yg) / n;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::LogSoftmaxRows { a, mask } => {
                let (rows, cols) = out.shape();
                let allowed = |i: usize, j: usize| mask.as_ref().is_none_or(|m| m[i * cols + j]);
                let mut d = Matrix::zeros(rows, cols);
                for i in 0..rows {
                    let gsum: f64 = (0..cols).filter(|&j| allowed(i, j)).map(|j| g[(i, j)]).sum();
                    for j in (0..cols).filter(|&j| allowed(i, j)) {
                        d[(i, j)] = g[(i, j)] - out[(i, j)].exp() * gsum;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::WeightedSum { a, entries } => {
                let av = self.value(*a);
                let mut d = Matrix::zeros(av.rows(), av.cols());
                let s = g.item();
                for &(i, w) in entries {
                    d.as_mut_slice()[i] += w * s;
                }
                self.accumulate(grads, *a, d);
            }
            Op::SumSquares(a) => {
                let s = 2.0 * g.item();
                self.accumulate(grads, *a, self.value(*a).scale(s));
            }
        }
    }
}
