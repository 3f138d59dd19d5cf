//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] borrows a [`ParamStore`]; parameter leaves read their values in
//! place. Nodes are appended in evaluation order, so a reverse sweep over the
//! tape is a valid topological order for the backward pass.

use std::collections::HashMap;

use crate::crf;
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{softmax_in_place, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    ScaleRows(Var, Var),
    SoftmaxRows(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    ReplaceRows {
        base: Var,
        rows: Vec<usize>,
        src: Var,
        src_rows: Vec<usize>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Matrix,
    },
    LstmSeq {
        pre: Var,
        wh: Var,
        /// Activated gates `i, f, g, o` per step, `n x 4h`.
        gates: Matrix,
        /// Cell states, `n x h`.
        cells: Matrix,
    },
    CrfNll {
        emissions: Var,
        transitions: Var,
        grad_emissions: Matrix,
        grad_transitions: Matrix,
    },
}

struct Node {
    value: Option<Matrix>,
    op: Op,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.store.values(*id),
            (None, _) => unreachable!("only parameter nodes borrow their value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Constant)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a * b^T`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(out, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Add a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        let mut out = self.value(a).clone();
        assert_eq!(b.shape(), (1, out.cols()), "add_row bias shape");
        for r in 0..out.rows() {
            for (o, x) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += x;
            }
        }
        self.push(out, Op::AddRow(a, bias))
    }

    /// `a * w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| s * x);
        self.push(out, Op::Affine(a, s))
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 - x);
        self.push(out, Op::Affine(a, -1.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        self.push(out, Op::Gelu(a))
    }

    /// Row `i` of `a` multiplied by `w[i]` (`w` is `n x 1`).
    pub fn scale_rows(&mut self, a: Var, w: Var) -> Var {
        let weights = self.value(w);
        let mut out = self.value(a).clone();
        assert_eq!(weights.shape(), (out.rows(), 1), "scale_rows weight shape");
        for r in 0..out.rows() {
            let s = weights.get(r, 0);
            for x in out.row_mut(r) {
                *x *= s;
            }
        }
        self.push(out, Op::ScaleRows(a, w))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat_cols row count");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + m.cols()].copy_from_slice(m.row(r));
            }
            offset += m.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols(), cols, "concat_rows column count");
            data.extend_from_slice(m.data());
            rows += m.rows();
        }
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let m = self.value(a);
        assert!(start <= end && end <= m.cols(), "slice_cols bounds");
        let mut out = Matrix::zeros(m.rows(), end - start);
        for r in 0..m.rows() {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..end]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let m = self.value(a);
        assert!(start <= end && end <= m.rows(), "slice_rows bounds");
        let out = Matrix::from_vec(
            end - start,
            m.cols(),
            m.data()[start * m.cols()..end * m.cols()].to_vec(),
        );
        self.push(out, Op::SliceRows(a, start))
    }

    /// Rows of `table` selected by `ids` (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let out = self.value(table).select_rows(ids);
        self.push(out, Op::Gather(table, ids.to_vec()))
    }

    /// Copy of `base` whose row `rows[j]` is replaced by row `src_rows[j]` of `src`.
    pub fn replace_rows(&mut self, base: Var, rows: &[usize], src: Var, src_rows: &[usize]) -> Var {
        assert_eq!(rows.len(), src_rows.len(), "replace_rows index lists");
        let s = self.value(src);
        let mut out = self.value(base).clone();
        assert_eq!(s.cols(), out.cols(), "replace_rows widths");
        for (&r, &sr) in rows.iter().zip(src_rows) {
            out.row_mut(r).copy_from_slice(s.row(sr));
        }
        self.push(
            out,
            Op::ReplaceRows {
                base,
                rows: rows.to_vec(),
                src,
                src_rows: src_rows.to_vec(),
            },
        )
    }

    /// Per-row layer normalization with `1 x d` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let m = self.value(x);
        let g = self.value(gamma);
        let b = self.value(beta);
        let d = m.cols();
        let mut normalized = Matrix::zeros(m.rows(), d);
        let mut out = Matrix::zeros(m.rows(), d);
        let mut inv_std = Vec::with_capacity(m.rows());
        for r in 0..m.rows() {
            let row = m.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for c in 0..d {
                let xh = (row[c] - mean) * inv;
                normalized.set(r, c, xh);
                out.set(r, c, g.get(0, c) * xh + b.get(0, c));
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Summed softmax cross-entropy over rows with a target; `None` rows are ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let m = self.value(logits);
        assert_eq!(m.rows(), targets.len(), "cross_entropy targets");
        let mut probs = m.clone();
        let mut loss = 0.0;
        for (r, t) in targets.iter().enumerate() {
            softmax_in_place(probs.row_mut(r));
            if let Some(t) = *t {
                loss -= probs.get(r, t).max(f64::MIN_POSITIVE).ln();
            }
        }
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// LSTM recurrence over precomputed input projections `pre` (`n x 4h`,
    /// gate blocks `i, f, g, o`) with recurrent weight `wh` (`h x 4h`), from
    /// zero initial state. Returns the `n x h` hidden states.
    pub fn lstm_seq(&mut self, pre: Var, wh: Var) -> Var {
        let p = self.value(pre);
        let w = self.value(wh);
        let h = w.rows();
        assert_eq!(w.cols(), 4 * h, "lstm_seq recurrent weight shape");
        assert_eq!(p.cols(), 4 * h, "lstm_seq input projection width");
        let n = p.rows();
        let mut gates = Matrix::zeros(n, 4 * h);
        let mut cells = Matrix::zeros(n, h);
        let mut hidden = Matrix::zeros(n, h);
        let mut z = vec![0.0; 4 * h];
        for t in 0..n {
            z.copy_from_slice(p.row(t));
            if t > 0 {
                let hp = hidden.row(t - 1);
                for (k, &hk) in hp.iter().enumerate() {
                    if hk != 0.0 {
                        for (zj, wj) in z.iter_mut().zip(w.row(k)) {
                            *zj += hk * wj;
                        }
                    }
                }
            }
            let gr = gates.row_mut(t);
            for j in 0..h {
                gr[j] = sigmoid(z[j]);
                gr[h + j] = sigmoid(z[h + j]);
                gr[2 * h + j] = z[2 * h + j].tanh();
                gr[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            for j in 0..h {
                let c_prev = if t > 0 { cells.get(t - 1, j) } else { 0.0 };
                let gr = gates.row(t);
                let c = gr[j] * gr[2 * h + j] + gr[h + j] * c_prev;
                cells.set(t, j, c);
                hidden.set(t, j, gr[3 * h + j] * c.tanh());
            }
        }
        self.push(hidden, Op::LstmSeq { pre, wh, gates, cells })
    }

    /// Negative CRF log-likelihood of `labels` given `n x C` emission scores
    /// and a `(C+2) x (C+2)` transition matrix.
    pub fn crf_nll(&mut self, emissions: Var, transitions: Var, labels: &[usize]) -> Var {
        let grad = crf::nll_grad(self.value(emissions), self.value(transitions), labels)
            .expect("crf_nll: labels must match emissions");
        self.push(
            Matrix::from_vec(1, 1, vec![grad.loss]),
            Op::CrfNll {
                emissions,
                transitions,
                grad_emissions: grad.emissions,
                grad_transitions: grad.transitions,
            },
        )
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads = self.backward_all(loss);
        let mut out = Gradients::new(self.store.len());
        for (&id, &v) in &self.param_vars {
            if let Some(g) = grads[v.0].take() {
                out.accumulate_owned(id, g);
            }
        }
        out
    }

    /// Gradient with respect to an arbitrary node (e.g. a constant input).
    pub fn backward_to(&self, loss: Var, wrt: Var) -> Option<Matrix> {
        self.backward_all(loss)[wrt.0].take()
    }

    fn backward_all(&self, loss: Var) -> Vec<Option<Matrix>> {
        assert_eq!(self.shape(loss), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = || node.value.as_ref().expect("computed node");
            match &node.op {
                Op::Constant | Op::Param(_) => {
                    grads[idx] = Some(dy);
                }
                Op::MatMul(a, b) => {
                    let da = dy.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&dy);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatMulT(a, b) => {
                    let da = dy.matmul(self.value(*b));
                    let db = dy.t_matmul(self.value(*a));
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, dy.clone());
                    acc(&mut grads, *a, dy);
                }
                Op::AddRow(a, bias) => {
                    let mut db = Matrix::zeros(1, dy.cols());
                    for r in 0..dy.rows() {
                        for (o, x) in db.data_mut().iter_mut().zip(dy.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *bias, db);
                    acc(&mut grads, *a, dy);
                }
                Op::Mul(a, b) => {
                    let da = dy.zip_map(self.value(*b), |g, x| g * x);
                    let db = dy.zip_map(self.value(*a), |g, x| g * x);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Affine(a, s) => {
                    let s = *s;
                    acc(&mut grads, *a, dy.map(|g| s * g));
                }
                Op::Tanh(a) => {
                    acc(&mut grads, *a, dy.zip_map(y(), |g, t| g * (1.0 - t * t)));
                }
                Op::Sigmoid(a) => {
                    acc(&mut grads, *a, dy.zip_map(y(), |g, s| g * s * (1.0 - s)));
                }
                Op::Gelu(a) => {
                    let dx = dy.zip_map(self.value(*a), |g, x| {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                    });
                    acc(&mut grads, *a, dx);
                }
                Op::ScaleRows(a, w) => {
                    let weights = self.value(*w);
                    let x = self.value(*a);
                    let mut da = dy.clone();
                    let mut dw = Matrix::zeros(weights.rows(), 1);
                    for r in 0..dy.rows() {
                        let s = weights.get(r, 0);
                        let mut dot = 0.0;
                        for (c, g) in da.row_mut(r).iter_mut().enumerate() {
                            dot += *g * x.get(r, c);
                            *g *= s;
                        }
                        dw.set(r, 0, dot);
                    }
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *w, dw);
                }
                Op::SoftmaxRows(a) => {
                    let s = y();
                    let mut dx = Matrix::zeros(s.rows(), s.cols());
                    for r in 0..s.rows() {
                        let dot: f64 = dy.row(r).iter().zip(s.row(r)).map(|(g, p)| g * p).sum();
                        for c in 0..s.cols() {
                            dx.set(r, c, s.get(r, c) * (dy.get(r, c) - dot));
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::Transpose(a) => acc(&mut grads, *a, dy.transpose()),
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = self.value(p).cols();
                        let mut g = Matrix::zeros(dy.rows(), cols);
                        for r in 0..dy.rows() {
                            g.row_mut(r).copy_from_slice(&dy.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        acc(&mut grads, p, g);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        let cols = dy.cols();
                        let g = Matrix::from_vec(
                            rows,
                            cols,
                            dy.data()[offset * cols..(offset + rows) * cols].to_vec(),
                        );
                        offset += rows;
                        acc(&mut grads, p, g);
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut g = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        g.row_mut(r)[*start..*start + dy.cols()].copy_from_slice(dy.row(r));
                    }
                    acc(&mut grads, *a, g);
                }
                Op::SliceRows(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut g = Matrix::zeros(rows, cols);
                    g.data_mut()[start * cols..(start + dy.rows()) * cols].copy_from_slice(dy.data());
                    acc(&mut grads, *a, g);
                }
                Op::Gather(table, ids) => {
                    let (rows, cols) = self.shape(*table);
                    let mut g = Matrix::zeros(rows, cols);
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, x) in g.row_mut(id).iter_mut().zip(dy.row(i)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *table, g);
                }
                Op::ReplaceRows {
                    base,
                    rows,
                    src,
                    src_rows,
                } => {
                    let (sr, sc) = self.shape(*src);
                    let mut gs = Matrix::zeros(sr, sc);
                    let mut gb = dy;
                    for (&r, &s) in rows.iter().zip(src_rows) {
                        for (o, x) in gs.row_mut(s).iter_mut().zip(gb.row(r)) {
                            *o += x;
                        }
                        gb.row_mut(r).fill(0.0);
                    }
                    acc(&mut grads, *src, gs);
                    acc(&mut grads, *base, gb);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let g = self.value(*gamma);
                    let d = dy.cols();
                    let mut dgamma = Matrix::zeros(1, d);
                    let mut dbeta = Matrix::zeros(1, d);
                    let mut dx = Matrix::zeros(dy.rows(), d);
                    for r in 0..dy.rows() {
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        let mut dxh = vec![0.0; d];
                        for c in 0..d {
                            let gy = dy.get(r, c);
                            let xh = normalized.get(r, c);
                            dgamma.data_mut()[c] += gy * xh;
                            dbeta.data_mut()[c] += gy;
                            dxh[c] = gy * g.get(0, c);
                            sum_dxh += dxh[c];
                            sum_dxh_xh += dxh[c] * xh;
                        }
                        let inv = inv_std[r];
                        for c in 0..d {
                            let xh = normalized.get(r, c);
                            dx.set(
                                r,
                                c,
                                inv / d as f64 * (d as f64 * dxh[c] - sum_dxh - xh * sum_dxh_xh),
                            );
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gamma, dgamma);
                    acc(&mut grads, *beta, dbeta);
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.shape(*a);
                    acc(&mut grads, *a, Matrix::filled(rows, cols, dy.scalar()));
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let s = dy.scalar();
                    let mut g = Matrix::zeros(probs.rows(), probs.cols());
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = *t {
                            for c in 0..probs.cols() {
                                let onehot = if c == t { 1.0 } else { 0.0 };
                                g.set(r, c, s * (probs.get(r, c) - onehot));
                            }
                        }
                    }
                    acc(&mut grads, *logits, g);
                }
                Op::LstmSeq { pre, wh, gates, cells } => {
                    let w = self.value(*wh);
                    let hs = y();
                    let (n, h) = hs.shape();
                    let mut dpre = Matrix::zeros(n, 4 * h);
                    let mut dw = Matrix::zeros(h, 4 * h);
                    let mut dh_next = vec![0.0; h];
                    let mut dc_next = vec![0.0; h];
                    for t in (0..n).rev() {
                        let gr = gates.row(t);
                        let dz = dpre.row_mut(t);
                        for j in 0..h {
                            let (i, f, g, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                            let c = cells.get(t, j);
                            let c_prev = if t > 0 { cells.get(t - 1, j) } else { 0.0 };
                            let tc = c.tanh();
                            let dh = dy.get(t, j) + dh_next[j];
                            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                            dz[j] = dc * g * i * (1.0 - i);
                            dz[h + j] = dc * c_prev * f * (1.0 - f);
                            dz[2 * h + j] = dc * i * (1.0 - g * g);
                            dz[3 * h + j] = dh * tc * o * (1.0 - o);
                            dc_next[j] = dc * f;
                        }
                        dh_next.iter_mut().for_each(|v| *v = 0.0);
                        if t > 0 {
                            let hp = hs.row(t - 1);
                            for k in 0..h {
                                let wk = w.row(k);
                                let mut acc_k = 0.0;
                                for (dzj, wj) in dz.iter().zip(wk) {
                                    acc_k += dzj * wj;
                                }
                                dh_next[k] = acc_k;
                                if hp[k] != 0.0 {
                                    for (dwj, dzj) in dw.row_mut(k).iter_mut().zip(dz.iter()) {
                                        *dwj += hp[k] * dzj;
                                    }
                                }
                            }
                        }
                    }
                    acc(&mut grads, *wh, dw);
                    acc(&mut grads, *pre, dpre);
                }
                Op::CrfNll {
                    emissions,
                    transitions,
                    grad_emissions,
                    grad_transitions,
                } => {
                    let s = dy.scalar();
                    acc(&mut grads, *emissions, grad_emissions.map(|g| s * g));
                    acc(&mut grads, *transitions, grad_transitions.map(|g| s * g));
                }
            }
        }
        grads
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for &(name, r, c) in shapes {
            store.add(name, Matrix::uniform(r, c, 1.0, &mut rng));
        }
        store
    }

    #[test]
    fn elementwise_and_structural_ops() {
        let mut store = store_with(&[("a", 3, 4), ("b", 4, 2), ("w", 3, 1), ("g", 1, 4), ("z", 1, 4)], 1);
        let ids: Vec<_> = store.ids().collect();
        let report = check_gradients(&mut store, &ids, 1e-5, |g| {
            let a = g.param(ids[0]);
            let b = g.param(ids[1]);
            let w = g.param(ids[2]);
            let gamma = g.param(ids[3]);
            let beta = g.param(ids[4]);
            let ab = g.matmul(a, b);
            let t = g.tanh(ab);
            let bt = g.transpose(b);
            let abt = g.matmul_t(a, bt);
            let s = g.sigmoid(abt);
            let sm = g.softmax_rows(s);
            let cat = g.concat_cols(&[t, sm]);
            let rows = g.scale_rows(cat, w);
            let ln_in = g.slice_cols(rows, 0, 4);
            let ln = g.layer_norm(ln_in, gamma, beta, 1e-5);
            let ge = g.gelu(ln);
            let om = g.one_minus(ge);
            let m = g.mul(om, ln);
            let top = g.slice_rows(m, 0, 2);
            let gathered = g.gather(a, &[2, 0]);
            let rep = g.replace_rows(top, &[1], gathered, &[0]);
            let stacked = g.concat_rows(&[rep, gathered]);
            let xe = g.cross_entropy(stacked, &[Some(1), None, Some(3), Some(0)]);
            let tot = g.sum(stacked);
            let sc = g.scale(tot, 0.1);
            Ok(g.add(xe, sc))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    /// Step-by-step LSTM built from elementary ops, as a reference.
    fn lstm_reference(g: &mut Graph<'_>, pre: Var, wh: Var) -> Var {
        let n = g.shape(pre).0;
        let h = g.shape(wh).0;
        let mut hs = Vec::new();
        let mut state: Option<(Var, Var)> = None;
        for t in 0..n {
            let mut z = g.slice_rows(pre, t, t + 1);
            if let Some((hp, _)) = state {
                let r = g.matmul(hp, wh);
                z = g.add(z, r);
            }
            let zi = g.slice_cols(z, 0, h);
            let zf = g.slice_cols(z, h, 2 * h);
            let zg = g.slice_cols(z, 2 * h, 3 * h);
            let zo = g.slice_cols(z, 3 * h, 4 * h);
            let (i, f, gg, o) = (g.sigmoid(zi), g.sigmoid(zf), g.tanh(zg), g.sigmoid(zo));
            let mut c = g.mul(i, gg);
            if let Some((_, cp)) = state {
                let kept = g.mul(f, cp);
                c = g.add(c, kept);
            }
            let tc = g.tanh(c);
            let ht = g.mul(o, tc);
            hs.push(ht);
            state = Some((ht, c));
        }
        g.concat_rows(&hs)
    }

    #[test]
    fn fused_lstm_matches_reference_and_finite_differences() {
        let mut store = store_with(&[("pre", 5, 12), ("wh", 3, 12), ("out", 3, 1)], 4);
        let ids: Vec<_> = store.ids().collect();
        {
            let mut g = Graph::new(&store);
            let (p, w) = (g.param(ids[0]), g.param(ids[1]));
            let fused = g.lstm_seq(p, w);
            let reference = lstm_reference(&mut g, p, w);
            assert!(g.value(fused).max_abs_diff(g.value(reference)) < 1e-12);
        }
        let report = check_gradients(&mut store, &ids, 1e-5, |g| {
            let (p, w, o) = (g.param(ids[0]), g.param(ids[1]), g.param(ids[2]));
            let hs = g.lstm_seq(p, w);
            let proj = g.matmul(hs, o);
            let sq = g.mul(proj, proj);
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
