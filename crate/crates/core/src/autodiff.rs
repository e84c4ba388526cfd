//! Minimal reverse-mode autodiff over 2-D `f64` tensors.
//!
//! A [`Tape`] records every operation; [`Tape::backward`] walks the record in
//! reverse and accumulates gradients into named parameter leaves. The op set
//! is exactly what the attention policy needs; each op carries its own
//! backward rule, validated against central finite differences in the tests.
//!
//! Inference can bound memory with [`Tape::mark`]/[`Tape::truncate`]: values
//! are extracted eagerly and the nodes of a decoding step are dropped once
//! the step's distribution has been read.

use ndarray::{Array2, Axis};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { name: Option<String> },
    MatMul(usize, usize),
    MatMulNT(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Relu(usize),
    SoftmaxRows { x: usize },
    LogSoftmaxRows { x: usize, mask: Option<Array2<bool>> },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    MeanRows(usize),
    GatherRows { x: usize, idx: Vec<usize> },
    RepeatRow { x: usize },
    Reshape(usize),
    PickPerRow { x: usize, idx: Vec<usize> },
    MulColConst { x: usize, col: Vec<f64> },
    NormRows { x: usize, gamma: usize, beta: usize, eps: f64, valid: Option<Vec<bool>> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by parameter name; accumulates across backward passes.
#[derive(Debug, Clone, Default)]
pub struct GradStore {
    pub map: BTreeMap<String, Array2<f64>>,
}

impl GradStore {
    pub fn add(&mut self, name: &str, grad: &Array2<f64>) {
        match self.map.get_mut(name) {
            Some(g) => *g += grad,
            None => {
                self.map.insert(name.to_string(), grad.clone());
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.map.values_mut() {
            *g *= c;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.map
            .values()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        debug_assert!(value.iter().all(|v| v.is_finite()), "non-finite value in {op:?}");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mark(&self) -> usize {
        self.nodes.len()
    }

    /// Drops every node recorded after `mark`. Only valid when no later node
    /// will be referenced again (inference-style forward passes).
    pub fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Unnamed constant leaf; receives no gradient entry.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf { name: None })
    }

    /// Named parameter leaf; gradients accumulate under `name`.
    pub fn param(&mut self, name: &str, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf { name: Some(name.to_string()) })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(v, Op::MatMul(a.0, b.0))
    }

    /// `a @ b.T` without materializing a transpose node.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value.t());
        self.push(v, Op::MatMulNT(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(v, Op::Add(a.0, b.0))
    }

    /// `a` (r x c) plus row vector `b` (1 x c) broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let bv = self.nodes[b.0].value.row(0).to_owned();
        let v = &self.nodes[a.0].value + &bv;
        self.push(v, Op::AddRow(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = &self.nodes[a.0].value * c;
        self.push(v, Op::Scale(a.0, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::tanh);
        self.push(v, Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a.0))
    }

    /// Row-wise softmax. Masked-out entries (mask false) get probability zero;
    /// each row must keep at least one admissible entry.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&Array2<bool>>) -> Var {
        // Masked entries carry zero probability, which already zeroes their
        // gradient contribution; the backward rule needs no mask.
        let v = softmax_values(&self.nodes[a.0].value, mask, false);
        self.push(v, Op::SoftmaxRows { x: a.0 })
    }

    /// Row-wise log-softmax; masked entries hold `-inf`.
    pub fn log_softmax_rows(&mut self, a: Var, mask: Option<&Array2<bool>>) -> Var {
        let v = softmax_values(&self.nodes[a.0].value, mask, true);
        self.nodes.push(Node {
            value: v,
            op: Op::LogSoftmaxRows { x: a.0, mask: mask.cloned() },
        });
        Var(self.nodes.len() - 1)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.nodes[parts[0].0].value.nrows();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.ncols()).sum();
        let mut v = Array2::zeros((rows, total));
        let mut at = 0;
        for p in parts {
            let pv = &self.nodes[p.0].value;
            assert_eq!(pv.nrows(), rows, "concat_cols row mismatch");
            v.slice_mut(ndarray::s![.., at..at + pv.ncols()]).assign(pv);
            at += pv.ncols();
        }
        self.push(v, Op::ConcatCols(parts.iter().map(|p| p.0).collect()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.nodes[parts[0].0].value.ncols();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.nrows()).sum();
        let mut v = Array2::zeros((total, cols));
        let mut at = 0;
        for p in parts {
            let pv = &self.nodes[p.0].value;
            assert_eq!(pv.ncols(), cols, "concat_rows column mismatch");
            v.slice_mut(ndarray::s![at..at + pv.nrows(), ..]).assign(pv);
            at += pv.nrows();
        }
        self.push(v, Op::ConcatRows(parts.iter().map(|p| p.0).collect()))
    }

    /// Column means: (r x c) -> (1 x c).
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.nodes[a.0]
            .value
            .mean_axis(Axis(0))
            .expect("mean of empty tensor");
        let v = m.insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a.0))
    }

    /// Selects rows (repetition allowed): backward scatter-adds.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = &self.nodes[a.0].value;
        let mut v = Array2::zeros((idx.len(), av.ncols()));
        for (out, &i) in idx.iter().enumerate() {
            v.row_mut(out).assign(&av.row(i));
        }
        self.push(v, Op::GatherRows { x: a.0, idx: idx.to_vec() })
    }

    /// (1 x c) -> (count x c).
    pub fn repeat_row(&mut self, a: Var, count: usize) -> Var {
        let row = self.nodes[a.0].value.row(0).to_owned();
        let mut v = Array2::zeros((count, row.len()));
        for mut r in v.rows_mut() {
            r.assign(&row);
        }
        self.push(v, Op::RepeatRow { x: a.0 })
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.nodes[a.0]
            .value
            .clone()
            .into_shape_with_order((rows, cols))
            .expect("reshape size mismatch");
        self.push(v, Op::Reshape(a.0))
    }

    /// Picks one entry per row: (r x c), idx len r -> (r x 1).
    pub fn pick_per_row(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = &self.nodes[a.0].value;
        assert_eq!(av.nrows(), idx.len());
        let mut v = Array2::zeros((idx.len(), 1));
        for (r, &c) in idx.iter().enumerate() {
            v[(r, 0)] = av[(r, c)];
        }
        self.push(v, Op::PickPerRow { x: a.0, idx: idx.to_vec() })
    }

    /// Multiplies row r by `col[r]` (constant per-row scaling).
    pub fn mul_col_const(&mut self, a: Var, col: &[f64]) -> Var {
        let av = &self.nodes[a.0].value;
        assert_eq!(av.nrows(), col.len());
        let mut v = av.clone();
        for (r, &c) in col.iter().enumerate() {
            for x in v.row_mut(r) {
                *x *= c;
            }
        }
        self.push(v, Op::MulColConst { x: a.0, col: col.to_vec() })
    }

    /// Per-column standardization over rows with learned affine parameters:
    /// the instance-level normalization applied after each attention and
    /// feed-forward sublayer.
    pub fn norm_rows(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        self.norm_rows_impl(x, gamma, beta, eps, None)
    }

    /// Like [`norm_rows`](Self::norm_rows) but column statistics are computed
    /// over `valid` rows only; invalid (padding) rows are still transformed
    /// with those statistics so downstream masking can ignore them without
    /// their presence perturbing the valid rows.
    pub fn norm_rows_masked(&mut self, x: Var, gamma: Var, beta: Var, eps: f64, valid: &[bool]) -> Var {
        assert_eq!(self.nodes[x.0].value.nrows(), valid.len());
        assert!(valid.iter().any(|&v| v), "at least one valid row required");
        self.norm_rows_impl(x, gamma, beta, eps, Some(valid.to_vec()))
    }

    fn norm_rows_impl(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        valid: Option<Vec<bool>>,
    ) -> Var {
        let xv = &self.nodes[x.0].value;
        let g = self.nodes[gamma.0].value.row(0).to_owned();
        let b = self.nodes[beta.0].value.row(0).to_owned();
        let (mu, sigma) = col_stats(xv, eps, valid.as_deref());
        let mut v = xv.clone();
        for mut row in v.rows_mut() {
            for (j, val) in row.iter_mut().enumerate() {
                *val = g[j] * (*val - mu[j]) / sigma[j] + b[j];
            }
        }
        self.push(v, Op::NormRows { x: x.0, gamma: gamma.0, beta: beta.0, eps, valid })
    }

    /// Reverse pass from scalar `loss` (1 x 1), accumulating parameter
    /// gradients into `store`.
    pub fn backward(&self, loss: Var, store: &mut GradStore) {
        let n = self.nodes.len();
        assert_eq!(self.nodes[loss.0].value.dim(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; n];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for i in (0..n).rev() {
            let Some(gy) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf { name } => {
                    if let Some(name) = name {
                        store.add(name, &gy);
                    }
                }
                Op::MatMul(a, b) => {
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    accumulate(&mut grads, *a, gy.dot(&bv.t()));
                    accumulate(&mut grads, *b, av.t().dot(&gy));
                }
                Op::MatMulNT(a, b) => {
                    // c = a b^T  =>  da = gy b ; db = gy^T a
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    accumulate(&mut grads, *a, gy.dot(bv));
                    accumulate(&mut grads, *b, gy.t().dot(av));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, gy.clone());
                    accumulate(&mut grads, *b, gy);
                }
                Op::AddRow(a, b) => {
                    let col_sum = gy.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *a, gy);
                    accumulate(&mut grads, *b, col_sum);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, gy * *c),
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    accumulate(&mut grads, *a, &gy * &y.mapv(|t| 1.0 - t * t));
                }
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    let gate = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *a, &gy * &gate);
                }
                Op::SoftmaxRows { x } => {
                    let p = &self.nodes[i].value;
                    let mut gx = Array2::zeros(p.dim());
                    for r in 0..p.nrows() {
                        let dot: f64 = (0..p.ncols()).map(|c| gy[(r, c)] * p[(r, c)]).sum();
                        for c in 0..p.ncols() {
                            gx[(r, c)] = p[(r, c)] * (gy[(r, c)] - dot);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::LogSoftmaxRows { x, mask } => {
                    let y = &self.nodes[i].value;
                    let mut gx = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let gsum: f64 = (0..y.ncols())
                            .filter(|&c| mask.as_ref().map_or(true, |m| m[(r, c)]))
                            .map(|c| gy[(r, c)])
                            .sum();
                        for c in 0..y.ncols() {
                            let open = mask.as_ref().map_or(true, |m| m[(r, c)]);
                            if open {
                                gx[(r, c)] = gy[(r, c)] - y[(r, c)].exp() * gsum;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let w = self.nodes[p].value.ncols();
                        let slice = gy.slice(ndarray::s![.., at..at + w]).to_owned();
                        accumulate(&mut grads, p, slice);
                        at += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let h = self.nodes[p].value.nrows();
                        let slice = gy.slice(ndarray::s![at..at + h, ..]).to_owned();
                        accumulate(&mut grads, p, slice);
                        at += h;
                    }
                }
                Op::MeanRows(a) => {
                    let rows = self.nodes[*a].value.nrows();
                    let mut gx = Array2::zeros(self.nodes[*a].value.dim());
                    let scaled = &gy / rows as f64;
                    for mut r in gx.rows_mut() {
                        r.assign(&scaled.row(0));
                    }
                    accumulate(&mut grads, *a, gx);
                }
                Op::GatherRows { x, idx } => {
                    let mut gx = Array2::zeros(self.nodes[*x].value.dim());
                    for (out, &src) in idx.iter().enumerate() {
                        let mut row = gx.row_mut(src);
                        row += &gy.row(out);
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::RepeatRow { x } => {
                    let col_sum = gy.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *x, col_sum);
                }
                Op::Reshape(a) => {
                    let shape = self.nodes[*a].value.dim();
                    let gx = gy
                        .as_standard_layout()
                        .into_owned()
                        .into_shape_with_order(shape)
                        .expect("reshape backward");
                    accumulate(&mut grads, *a, gx);
                }
                Op::PickPerRow { x, idx } => {
                    let mut gx = Array2::zeros(self.nodes[*x].value.dim());
                    for (r, &c) in idx.iter().enumerate() {
                        gx[(r, c)] += gy[(r, 0)];
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::MulColConst { x, col } => {
                    let mut gx = gy;
                    for (r, &c) in col.iter().enumerate() {
                        for v in gx.row_mut(r) {
                            *v *= c;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::NormRows { x, gamma, beta, eps, valid } => {
                    let xv = &self.nodes[*x].value;
                    let g = self.nodes[*gamma].value.row(0).to_owned();
                    let (mu, sigma) = col_stats(xv, *eps, valid.as_deref());
                    let is_valid = |r: usize| valid.as_ref().map_or(true, |v| v[r]);
                    let nv = (0..xv.nrows()).filter(|&r| is_valid(r)).count() as f64;
                    let cols = xv.ncols();

                    let mut gx = Array2::zeros(xv.dim());
                    let mut ggamma = Array2::zeros((1, cols));
                    let mut gbeta = Array2::zeros((1, cols));
                    for j in 0..cols {
                        // Every row's output depends on the shared statistics,
                        // so these sums run over all rows; only valid rows feed
                        // the statistics, which the gx formula below reflects.
                        let mut sum_gy = 0.0;
                        let mut sum_gy_xhat = 0.0;
                        for r in 0..xv.nrows() {
                            let xhat = (xv[(r, j)] - mu[j]) / sigma[j];
                            sum_gy += gy[(r, j)];
                            sum_gy_xhat += gy[(r, j)] * xhat;
                            ggamma[(0, j)] += gy[(r, j)] * xhat;
                            gbeta[(0, j)] += gy[(r, j)];
                        }
                        for r in 0..xv.nrows() {
                            let xhat = (xv[(r, j)] - mu[j]) / sigma[j];
                            gx[(r, j)] = if is_valid(r) {
                                g[j] / sigma[j]
                                    * (gy[(r, j)] - sum_gy / nv - xhat * sum_gy_xhat / nv)
                            } else {
                                g[j] / sigma[j] * gy[(r, j)]
                            };
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *gamma, ggamma);
                    accumulate(&mut grads, *beta, gbeta);
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], i: usize, g: Array2<f64>) {
    match &mut grads[i] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

fn col_stats(x: &Array2<f64>, eps: f64, valid: Option<&[bool]>) -> (Vec<f64>, Vec<f64>) {
    let is_valid = |r: usize| valid.map_or(true, |v| v[r]);
    let rows = (0..x.nrows()).filter(|&r| is_valid(r)).count() as f64;
    let cols = x.ncols();
    let mut mu = vec![0.0; cols];
    let mut var = vec![0.0; cols];
    for j in 0..cols {
        for r in 0..x.nrows() {
            if is_valid(r) {
                mu[j] += x[(r, j)];
            }
        }
        mu[j] /= rows;
        for r in 0..x.nrows() {
            if is_valid(r) {
                let d = x[(r, j)] - mu[j];
                var[j] += d * d;
            }
        }
        var[j] /= rows;
    }
    let sigma = var.into_iter().map(|v| (v + eps).sqrt()).collect();
    (mu, sigma)
}

fn softmax_values(x: &Array2<f64>, mask: Option<&Array2<bool>>, log: bool) -> Array2<f64> {
    let mut out = Array2::zeros(x.dim());
    for r in 0..x.nrows() {
        let open = |c: usize| mask.map_or(true, |m| m[(r, c)]);
        let mut max = f64::NEG_INFINITY;
        for c in 0..x.ncols() {
            if open(c) {
                max = max.max(x[(r, c)]);
            }
        }
        assert!(max.is_finite(), "softmax row {r} has no admissible entry");
        let mut denom = 0.0;
        for c in 0..x.ncols() {
            if open(c) {
                denom += (x[(r, c)] - max).exp();
            }
        }
        for c in 0..x.ncols() {
            if open(c) {
                let shifted = x[(r, c)] - max;
                out[(r, c)] = if log {
                    shifted - denom.ln()
                } else {
                    shifted.exp() / denom
                };
            } else {
                out[(r, c)] = if log { f64::NEG_INFINITY } else { 0.0 };
            }
        }
    }
    out
}
