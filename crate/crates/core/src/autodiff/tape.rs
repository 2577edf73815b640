//! Wengert tape: every primitive appends one node holding its output value
//! and enough bookkeeping to replay the chain rule in reverse.

use std::collections::BTreeMap;

use super::tensor::{matmul_at_into, matmul_bt_into, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    TileRows(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNormRows(Var, S),
    MeanRowsMasked(Var, Vec<bool>),
    MeanCols(Var),
    SumAll(Var),
    MaskRows(Var, Vec<bool>),
    GatherRows(Var, Vec<usize>),
    GatherFlat(Var, Vec<Option<usize>>),
    LogSumExp(Vec<Var>),
    Unfold { x: Var, kernel: usize, stride: usize },
}

#[derive(Clone, Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Record of primitive applications for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

/// Gradients produced by [`Tape::backward`], keyed by leaf.
#[derive(Clone, Debug)]
pub struct Gradients<S> {
    grads: BTreeMap<Var, Tensor<S>>,
    shapes: BTreeMap<Var, Vec<usize>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of a leaf. Leaves the loss does not reach get zeros.
    pub fn get(&self, v: Var) -> Option<Tensor<S>> {
        if let Some(g) = self.grads.get(&v) {
            return Some(g.clone());
        }
        self.shapes.get(&v).map(|s| Tensor::zeros(s))
    }

    pub fn wrt(&self, v: Var) -> Tensor<S> {
        self.get(v).expect("gradient requested for a leaf that does not require grad")
    }
}

fn dims_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Dimension(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary(&mut self, x: Var, op: Op<S>, f: impl Fn(S) -> S) -> Var {
        let src = &self.nodes[x.0].value;
        let data = src.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(value, op, rg)
    }

    fn mat(rows: usize, cols: usize, data: Vec<S>) -> Tensor<S> {
        Tensor::matrix(rows, cols, data).expect("internal shape")
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn leaf(&mut self, t: Tensor<S>, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    fn elementwise(&mut self, a: Var, b: Var, name: &str, f: impl Fn(S, S) -> S) -> Result<(Vec<S>, Vec<usize>)> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if !ta.same_shape(tb) {
            return Err(dims_err(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok((data, ta.shape().to_vec()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (data, shape) = self.elementwise(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (data, shape) = self.elementwise(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (data, shape) = self.elementwise(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, k: S) -> Var {
        self.unary(x, Op::Scale(x, k), |v| v * k)
    }

    fn row_broadcast(&mut self, x: Var, row: Var, name: &str, f: impl Fn(S, S) -> S) -> Result<Vec<S>> {
        let (tx, tr) = (&self.nodes[x.0].value, &self.nodes[row.0].value);
        if tr.rows() != 1 || tr.cols() != tx.cols() {
            return Err(dims_err(name, tx.shape(), tr.shape()));
        }
        let n = tx.cols();
        Ok(tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, tr.data()[i % n]))
            .collect())
    }

    /// Adds a `1 × n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let data = self.row_broadcast(x, row, "add_row", |a, b| a + b)?;
        let (m, n) = self.shape(x);
        let rg = self.rg(&[x, row]);
        Ok(self.push(Self::mat(m, n, data), Op::AddRow(x, row), rg))
    }

    /// Multiplies every row of `x` elementwise by a `1 × n` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let data = self.row_broadcast(x, row, "mul_row", |a, b| a * b)?;
        let (m, n) = self.shape(x);
        let rg = self.rg(&[x, row]);
        Ok(self.push(Self::mat(m, n, data), Op::MulRow(x, row), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let (m, n) = (t.rows(), t.cols());
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = t.data()[i * n + j];
            }
        }
        let rg = self.rg(&[x]);
        self.push(Self::mat(n, m, out), Op::Transpose(x), rg)
    }

    /// Concatenation along the feature (column) axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("concat_cols of nothing".into()))?;
        let m = self.nodes[first.0].value.rows();
        if let Some(bad) = parts.iter().find(|p| self.nodes[p.0].value.rows() != m) {
            return Err(dims_err(
                "concat_cols",
                self.nodes[first.0].value.shape(),
                self.nodes[bad.0].value.shape(),
            ));
        }
        let n: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for p in parts {
                out.extend_from_slice(self.nodes[p.0].value.row_slice(r));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Self::mat(m, n, out), Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks rows of several tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("concat_rows of nothing".into()))?;
        let n = self.nodes[first.0].value.cols();
        if let Some(bad) = parts.iter().find(|p| self.nodes[p.0].value.cols() != n) {
            return Err(dims_err(
                "concat_rows",
                self.nodes[first.0].value.shape(),
                self.nodes[bad.0].value.shape(),
            ));
        }
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(self.nodes[p.0].value.data());
        }
        let m = out.len() / n;
        let rg = self.rg(parts);
        Ok(self.push(Self::mat(m, n, out), Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `start..end`, copied.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let (m, n) = (t.rows(), t.cols());
        if start >= end || end > n {
            return Err(Error::Index(format!("column slice {start}..{end} of width {n}")));
        }
        let mut out = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            out.extend_from_slice(&t.row_slice(r)[start..end]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Self::mat(m, end - start, out), Op::SliceCols(x, start), rg))
    }

    /// Rows `start..end`, copied.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let (m, n) = (t.rows(), t.cols());
        if start >= end || end > m {
            return Err(Error::Index(format!("row slice {start}..{end} of height {m}")));
        }
        let out = t.data()[start * n..end * n].to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Self::mat(end - start, n, out), Op::SliceRows(x, start), rg))
    }

    /// Repeats a `1 × n` row `times` times.
    pub fn tile_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if t.rows() != 1 || times == 0 {
            return Err(Error::Dimension(format!(
                "tile_rows needs a single row and positive count, got {:?} × {times}",
                t.shape()
            )));
        }
        let n = t.cols();
        let out = t.data().repeat(times);
        let rg = self.rg(&[x]);
        Ok(self.push(Self::mat(times, n, out), Op::TileRows(x), rg))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), |v| v.tanh())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), |v| {
            if v >= S::zero() {
                S::one() / (S::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (S::one() + e)
            }
        })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| if v > S::zero() { v } else { S::zero() })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), |v| v.exp())
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Op::Log(x), |v| v.ln())
    }

    fn row_op(&mut self, x: Var, op: Op<S>, f: impl Fn(&[S], &mut [S])) -> Var {
        let t = &self.nodes[x.0].value;
        let (m, n) = (t.rows(), t.cols());
        let mut out = vec![S::zero(); m * n];
        for r in 0..m {
            f(t.row_slice(r), &mut out[r * n..(r + 1) * n]);
        }
        let rg = self.rg(&[x]);
        self.push(Self::mat(m, n, out), op, rg)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        self.row_op(x, Op::SoftmaxRows(x), softmax_row)
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        self.row_op(x, Op::LogSoftmaxRows(x), |row, out| {
            // log Σ exp(v − max) = log1p(mass outside the argmax), exact near 0.
            let (arg, max) = row
                .iter()
                .copied()
                .enumerate()
                .fold((0, S::neg_infinity()), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            let rest: S = row
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != arg)
                .map(|(_, &v)| (v - max).exp())
                .sum();
            let shift = rest.ln_1p();
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - max) - shift;
            }
        })
    }

    /// Normalizes each row to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&mut self, x: Var, eps: S) -> Var {
        self.row_op(x, Op::LayerNormRows(x, eps), |row, out| {
            let n = S::lit(row.len() as f64);
            let mean = row.iter().copied().sum::<S>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let inv = S::one() / (var + eps).sqrt();
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
        })
    }

    /// Mean over rows → `1 × n`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let m = self.nodes[x.0].value.rows();
        self.mean_rows_masked(x, vec![true; m])
    }

    /// Mean over the rows flagged `true` (padded frames excluded) → `1 × n`.
    pub fn mean_rows_masked(&mut self, x: Var, keep: Vec<bool>) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let (m, n) = (t.rows(), t.cols());
        if keep.len() != m {
            return Err(Error::Dimension(format!("mask of length {} for {m} rows", keep.len())));
        }
        let count = keep.iter().filter(|&&k| k).count();
        if count == 0 {
            return Err(Error::Dimension("mean over an all-masked tensor".into()));
        }
        let mut out = vec![S::zero(); n];
        for r in (0..m).filter(|&r| keep[r]) {
            for (o, &v) in out.iter_mut().zip(t.row_slice(r)) {
                *o = *o + v;
            }
        }
        let inv = S::one() / S::lit(count as f64);
        out.iter_mut().for_each(|v| *v = *v * inv);
        let rg = self.rg(&[x]);
        Ok(self.push(Self::mat(1, n, out), Op::MeanRowsMasked(x, keep), rg))
    }

    /// Mean over columns → `m × 1`.
    pub fn mean_cols(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let (m, n) = (t.rows(), t.cols());
        let inv = S::one() / S::lit(n as f64);
        let out = (0..m).map(|r| t.row_slice(r).iter().copied().sum::<S>() * inv).collect();
        let rg = self.rg(&[x]);
        self.push(Self::mat(m, 1, out), Op::MeanCols(x), rg)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    /// Zeroes the rows flagged `false`.
    pub fn mask_rows(&mut self, x: Var, keep: Vec<bool>) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let (m, n) = (t.rows(), t.cols());
        if keep.len() != m {
            return Err(Error::Dimension(format!("mask of length {} for {m} rows", keep.len())));
        }
        let mut out = t.data().to_vec();
        for r in (0..m).filter(|&r| !keep[r]) {
            out[r * n..(r + 1) * n].iter_mut().for_each(|v| *v = S::zero());
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Self::mat(m, n, out), Op::MaskRows(x, keep), rg))
    }

    /// Embedding lookup: row `ids[i]` of `table` becomes output row `i`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = &self.nodes[table.0].value;
        let (m, n) = (t.rows(), t.cols());
        if ids.is_empty() {
            return Err(Error::Dimension("gather of zero rows".into()));
        }
        let mut out = Vec::with_capacity(ids.len() * n);
        for (pos, &id) in ids.iter().enumerate() {
            if id >= m {
                return Err(Error::Index(format!("row id {id} at position {pos} out of range for {m} rows")));
            }
            out.extend_from_slice(t.row_slice(id));
        }
        let rg = self.rg(&[table]);
        Ok(self.push(Self::mat(ids.len(), n, out), Op::GatherRows(table, ids.to_vec()), rg))
    }

    /// Picks flat elements into a `1 × k` row; `None` yields `-inf`.
    pub fn gather_flat(&mut self, x: Var, idx: &[Option<usize>]) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if idx.is_empty() {
            return Err(Error::Dimension("gather of zero elements".into()));
        }
        let mut out = Vec::with_capacity(idx.len());
        for i in idx {
            match *i {
                Some(j) if j >= t.len() => {
                    return Err(Error::Index(format!("flat index {j} out of range for {} elements", t.len())))
                }
                Some(j) => out.push(t.data()[j]),
                None => out.push(S::neg_infinity()),
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Self::mat(1, idx.len(), out), Op::GatherFlat(x, idx.to_vec()), rg))
    }

    /// Elementwise log-sum-exp across same-shaped tensors. `-inf` entries are
    /// absorbing zeros of probability.
    pub fn logsumexp(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("logsumexp of nothing".into()))?;
        let shape = self.nodes[first.0].value.shape().to_vec();
        for p in parts {
            if !self.nodes[p.0].value.same_shape(&self.nodes[first.0].value) {
                return Err(dims_err("logsumexp", &shape, self.nodes[p.0].value.shape()));
            }
        }
        let len = self.nodes[first.0].value.len();
        let mut out = Vec::with_capacity(len);
        let mut buf = Vec::with_capacity(parts.len());
        for i in 0..len {
            buf.clear();
            buf.extend(parts.iter().map(|p| self.nodes[p.0].value.data()[i]));
            out.push(logsumexp_slice(&buf));
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor::new(shape, out)?, Op::LogSumExp(parts.to_vec()), rg))
    }

    /// Strided temporal windows. Output row `t` holds input rows
    /// `t·stride − kernel/2 .. t·stride − kernel/2 + kernel` side by side,
    /// zero outside the input. Output length is `ceil(T / stride)`.
    pub fn unfold(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        if kernel == 0 || stride == 0 {
            return Err(Error::Config("unfold needs positive kernel and stride".into()));
        }
        let t = &self.nodes[x.0].value;
        let (rows, c) = (t.rows(), t.cols());
        let out_rows = rows.div_ceil(stride);
        let mut out = vec![S::zero(); out_rows * kernel * c];
        for o in 0..out_rows {
            for j in 0..kernel {
                if let Some(src) = unfold_source(o, j, kernel, stride, rows) {
                    let dst = o * kernel * c + j * c;
                    out[dst..dst + c].copy_from_slice(t.row_slice(src));
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Self::mat(out_rows, kernel * c, out),
            Op::Unfold { x, kernel, stride },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Each node is visited at most once.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let lt = &self.nodes[loss.0].value;
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }

        let mut out = Gradients {
            grads: BTreeMap::new(),
            shapes: BTreeMap::new(),
        };
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let v = Var(i);
                out.shapes.insert(v, node.value.shape().to_vec());
                if let Some(Some(g)) = grads.get_mut(i).map(Option::take) {
                    out.grads.insert(v, Tensor::new(node.value.shape().to_vec(), g)?);
                }
            }
        }
        Ok(out)
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<S>>], v: Var) -> Option<&'a mut Vec<S>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![S::zero(); len]))
    }

    fn propagate(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.acc(grads, v) {
                        add_assign(d, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = self.acc(grads, *a) {
                    add_assign(d, g);
                }
                if let Some(d) = self.acc(grads, *b) {
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d - g);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a).data(), val(*b).data());
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(g.iter().zip(vb)).for_each(|(d, (&g, &o))| *d = *d + g * o);
                }
                if let Some(d) = self.acc(grads, *b) {
                    d.iter_mut().zip(g.iter().zip(va)).for_each(|(d, (&g, &o))| *d = *d + g * o);
                }
            }
            Op::Scale(x, k) => {
                if let Some(d) = self.acc(grads, *x) {
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g * *k);
                }
            }
            Op::AddRow(x, row) => {
                let n = val(*row).cols();
                if let Some(d) = self.acc(grads, *x) {
                    add_assign(d, g);
                }
                if let Some(d) = self.acc(grads, *row) {
                    for (j, &gv) in g.iter().enumerate() {
                        d[j % n] = d[j % n] + gv;
                    }
                }
            }
            Op::MulRow(x, row) => {
                let n = val(*row).cols();
                let (vx, vr) = (val(*x).data(), val(*row).data());
                if let Some(d) = self.acc(grads, *x) {
                    for (j, &gv) in g.iter().enumerate() {
                        d[j] = d[j] + gv * vr[j % n];
                    }
                }
                if let Some(d) = self.acc(grads, *row) {
                    for (j, &gv) in g.iter().enumerate() {
                        d[j % n] = d[j % n] + gv * vx[j];
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(d) = self.acc(grads, *a) {
                    matmul_bt_into(g, tb.data(), d, m, n, k);
                }
                if let Some(d) = self.acc(grads, *b) {
                    matmul_at_into(ta.data(), g, d, m, k, n);
                }
            }
            Op::Transpose(x) => {
                let (m, n) = (val(*x).rows(), val(*x).cols());
                if let Some(d) = self.acc(grads, *x) {
                    for r in 0..m {
                        for c in 0..n {
                            d[r * n + c] = d[r * n + c] + g[c * m + r];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let m = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let w = val(*p).cols();
                    if let Some(d) = self.acc(grads, *p) {
                        for r in 0..m {
                            for c in 0..w {
                                d[r * w + c] = d[r * w + c] + g[r * total + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = val(*p).len();
                    if let Some(d) = self.acc(grads, *p) {
                        add_assign(d, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::SliceCols(x, start) => {
                let n = val(*x).cols();
                let (m, w) = (node.value.rows(), node.value.cols());
                if let Some(d) = self.acc(grads, *x) {
                    for r in 0..m {
                        for c in 0..w {
                            d[r * n + start + c] = d[r * n + start + c] + g[r * w + c];
                        }
                    }
                }
            }
            Op::SliceRows(x, start) => {
                let n = val(*x).cols();
                if let Some(d) = self.acc(grads, *x) {
                    add_assign(&mut d[start * n..start * n + g.len()], g);
                }
            }
            Op::TileRows(x) => {
                let n = val(*x).cols();
                if let Some(d) = self.acc(grads, *x) {
                    for (j, &gv) in g.iter().enumerate() {
                        d[j % n] = d[j % n] + gv;
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(d) = self.acc(grads, *x) {
                    for j in 0..g.len() {
                        d[j] = d[j] + g[j] * (S::one() - y[j] * y[j]);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(d) = self.acc(grads, *x) {
                    for j in 0..g.len() {
                        d[j] = d[j] + g[j] * y[j] * (S::one() - y[j]);
                    }
                }
            }
            Op::Relu(x) => {
                let vx = val(*x).data();
                if let Some(d) = self.acc(grads, *x) {
                    for j in 0..g.len() {
                        if vx[j] > S::zero() {
                            d[j] = d[j] + g[j];
                        }
                    }
                }
            }
            Op::Exp(x) => {
                if let Some(d) = self.acc(grads, *x) {
                    for j in 0..g.len() {
                        d[j] = d[j] + g[j] * y[j];
                    }
                }
            }
            Op::Log(x) => {
                let vx = val(*x).data();
                if let Some(d) = self.acc(grads, *x) {
                    for j in 0..g.len() {
                        d[j] = d[j] + g[j] / vx[j];
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let n = node.value.cols();
                if let Some(d) = self.acc(grads, *x) {
                    for (r, (gr, yr)) in g.chunks(n).zip(y.chunks(n)).enumerate() {
                        let dot: S = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for c in 0..n {
                            d[r * n + c] = d[r * n + c] + yr[c] * (gr[c] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmaxRows(x) => {
                let n = node.value.cols();
                if let Some(d) = self.acc(grads, *x) {
                    for (r, (gr, yr)) in g.chunks(n).zip(y.chunks(n)).enumerate() {
                        let total: S = gr.iter().copied().sum();
                        for c in 0..n {
                            d[r * n + c] = d[r * n + c] + gr[c] - yr[c].exp() * total;
                        }
                    }
                }
            }
            Op::LayerNormRows(x, eps) => {
                let n = node.value.cols();
                let vx = val(*x).data();
                if let Some(d) = self.acc(grads, *x) {
                    let nf = S::lit(n as f64);
                    for (r, (gr, yr)) in g.chunks(n).zip(y.chunks(n)).enumerate() {
                        let xr = &vx[r * n..(r + 1) * n];
                        let mean = xr.iter().copied().sum::<S>() / nf;
                        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / nf;
                        let inv = S::one() / (var + *eps).sqrt();
                        let g_mean = gr.iter().copied().sum::<S>() / nf;
                        let gy_mean = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<S>() / nf;
                        for c in 0..n {
                            d[r * n + c] = d[r * n + c] + inv * (gr[c] - g_mean - yr[c] * gy_mean);
                        }
                    }
                }
            }
            Op::MeanRowsMasked(x, keep) => {
                let n = node.value.cols();
                let inv = S::one() / S::lit(keep.iter().filter(|&&k| k).count() as f64);
                if let Some(d) = self.acc(grads, *x) {
                    for r in (0..keep.len()).filter(|&r| keep[r]) {
                        for c in 0..n {
                            d[r * n + c] = d[r * n + c] + g[c] * inv;
                        }
                    }
                }
            }
            Op::MeanCols(x) => {
                let n = val(*x).cols();
                let inv = S::one() / S::lit(n as f64);
                if let Some(d) = self.acc(grads, *x) {
                    for (j, dv) in d.iter_mut().enumerate() {
                        *dv = *dv + g[j / n] * inv;
                    }
                }
            }
            Op::SumAll(x) => {
                if let Some(d) = self.acc(grads, *x) {
                    d.iter_mut().for_each(|v| *v = *v + g[0]);
                }
            }
            Op::MaskRows(x, keep) => {
                let n = node.value.cols();
                if let Some(d) = self.acc(grads, *x) {
                    for r in (0..keep.len()).filter(|&r| keep[r]) {
                        add_assign(&mut d[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::GatherRows(table, ids) => {
                let n = node.value.cols();
                if let Some(d) = self.acc(grads, *table) {
                    for (pos, &id) in ids.iter().enumerate() {
                        add_assign(&mut d[id * n..(id + 1) * n], &g[pos * n..(pos + 1) * n]);
                    }
                }
            }
            Op::GatherFlat(x, idx) => {
                if let Some(d) = self.acc(grads, *x) {
                    for (pos, j) in idx.iter().enumerate() {
                        if let Some(j) = *j {
                            d[j] = d[j] + g[pos];
                        }
                    }
                }
            }
            Op::LogSumExp(parts) => {
                for p in parts {
                    let vp = val(*p).data();
                    if let Some(d) = self.acc(grads, *p) {
                        for j in 0..g.len() {
                            if vp[j] != S::neg_infinity() && y[j] != S::neg_infinity() {
                                d[j] = d[j] + g[j] * (vp[j] - y[j]).exp();
                            }
                        }
                    }
                }
            }
            Op::Unfold { x, kernel, stride } => {
                let (rows, c) = (val(*x).rows(), val(*x).cols());
                let out_rows = node.value.rows();
                if let Some(d) = self.acc(grads, *x) {
                    for o in 0..out_rows {
                        for j in 0..*kernel {
                            if let Some(src) = unfold_source(o, j, *kernel, *stride, rows) {
                                let at = o * kernel * c + j * c;
                                add_assign(&mut d[src * c..(src + 1) * c], &g[at..at + c]);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn unfold_source(o: usize, j: usize, kernel: usize, stride: usize, rows: usize) -> Option<usize> {
    let pos = (o * stride + j).checked_sub(kernel / 2)?;
    (pos < rows).then_some(pos)
}

fn add_assign<S: Scalar>(d: &mut [S], g: &[S]) {
    d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
}

pub(crate) fn softmax_row<S: Scalar>(row: &[S], out: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total = total + *o;
    }
    out.iter_mut().for_each(|v| *v = *v / total);
}

/// Stable log-sum-exp; all `-inf` gives `-inf`.
pub fn logsumexp_slice<S: Scalar>(xs: &[S]) -> S {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return max;
    }
    let total: S = xs.iter().map(|&v| (v - max).exp()).sum();
    max + total.ln()
}
