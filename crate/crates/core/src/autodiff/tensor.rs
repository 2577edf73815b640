use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor. Value semantics: cloning copies the buffer.
///
/// Rank-1 tensors behave as `1 × n` rows and rank-0 tensors as `1 × 1`
/// wherever a matrix view is needed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "shape {shape:?} has a zero extent"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let n = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::matrix(rows.len(), n, rows.concat())
    }

    /// A `1 × n` row vector.
    pub fn row(data: Vec<S>) -> Result<Self> {
        let n = data.len();
        Self::matrix(1, n, data)
    }

    pub fn scalar(v: S) -> Self {
        Self {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn full(shape: &[usize], v: S) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; numel],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = S::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols() + c]
    }

    pub fn row_slice(&self, r: usize) -> &[S] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows() == other.rows() && self.cols() == other.cols()
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Standard matrix product, independent of any tape.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(Error::Dimension(format!(
                "matmul of {:?} and {:?}: inner dimensions differ",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.rows(), self.cols(), other.cols());
        let mut out = vec![S::zero(); m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Self::matrix(m, n, out)
    }
}

/// `out += a (m×k) · b (k×n)`.
fn matmul_into<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

/// `out += a (m×k) · bᵀ` where `b` is `n×k`.
pub(crate) fn matmul_bt_into<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc = acc + x * y;
            }
            out[i * n + j] = out[i * n + j] + acc;
        }
    }
}

/// `out += aᵀ · b` where `a` is `m×k` and `b` is `m×n`, giving `k×n`.
pub(crate) fn matmul_at_into<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}
