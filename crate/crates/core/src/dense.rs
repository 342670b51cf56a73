//! Row-major dense matrices over a [`Scalar`] field and the core algebra on them.
//!
//! Every constructor and every operation returns a matrix whose entries are all
//! finite; a NaN or infinity anywhere is reported as [`Error::NonFinite`].

use std::borrow::Cow;
use std::ops::Index;

use crate::error::{Error, Result};
use crate::scalar::{Scalar, ScalarKind};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<S = f64> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

/// Transposition flag for [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    /// Conjugate transpose. Plain transpose for real matrices.
    ConjTrans,
}

/// Which tensor factor [`partial_trace`] contracts away.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracedSide {
    /// Contract the `W` factor, leaving an `m x m` operator on `V`.
    TraceOutW,
    /// Contract the `V` factor, leaving an `n x n` operator on `W`.
    TraceOutV,
}

/// Operand layout for [`partial_trace`]: an operator on `V ⊗ W` with
/// `dim V = dim_v`, `dim W = dim_w`, basis index `r = k * dim_w + l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialTraceSpec {
    pub dim_v: usize,
    pub dim_w: usize,
    pub traced_side: TracedSide,
}

fn first_non_finite<S: Scalar>(data: &[S], cols: usize) -> Option<(usize, usize)> {
    data.iter()
        .position(|x| !x.is_finite())
        .map(|p| if cols == 0 { (p, 0) } else { (p / cols, p % cols) })
}

impl<S: Scalar> DenseMatrix<S> {
    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Self::from_raw(rows, cols, data).finite("from_vec")
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[S]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "from_rows",
                    left: (0, cols),
                    right: (i, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data).finite("from_fn")
    }

    /// Column vector from a slice.
    pub fn column(values: &[S]) -> Result<Self> {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![S::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    /// Square matrix with `diag` on the diagonal.
    pub fn from_diagonal(diag: &[S]) -> Result<Self> {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m.finite("from_diagonal")
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<S>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    /// Checks the finiteness invariant on a freshly computed result.
    pub(crate) fn finite(self, op: &'static str) -> Result<Self> {
        match first_non_finite(&self.data, self.cols) {
            None => Ok(self),
            Some((row, col)) => Err(Error::NonFinite { op, row, col }),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn scalar_kind(&self) -> ScalarKind {
        S::KIND
    }

    /// Row-major entries.
    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<S> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.get(i, j));
            }
        }
        Self::from_raw(self.cols, self.rows, out)
    }

    pub fn conj_transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.get(i, j).conj());
            }
        }
        Self::from_raw(self.cols, self.rows, out)
    }

    pub fn conj(&self) -> Self {
        self.map(|x| x.conj())
    }

    /// Applies `f` entrywise. The result is not re-checked for finiteness, so
    /// `f` must map finite values to finite values; use [`Self::try_map`] otherwise.
    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn try_map(&self, op: &'static str, f: impl Fn(S) -> S) -> Result<Self> {
        self.map(f).finite(op)
    }

    pub fn scale(&self, factor: S) -> Result<Self> {
        self.try_map("scale", |x| x * factor)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    fn zip_with(&self, op: &'static str, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::from_raw(self.rows, self.cols, data).finite(op)
    }

    /// Sum of all entries.
    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    /// Squared Frobenius norm `Σ |a_ij|²`.
    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x.modulus_sq()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j).modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.modulus()).fold(0.0, f64::max)
    }

    /// Largest entrywise `|a - b|`; infinite when the shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).modulus())
            .fold(0.0, f64::max)
    }

    /// Columns `start..start + width` as a new matrix.
    pub fn column_block(&self, start: usize, width: usize) -> Result<Self> {
        if start + width > self.cols {
            return Err(Error::DimensionMismatch {
                op: "column_block",
                left: self.shape(),
                right: (start, width),
            });
        }
        let mut data = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..start + width]);
        }
        Ok(Self::from_raw(self.rows, width, data))
    }

    /// Concatenates blocks left to right.
    pub fn hstack(blocks: &[Self]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if let Some(bad) = blocks.iter().find(|b| b.rows != rows) {
            return Err(Error::DimensionMismatch {
                op: "hstack",
                left: (rows, 0),
                right: bad.shape(),
            });
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for b in blocks {
                data.extend_from_slice(b.row(i));
            }
        }
        Ok(Self::from_raw(rows, cols, data))
    }

    /// Multiplies row `i` by `factors[i]`.
    pub fn scale_rows(&self, factors: &[S]) -> Result<Self> {
        if factors.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "scale_rows",
                left: self.shape(),
                right: (factors.len(), 1),
            });
        }
        let mut data = self.data.clone();
        for (i, &f) in factors.iter().enumerate() {
            for x in &mut data[i * self.cols..(i + 1) * self.cols] {
                *x *= f;
            }
        }
        Self::from_raw(self.rows, self.cols, data).finite("scale_rows")
    }

    /// Row sums, i.e. `A · 1`.
    pub fn row_sums(&self) -> Vec<S> {
        (0..self.rows).map(|i| self.row(i).iter().copied().sum()).collect()
    }

    /// Lower triangle including the diagonal; entries above it are zeroed.
    pub fn tril(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                out.data[i * self.cols + j] = S::zero();
            }
        }
        out
    }

    /// `max_ij |a_ij - conj(a_ji)|`; infinite for non-square input.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                dev = dev.max((self.get(i, j) - self.get(j, i).conj()).modulus());
            }
        }
        dev
    }
}

impl DenseMatrix<f64> {
    /// Widens a real matrix to complex.
    pub fn to_complex(&self) -> DenseMatrix<num_complex::Complex64> {
        DenseMatrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|&x| num_complex::Complex64::new(x, 0.0)).collect(),
        )
    }
}

impl<S: Scalar> Index<(usize, usize)> for DenseMatrix<S> {
    type Output = S;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

fn apply_trans<S: Scalar>(m: &DenseMatrix<S>, t: Trans) -> Cow<'_, DenseMatrix<S>> {
    match t {
        Trans::No => Cow::Borrowed(m),
        Trans::ConjTrans => Cow::Owned(m.conj_transpose()),
    }
}

/// General matrix product `op(A) · op(B)`.
pub fn gemm<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>, trans_a: Trans, trans_b: Trans) -> Result<DenseMatrix<S>> {
    let a = apply_trans(a, trans_a);
    let b = apply_trans(b, trans_b);
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "gemm",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut c = vec![S::zero(); m * n];
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a.data[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b.data[p * n..(p + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_ip * b_pj;
            }
        }
    }
    DenseMatrix::from_raw(m, n, c).finite("gemm")
}

/// Plain product `A · B`.
pub fn matmul<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    gemm(a, b, Trans::No, Trans::No)
}

/// Element-wise product.
pub fn hadamard<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    a.zip_with("hadamard", b, |x, y| x * y)
}

pub fn trace<S: Scalar>(a: &DenseMatrix<S>) -> Result<S> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            op: "trace",
            rows: a.rows,
            cols: a.cols,
        });
    }
    Ok((0..a.rows).map(|i| a.get(i, i)).sum())
}

/// Kronecker product: block `(i, j)` of the result is `A[i, j] · B`.
pub fn kron<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut data = vec![S::zero(); rows * cols];
    for i in 0..a.rows {
        for j in 0..a.cols {
            let a_ij = a.get(i, j);
            for k in 0..b.rows {
                let r = i * b.rows + k;
                let dst = &mut data[r * cols + j * b.cols..r * cols + (j + 1) * b.cols];
                for (d, &b_kl) in dst.iter_mut().zip(b.row(k)) {
                    *d = a_ij * b_kl;
                }
            }
        }
    }
    DenseMatrix::from_raw(rows, cols, data).finite("kron")
}

/// Column-stacking vectorization, returned as a `(rows * cols) x 1` column.
pub fn vectorize<S: Scalar>(a: &DenseMatrix<S>) -> DenseMatrix<S> {
    let mut data = Vec::with_capacity(a.data.len());
    for j in 0..a.cols {
        for i in 0..a.rows {
            data.push(a.get(i, j));
        }
    }
    DenseMatrix::from_raw(a.data.len(), 1, data)
}

/// Partial trace of an operator on `V ⊗ W`.
///
/// With `m = dim_v`, `n = dim_w` and basis index `r = k * n + l`:
/// `Tr_W(T)[k, i] = Σ_j T[k n + j, i n + j]` and
/// `Tr_V(T)[l, j] = Σ_i T[i n + l, i n + j]`.
pub fn partial_trace<S: Scalar>(t: &DenseMatrix<S>, spec: PartialTraceSpec) -> Result<DenseMatrix<S>> {
    let (m, n) = (spec.dim_v, spec.dim_w);
    let dim = m * n;
    if t.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch {
            op: "partial_trace",
            left: t.shape(),
            right: (dim, dim),
        });
    }
    let out = match spec.traced_side {
        TracedSide::TraceOutW => {
            let mut out = DenseMatrix::zeros(m, m);
            for k in 0..m {
                for i in 0..m {
                    out.data[k * m + i] = (0..n).map(|j| t.get(k * n + j, i * n + j)).sum();
                }
            }
            out
        }
        TracedSide::TraceOutV => {
            let mut out = DenseMatrix::zeros(n, n);
            for l in 0..n {
                for j in 0..n {
                    out.data[l * n + j] = (0..m).map(|i| t.get(i * n + l, i * n + j)).sum();
                }
            }
            out
        }
    };
    out.finite("partial_trace")
}
