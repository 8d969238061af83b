//! Dense row-major `f64` matrices.
//!
//! Orientation follows the layer convention used throughout the crate: a
//! weight matrix has one row per input unit and one column per output unit,
//! so `column_norms` measures per-output-unit gradient magnitude.

mod svd;

pub use svd::{svd_exact, SvdResult, MAX_SWEEPS};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(m * n);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::InvalidMatrix("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Self::new(m, n, data)
    }

    /// Panics on zero dimensions.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.data.fill(value);
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Entries i.i.d. `N(0, std^2)`.
    pub fn random_normal(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(rows, cols);
        for x in &mut m.data {
            *x = std * rng.normal();
        }
        m
    }

    pub fn random_uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(rows, cols);
        for x in &mut m.data {
            *x = rng.uniform_range(lo, hi);
        }
        m
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        let (m, n) = self.shape();
        let mut out = vec![0.0; m * n];
        // blocked to keep both sides cache-resident
        const B: usize = 32;
        for ib in (0..m).step_by(B) {
            for jb in (0..n).step_by(B) {
                for i in ib..(ib + B).min(m) {
                    for j in jb..(jb + B).min(n) {
                        out[j * m + i] = self.data[i * n + j];
                    }
                }
            }
        }
        Matrix::from_raw(n, m, out)
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out);
        Ok(out)
    }

    /// `self^T * other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        gemm(1.0, self, true, other, false, 0.0, &mut out);
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(1.0, self, false, other, true, 0.0, &mut out);
        Ok(out)
    }

    /// Frobenius inner product `<self, other>`.
    pub fn inner(&self, other: &Matrix) -> Result<f64> {
        self.check_same_shape(other, "inner")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &Matrix) -> Result<()> {
        self.check_same_shape(x, "axpy")?;
        for (y, x) in self.data.iter_mut().zip(&x.data) {
            *y += alpha * x;
        }
        Ok(())
    }

    /// `self = beta * self + alpha * x`, the EMA building block.
    pub fn scale_add(&mut self, beta: f64, alpha: f64, x: &Matrix) -> Result<()> {
        self.check_same_shape(x, "scale_add")?;
        for (y, x) in self.data.iter_mut().zip(&x.data) {
            *y = beta * *y + alpha * x;
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        self.map(|x| c * x)
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for x in &mut self.data {
            *x *= c;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|&x| f(x)).collect(),
        )
    }

    /// Euclidean norm of each column (length `cols`).
    ///
    /// Accumulates row by row, so the inner loop stays contiguous even though
    /// the reduction runs across the strided dimension.
    pub fn column_norms(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x * x;
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    /// Euclidean norm of each row (length `rows`).
    pub fn row_norms(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    /// Maximum absolute deviation from `other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` where `op` optionally transposes.
///
/// Transposition is expressed through strides only; no copy is made.
pub(crate) fn gemm(
    alpha: f64,
    a: &Matrix,
    trans_a: bool,
    b: &Matrix,
    trans_b: bool,
    beta: f64,
    c: &mut Matrix,
) {
    let (m, k) = if trans_a {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (kb, n) = if trans_b {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    assert_eq!(k, kb, "inner dimensions");
    assert_eq!(c.shape(), (m, n), "output shape");
    let (rsa, csa) = if trans_a {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    // SAFETY: the strides above describe exactly the allocated row-major
    // buffers, and the shape asserts guarantee every index is in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn column_norms_examples() {
        let g = Matrix::from_rows(&[[3.0, 0.0], [4.0, 0.0]]).unwrap();
        assert_eq!(g.column_norms(), vec![5.0, 0.0]);
        assert_eq!(Matrix::identity(2).column_norms(), vec![1.0, 1.0]);
    }

    #[test]
    fn column_norms_match_scalar_loop() {
        let mut rng = Rng::new(11);
        let g = Matrix::random_normal(5, 7, 1.0, &mut rng);
        let norms = g.column_norms();
        for j in 0..7 {
            let mut s = 0.0;
            for i in 0..5 {
                s += g.get(i, j) * g.get(i, j);
            }
            assert!(close(norms[j], s.sqrt(), 1e-12));
        }
    }

    #[test]
    fn row_norms_examples() {
        let g = Matrix::from_rows(&[[3.0, 4.0], [0.0, 0.0]]).unwrap();
        assert_eq!(g.row_norms(), vec![5.0, 0.0]);
        let ones = Matrix::filled(3, 3, 1.0);
        for r in ones.row_norms() {
            assert!(close(r, 3f64.sqrt(), 1e-15));
        }
        let mut rng = Rng::new(5);
        let g = Matrix::random_normal(4, 6, 1.0, &mut rng);
        let a = g.row_norms();
        let b = g.transpose().column_norms();
        for (x, y) in a.iter().zip(&b) {
            assert!(close(*x, *y, 1e-14));
        }
    }

    #[test]
    fn arithmetic_identities() {
        let mut rng = Rng::new(1);
        let g = Matrix::random_normal(3, 3, 1.0, &mut rng);
        assert_eq!(Matrix::identity(3).matmul(&g).unwrap(), g);
        assert!(close(
            Matrix::diag(&[3.0, 4.0]).frobenius_norm(),
            5.0,
            1e-15
        ));

        let a = Matrix::random_normal(2, 3, 1.0, &mut rng);
        let b = Matrix::random_normal(3, 4, 1.0, &mut rng);
        let lhs = a.matmul(&b).unwrap().transpose();
        let rhs = b.transpose().matmul(&a.transpose()).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-14);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let mut rng = Rng::new(2);
        let a = Matrix::random_normal(5, 3, 1.0, &mut rng);
        let b = Matrix::random_normal(5, 4, 1.0, &mut rng);
        let c = Matrix::random_normal(6, 3, 1.0, &mut rng);
        let x = a.t_matmul(&b).unwrap();
        let y = a.transpose().matmul(&b).unwrap();
        assert!(x.max_abs_diff(&y).unwrap() < 1e-13);
        let x = a.matmul_t(&c).unwrap();
        let y = a.matmul(&c.transpose()).unwrap();
        assert!(x.max_abs_diff(&y).unwrap() < 1e-13);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch { .. })));
        assert!(a.clone().axpy(1.0, &Matrix::zeros(3, 2)).is_err());
        assert!(a.inner(&Matrix::zeros(1, 1)).is_err());
        assert!(a.inner(&b).is_ok());
    }

    #[test]
    fn matmul_is_deterministic() {
        let mut rng = Rng::new(9);
        let a = Matrix::random_normal(37, 29, 1.0, &mut rng);
        let b = Matrix::random_normal(29, 41, 1.0, &mut rng);
        let x = a.matmul(&b).unwrap();
        let y = a.matmul(&b).unwrap();
        assert!(x
            .data()
            .iter()
            .zip(y.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn norm_consistency() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let m = 1 + rng.below(8);
            let n = 1 + rng.below(8);
            let g = Matrix::random_normal(m, n, 1.0, &mut rng);
            let cmax = g.column_norms().into_iter().fold(0.0, f64::max);
            let f = g.frobenius_norm();
            assert!(cmax <= f + 1e-12);
            assert!(f <= (n as f64).sqrt() * cmax + 1e-12);
        }
    }
}
