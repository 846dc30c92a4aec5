//! Dense matrices and the small closed-form kernels the factorizations reduce to.

mod hessenberg;
mod poly;
mod small;

pub use hessenberg::eigenvalues_general;
pub use poly::{real_roots, Polynomial};
pub use small::{eig2x2_sym, gamma, unit_norm_ls, Eig2x2Result, Sym2x2, UnitNormSolution};

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{dims_mismatch, Error, Result};

/// Relative asymmetry tolerated by the symmetric tag.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    Symmetric,
    General,
}

/// Row-major real matrix.
///
/// The symmetry tag is checked when it is set. Writing through `IndexMut` or
/// `as_mut_slice` drops the tag back to `General`; routines that preserve
/// symmetry restore it explicitly.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    symmetry: Symmetry,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} ({:?})", self.rows, self.cols, self.symmetry)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            symmetry: if rows == cols { Symmetry::Symmetric } else { Symmetry::General },
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// General matrix from row-major data. All entries must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dims_mismatch(rows * cols, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / cols.max(1), col: pos % cols.max(1) });
        }
        Ok(Self { rows, cols, data, symmetry: Symmetry::General })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(dims_mismatch(n_cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(n_rows, n_cols, data)
    }

    /// Symmetric matrix from row-major data; fails if the asymmetry exceeds
    /// `SYMMETRY_TOL * max|entry|`.
    pub fn symmetric_from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(n, n, data)?.into_symmetric()
    }

    /// Re-tag as symmetric after validation.
    pub fn into_symmetric(mut self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(dims_mismatch(format!("square, {} rows", self.rows), format!("{} cols", self.cols)));
        }
        let asym = self.max_asymmetry();
        if asym > SYMMETRY_TOL * self.max_abs() {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        self.symmetry = Symmetry::Symmetric;
        Ok(self)
    }

    pub(crate) fn set_symmetric_unchecked(&mut self) {
        self.symmetry = Symmetry::Symmetric;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn is_tagged_symmetric(&self) -> bool {
        self.symmetry == Symmetry::Symmetric
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.symmetry = Symmetry::General;
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.data[i * self.cols + i]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t.symmetry = self.symmetry;
        t
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(dims_mismatch(
                format!("{} rows on the right", self.cols),
                format!("{} rows", other.rows),
            ));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for r in 0..n {
            let out_row = &mut out[r * m..(r + 1) * m];
            for t in 0..k {
                let a = self.data[r * k + t];
                if a == 0.0 {
                    continue;
                }
                let other_row = &other.data[t * m..(t + 1) * m];
                for (o, b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self { rows: n, cols: m, data: out, symmetry: Symmetry::General })
    }

    /// `self^T * other` without forming the transpose.
    pub fn tr_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(dims_mismatch(self.rows, other.rows));
        }
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for t in 0..k {
            let left = &self.data[t * n..(t + 1) * n];
            let right = &other.data[t * m..(t + 1) * m];
            for (r, &a) in left.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out[r * m..(r + 1) * m].iter_mut().zip(right) {
                    *o += a * b;
                }
            }
        }
        Ok(Self { rows: n, cols: m, data: out, symmetry: Symmetry::General })
    }

    /// `self * other^T` without forming the transpose.
    pub fn matmul_tr(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(dims_mismatch(self.cols, other.cols));
        }
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; n * m];
        for r in 0..n {
            let a = &self.data[r * k..(r + 1) * k];
            for c in 0..m {
                let b = &other.data[c * k..(c + 1) * k];
                out[r * m + c] = dot(a, b);
            }
        }
        Ok(Self { rows: n, cols: m, data: out, symmetry: Symmetry::General })
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(dims_mismatch(self.cols, x.len()));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(dims_mismatch(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        let symmetry = if self.symmetry == Symmetry::Symmetric && other.symmetry == Symmetry::Symmetric {
            Symmetry::Symmetric
        } else {
            Symmetry::General
        };
        Ok(Self { rows: self.rows, cols: self.cols, data, symmetry })
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `||self - other||_F^2`.
    pub fn dist_sq(&self, other: &Self) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(dims_mismatch(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// `||self - diag(d)||_F^2`.
    pub fn dist_sq_to_diag(&self, d: &[f64]) -> f64 {
        let mut total = 0.0;
        for r in 0..self.rows {
            for (c, &v) in self.row(r).iter().enumerate() {
                let e = if r == c { v - d[r] } else { v };
                total += e * e;
            }
        }
        total
    }

    /// Squared Euclidean norms of the columns.
    pub fn col_norms_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v * v;
            }
        }
        out
    }

    /// Squared Euclidean norms of the rows.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().map(|v| v * v).sum()).collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(Error::NonFinite { row: pos / self.cols, col: pos % self.cols }),
            None => Ok(()),
        }
    }

    pub(crate) fn require_square(&self) -> Result<usize> {
        if self.rows != self.cols {
            return Err(dims_mismatch(
                format!("square matrix, {} rows", self.rows),
                format!("{} columns", self.cols),
            ));
        }
        Ok(self.rows)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.symmetry = Symmetry::General;
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a * b` for dense operands.
pub fn dense_multiply(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.matmul(b)
}

pub fn dense_transpose(a: &DenseMatrix) -> DenseMatrix {
    a.transpose()
}

pub fn frobenius_norm_sq(a: &DenseMatrix) -> f64 {
    a.frobenius_norm_sq()
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `tol * max|A|`.
pub fn solve_dense(a: &DenseMatrix, b: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = a.rows();
    let mut m = a.as_slice().to_vec();
    let mut x = b.to_vec();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (p, pv) = (k..n)
            .map(|r| (r, m[r * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pv <= tol * scale {
            return None;
        }
        if p != k {
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            x.swap(k, p);
        }
        let piv = m[k * n + k];
        for r in (k + 1)..n {
            let f = m[r * n + k] / piv;
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                m[r * n + c] -= f * m[k * n + c];
            }
            x[r] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for c in (k + 1)..n {
            s -= m[k * n + c] * x[c];
        }
        x[k] = s / m[k * n + k];
    }
    Some(x)
}
