//! Small dense linear algebra: a column-major matrix, Householder QR for
//! least squares, and a Cholesky factorization for symmetric positive
//! definite systems.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds from column-major storage.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(alloc::format!(
                "{} values for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from a slice of rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(n, p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Dimension(alloc::format!("row {i} has {} entries, expected {p}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * p);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != n {
                return Err(Error::Dimension(alloc::format!("column {j} has {} entries, expected {n}", c.len())));
            }
            data.extend_from_slice(c);
        }
        Ok(Self { rows: n, cols: p, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    /// `X v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                axpy(vj, self.col(j), &mut out);
            }
        }
        out
    }

    /// `X' v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        (0..self.cols).map(|j| dot(self.col(j), v)).collect()
    }

    /// `X' X`.
    pub fn gram(&self) -> Matrix {
        let p = self.cols;
        let mut g = Matrix::zeros(p, p);
        for a in 0..p {
            for b in a..p {
                let v = dot(self.col(a), self.col(b));
                g.set(a, b, v);
                g.set(b, a, v);
            }
        }
        g
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        Matrix { rows: self.rows, cols: idx.len(), data }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Dimension(alloc::format!("vstack {} vs {} columns", self.cols, other.cols)));
        }
        let rows = self.rows + other.rows;
        let mut data = Vec::with_capacity(rows * self.cols);
        for j in 0..self.cols {
            data.extend_from_slice(self.col(j));
            data.extend_from_slice(other.col(j));
        }
        Ok(Matrix { rows, cols: self.cols, data })
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn mean(a: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().sum::<f64>() / a.len() as f64
}

/// Relative threshold on `|r_ii| / max |r_jj|` below which a column is
/// treated as linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Householder QR factorization of a tall matrix (`rows >= cols`).
#[derive(Debug, Clone)]
pub struct Qr {
    /// Householder vectors on and below the diagonal, strict upper part of R above.
    qr: Matrix,
    tau: Vec<f64>,
    r_diag: Vec<f64>,
}

impl Qr {
    pub fn new(a: &Matrix) -> Result<Self> {
        let (n, k) = (a.rows(), a.cols());
        if n < k {
            return Err(Error::Dimension(alloc::format!("QR of a {n}x{k} matrix needs rows >= cols")));
        }
        let mut qr = a.clone();
        let mut tau = vec![0.0; k];
        let mut r_diag = vec![0.0; k];
        for j in 0..k {
            let col = &qr.col(j)[j..];
            let norm = norm2(col);
            if norm == 0.0 {
                continue;
            }
            let alpha = if col[0] > 0.0 { -norm } else { norm };
            {
                let v = &mut qr.col_mut(j)[j..];
                v[0] -= alpha;
            }
            let vnorm2 = dot(&qr.col(j)[j..], &qr.col(j)[j..]);
            if vnorm2 == 0.0 {
                r_diag[j] = alpha;
                continue;
            }
            tau[j] = 2.0 / vnorm2;
            r_diag[j] = alpha;
            for c in (j + 1)..k {
                let s = dot(&qr.col(j)[j..], &qr.col(c)[j..]) * tau[j];
                let (left, right) = qr.data.split_at_mut(c * n);
                let v = &left[j * n + j..(j + 1) * n];
                axpy(-s, v, &mut right[j..n]);
            }
        }
        Ok(Self { qr, tau, r_diag })
    }

    pub fn cols(&self) -> usize {
        self.qr.cols()
    }

    /// Smallest `|r_ii|`, a cheap proxy for the smallest singular value.
    pub fn min_abs_diag(&self) -> f64 {
        self.r_diag.iter().fold(f64::INFINITY, |m, r| m.min(r.abs()))
    }

    pub fn max_abs_diag(&self) -> f64 {
        self.r_diag.iter().fold(0.0, |m: f64, r| m.max(r.abs()))
    }

    pub fn is_full_rank(&self) -> bool {
        if self.r_diag.is_empty() {
            return true;
        }
        let max = self.max_abs_diag();
        max > 0.0 && self.min_abs_diag() > RANK_TOL * max
    }

    fn check_rank(&self) -> Result<()> {
        if self.is_full_rank() {
            Ok(())
        } else {
            Err(Error::RankDeficient(self.min_abs_diag()))
        }
    }

    /// Applies `Q'` in place.
    pub fn apply_qt(&self, b: &mut [f64]) {
        let n = self.qr.rows();
        for j in 0..self.cols() {
            if self.tau[j] == 0.0 {
                continue;
            }
            let v = &self.qr.col(j)[j..n];
            let s = dot(v, &b[j..n]) * self.tau[j];
            axpy(-s, v, &mut b[j..n]);
        }
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.r_diag[i]
        } else {
            self.qr.get(i, j)
        }
    }

    /// Solves `R x = z` for the leading `cols` entries of `z`.
    fn back_substitute(&self, z: &[f64]) -> Vec<f64> {
        let k = self.cols();
        let mut x = z[..k].to_vec();
        for i in (0..k).rev() {
            let mut s = x[i];
            for j in (i + 1)..k {
                s -= self.r(i, j) * x[j];
            }
            x[i] = s / self.r_diag[i];
        }
        x
    }

    /// Least-squares solution of `A x ≈ b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_rank()?;
        let mut z = b.to_vec();
        self.apply_qt(&mut z);
        Ok(self.back_substitute(&z))
    }

    /// Solves `R' z = c`.
    fn forward_substitute(&self, c: &[f64]) -> Vec<f64> {
        let k = self.cols();
        let mut z = c[..k].to_vec();
        for i in 0..k {
            let mut s = z[i];
            for j in 0..i {
                s -= self.r(j, i) * z[j];
            }
            z[i] = s / self.r_diag[i];
        }
        z
    }

    /// Solves `(A'A) x = c` through `R'R x = c`.
    pub fn solve_normal(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_rank()?;
        let z = self.forward_substitute(c);
        Ok(self.back_substitute(&z))
    }

    /// Diagonal of the hat matrix `A(A'A)⁻¹A'`, where `a` is the factored matrix.
    pub fn leverages(&self, a: &Matrix) -> Result<Vec<f64>> {
        self.check_rank()?;
        if a.cols() != self.cols() {
            return Err(Error::Dimension("matrix does not match the factorization".into()));
        }
        Ok((0..a.rows())
            .map(|i| {
                let z = self.forward_substitute(&a.row(i));
                dot(&z, &z)
            })
            .collect())
    }
}

/// Least squares via QR, returning coefficients and residuals.
pub fn least_squares(a: &Matrix, b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let qr = Qr::new(a)?;
    let coef = qr.solve(b)?;
    let fitted = a.mul_vec(&coef);
    let resid = b.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    Ok((coef, resid))
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension(alloc::format!("Cholesky of a {}x{} matrix", n, a.cols())));
        }
        let scale = (0..n).fold(0.0f64, |m, i| m.max(a.get(i, i).abs())).max(f64::MIN_POSITIVE);
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if d <= 1e-13 * scale {
                return Err(Error::Singular(scale / d.max(f64::MIN_POSITIVE)));
            }
            let d = libm::sqrt(d);
            l.set(j, j, d);
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / d);
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l.get(i, k) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        z
    }

    /// Ratio of the largest to the smallest squared pivot.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.l.rows();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let d = self.l.get(i, i);
            lo = lo.min(d * d);
            hi = hi.max(d * d);
        }
        hi / lo
    }
}
