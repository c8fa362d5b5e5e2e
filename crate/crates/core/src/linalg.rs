//! Small dense row-major matrices.
//!
//! Plant and twin models never exceed a handful of states, so everything here
//! is plain `Vec` storage with straightforward O(n³) kernels.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr<T>", into = "MatrixRepr<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// On-disk form: an array of rows.
#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct MatrixRepr<T>(Vec<Vec<T>>);

impl<T: Scalar> TryFrom<MatrixRepr<T>> for Matrix<T> {
    type Error = Error;
    fn try_from(r: MatrixRepr<T>) -> Result<Self> {
        Matrix::from_rows(r.0)
    }
}

impl<T: Scalar> From<Matrix<T>> for MatrixRepr<T> {
    fn from(m: Matrix<T>) -> Self {
        MatrixRepr(m.to_rows())
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[i * self.cols..(i + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    /// n×1 column.
    pub fn column(v: &[T]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    /// 1×n row.
    pub fn row_vector(v: &[T]) -> Self {
        Self { rows: 1, cols: v.len(), data: v.to_vec() }
    }

    pub fn scalar(v: T) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        if self.cols != v.len() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| self.row(i).iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b)).collect())
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::Dimension(format!("shape {:?} vs {:?}", self.shape(), rhs.shape())));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).fold(T::zero(), |acc, i| acc + self[(i, i)])
    }

    /// Largest absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).fold(T::zero(), |acc, i| acc + self[(i, j)].abs()))
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// (M + Mᵀ)/2.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = (self[(i, j)] + self[(j, i)]) * half;
            }
        }
        out
    }

    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Gauss-Jordan inverse with partial pivoting. `None` when a pivot falls
    /// below `n·ε·‖M‖₁`.
    pub fn inverse(&self) -> Option<Self> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let tol = T::epsilon() * T::from_usize(n.max(1)).unwrap() * self.norm_one();
        for col in 0..n {
            let pivot = (col..n).max_by(|&p, &q| {
                a[(p, col)].abs().partial_cmp(&a[(q, col)].abs()).unwrap_or(std::cmp::Ordering::Equal)
            })?;
            if !(a[(pivot, col)].abs() > tol) {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(pivot * n + j, col * n + j);
                    inv.data.swap(pivot * n + j, col * n + j);
                }
            }
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let f = a[(i, col)];
                if f == T::zero() {
                    continue;
                }
                for j in 0..n {
                    let av = a[(col, j)];
                    let iv = inv[(col, j)];
                    a[(i, j)] -= f * av;
                    inv[(i, j)] -= f * iv;
                }
            }
        }
        Some(inv)
    }

    /// Matrix exponential by scaling and squaring a truncated Taylor series.
    ///
    /// The series on the scaled matrix is summed until the next term is below
    /// `1e-12` (or machine epsilon for `f32`) relative to the partial sum.
    pub fn expm(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Dimension("expm of non-square matrix".into()));
        }
        if !self.is_finite() {
            return Err(Error::Domain("expm of non-finite matrix".into()));
        }
        let n = self.rows;
        let norm = self.norm_one().to_f64_lossy();
        let mut squarings = 0u32;
        if norm > 0.5 {
            squarings = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = self.scale(T::lit(0.5f64.powi(squarings as i32)));
        let tol = T::lit(EXPM_TOL).max(T::epsilon());

        let mut sum = Self::identity(n);
        let mut term = Self::identity(n);
        for k in 1..=MAX_SERIES_TERMS {
            term = term.try_mul(&scaled)?.scale(T::one() / T::from_usize(k).unwrap());
            sum = sum.try_add(&term)?;
            if term.max_abs() <= tol * sum.max_abs() {
                break;
            }
        }
        for _ in 0..squarings {
            sum = sum.try_mul(&sum)?;
        }
        Ok(sum)
    }

    /// Lower-triangular factor L with L·Lᵀ = M for a symmetric positive
    /// semidefinite M. Zero pivots (within tolerance) yield zero columns.
    pub fn cholesky_psd(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Dimension("cholesky of non-square matrix".into()));
        }
        let n = self.rows;
        let tol = T::lit(1e-12).max(T::epsilon()) * self.max_abs().max(T::min_positive_value());
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d < -tol {
                return Err(Error::Domain(format!("matrix is not positive semidefinite (pivot {j} = {d})")));
            }
            if d <= tol {
                continue;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    /// Copies `block` into `self` with its top-left corner at (r0, c0).
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }
}

const EXPM_TOL: f64 = 1e-12;
const MAX_SERIES_TERMS: usize = 60;

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// Operator forms panic on shape mismatch; use the `try_*` methods on
// unvalidated input.
impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: Self) -> Matrix<T> {
        self.try_mul(rhs).expect("matrix product shape mismatch")
    }
}

impl<T: Scalar> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: Self) -> Matrix<T> {
        self.try_add(rhs).expect("matrix sum shape mismatch")
    }
}

impl<T: Scalar> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: Self) -> Matrix<T> {
        self.try_sub(rhs).expect("matrix difference shape mismatch")
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// Least-squares solution of `Φ θ = y` via Householder QR.
///
/// A column whose diagonal entry in R is below `rcond · max|R_ii|` is treated
/// as dependent on the preceding columns and reported.
pub fn lstsq_qr<T: Scalar>(phi: &Matrix<T>, y: &[T]) -> Result<Vec<T>> {
    let (m, n) = phi.shape();
    if y.len() != m {
        return Err(Error::Dimension(format!("regressor has {} rows, target has {}", m, y.len())));
    }
    if m < n {
        return Err(Error::Dimension(format!("underdetermined system: {} rows < {} unknowns", m, n)));
    }
    let mut a = phi.clone();
    let mut b = y.to_vec();
    let mut diag = vec![T::zero(); n];
    for k in 0..n {
        let mut alpha = T::zero();
        for i in k..m {
            alpha += a[(i, k)] * a[(i, k)];
        }
        alpha = alpha.sqrt();
        if alpha == T::zero() {
            diag[k] = T::zero();
            continue;
        }
        if a[(k, k)] > T::zero() {
            alpha = -alpha;
        }
        // v = x - alpha e1, stored in place below the diagonal
        a[(k, k)] -= alpha;
        let mut vnorm2 = T::zero();
        for i in k..m {
            vnorm2 += a[(i, k)] * a[(i, k)];
        }
        if vnorm2 > T::zero() {
            let two = T::lit(2.0);
            for j in (k + 1)..n {
                let mut s = T::zero();
                for i in k..m {
                    s += a[(i, k)] * a[(i, j)];
                }
                let f = two * s / vnorm2;
                for i in k..m {
                    let v = a[(i, k)];
                    a[(i, j)] -= f * v;
                }
            }
            let mut s = T::zero();
            for i in k..m {
                s += a[(i, k)] * b[i];
            }
            let f = two * s / vnorm2;
            for i in k..m {
                b[i] -= f * a[(i, k)];
            }
        }
        diag[k] = alpha;
    }

    let scale = diag.iter().fold(T::zero(), |acc, d| acc.max(d.abs()));
    let rcond = T::lit(1e-10).max(T::epsilon() * T::lit(100.0));
    let deficient: Vec<usize> = (0..n).filter(|&k| !(diag[k].abs() > rcond * scale) || scale == T::zero()).collect();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient { columns: deficient });
    }

    let mut theta = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in (k + 1)..n {
            s -= a[(k, j)] * theta[j];
        }
        theta[k] = s / diag[k];
    }
    Ok(theta)
}
