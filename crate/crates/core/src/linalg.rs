//! Small dense vector/matrix kernel.
//!
//! Everything here targets the tiny systems this crate integrates (a handful
//! to a few hundred degrees of freedom), so storage is dense and the solvers
//! are direct: Cholesky for symmetric positive-definite systems and
//! partial-pivot LU for general square ones.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotSpd { row: usize, pivot: f64 },
    #[error("matrix is singular within pivot tolerance (column {col})")]
    Singular { col: usize },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense real vector of fixed dimension.
#[derive(Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(n: usize) -> Self {
        Vector { data: vec![0.0; n] }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Vector { data: v.to_vec() }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, c: f64) -> Vector {
        Vector {
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// self += c * other
    pub fn axpy(&mut self, c: f64, other: &Vector) {
        assert_eq!(self.dim(), other.dim(), "axpy: dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stack two vectors, (self, other).
    pub fn stacked(&self, other: &Vector) -> Vector {
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Vector { data }
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vector({:?})", self.data)
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl Add for &Vector {
    type Output = Vector;
    fn add(self, rhs: &Vector) -> Vector {
        assert_eq!(self.dim(), rhs.dim(), "add: dimension mismatch");
        Vector {
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &Vector {
    type Output = Vector;
    fn sub(self, rhs: &Vector) -> Vector {
        assert_eq!(self.dim(), rhs.dim(), "sub: dimension mismatch");
        Vector {
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul<f64> for &Vector {
    type Output = Vector;
    fn mul(self, c: f64) -> Vector {
        self.scale(c)
    }
}

impl Neg for &Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

impl AddAssign<&Vector> for Vector {
    fn add_assign(&mut self, rhs: &Vector) {
        self.axpy(1.0, rhs);
    }
}

/// Dense general matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nr = rows.len();
        let nc = if nr > 0 { rows[0].len() } else { 0 };
        let mut data = Vec::with_capacity(nr * nc);
        for r in rows {
            assert_eq!(r.len(), nc, "from_rows: ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: nr,
            cols: nc,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &Vector) -> Vector {
        assert_eq!(self.cols, x.dim(), "matvec: dimension mismatch");
        let mut y = Vector::zeros(self.rows);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            y[i] = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        }
        y
    }

    /// A^T x
    pub fn transpose_matvec(&self, x: &Vector) -> Vector {
        assert_eq!(self.rows, x.dim(), "transpose_matvec: dimension mismatch");
        let mut y = Vector::zeros(self.cols);
        for i in 0..self.rows {
            let xi = x[i];
            for j in 0..self.cols {
                y[j] += self.get(i, j) * xi;
            }
        }
        y
    }
}

/// Dense symmetric matrix. Symmetry holds by construction: entries are
/// mirrored on every write, and `from_rows` symmetrizes its input.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>, // full n x n, row-major
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = SymMatrix::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    /// Builds a symmetric matrix as (A + A^T)/2 of the given square input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = SymMatrix::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "from_rows: matrix must be square");
            for j in 0..n {
                m.data[i * n + j] = 0.5 * (rows[i][j] + rows[j][i]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets (i, j) and (j, i).
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn matvec(&self, x: &Vector) -> Vector {
        assert_eq!(self.n, x.dim(), "matvec: dimension mismatch");
        let mut y = Vector::zeros(self.n);
        for i in 0..self.n {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            y[i] = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        }
        y
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            rows: self.n,
            cols: self.n,
            data: self.data.clone(),
        }
    }

    pub fn add_scaled(&self, c: f64, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.n, other.n, "add_scaled: dimension mismatch");
        SymMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &SymMatrix) -> Result<Cholesky> {
        let n = a.dim();
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a.get(i, j);
                for k in 0..j {
                    sum -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(LinalgError::NotSpd { row: i, pivot: sum });
                    }
                    l.set(i, j, sum.sqrt());
                } else {
                    l.set(i, j, sum / l.get(j, j));
                }
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    /// Solves L y = b.
    pub fn solve_lower(&self, b: &Vector) -> Vector {
        let n = self.dim();
        let mut y = b.clone();
        for i in 0..n {
            for k in 0..i {
                let v = y[k];
                y[i] -= self.l.get(i, k) * v;
            }
            y[i] /= self.l.get(i, i);
        }
        y
    }

    /// Solves L^T x = b.
    pub fn solve_lower_t(&self, b: &Vector) -> Vector {
        let n = self.dim();
        let mut x = b.clone();
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let v = x[k];
                x[i] -= self.l.get(k, i) * v;
            }
            x[i] /= self.l.get(i, i);
        }
        x
    }

    /// Solves A x = b with A = L L^T.
    pub fn solve(&self, b: &Vector) -> Vector {
        self.solve_lower_t(&self.solve_lower(b))
    }
}

/// Solves A x = b for symmetric positive-definite A via Cholesky.
pub fn solve_spd(a: &SymMatrix, b: &Vector) -> Result<Vector> {
    if a.dim() != b.dim() {
        return Err(LinalgError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(Cholesky::new(a)?.solve(b))
}

/// Relative pivot tolerance for the LU factorization.
const PIVOT_TOL: f64 = 1e-14;

/// Solves A x = b for a general square A via partial-pivot LU.
///
/// A pivot is considered zero when its magnitude falls below
/// `PIVOT_TOL` times the infinity norm of the corresponding original row.
pub fn solve_general(a: &Matrix, b: &Vector) -> Result<Vector> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::DimensionMismatch(n, a.ncols()));
    }
    if b.dim() != n {
        return Err(LinalgError::DimensionMismatch(n, b.dim()));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    // row scales from the original matrix
    let mut scale = vec![0.0_f64; n];
    for i in 0..n {
        for j in 0..n {
            scale[i] = scale[i].max(a.get(i, j).abs());
        }
        if scale[i] == 0.0 {
            scale[i] = 1.0;
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        // pick pivot: largest scaled magnitude
        let mut best = col;
        let mut best_mag = lu.get(perm[col], col).abs() / scale[perm[col]];
        for r in (col + 1)..n {
            let mag = lu.get(perm[r], col).abs() / scale[perm[r]];
            if mag > best_mag {
                best = r;
                best_mag = mag;
            }
        }
        perm.swap(col, best);
        let p = perm[col];
        let pivot = lu.get(p, col);
        if pivot.abs() < PIVOT_TOL * scale[p] {
            return Err(LinalgError::Singular { col });
        }
        for r in (col + 1)..n {
            let pr = perm[r];
            let factor = lu.get(pr, col) / pivot;
            lu.set(pr, col, factor);
            for c in (col + 1)..n {
                let v = lu.get(pr, c) - factor * lu.get(p, c);
                lu.set(pr, c, v);
            }
        }
    }
    // forward substitution on permuted rows
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let mut sum = x[perm[i]];
        for k in 0..i {
            sum -= lu.get(perm[i], k) * y[k];
        }
        y[i] = sum;
    }
    // back substitution
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= lu.get(perm[i], k) * x[k];
        }
        x[i] = sum / lu.get(perm[i], i);
    }
    Ok(x)
}

/// Returns x^T W x for symmetric positive semi-definite W.
pub fn weighted_norm_sq(x: &Vector, w: &SymMatrix) -> Result<f64> {
    if x.dim() != w.dim() {
        return Err(LinalgError::DimensionMismatch(x.dim(), w.dim()));
    }
    Ok(x.dot(&w.matvec(x)))
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues (ascending) and the matrix whose columns are the
/// corresponding orthonormal eigenvectors.
pub fn sym_eigen(a: &SymMatrix) -> (Vec<f64>, Matrix) {
    let n = a.dim();
    let mut m = a.to_matrix();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m.get(i, i), i)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let eigvals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (newcol, (_, oldcol)) in pairs.iter().enumerate() {
        for k in 0..n {
            vecs.set(k, newcol, v.get(k, *oldcol));
        }
    }
    (eigvals, vecs)
}
