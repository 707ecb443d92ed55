//! Small dense linear algebra: a row-major matrix, a cyclic Jacobi
//! symmetric eigensolver, and truncated SVD by block subspace iteration.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use rand_distr::{Distribution, StandardNormal};

use crate::math::{dot, sqrt};
use crate::rng;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        for (r, v) in values.iter().enumerate() {
            self[(r, c)] = *v;
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let orow = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn tr_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "tr_matmul shape");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let brow = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec shape");
        let mut out = vec![0.0; self.cols];
        for (r, &s) in v.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += s * a;
            }
        }
        out
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec shape");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn frobenius_norm(&self) -> f64 {
        sqrt(dot(&self.data, &self.data))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi rotations. Only the upper triangle of `a` is read.
pub fn symmetric_eigen(a: &Matrix) -> SymmetricEigen {
    assert_eq!(a.rows(), a.cols(), "symmetric_eigen needs a square matrix");
    let n = a.rows();
    let mut m = a.clone();
    for r in 0..n {
        for c in 0..r {
            m[(r, c)] = m[(c, r)];
        }
    }
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if sqrt(off) <= 1e-16 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    SymmetricEigen { values, vectors }
}

/// Smallest eigenvalue of a symmetric matrix (`+∞` for an empty matrix).
pub fn min_eigenvalue(a: &Matrix) -> f64 {
    symmetric_eigen(a)
        .values
        .last()
        .copied()
        .unwrap_or(f64::INFINITY)
}

/// Modified Gram–Schmidt with one re-orthogonalization pass. Columns that
/// collapse numerically are replaced by zeros; returns how many survived.
pub fn orthonormalize_columns(m: &mut Matrix) -> usize {
    let (rows, cols) = (m.rows(), m.cols());
    let mut kept = 0;
    for c in 0..cols {
        let mut col = m.column(c);
        let original = dot(&col, &col).sqrt_or_zero();
        for _ in 0..2 {
            for prev in 0..c {
                let p = m.column(prev);
                let proj = dot(&col, &p);
                for r in 0..rows {
                    col[r] -= proj * p[r];
                }
            }
        }
        let n = dot(&col, &col).sqrt_or_zero();
        if n > 1e-12 * original.max(f64::MIN_POSITIVE) && n > 0.0 {
            col.iter_mut().for_each(|x| *x /= n);
            kept += 1;
        } else {
            col.iter_mut().for_each(|x| *x = 0.0);
        }
        m.set_column(c, &col);
    }
    kept
}

trait SqrtOrZero {
    fn sqrt_or_zero(self) -> f64;
}

impl SqrtOrZero for f64 {
    fn sqrt_or_zero(self) -> f64 {
        if self > 0.0 {
            sqrt(self)
        } else {
            0.0
        }
    }
}

/// Rank-`r` truncated singular value decomposition `A ≈ U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// Left singular vectors, `N × r`. Padded columns are zero.
    pub u: Matrix,
    /// Singular values, descending. Padded entries are zero.
    pub s: Vec<f64>,
    /// Right singular vectors, `D × r`, orthonormal columns.
    pub v: Matrix,
    /// Number of trailing columns that had no numerical support and were
    /// filled with an orthonormal complement.
    pub padded: usize,
}

const SVD_MAX_ITER: usize = 20_000;
const SVD_OVERSAMPLE: usize = 8;

/// Truncated SVD by block subspace iteration on `AᵀA` with Rayleigh–Ritz
/// extraction.
///
/// Each column of `V` is sign-normalized so its largest-magnitude entry is
/// positive (first such entry on ties). `U` follows from `A V / s`.
pub fn truncated_svd(a: &Matrix, rank: usize, seed: u64) -> TruncatedSvd {
    let (n, d) = (a.rows(), a.cols());
    assert!(rank <= d, "rank exceeds column count");
    let block = (rank + SVD_OVERSAMPLE).min(d).max(rank);

    let mut rng = rng::from_seed(seed);
    let mut v = Matrix::zeros(d, block);
    for x in v.as_mut_slice() {
        *x = StandardNormal.sample(&mut rng);
    }
    orthonormalize_columns(&mut v);

    let a_scale = a.frobenius_norm();
    let mut ritz_values = vec![0.0; block];
    if a_scale > 0.0 && n > 0 {
        for iter in 0..SVD_MAX_ITER {
            let av = a.matmul(&v);
            let mut z = a.tr_matmul(&av);
            orthonormalize_columns(&mut z);
            v = z;
            if iter % 4 == 3 || iter + 1 == SVD_MAX_ITER {
                let (vv, vals) = rayleigh_ritz(a, &v);
                v = vv;
                ritz_values = vals;
                if ritz_residual(a, &v, &ritz_values, rank) <= 1e-13 * a_scale * a_scale {
                    break;
                }
            }
        }
    }

    let tol = 1e-10 * ritz_values.first().copied().unwrap_or(0.0).max(0.0).sqrt_or_zero();
    let mut s = Vec::with_capacity(rank);
    let mut support = 0;
    for j in 0..rank {
        let sv = ritz_values[j].sqrt_or_zero();
        if a_scale > 0.0 && sv > tol && sv > 0.0 {
            s.push(sv);
            support += 1;
        } else {
            break;
        }
    }
    let padded = rank - support;

    let mut vr = Matrix::zeros(d, rank);
    for j in 0..support {
        vr.set_column(j, &v.column(j));
    }
    if padded > 0 {
        fill_complement(&mut vr, support, seed);
        s.resize(rank, 0.0);
    }
    for j in 0..rank {
        let mut col = vr.column(j);
        normalize_sign(&mut col);
        vr.set_column(j, &col);
    }

    let av = a.matmul(&vr);
    let mut u = Matrix::zeros(n, rank);
    for j in 0..support {
        let col: Vec<f64> = av.column(j).iter().map(|x| x / s[j]).collect();
        u.set_column(j, &col);
    }
    TruncatedSvd {
        u,
        s,
        v: vr,
        padded,
    }
}

fn rayleigh_ritz(a: &Matrix, v: &Matrix) -> (Matrix, Vec<f64>) {
    let av = a.matmul(v);
    let gram = av.tr_matmul(&av);
    let eig = symmetric_eigen(&gram);
    (v.matmul(&eig.vectors), eig.values)
}

fn ritz_residual(a: &Matrix, v: &Matrix, values: &[f64], rank: usize) -> f64 {
    let av = a.matmul(v);
    let atav = a.tr_matmul(&av);
    let mut worst: f64 = 0.0;
    for j in 0..rank {
        let mut r2 = 0.0;
        for i in 0..v.rows() {
            let e = atav[(i, j)] - values[j] * v[(i, j)];
            r2 += e * e;
        }
        worst = worst.max(r2.sqrt_or_zero());
    }
    worst
}

/// Fills columns `from..` of `m` with random unit vectors orthogonal to all
/// earlier columns.
fn fill_complement(m: &mut Matrix, from: usize, seed: u64) {
    let mut rng = rng::stream(seed, 0x00C0_FFEE);
    let d = m.rows();
    for j in from..m.cols() {
        loop {
            let mut col: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            for _ in 0..2 {
                for prev in 0..j {
                    let p = m.column(prev);
                    let proj = dot(&col, &p);
                    for r in 0..d {
                        col[r] -= proj * p[r];
                    }
                }
            }
            let n = dot(&col, &col).sqrt_or_zero();
            if n > 1e-8 {
                col.iter_mut().for_each(|x| *x /= n);
                m.set_column(j, &col);
                break;
            }
        }
    }
}

/// Flips `v` so its largest-magnitude entry is positive.
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
