//! Dense column-major matrices and the handful of factorizations the
//! inference pipeline needs: pivoted Householder QR for projections and
//! Cholesky for symmetric positive definite solves.

use std::fmt;

/// Dense real matrix stored column by column.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.nrows, self.ncols)
    }
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    /// Builds a matrix from column-major storage.
    ///
    /// Panics when `data.len() != nrows * ncols`.
    pub fn from_col_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), nrows * ncols, "column-major buffer has wrong length");
        Matrix { nrows, ncols, data }
    }

    /// Builds a matrix from a row-major buffer (the natural layout of CSV input).
    pub fn from_row_major(nrows: usize, ncols: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), nrows * ncols, "row-major buffer has wrong length");
        let mut m = Matrix::zeros(nrows, ncols);
        for i in 0..nrows {
            for k in 0..ncols {
                m.data[k * nrows + i] = rows[i * ncols + k];
            }
        }
        m
    }

    /// Builds a matrix whose columns are the given equal-length vectors.
    pub fn from_columns<C: AsRef<[f64]>>(nrows: usize, columns: &[C]) -> Self {
        let mut data = Vec::with_capacity(nrows * columns.len());
        for c in columns {
            let c = c.as_ref();
            assert_eq!(c.len(), nrows, "column has wrong length");
            data.extend_from_slice(c);
        }
        Matrix { nrows, ncols: columns.len(), data }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn col(&self, k: usize) -> &[f64] {
        &self.data[k * self.nrows..(k + 1) * self.nrows]
    }

    #[inline]
    pub fn col_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.nrows..(k + 1) * self.nrows]
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[k * self.nrows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.data[k * self.nrows + i] = v;
    }

    pub fn as_col_major(&self) -> &[f64] {
        &self.data
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let size = self.nrows.max(1);
        self.data.chunks_exact(size).take(self.ncols)
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.nrows * idx.len());
        for &k in idx {
            data.extend_from_slice(self.col(k));
        }
        Matrix { nrows: self.nrows, ncols: idx.len(), data }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(idx.len(), self.ncols);
        for k in 0..self.ncols {
            let src = self.col(k);
            let dst = m.col_mut(k);
            for (d, &i) in dst.iter_mut().zip(idx) {
                *d = src[i];
            }
        }
        m
    }

    /// `self * b`
    pub fn mul_vec(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.ncols);
        let mut out = vec![0.0; self.nrows];
        for (k, &bk) in b.iter().enumerate() {
            if bk != 0.0 {
                axpy(bk, self.col(k), &mut out);
            }
        }
        out
    }

    /// `self^T * v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.nrows);
        self.columns().map(|c| dot(c, v)).collect()
    }

    /// `self * self^T` (n x n).
    pub fn outer_gram(&self) -> Matrix {
        let n = self.nrows;
        let mut g = Matrix::zeros(n, n);
        for c in self.columns() {
            for b in 0..n {
                let cb = c[b];
                if cb == 0.0 {
                    continue;
                }
                let col = g.col_mut(b);
                for a in b..n {
                    col[a] += c[a] * cb;
                }
            }
        }
        for b in 0..n {
            for a in b + 1..n {
                let v = g.get(a, b);
                g.set(b, a, v);
            }
        }
        g
    }

    pub fn max_col_norm(&self) -> f64 {
        self.columns().map(norm2).fold(0.0, f64::max)
    }
}

/// Inner product with four independent accumulators. The summation order is
/// fixed, so results are reproducible bit for bit.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Householder QR with column pivoting, kept in thin form.
///
/// Only the orthonormal basis of the numerical column space is retained;
/// that is all the projections below need.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// n x rank, orthonormal columns spanning the numerical range.
    basis: Matrix,
    rank: usize,
    /// Column order chosen by pivoting; the first `rank` entries are the
    /// independent columns.
    permutation: Vec<usize>,
    /// |R_kk| in pivot order.
    diag: Vec<f64>,
}

impl PivotedQr {
    /// Factorizes `a`. Columns whose remaining norm falls to
    /// `rel_tol * max column norm` or below are declared dependent.
    pub fn new(a: &Matrix, rel_tol: f64) -> Self {
        let n = a.nrows();
        let m = a.ncols();
        let mut work = a.clone();
        let mut perm: Vec<usize> = (0..m).collect();
        let threshold = rel_tol * a.max_col_norm();
        let steps = n.min(m);
        let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(steps);
        let mut diag = Vec::with_capacity(steps);

        for k in 0..steps {
            // Remaining norms are recomputed outright; m is small in every
            // caller so the downdating formula is not worth its cancellation.
            let mut best = k;
            let mut best_norm = -1.0;
            for c in k..m {
                let nrm = norm2(&work.col(c)[k..]);
                if nrm > best_norm {
                    best_norm = nrm;
                    best = c;
                }
            }
            if best_norm <= threshold || best_norm == 0.0 {
                break;
            }
            if best != k {
                perm.swap(k, best);
                for i in 0..n {
                    let t = work.get(i, k);
                    work.set(i, k, work.get(i, best));
                    work.set(i, best, t);
                }
            }
            let x = &work.col(k)[k..];
            let alpha = if x[0] >= 0.0 { -best_norm } else { best_norm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vnorm2 = dot(&v, &v);
            let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            for c in k..m {
                let col = &mut work.col_mut(c)[k..];
                let s = beta * dot(&v, col);
                if s != 0.0 {
                    axpy(-s, &v, col);
                }
            }
            diag.push(alpha.abs());
            reflectors.push((v, beta));
        }

        let rank = reflectors.len();
        let mut basis = Matrix::zeros(n, rank);
        for r in 0..rank {
            let col = basis.col_mut(r);
            col[r] = 1.0;
            for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
                let seg = &mut col[k..];
                let s = beta * dot(v, seg);
                if s != 0.0 {
                    axpy(-s, v, seg);
                }
            }
        }
        PivotedQr { basis, rank, permutation: perm, diag }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn r_diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Residual of `v` after projection onto the factored column space.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for q in self.basis.columns() {
            let c = dot(q, &r);
            if c != 0.0 {
                axpy(-c, q, &mut r);
            }
        }
        r
    }
}

/// Cholesky factor `A = U^T U` of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    // upper factor, so the inner products below run along contiguous columns
    u: Matrix,
}

impl Cholesky {
    /// Returns `None` when a pivot is not strictly positive relative to the
    /// diagonal scale, i.e. the matrix is not numerically positive definite.
    pub fn new(a: &Matrix) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
        let floor = scale * 1e-13;
        let mut u = Matrix::zeros(n, n);
        for j in 0..n {
            for i in 0..j {
                let (ci, cj) = (&u.data[i * n..i * n + i], &u.data[j * n..j * n + i]);
                let s = a.get(i, j) - dot(ci, cj);
                u.data[j * n + i] = s / u.data[i * n + i];
            }
            let cj = &u.data[j * n..j * n + j];
            let d = a.get(j, j) - dot(cj, cj);
            if !(d > floor) {
                return None;
            }
            u.data[j * n + j] = d.sqrt();
        }
        Some(Cholesky { u })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.u.nrows();
        let mut x = b.to_vec();
        // U^T w = b
        for i in 0..n {
            let col = self.u.col(i);
            x[i] = (x[i] - dot(&col[..i], &x[..i])) / col[i];
        }
        // U x = w
        for i in (0..n).rev() {
            let col = self.u.col(i);
            x[i] /= col[i];
            let xi = x[i];
            axpy(-xi, &col[..i], &mut x[..i]);
        }
        x
    }

    /// Full inverse, column by column.
    pub fn inverse(&self) -> Matrix {
        let n = self.u.nrows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let x = self.solve(&e);
            inv.col_mut(c).copy_from_slice(&x);
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn row_major_round_trip() {
        let m = Matrix::from_row_major(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.col(1), &[2.0, 5.0]);
        assert_eq!(m.get(1, 2), 6.0);
    }

    #[test]
    fn qr_detects_dependent_column() {
        let a = Matrix::from_columns(4, &[
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![2.0, 3.0, 2.0, 3.0],
        ]);
        let qr = PivotedQr::new(&a, 1e-10);
        assert_eq!(qr.rank(), 2);
        let r = qr.residual(a.col(2));
        assert!(norm2(&r) < 1e-12);
    }

    #[test]
    fn qr_basis_is_orthonormal() {
        let a = Matrix::from_columns(5, &[
            vec![1.0, 2.0, 0.5, -1.0, 3.0],
            vec![0.3, -2.0, 1.5, 1.0, 0.0],
            vec![1.1, 0.2, 0.1, 0.7, -0.4],
        ]);
        let qr = PivotedQr::new(&a, 1e-10);
        let q = qr.basis();
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot(q.col(a), q.col(b)) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Matrix::from_row_major(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let ch = Cholesky::new(&a).unwrap();
        let x = ch.solve(&[1.0, 2.0, 3.0]);
        let back = a.mul_vec(&x);
        for (b, want) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - want).abs() < 1e-12);
        }
        assert!(Cholesky::new(&Matrix::from_row_major(2, 2, &[1.0, 1.0, 1.0, 1.0])).is_none());
    }
}
