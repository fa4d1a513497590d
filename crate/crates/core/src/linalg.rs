//! Dense linear algebra helpers.
//!
//! The Gibbs sampler factors a fresh (p-1)x(p-1) SPD matrix every sweep, so
//! it uses the small row-major Cholesky below rather than allocating nalgebra
//! matrices in the hot loop. Eigendecompositions go through nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

/// Lower-triangular Cholesky factor stored row-major in a flat buffer.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
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
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

impl Cholesky {
    /// Factor a symmetric positive-definite row-major `n x n` matrix.
    /// Only the lower triangle of `a` is read. Returns `None` if a pivot is
    /// not strictly positive and finite.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        if Self::factor_into(a, n, &mut l) {
            Some(Cholesky { n, l })
        } else {
            None
        }
    }

    /// Factor into a caller-provided buffer (reused across sweeps).
    pub fn factor_into(a: &[f64], n: usize, l: &mut [f64]) -> bool {
        assert_eq!(a.len(), n * n);
        assert_eq!(l.len(), n * n);
        for i in 0..n {
            let (done, rest) = l.split_at_mut(i * n);
            let row_i = &mut rest[..n];
            for j in 0..i {
                let row_j = &done[j * n..j * n + j];
                let s = a[i * n + j] - dot(&row_i[..j], row_j);
                row_i[j] = s / done[j * n + j];
            }
            let d = a[i * n + i] - dot(&row_i[..i], &row_i[..i]);
            if !(d > 0.0) || !d.is_finite() {
                return false;
            }
            row_i[i] = d.sqrt();
            for v in &mut row_i[i + 1..] {
                *v = 0.0;
            }
        }
        true
    }

    pub fn from_factor(l: Vec<f64>, n: usize) -> Self {
        assert_eq!(l.len(), n * n);
        Cholesky { n, l }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_data(&self) -> &[f64] {
        &self.l
    }

    /// Solve `L x = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        solve_lower_with(&self.l, self.n, b);
    }

    /// Solve `L^T x = b` in place.
    pub fn solve_upper_transposed(&self, b: &mut [f64]) {
        solve_upper_transposed_with(&self.l, self.n, b);
    }

    /// Solve `A x = b` in place where `A = L L^T`.
    pub fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_upper_transposed(b);
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }
}

pub fn solve_lower_with(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let s = b[i] - dot(&l[i * n..i * n + i], &b[..i]);
        b[i] = s / l[i * n + i];
    }
}

pub fn solve_upper_transposed_with(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let bi = b[i] / l[i * n + i];
        b[i] = bi;
        // column i of L^T below the diagonal is row i of L left of the diagonal
        for k in 0..i {
            b[k] -= l[i * n + k] * bi;
        }
    }
}

/// Factor an nalgebra matrix, adding `jitter * I` once if the plain factor
/// fails.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, jitter: f64) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    m.clone().cholesky().or_else(|| {
        let n = m.nrows();
        (m + DMatrix::identity(n, n) * jitter).cholesky()
    })
}

/// Eigendecomposition of a symmetric matrix with eigenvalues ascending and
/// eigenvector columns permuted to match.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    // symmetrize to remove round-off asymmetry before the solver sees it
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Flip each column so its largest-magnitude entry is nonnegative (first
/// index wins ties).
pub fn canonicalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}
