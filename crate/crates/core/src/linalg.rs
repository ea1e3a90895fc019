//! Small dense complex linear algebra used by the solvers.
//!
//! Matrices here are at most a few dozen rows, so the hot loops are written
//! directly over the column-major storage instead of going through nalgebra's
//! generic product.

use crate::{CMat, Error, Result, C64};
use nalgebra::DMatrix;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `out = a * b` for square matrices of equal size.
pub fn matmul_into(a: &CMat, b: &CMat, out: &mut CMat) {
    let n = a.nrows();
    debug_assert!(a.ncols() == n && b.nrows() == n && b.ncols() == n);
    debug_assert!(out.nrows() == n && out.ncols() == n);
    let a = a.as_slice();
    let b = b.as_slice();
    let out = out.as_mut_slice();
    for j in 0..n {
        let col = &mut out[j * n..(j + 1) * n];
        col.fill(ZERO);
        for k in 0..n {
            let bkj = b[j * n + k];
            if bkj == ZERO {
                continue;
            }
            let acol = &a[k * n..(k + 1) * n];
            for (o, &x) in col.iter_mut().zip(acol) {
                *o += x * bkj;
            }
        }
    }
}

/// `out += alpha * a * b`.
pub fn matmul_acc(alpha: C64, a: &CMat, b: &CMat, out: &mut CMat) {
    let n = a.nrows();
    let a = a.as_slice();
    let b = b.as_slice();
    let out = out.as_mut_slice();
    for j in 0..n {
        let col = &mut out[j * n..(j + 1) * n];
        for k in 0..n {
            let bkj = b[j * n + k];
            if bkj == ZERO {
                continue;
            }
            let s = alpha * bkj;
            let acol = &a[k * n..(k + 1) * n];
            for (o, &x) in col.iter_mut().zip(acol) {
                *o += x * s;
            }
        }
    }
}

pub fn mul(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows(), b.ncols());
    matmul_into(a, b, &mut out);
    out
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    mul(a, b) - mul(b, a)
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    mul(a, b) + mul(b, a)
}

/// `(m + m†) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest elementwise deviation from Hermiticity.
pub fn hermiticity_error(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// True when `m[(i,j)] == conj(m[(j,i)])` bit for bit.
pub fn is_exactly_hermitian(m: &CMat) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (i..n).all(|j| m[(i, j)] == m[(j, i)].conj()))
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues ascending,
/// eigenvectors in the matching columns.
pub fn hermitian_eigen(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let scale = max_abs(m).max(1.0);
    let herr = hermiticity_error(m);
    if herr > 1e-10 * scale {
        return Err(Error::InvalidParameter(format!(
            "matrix is not Hermitian (deviation {herr:.3e})"
        )));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    hermitian_eigen(m).map(|(v, _)| v)
}

/// Real symmetric eigen-decomposition, ascending.
pub fn symmetric_eigen_real(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}
