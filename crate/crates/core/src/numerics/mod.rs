//! Dense complex linear algebra and matrix-free eigensolvers.
//!
//! Matrices are `nalgebra` containers; dense factorizations and large
//! products go to LAPACK/BLAS. This module adds the
//! conventions the rest of the crate relies on (descending order, phase
//! gauge, deterministic tie-breaking) plus a restarted Arnoldi solver for
//! transfer operators that are too large to materialize.

mod eig;
mod krylov;
mod lapack;
mod svd;

pub use eig::{eig_dense, eigh, eigh_real, sort_eigenvalues, EIG_DENSE_MAX_DIM};
pub use krylov::{dominant_eigpair, DominantEigpair};
pub use lapack::{dgemm, gemm, matmul, preferred_openblas_core, Op, OPENBLAS_CORETYPE};
pub use svd::{svd, Svd};

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;

/// Complex double-precision dense matrix.
pub type CMatrix = DMatrix<C64>;
/// Complex double-precision dense vector.
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Frobenius norm.
pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Diagonal matrix from real entries.
pub fn diag_real(d: &[f64]) -> CMatrix {
    let n = d.len();
    let mut m = CMatrix::zeros(n, n);
    for (i, &x) in d.iter().enumerate() {
        m[(i, i)] = c(x, 0.0);
    }
    m
}

/// `diag(d) * m` without forming the diagonal matrix.
pub fn scale_rows(m: &CMatrix, d: &[f64]) -> CMatrix {
    assert_eq!(m.nrows(), d.len(), "row scale length mismatch");
    let mut out = m.clone();
    for (i, &x) in d.iter().enumerate() {
        out.row_mut(i).scale_mut(x);
    }
    out
}

/// `m * diag(d)` without forming the diagonal matrix.
pub fn scale_cols(m: &CMatrix, d: &[f64]) -> CMatrix {
    assert_eq!(m.ncols(), d.len(), "column scale length mismatch");
    let mut out = m.clone();
    for (j, &x) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(x);
    }
    out
}

/// Matrix exponential `exp(-i * scale * h)` of a Hermitian generator `h`,
/// computed from its eigendecomposition so the result is unitary to
/// working precision.
pub fn expm_hermitian(h: &CMatrix, scale: f64) -> CMatrix {
    let (vals, vecs) = eigh(h);
    let phases: Vec<C64> = vals.iter().map(|&e| C64::from_polar(1.0, -scale * e)).collect();
    let mut left = vecs.clone();
    for (j, p) in phases.iter().enumerate() {
        left.column_mut(j).iter_mut().for_each(|z| *z *= p);
    }
    left * vecs.adjoint()
}

/// `max |u u^† - 1|`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs(&(u * u.adjoint() - CMatrix::identity(n, n)))
}
