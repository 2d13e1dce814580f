//! Thin safe wrappers over the LAPACK/BLAS routines the crate needs.
//!
//! `nalgebra` matrices are column-major and contiguous, which is exactly
//! the Fortran layout, so buffers are passed through without copies beyond
//! the ones LAPACK itself destroys.

use std::ffi::{c_char, c_int};

use nalgebra::DMatrix;

use super::{CMatrix, C64};

// Pull in the system OpenBLAS, which provides both BLAS and LAPACK symbols.
extern crate openblas_src as _;

/// Environment variable OpenBLAS reads at load time to pick its kernels.
pub const OPENBLAS_CORETYPE: &str = "OPENBLAS_CORETYPE";

/// OpenBLAS kernel family matching the running CPU's vector extensions.
///
/// OpenBLAS identifies its kernels by CPU model, and on virtualized or
/// unlisted processors it falls back to SSE3 kernels that run 2-5x slower
/// than the AVX2/AVX-512 ones. Exporting this value as
/// [`OPENBLAS_CORETYPE`] before the library loads avoids that.
pub fn preferred_openblas_core() -> Option<&'static str> {
    #[cfg(target_arch = "x86_64")]
    {
        if is_x86_feature_detected!("avx512f") && is_x86_feature_detected!("avx512vl") {
            return Some("SkylakeX");
        }
        if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
            return Some("Haswell");
        }
    }
    None
}

/// Products below this many multiply-adds stay in `nalgebra`.
const GEMM_MIN_FLOPS: usize = 16 * 16 * 16;

fn dim(n: usize) -> c_int {
    c_int::try_from(n).expect("matrix dimension exceeds the LAPACK integer range")
}

fn ptr(m: &mut [C64]) -> *mut lapack_sys::__BindgenComplex<f64> {
    m.as_mut_ptr().cast()
}

/// Thin SVD `m = U diag(s) V†` by divide and conquer. Returns `None` when
/// LAPACK reports non-convergence.
pub(super) fn gesdd(m: &CMatrix) -> Option<(CMatrix, Vec<f64>, CMatrix)> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let (mi, ni, ki) = (dim(rows), dim(cols), dim(k));
    let mut a = m.clone();
    let mut s = vec![0.0; k];
    let mut u = CMatrix::zeros(rows, k);
    let mut vt = CMatrix::zeros(k, cols);
    let big = rows.max(cols);
    let mut rwork = vec![0.0; (5 * k * k + 7 * k).max(2 * big * k + 2 * k * k + k)];
    let mut iwork = vec![0 as c_int; 8 * k];
    let jobz = b'S' as c_char;
    let mut info: c_int = 0;
    let mut query = [C64::default()];
    let ldvt = ki.max(1);
    // SAFETY: all buffers are sized per the LAPACK documentation for
    // jobz = 'S' and outlive the calls.
    unsafe {
        lapack_sys::zgesdd_(
            &jobz,
            &mi,
            &ni,
            ptr(a.as_mut_slice()),
            &mi.max(1),
            s.as_mut_ptr(),
            ptr(u.as_mut_slice()),
            &mi.max(1),
            ptr(vt.as_mut_slice()),
            &ldvt,
            ptr(&mut query),
            &-1,
            rwork.as_mut_ptr(),
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return None;
    }
    let lwork = (query[0].re as usize).max(1);
    let mut work = vec![C64::default(); lwork];
    unsafe {
        lapack_sys::zgesdd_(
            &jobz,
            &mi,
            &ni,
            ptr(a.as_mut_slice()),
            &mi.max(1),
            s.as_mut_ptr(),
            ptr(u.as_mut_slice()),
            &mi.max(1),
            ptr(vt.as_mut_slice()),
            &ldvt,
            ptr(&mut work),
            &dim(lwork),
            rwork.as_mut_ptr(),
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    (info == 0).then_some((u, s, vt))
}

/// Eigenvalues of a general square matrix, unsorted.
pub(super) fn geev_values(m: &CMatrix) -> Option<Vec<C64>> {
    let n = m.nrows();
    let ni = dim(n);
    let mut a = m.clone();
    let mut w = vec![C64::default(); n];
    let mut rwork = vec![0.0; 2 * n];
    let no = b'N' as c_char;
    let mut dummy = [C64::default()];
    let mut dummy2 = [C64::default()];
    let mut query = [C64::default()];
    let mut info: c_int = 0;
    // SAFETY: eigenvectors are not requested, so the vector buffers are
    // never touched; ldvl = ldvr = 1 is valid for jobv = 'N'.
    unsafe {
        lapack_sys::zgeev_(
            &no,
            &no,
            &ni,
            ptr(a.as_mut_slice()),
            &ni,
            ptr(&mut w),
            ptr(&mut dummy),
            &1,
            ptr(&mut dummy2),
            &1,
            ptr(&mut query),
            &-1,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return None;
    }
    let lwork = (query[0].re as usize).max(2 * n).max(1);
    let mut work = vec![C64::default(); lwork];
    unsafe {
        lapack_sys::zgeev_(
            &no,
            &no,
            &ni,
            ptr(a.as_mut_slice()),
            &ni,
            ptr(&mut w),
            ptr(&mut dummy),
            &1,
            ptr(&mut dummy2),
            &1,
            ptr(&mut work),
            &dim(lwork),
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    (info == 0).then_some(w)
}

/// Hermitian eigendecomposition from the lower triangle; eigenvalues
/// ascend and the columns of the matrix are the eigenvectors.
pub(super) fn heevd(m: &CMatrix) -> Option<(Vec<f64>, CMatrix)> {
    let n = m.nrows();
    let ni = dim(n);
    let mut a = m.clone();
    let mut w = vec![0.0; n];
    let (jobz, uplo) = (b'V' as c_char, b'L' as c_char);
    let mut info: c_int = 0;
    let mut query = [C64::default()];
    let mut rquery = [0.0];
    let mut iquery = [0 as c_int];
    // SAFETY: workspace sizes come from the LAPACK query.
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            ptr(a.as_mut_slice()),
            &ni,
            w.as_mut_ptr(),
            ptr(&mut query),
            &-1,
            rquery.as_mut_ptr(),
            &-1,
            iquery.as_mut_ptr(),
            &-1,
            &mut info,
        );
    }
    if info != 0 {
        return None;
    }
    let lwork = (query[0].re as usize).max(1);
    let lrwork = (rquery[0] as usize).max(1);
    let liwork = (iquery[0] as usize).max(1);
    let mut work = vec![C64::default(); lwork];
    let mut rwork = vec![0.0; lrwork];
    let mut iwork = vec![0 as c_int; liwork];
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            ptr(a.as_mut_slice()),
            &ni,
            w.as_mut_ptr(),
            ptr(&mut work),
            &dim(lwork),
            rwork.as_mut_ptr(),
            &dim(lrwork),
            iwork.as_mut_ptr(),
            &dim(liwork),
            &mut info,
        );
    }
    (info == 0).then_some((w, a))
}

/// Real symmetric eigendecomposition from the lower triangle; eigenvalues
/// ascend and the columns of the matrix are the eigenvectors.
pub(super) fn syevd(m: &DMatrix<f64>) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let ni = dim(n);
    let mut a = m.clone();
    let mut w = vec![0.0; n];
    let (jobz, uplo) = (b'V' as c_char, b'L' as c_char);
    let mut info: c_int = 0;
    let mut query = [0.0];
    let mut iquery = [0 as c_int];
    // SAFETY: workspace sizes come from the LAPACK query.
    unsafe {
        lapack_sys::dsyevd_(&jobz, &uplo, &ni, a.as_mut_ptr(), &ni, w.as_mut_ptr(), query.as_mut_ptr(), &-1, iquery.as_mut_ptr(), &-1, &mut info);
    }
    if info != 0 {
        return None;
    }
    let lwork = (query[0] as usize).max(1);
    let liwork = (iquery[0] as usize).max(1);
    let mut work = vec![0.0; lwork];
    let mut iwork = vec![0 as c_int; liwork];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &dim(lwork),
            iwork.as_mut_ptr(),
            &dim(liwork),
            &mut info,
        );
    }
    (info == 0).then_some((w, a))
}

/// Real `op(a) * b` where `op` is identity or transpose.
pub fn dgemm(a: &DMatrix<f64>, transpose_a: bool, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = if transpose_a { (a.ncols(), a.nrows()) } else { a.shape() };
    assert_eq!(k, b.nrows(), "dgemm inner dimensions differ");
    let n = b.ncols();
    let mut out = DMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    let flag = if transpose_a { b'T' } else { b'N' } as c_char;
    let no = b'N' as c_char;
    // SAFETY: shapes checked above; column-major buffers with their row
    // counts as leading dimensions.
    unsafe {
        blas_sys::dgemm_(
            &flag,
            &no,
            &dim(m),
            &dim(n),
            &dim(k),
            &1.0,
            a.as_ptr(),
            &dim(a.nrows()),
            b.as_ptr(),
            &dim(b.nrows()),
            &0.0,
            out.as_mut_ptr(),
            &dim(m),
        );
    }
    out
}

/// Whether an operand is used as is or as its conjugate transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    Adjoint,
}

/// `op(a) * op(b)`, through BLAS for all but tiny products.
pub fn gemm(a: &CMatrix, op_a: Op, b: &CMatrix, op_b: Op) -> CMatrix {
    let (m, ka) = match op_a {
        Op::N => a.shape(),
        Op::Adjoint => (a.ncols(), a.nrows()),
    };
    let (kb, n) = match op_b {
        Op::N => b.shape(),
        Op::Adjoint => (b.ncols(), b.nrows()),
    };
    assert_eq!(ka, kb, "gemm inner dimensions differ");
    if m == 0 || n == 0 || ka == 0 || m * n * ka < GEMM_MIN_FLOPS {
        return match (op_a, op_b) {
            (Op::N, Op::N) => a * b,
            (Op::Adjoint, Op::N) => a.ad_mul(b),
            (Op::N, Op::Adjoint) => a * b.adjoint(),
            (Op::Adjoint, Op::Adjoint) => a.ad_mul(&b.adjoint()),
        };
    }
    let flag = |op| match op {
        Op::N => b'N' as c_char,
        Op::Adjoint => b'C' as c_char,
    };
    let mut out = CMatrix::zeros(m, n);
    let (one, zero) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    // SAFETY: shapes were checked above; leading dimensions are the stored
    // row counts of the column-major buffers.
    unsafe {
        blas_sys::zgemm_(
            &flag(op_a),
            &flag(op_b),
            &dim(m),
            &dim(n),
            &dim(ka),
            (&one as *const C64).cast(),
            a.as_ptr().cast(),
            &dim(a.nrows()),
            b.as_ptr().cast(),
            &dim(b.nrows()),
            (&zero as *const C64).cast(),
            out.as_mut_ptr().cast(),
            &dim(m),
        );
    }
    out
}

/// `a * b`.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    gemm(a, Op::N, b, Op::N)
}
