use nalgebra::DMatrix;

use super::{CMatrix, C64};
use crate::error::{Error, Result};

/// Largest matrix accepted by [`eig_dense`].
pub const EIG_DENSE_MAX_DIM: usize = 1024;

/// All eigenvalues of a general complex square matrix, sorted by
/// [`sort_eigenvalues`].
pub fn eig_dense(m: &CMatrix) -> Result<Vec<C64>> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::Validation(format!("eig_dense needs a square matrix, got {rows}x{cols}")));
    }
    if rows > EIG_DENSE_MAX_DIM {
        return Err(Error::Capacity { what: "eig_dense dimension", got: rows, limit: EIG_DENSE_MAX_DIM });
    }
    if !super::is_finite(m) {
        return Err(Error::Validation("non-finite entry passed to eig_dense".into()));
    }
    let mut vals = match rows {
        0 => Vec::new(),
        1 => vec![m[(0, 0)]],
        _ => super::lapack::geev_values(m).ok_or(Error::Convergence { routine: "geev", rows, cols })?,
    };
    sort_eigenvalues(&mut vals);
    Ok(vals)
}

/// Sorts by descending modulus, then descending real part, then descending
/// imaginary part. Moduli equal to 12 significant digits count as ties so
/// that rounding noise does not reorder genuinely degenerate pairs.
pub fn sort_eigenvalues(vals: &mut [C64]) {
    let scale = vals.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let key = |z: &C64| -> i64 {
        if scale > 0.0 {
            (z.norm() / scale * 1e12).round() as i64
        } else {
            0
        }
    };
    vals.sort_by(|a, b| key(b).cmp(&key(a)).then(b.re.total_cmp(&a.re)).then(b.im.total_cmp(&a.im)));
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues ascend; the
/// columns of the returned matrix are the matching orthonormal eigenvectors.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    super::lapack::heevd(&herm).expect("Hermitian eigensolver failed on a finite matrix")
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
pub fn eigh_real(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::Validation(format!("eigh_real needs a square matrix, got {rows}x{cols}")));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("non-finite entry passed to eigh_real".into()));
    }
    if rows == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let sym = (m + m.transpose()) * 0.5;
    super::lapack::syevd(&sym).ok_or(Error::Convergence { routine: "syevd", rows, cols })
}
