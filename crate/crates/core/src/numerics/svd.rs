use super::{CMatrix, C64};
use crate::error::{Error, Result};

/// Thin singular value decomposition `m = u * diag(s) * vdag`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    /// Singular values, non-negative and sorted in descending order.
    pub s: Vec<f64>,
    pub vdag: CMatrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> CMatrix {
        super::scale_cols(&self.u, &self.s) * &self.vdag
    }
}

const JACOBI_MAX_SWEEPS: usize = 60;
/// Accepted relative reconstruction error of the Jacobi fallback.
const ACCEPT_TOL: f64 = 1e-12;

/// Thin SVD with singular values sorted descending and a fixed phase gauge:
/// the largest-magnitude entry of every column of `u` is real and
/// non-negative (the matching row of `vdag` absorbs the conjugate phase).
///
/// Computed by LAPACK divide and conquer; if that reports failure or
/// returns non-finite factors, a one-sided Jacobi SVD is used instead.
pub fn svd(m: &CMatrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if !super::is_finite(m) {
        return Err(Error::Validation(format!("non-finite entry in {rows}x{cols} matrix passed to svd")));
    }
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Svd { u: CMatrix::zeros(rows, 0), s: Vec::new(), vdag: CMatrix::zeros(0, cols) });
    }
    let raw =
        super::lapack::gesdd(m).filter(|(u, s, vt)| s.iter().all(|x| x.is_finite() && *x >= 0.0) && super::is_finite(u) && super::is_finite(vt));
    let (u, s, vt) = match raw {
        Some(r) => r,
        None => {
            log::debug!("svd: falling back to Jacobi on a {rows}x{cols} matrix");
            let r = jacobi_svd(m).ok_or(Error::Convergence { routine: "svd", rows, cols })?;
            if !consistent(m, &r.0, &r.1, &r.2) {
                return Err(Error::Convergence { routine: "svd", rows, cols });
            }
            r
        }
    };
    Ok(gauge_fixed(&u, &s, &vt))
}

fn consistent(m: &CMatrix, u: &CMatrix, s: &[f64], vt: &CMatrix) -> bool {
    let k = s.len();
    if s.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return false;
    }
    let scale = super::frobenius(m).max(f64::MIN_POSITIVE);
    let recon = super::scale_cols(u, s) * vt;
    let eye = CMatrix::identity(k, k);
    super::frobenius(&(recon - m)) <= ACCEPT_TOL * scale
        && super::max_abs(&(u.adjoint() * u - &eye)) <= 1e-10
        && super::max_abs(&(vt * vt.adjoint() - &eye)) <= 1e-10
}

/// Sorts descending and fixes the column phases of `u`.
fn gauge_fixed(u: &CMatrix, s: &[f64], vt: &CMatrix) -> Svd {
    let (rows, cols) = (u.nrows(), vt.ncols());
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut out_u = CMatrix::zeros(rows, k);
    let mut out_vdag = CMatrix::zeros(k, cols);
    let mut out_s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        out_s.push(s[src].max(0.0));
        let col = u.column(src);
        // Pivot on the largest-magnitude entry; first index wins ties.
        let mut pivot = C64::new(0.0, 0.0);
        let mut best = -1.0;
        for z in col.iter() {
            let a = z.norm();
            if a > best * (1.0 + 1e-12) {
                best = a;
                pivot = *z;
            }
        }
        let phase = if best > 0.0 { pivot.conj() / best } else { C64::new(1.0, 0.0) };
        out_u.set_column(dst, &(col * phase));
        out_vdag.set_row(dst, &(vt.row(src) * phase.conj()));
    }
    Svd { u: out_u, s: out_s, vdag: out_vdag }
}

/// One-sided Jacobi SVD. Slow, but needs nothing beyond plane rotations.
fn jacobi_svd(m: &CMatrix) -> Option<(CMatrix, Vec<f64>, CMatrix)> {
    if m.nrows() < m.ncols() {
        let (u, s, vt) = jacobi_svd(&m.adjoint())?;
        return Some((vt.adjoint(), s, u.adjoint()));
    }
    let (rows, n) = m.shape();
    let mut a = m.clone();
    let mut v = CMatrix::identity(n, n);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let xp = mat[(i, p)];
                        let xq = mat[(i, q)] * phase.conj();
                        mat[(i, p)] = xp * c - xq * s;
                        mat[(i, q)] = xp * s + xq * c;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let s: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let top = s.iter().copied().fold(0.0, f64::max);
    let mut u = CMatrix::zeros(rows, n);
    let mut filled = vec![false; n];
    for j in 0..n {
        if s[j] > f64::EPSILON * top * (n as f64) {
            u.set_column(j, &(a.column(j) / C64::new(s[j], 0.0)));
            filled[j] = true;
        }
    }
    complete_orthonormal(&mut u, &filled);
    Some((u, s, v.adjoint()))
}

/// Replaces the unfilled columns of `u` with unit vectors orthogonal to all
/// other columns.
fn complete_orthonormal(u: &mut CMatrix, filled: &[bool]) {
    let rows = u.nrows();
    let mut basis: Vec<usize> = (0..filled.len()).filter(|&j| filled[j]).collect();
    let mut candidate = 0usize;
    for j in 0..filled.len() {
        if filled[j] {
            continue;
        }
        loop {
            let mut w = crate::numerics::CVector::zeros(rows);
            w[candidate % rows] = C64::new(1.0, 0.0);
            candidate += 1;
            for _ in 0..2 {
                for &b in &basis {
                    let proj = u.column(b).dotc(&w);
                    w -= u.column(b) * proj;
                }
            }
            let n = w.norm();
            if n > 1e-8 {
                u.set_column(j, &(w / C64::new(n, 0.0)));
                basis.push(j);
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{c, frobenius, max_abs};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(rows, cols, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let r = svd(&CMatrix::identity(2, 2)).unwrap();
        assert_eq!(r.s.len(), 2);
        for s in &r.s {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_moduli_sorted() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = c(3.0, 0.0);
        m[(1, 1)] = c(0.0, 4.0);
        let r = svd(&m).unwrap();
        assert!((r.s[0] - 4.0).abs() < 1e-14);
        assert!((r.s[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn random_rectangular_reconstructs() {
        for (rows, cols, seed) in [(6, 4, 1), (4, 6, 2), (33, 17, 3), (64, 64, 4)] {
            let m = random(rows, cols, seed);
            let r = svd(&m).unwrap();
            let resid = frobenius(&(r.reconstruct() - &m));
            assert!(resid < 1e-12 * frobenius(&m), "{rows}x{cols}: residual {resid:e}");
            let k = rows.min(cols);
            assert!(max_abs(&(r.u.adjoint() * &r.u - CMatrix::identity(k, k))) < 1e-12);
            assert!(max_abs(&(&r.vdag * r.vdag.adjoint() - CMatrix::identity(k, k))) < 1e-12);
            assert!(r.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn phase_gauge_is_fixed() {
        let m = random(5, 5, 9);
        let r = svd(&m).unwrap();
        for j in 0..5 {
            let col = r.u.column(j);
            let pivot = col.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(pivot.im.abs() < 1e-14 && pivot.re >= 0.0);
        }
        // A global phase on the input does not change u.
        let rotated = &m * C64::from_polar(1.0, 0.7);
        let r2 = svd(&rotated).unwrap();
        assert!(max_abs(&(&r.u - &r2.u)) < 1e-10);
    }

    #[test]
    fn rank_deficient_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (n, r) in [(4usize, 2usize), (8, 3), (5, 1), (6, 0)] {
            for _ in 0..100 {
                let a = CMatrix::from_fn(n, r, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
                let b = CMatrix::from_fn(r, n + 1, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
                let m = &a * &b;
                let d = svd(&m).unwrap();
                assert!(frobenius(&(d.reconstruct() - &m)) <= 1e-12 * frobenius(&m).max(1e-300));
                assert!(max_abs(&(d.u.adjoint() * &d.u - CMatrix::identity(n, n))) < 1e-12);
                assert!(d.s[r..].iter().all(|x| *x < 1e-13));
            }
        }
    }

    #[test]
    fn jacobi_matches_lapack() {
        for (rows, cols, seed) in [(7, 5, 41), (5, 7, 42), (16, 16, 43)] {
            let m = random(rows, cols, seed);
            let (u, s, vt) = jacobi_svd(&m).unwrap();
            assert!(consistent(&m, &u, &s, &vt));
            let mut s_sorted = s.clone();
            s_sorted.sort_by(|a, b| b.total_cmp(a));
            for (x, y) in s_sorted.iter().zip(svd(&m).unwrap().s) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(svd(&m), Err(Error::Validation(_))));
    }
}
