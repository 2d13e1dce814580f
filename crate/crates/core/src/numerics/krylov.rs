use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{eig_dense, svd, CMatrix, CVector, C64};
use crate::error::{Error, Result};

const KRYLOV_DIM: usize = 32;
const START_SEEDS: [u64; 2] = [0x5eed_0001, 0x5eed_0002];
/// Two runs whose eigenvectors overlap by less than this are taken to have
/// landed in different eigenvectors of a degenerate eigenvalue.
const COLINEARITY_SLACK: f64 = 1e-6;

/// Result of [`dominant_eigpair`].
#[derive(Debug, Clone)]
pub struct DominantEigpair {
    pub value: C64,
    /// Unit 2-norm; the first entry that is not negligible is real positive.
    pub vector: CVector,
    pub matvecs: usize,
    pub residual: f64,
}

struct Run {
    value: C64,
    vector: CVector,
    second: Option<(C64, f64)>,
    matvecs: usize,
    residual: f64,
}

/// Largest-modulus eigenpair of a linear operator given only through its
/// action `apply`. Explicitly restarted Arnoldi; the result is confirmed by
/// a second run from an independent start vector, and disagreement between
/// the two (or a second Ritz value of equal modulus) is reported as
/// [`Error::Degenerate`].
///
/// `max_iter` bounds the number of operator applications per run.
pub fn dominant_eigpair<F>(apply: F, dim: usize, tol: f64, max_iter: usize) -> Result<DominantEigpair>
where
    F: Fn(&CVector) -> CVector,
{
    if dim == 0 {
        return Err(Error::Validation("dominant_eigpair on an empty space".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Validation(format!("tolerance must be positive, got {tol}")));
    }
    let first = arnoldi(&apply, start_vector(dim, START_SEEDS[0]), tol, max_iter)?;
    let scale = first.value.norm();

    if let Some((second, second_resid)) = first.second {
        if scale - second.norm() < tol * scale && second_resid <= tol.sqrt() * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Degenerate { e1: scale, e2: second.norm() });
        }
    }

    let mut matvecs = first.matvecs;
    if dim > 1 {
        let check = arnoldi(&apply, start_vector(dim, START_SEEDS[1]), tol, max_iter)?;
        matvecs += check.matvecs;
        let overlap = first.vector.dotc(&check.vector).norm();
        if 1.0 - overlap > COLINEARITY_SLACK {
            return Err(Error::Degenerate { e1: scale, e2: check.value.norm() });
        }
    }

    Ok(DominantEigpair { value: first.value, vector: fix_phase(first.vector), matvecs, residual: first.residual })
}

fn start_vector(dim: usize, seed: u64) -> CVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = CVector::from_fn(dim, |_, _| C64::new(rng.random::<f64>() + 0.5, rng.random::<f64>() - 0.5));
    let n = v.norm();
    v / C64::new(n, 0.0)
}

fn fix_phase(mut v: CVector) -> CVector {
    let big = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-10 * big).copied() {
        v *= z.conj() / z.norm();
    }
    v
}

fn arnoldi<F>(apply: &F, mut v: CVector, tol: f64, budget: usize) -> Result<Run>
where
    F: Fn(&CVector) -> CVector,
{
    let dim = v.len();
    let m = dim.min(KRYLOV_DIM);
    let mut matvecs = 0usize;

    loop {
        let mut basis: Vec<CVector> = Vec::with_capacity(m + 1);
        basis.push(v.clone());
        let mut h = CMatrix::zeros(m + 1, m);
        let mut k = m;
        let mut breakdown = false;
        for j in 0..m {
            let mut w = apply(&basis[j]);
            matvecs += 1;
            let wnorm = w.norm();
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let proj = q.dotc(&w);
                    h[(i, j)] += proj;
                    w.axpy(-proj, q, C64::new(1.0, 0.0));
                }
            }
            let beta = w.norm();
            h[(j + 1, j)] = C64::new(beta, 0.0);
            if beta <= 1e-13 * wnorm.max(f64::MIN_POSITIVE) || j + 1 == dim {
                k = j + 1;
                breakdown = true;
                break;
            }
            basis.push(w / C64::new(beta, 0.0));
        }

        let hk = h.view((0, 0), (k, k)).into_owned();
        let ritz = eig_dense(&hk)?;
        let theta = ritz[0];
        let y = null_vector(&hk, theta)?;
        let mut x = CVector::zeros(dim);
        for (i, q) in basis.iter().take(k).enumerate() {
            x.axpy(y[i], q, C64::new(1.0, 0.0));
        }
        let xn = x.norm();
        x /= C64::new(xn, 0.0);

        let ax = apply(&x);
        matvecs += 1;
        let rq = x.dotc(&ax);
        let residual = (&ax - &x * rq).norm();

        if residual <= tol * rq.norm() || (rq.norm() == 0.0 && residual == 0.0) {
            let second = if ritz.len() > 1 {
                let theta2 = ritz[1];
                let y2 = null_vector(&hk, theta2)?;
                let est = if breakdown { 0.0 } else { h[(k, k - 1)].norm() * y2[k - 1].norm() };
                Some((theta2, est))
            } else {
                None
            };
            return Ok(Run { value: rq, vector: x, second, matvecs, residual });
        }
        if matvecs >= budget {
            return Err(Error::NonConvergence { iterations: matvecs, residual });
        }
        v = x;
    }
}

/// Unit vector spanning the (numerical) null space of `h - theta`.
fn null_vector(h: &CMatrix, theta: C64) -> Result<CVector> {
    let n = h.nrows();
    let shifted = h - CMatrix::identity(n, n) * theta;
    let dec = svd(&shifted)?;
    let row = dec.vdag.row(n - 1);
    Ok(CVector::from_iterator(n, row.iter().map(|z| z.conj())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c;

    fn dense_op(m: CMatrix) -> impl Fn(&CVector) -> CVector {
        move |v| &m * v
    }

    #[test]
    fn diagonal_dominant() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(3.0, 0.0), c(1.0, 0.0)]));
        let r = dominant_eigpair(dense_op(m), 2, 1e-12, 1000).unwrap();
        assert!((r.value - c(3.0, 0.0)).norm() < 1e-12);
        assert!((r.vector[0] - c(1.0, 0.0)).norm() < 1e-12 && r.vector[1].norm() < 1e-12);
    }

    #[test]
    fn matches_dense_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3usize, 10, 32] {
            let m = CMatrix::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let dense = eig_dense(&m).unwrap()[0];
            let r = dominant_eigpair(dense_op(m.clone()), n, 1e-12, 20_000).unwrap();
            assert!((r.value - dense).norm() < 1e-10 * dense.norm(), "n={n}: {} vs {}", r.value, dense);
            let resid = (&m * &r.vector - &r.vector * r.value).norm();
            assert!(resid <= 1e-12 * r.value.norm() * 1.0001);
        }
    }

    #[test]
    fn larger_than_krylov_space() {
        // Well-separated spectrum on a space bigger than one Arnoldi cycle.
        let n = 200;
        let diag: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0 / (1.0 + i as f64 * 0.05), 0.01 * i as f64)).collect();
        let m = CMatrix::from_diagonal(&CVector::from_vec(diag.clone()));
        let r = dominant_eigpair(dense_op(m), n, 1e-12, 100_000).unwrap();
        assert!((r.value - diag[0]).norm() < 1e-10);
    }

    #[test]
    fn degenerate_modulus_is_reported() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0), c(0.5, 0.0)]));
        assert!(matches!(dominant_eigpair(dense_op(m), 3, 1e-12, 1000), Err(Error::Degenerate { .. })));
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0), c(0.2, 0.0)]));
        assert!(matches!(dominant_eigpair(dense_op(m), 3, 1e-12, 1000), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn budget_exhaustion() {
        // Nearly equal moduli with a rotating phase converge slowly.
        let n = 300;
        let diag: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0 - 1e-7 * i as f64, i as f64)).collect();
        let m = CMatrix::from_diagonal(&CVector::from_vec(diag));
        assert!(matches!(dominant_eigpair(dense_op(m), n, 1e-14, 80), Err(Error::NonConvergence { .. })));
    }
}
