//! Two-site-cell infinite MPS in Vidal form.
//!
//! The chain reads `... λ_B Γ_A λ_A Γ_B λ_B Γ_A ...`: `Γ_A` maps the B bond
//! (rows) to the A bond (columns) and `Γ_B` maps A back to B. Physical index
//! 0 is spin up and 1 is spin down. Bond vectors hold Schmidt values
//! `√λ_i`, so the entanglement spectrum is their square.

use crate::error::{Error, Result};
use crate::numerics::{dominant_eigpair, eigh, gemm, matmul, scale_cols, scale_rows, svd, CMatrix, CVector, Op, C64, ONE, ZERO};
use nalgebra::Dyn;

/// The two physical components `Γ^↑`, `Γ^↓` of a site tensor.
pub type SiteTensor = [CMatrix; 2];

/// States whose canonical residual exceeds this are re-gauged.
pub const CANONICAL_TOL: f64 = 1e-8;
/// A re-gauged state whose canonical residual is still above this is a
/// numerical failure.
pub const REGAUGE_FAIL_TOL: f64 = 1e-6;
/// Largest window accepted by [`IMpsState::reduced_density_matrix`].
pub const RDM_MAX_SPAN: usize = 8;

const FIXED_POINT_TOL: f64 = 1e-13;
const FIXED_POINT_MAX_MATVECS: usize = 50_000;
/// Fixed-point eigen-directions below this fraction of the largest are
/// treated as outside the support of the state.
const FIXED_POINT_CUTOFF: f64 = 1e-12;
const NEGATIVE_FIXED_POINT_TOL: f64 = 1e-8;
const SCHMIDT_CUTOFF: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bond {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sublattice {
    A,
    B,
}

impl Sublattice {
    pub fn other(self) -> Self {
        match self {
            Sublattice::A => Sublattice::B,
            Sublattice::B => Sublattice::A,
        }
    }
}

/// Normalized single-site spinor `(v^↑, v^↓)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductState {
    v: [C64; 2],
}

impl ProductState {
    /// Accepts the spinor only if it is normalized to 1e-14.
    pub fn new(up: C64, down: C64) -> Result<Self> {
        let norm2 = up.norm_sqr() + down.norm_sqr();
        if !(up.re.is_finite() && up.im.is_finite() && down.re.is_finite() && down.im.is_finite()) {
            return Err(Error::Validation("spinor has non-finite amplitudes".into()));
        }
        if (norm2 - 1.0).abs() > 1e-14 {
            return Err(Error::Validation(format!("spinor is not normalized: |v|^2 = {norm2}")));
        }
        Ok(Self { v: [up, down] })
    }

    /// Rescales a nonzero spinor to unit norm.
    pub fn normalized(up: C64, down: C64) -> Result<Self> {
        let n = (up.norm_sqr() + down.norm_sqr()).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Validation("spinor must be finite and nonzero".into()));
        }
        Self::new(up / n, down / n)
    }

    pub fn up() -> Self {
        Self { v: [ONE, ZERO] }
    }

    pub fn down() -> Self {
        Self { v: [ZERO, ONE] }
    }

    pub fn amplitudes(&self) -> [C64; 2] {
        self.v
    }

    /// Whether both amplitudes are real in the z basis.
    pub fn is_real(&self) -> bool {
        self.v.iter().all(|z| z.im == 0.0)
    }
}

/// Immutable snapshot of a two-site-cell iMPS.
#[derive(Debug, Clone)]
pub struct IMpsState {
    gamma_a: SiteTensor,
    gamma_b: SiteTensor,
    lambda_a: Vec<f64>,
    lambda_b: Vec<f64>,
    time: f64,
    canonical_error: f64,
    discarded_weight: f64,
}

impl IMpsState {
    /// χ = 1 state with every site in `v`.
    pub fn from_product(v: &ProductState) -> Self {
        let g = v.v.map(|z| CMatrix::from_element(1, 1, z));
        Self { gamma_a: g.clone(), gamma_b: g, lambda_a: vec![1.0], lambda_b: vec![1.0], time: 0.0, canonical_error: 0.0, discarded_weight: 0.0 }
    }

    /// Wraps two arbitrary site tensors (`a` on sublattice A, `b` on B) as a
    /// state that is generally not canonical. Bond vectors are set uniform
    /// and absorbed into `Γ` so that `λ_B Γ_A λ_A Γ_B = a b`.
    pub fn from_raw(a: SiteTensor, b: SiteTensor) -> Result<Self> {
        let (cb, ca) = a[0].shape();
        check_site(&a, cb, ca, "sublattice A")?;
        check_site(&b, ca, cb, "sublattice B")?;
        let ua = vec![1.0 / (ca as f64).sqrt(); ca];
        let ub = vec![1.0 / (cb as f64).sqrt(); cb];
        let ga = a.map(|m| m * C64::new((cb as f64).sqrt(), 0.0));
        let gb = b.map(|m| m * C64::new((ca as f64).sqrt(), 0.0));
        Self::from_parts(ga, ua, gb, ub, 0.0)
    }

    /// Translation-invariant state with the same tensor on every site.
    pub fn from_uniform_tensor(a: SiteTensor) -> Result<Self> {
        Self::from_raw(a.clone(), a)
    }

    /// Assembles a state from Vidal tensors, checking shapes and the bond
    /// normalization and measuring how canonical the tensors are.
    pub fn from_parts(gamma_a: SiteTensor, lambda_a: Vec<f64>, gamma_b: SiteTensor, lambda_b: Vec<f64>, time: f64) -> Result<Self> {
        check_site(&gamma_a, lambda_b.len(), lambda_a.len(), "sublattice A")?;
        check_site(&gamma_b, lambda_a.len(), lambda_b.len(), "sublattice B")?;
        for (name, l) in [("A", &lambda_a), ("B", &lambda_b)] {
            if l.is_empty() || l.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::Validation(format!("bond {name} needs finite positive Schmidt values")));
            }
            if l.windows(2).any(|w| w[0] < w[1]) {
                return Err(Error::Validation(format!("bond {name} Schmidt values are not descending")));
            }
            let sum: f64 = l.iter().map(|x| x * x).sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::Validation(format!("bond {name} spectrum sums to {sum}, not 1")));
            }
        }
        Ok(Self::assemble(gamma_a, lambda_a, gamma_b, lambda_b, time, 0.0))
    }

    pub(crate) fn assemble(
        gamma_a: SiteTensor,
        lambda_a: Vec<f64>,
        gamma_b: SiteTensor,
        lambda_b: Vec<f64>,
        time: f64,
        discarded_weight: f64,
    ) -> Self {
        let mut s = Self { gamma_a, gamma_b, lambda_a, lambda_b, time, canonical_error: 0.0, discarded_weight };
        s.canonical_error = s.measure_canonical_error();
        s
    }

    pub fn gamma(&self, site: Sublattice) -> &SiteTensor {
        match site {
            Sublattice::A => &self.gamma_a,
            Sublattice::B => &self.gamma_b,
        }
    }

    /// Schmidt values `√λ_i` on a bond, descending.
    pub fn schmidt_values(&self, bond: Bond) -> &[f64] {
        match bond {
            Bond::A => &self.lambda_a,
            Bond::B => &self.lambda_b,
        }
    }

    /// Entanglement spectrum `λ_i` on a bond, descending and summing to one.
    pub fn lambdas(&self, bond: Bond) -> Vec<f64> {
        self.schmidt_values(bond).iter().map(|s| s * s).collect()
    }

    pub fn chi(&self, bond: Bond) -> usize {
        self.schmidt_values(bond).len()
    }

    pub fn max_chi(&self) -> usize {
        self.lambda_a.len().max(self.lambda_b.len())
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Largest residual of the left and right canonical conditions over both
    /// sites, weighted by the Schmidt values on the far bond (see
    /// [`canonical_residual`]).
    pub fn canonical_error(&self) -> f64 {
        self.canonical_error
    }

    /// Spectral weight `Σ λ_i` removed by the truncation that produced this
    /// snapshot.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    /// Bond vector to the left of a site.
    pub fn left_bond(site: Sublattice) -> Bond {
        match site {
            Sublattice::A => Bond::B,
            Sublattice::B => Bond::A,
        }
    }

    /// Bond vector to the right of a site.
    pub fn right_bond(site: Sublattice) -> Bond {
        match site {
            Sublattice::A => Bond::A,
            Sublattice::B => Bond::B,
        }
    }

    fn measure_canonical_error(&self) -> f64 {
        let ea = canonical_residual(&self.gamma_a, &self.lambda_b, &self.lambda_a);
        let eb = canonical_residual(&self.gamma_b, &self.lambda_a, &self.lambda_b);
        ea.max(eb)
    }

    /// Two-site cell `λ_B Γ_A λ_A Γ_B`, indexed by `2 σ_A + σ_B`.
    pub fn cell(&self) -> [CMatrix; 4] {
        let a: Vec<CMatrix> = self.gamma_a.iter().map(|g| scale_cols(&scale_rows(g, &self.lambda_b), &self.lambda_a)).collect();
        std::array::from_fn(|k| matmul(&a[k / 2], &self.gamma_b[k % 2]))
    }

    /// Dominant eigenvalue of the cell transfer map `X ↦ Σ C X C†`. Equal to
    /// one for a normalized canonical state.
    pub fn transfer_eigenvalue(&self) -> Result<C64> {
        let cell = self.cell();
        let chi = self.lambda_b.len();
        let map = |x: &CVector| right_map(&cell, x, chi);
        Ok(dominant_eigpair(map, chi * chi, FIXED_POINT_TOL, FIXED_POINT_MAX_MATVECS)?.value)
    }

    /// Re-gauges into Vidal canonical form. The transfer eigenvalue is
    /// rescaled to one; directions outside the support of the fixed points
    /// are removed.
    pub fn canonicalize(&self) -> Result<IMpsState> {
        let chi = self.lambda_b.len();
        let mut cell = self.cell();

        let right = dominant_eigpair(|x| right_map(&cell, x, chi), chi * chi, FIXED_POINT_TOL, FIXED_POINT_MAX_MATVECS)?;
        let left = dominant_eigpair(|x| left_map(&cell, x, chi), chi * chi, FIXED_POINT_TOL, FIXED_POINT_MAX_MATVECS)?;
        let eta = right.value;
        if !(eta.re > 0.0) || eta.im.abs() > 1e-8 * eta.norm() {
            return Err(Error::Breakdown(format!("transfer eigenvalue {eta} is not real positive")));
        }
        let scale = C64::new(1.0 / eta.re.sqrt(), 0.0);
        for m in cell.iter_mut() {
            *m *= scale;
        }

        // R = X X†, L = Y† Y.
        let (wr, dr) = positive_factor(&vec_to_mat(&right.vector, chi), "right")?;
        let (wl, dl) = positive_factor(&vec_to_mat(&left.vector, chi), "left")?;
        let sqrt_dr: Vec<f64> = dr.iter().map(|d| d.sqrt()).collect();
        let sqrt_dl: Vec<f64> = dl.iter().map(|d| d.sqrt()).collect();
        let x = scale_cols(&wr, &sqrt_dr);
        let y = scale_rows(&wl.adjoint(), &sqrt_dl);
        let x_pinv = scale_rows(&wr.adjoint(), &sqrt_dr.iter().map(|d| 1.0 / d).collect::<Vec<_>>());
        let y_pinv = scale_cols(&wl, &sqrt_dl.iter().map(|d| 1.0 / d).collect::<Vec<_>>());

        let bond = svd(&matmul(&y, &x))?;
        let keep = count_above(&bond.s, SCHMIDT_CUTOFF * bond.s[0]);
        if keep == 0 {
            return Err(Error::Breakdown("fixed points have no common support".into()));
        }
        let u = bond.u.columns(0, keep).into_owned();
        let vdag = bond.vdag.rows(0, keep).into_owned();
        let s_norm = bond.s[..keep].iter().map(|s| s * s).sum::<f64>().sqrt();
        let lam_b: Vec<f64> = bond.s[..keep].iter().map(|s| s / s_norm).collect();

        let left_gauge = matmul(&vdag, &x_pinv) * C64::new(s_norm, 0.0);
        let right_gauge = matmul(&y_pinv, &u);
        let gamma_cell: Vec<CMatrix> = cell.iter().map(|m| matmul(&matmul(&left_gauge, m), &right_gauge)).collect();

        // Split λ_B Γ_cell λ_B across the A bond.
        let k = keep;
        let mut theta = CMatrix::zeros(2 * k, 2 * k);
        for s1 in 0..2 {
            for s2 in 0..2 {
                let block = scale_cols(&scale_rows(&gamma_cell[2 * s1 + s2], &lam_b), &lam_b);
                for i in 0..k {
                    for j in 0..k {
                        theta[(2 * i + s1, 2 * j + s2)] = block[(i, j)];
                    }
                }
            }
        }
        let split = svd(&theta)?;
        let ka = count_above(&split.s, SCHMIDT_CUTOFF * split.s[0]);
        let sa_norm = split.s[..ka].iter().map(|s| s * s).sum::<f64>().sqrt();
        let lam_a: Vec<f64> = split.s[..ka].iter().map(|s| s / sa_norm).collect();
        let inv_b: Vec<f64> = lam_b.iter().map(|l| 1.0 / l).collect();

        let gamma_a: SiteTensor = std::array::from_fn(|s1| {
            let mut g = CMatrix::zeros(k, ka);
            for i in 0..k {
                for a in 0..ka {
                    g[(i, a)] = split.u[(2 * i + s1, a)] * inv_b[i] * sa_norm;
                }
            }
            g
        });
        let gamma_b: SiteTensor = std::array::from_fn(|s2| {
            let mut g = CMatrix::zeros(ka, k);
            for a in 0..ka {
                for j in 0..k {
                    g[(a, j)] = split.vdag[(a, 2 * j + s2)] * inv_b[j];
                }
            }
            g
        });

        let out = Self::assemble(gamma_a, lam_a, gamma_b, lam_b, self.time, self.discarded_weight);
        if out.canonical_error > REGAUGE_FAIL_TOL {
            return Err(Error::Breakdown(format!("canonical residual {:.3e} after re-gauging", out.canonical_error)));
        }
        Ok(out)
    }

    /// Drops Schmidt values below `sv_threshold` and beyond `chi_max` on both
    /// bonds and renormalizes. The removed weight is recorded.
    pub fn truncate(&self, chi_max: usize, sv_threshold: f64) -> Result<IMpsState> {
        if chi_max == 0 {
            return Err(Error::Validation("chi_max must be at least 1".into()));
        }
        let ka = count_above(&self.lambda_a, sv_threshold).min(chi_max);
        let kb = count_above(&self.lambda_b, sv_threshold).min(chi_max);
        if ka == 0 || kb == 0 {
            return Err(Error::EmptyState { threshold: sv_threshold });
        }
        Ok(self.keep(ka, kb))
    }

    /// Keeps the two largest Schmidt values on each bond and re-gauges.
    /// Returns the input unchanged (and `false`) when it is already χ = 1.
    pub fn truncate_to_chi2(&self) -> Result<(IMpsState, bool)> {
        if self.max_chi() <= 1 {
            log::warn!("truncate_to_chi2 on a product state is a no-op");
            return Ok((self.clone(), false));
        }
        let ka = self.lambda_a.len().min(2);
        let kb = self.lambda_b.len().min(2);
        if ka == self.lambda_a.len() && kb == self.lambda_b.len() {
            return Ok((self.clone(), true));
        }
        let cut = self.keep(ka, kb);
        let discarded = cut.discarded_weight;
        let mut out = cut.canonicalize()?;
        out.discarded_weight = discarded;
        Ok((out, true))
    }

    fn keep(&self, ka: usize, kb: usize) -> IMpsState {
        let weight = |l: &[f64], k: usize| l[k..].iter().map(|s| s * s).sum::<f64>();
        let discarded = weight(&self.lambda_a, ka).max(weight(&self.lambda_b, kb));
        let renorm = |l: &[f64]| {
            let n = l.iter().map(|s| s * s).sum::<f64>().sqrt();
            l.iter().map(|s| s / n).collect::<Vec<_>>()
        };
        let gamma_a = self.gamma_a.clone().map(|g| g.view((0, 0), (kb, ka)).into_owned());
        let gamma_b = self.gamma_b.clone().map(|g| g.view((0, 0), (ka, kb)).into_owned());
        Self::assemble(gamma_a, renorm(&self.lambda_a[..ka]), gamma_b, renorm(&self.lambda_b[..kb]), self.time, discarded)
    }

    /// `S = -Σ λ_i ln λ_i` on a bond.
    pub fn entanglement_entropy(&self, bond: Bond) -> f64 {
        von_neumann(&self.lambdas(bond))
    }

    /// Reduced density matrix of `sites`, counted from an origin on sublattice
    /// `origin`. Sites may be given in any order; the basis follows ascending
    /// site index with the leftmost site most significant.
    pub fn reduced_density_matrix(&self, sites: &[usize], origin: Sublattice) -> Result<CMatrix> {
        let mut sorted = sites.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() || sorted.len() != sites.len() {
            return Err(Error::Validation("sites must be non-empty and distinct".into()));
        }
        let first = sorted[0];
        let span = sorted[sorted.len() - 1] - first + 1;
        if span > RDM_MAX_SPAN {
            return Err(Error::Capacity { what: "reduced density matrix span", got: span, limit: RDM_MAX_SPAN });
        }
        let start = if first.is_multiple_of(2) { origin } else { origin.other() };
        let full = self.window_rdm(start, span);
        let keep: Vec<usize> = sorted.iter().map(|s| s - first).collect();
        Ok(partial_trace(&full, span, &keep))
    }

    /// Density matrix of `n` consecutive sites starting on `start`.
    ///
    /// Builds `M[(a, s_1..s_n), j] = λ_a (Γ^{s_1} Λ Γ^{s_2} Λ ...)_{aj}` with
    /// the left index folded into the rows, so each site costs one large
    /// product, then contracts both bond indices in a single product.
    fn window_rdm(&self, start: Sublattice, n: usize) -> CMatrix {
        // `m` holds one column per (left index, configuration) with the
        // newest site least significant, and the open right bond as rows.
        // Each site is then a single product with the stacked tensor
        // `[(Γ^0 Λ)^T; (Γ^1 Λ)^T]` followed by a free reshape.
        let stacked = |site: Sublattice| {
            let g = self.gamma(site);
            let lr = self.schmidt_values(Self::right_bond(site));
            let chi_r = lr.len();
            CMatrix::from_fn(2 * chi_r, g[0].nrows(), |row, a| g[row / chi_r][(a, row % chi_r)] * lr[row % chi_r])
        };
        let left = self.schmidt_values(Self::left_bond(start));
        let chi_l = left.len();
        let mut m = scale_cols(&stacked(start), left);
        let mut site = start.other();
        for _ in 1..n {
            let chi = m.nrows() / 2;
            let cols = m.ncols() * 2;
            m = gemm(&stacked(site), Op::N, &m.reshape_generic(Dyn(chi), Dyn(cols)), Op::N);
            site = site.other();
        }
        let (chi_r, cols) = (m.nrows() / 2, 2 * m.ncols());
        let m = m.reshape_generic(Dyn(chi_r), Dyn(cols));
        let dim = 1usize << n;
        let w = CMatrix::from_fn(dim, chi_l * chi_r, |s, col| m[(col % chi_r, (col / chi_r) * dim + s)]);
        gemm(&w, Op::N, &w, Op::Adjoint)
    }
}

fn check_site(g: &SiteTensor, rows: usize, cols: usize, name: &str) -> Result<()> {
    for m in g {
        if m.shape() != (rows, cols) {
            return Err(Error::Validation(format!("{name} tensor is {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols())));
        }
        if !crate::numerics::is_finite(m) {
            return Err(Error::Validation(format!("{name} tensor has non-finite entries")));
        }
    }
    Ok(())
}

fn count_above(values: &[f64], threshold: f64) -> usize {
    values.iter().take_while(|&&x| x >= threshold).count()
}

/// Canonical residual of one site tensor with Schmidt values `ll` on its left
/// and `lr` on its right. With `A = Λ_l Γ Λ_r`, returns the larger of
/// `max |Σ A†A - Λ_r²|` and `max |Σ A A† - Λ_l²|`. These are the Vidal
/// conditions weighted by the far-side Schmidt values on both indices, which
/// keeps the check well conditioned when Schmidt values approach the
/// truncation threshold.
pub fn canonical_residual(g: &SiteTensor, ll: &[f64], lr: &[f64]) -> f64 {
    let mut left = CMatrix::zeros(lr.len(), lr.len());
    let mut right = CMatrix::zeros(ll.len(), ll.len());
    for gs in g {
        let a = scale_cols(&scale_rows(gs, ll), lr);
        left += gemm(&a, Op::Adjoint, &a, Op::N);
        right += gemm(&a, Op::N, &a, Op::Adjoint);
    }
    for (i, x) in lr.iter().enumerate() {
        left[(i, i)] -= x * x;
    }
    for (i, x) in ll.iter().enumerate() {
        right[(i, i)] -= x * x;
    }
    crate::numerics::max_abs(&left).max(crate::numerics::max_abs(&right))
}

/// `-Σ p ln p` with the logarithm's argument clipped at 1e-15 and
/// contributions below 1e-14 dropped.
pub fn von_neumann(probs: &[f64]) -> f64 {
    probs.iter().map(|&p| -p * p.max(1e-15).ln()).filter(|c| c.abs() >= 1e-14).sum::<f64>().max(0.0)
}

/// Traces out every site of an `n`-site density matrix that is not in
/// `keep` (positions within the window, ascending).
pub fn partial_trace(rho: &CMatrix, n: usize, keep: &[usize]) -> CMatrix {
    if keep.len() == n {
        return rho.clone();
    }
    let traced: Vec<usize> = (0..n).filter(|s| !keep.contains(s)).collect();
    let bit = |site: usize| 1usize << (n - 1 - site);
    let expand = |bits: usize, sites: &[usize]| -> usize {
        sites.iter().enumerate().filter(|(k, _)| bits & (1 << (sites.len() - 1 - k)) != 0).map(|(_, &s)| bit(s)).sum()
    };
    let dk = 1usize << keep.len();
    let dt = 1usize << traced.len();
    let kept_idx: Vec<usize> = (0..dk).map(|b| expand(b, keep)).collect();
    let traced_idx: Vec<usize> = (0..dt).map(|b| expand(b, &traced)).collect();
    CMatrix::from_fn(dk, dk, |i, j| traced_idx.iter().map(|&t| rho[(kept_idx[i] | t, kept_idx[j] | t)]).sum())
}

fn vec_to_mat(v: &CVector, chi: usize) -> CMatrix {
    CMatrix::from_column_slice(chi, chi, v.as_slice())
}

fn right_map(cell: &[CMatrix; 4], x: &CVector, chi: usize) -> CVector {
    let r = vec_to_mat(x, chi);
    let mut out = CMatrix::zeros(chi, chi);
    for c in cell {
        out += gemm(&matmul(c, &r), Op::N, c, Op::Adjoint);
    }
    CVector::from_column_slice(out.as_slice())
}

fn left_map(cell: &[CMatrix; 4], x: &CVector, chi: usize) -> CVector {
    let l = vec_to_mat(x, chi);
    let mut out = CMatrix::zeros(chi, chi);
    for c in cell {
        out += matmul(&gemm(c, Op::Adjoint, &l, Op::N), c);
    }
    CVector::from_column_slice(out.as_slice())
}

/// Factors a fixed point known up to phase as `W diag(d) W†` with `d > 0`,
/// dropping directions outside its support.
fn positive_factor(m: &CMatrix, which: &str) -> Result<(CMatrix, Vec<f64>)> {
    let tr = m.trace();
    if tr.norm() == 0.0 {
        return Err(Error::Breakdown(format!("{which} fixed point is traceless")));
    }
    let phased = m * (tr.conj() / tr.norm());
    let (vals, vecs) = eigh(&phased);
    let top = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = vals.first().copied().unwrap_or(0.0);
    if min < -NEGATIVE_FIXED_POINT_TOL * top {
        return Err(Error::Breakdown(format!("{which} fixed point is not positive semidefinite (eigenvalue {min:.3e} vs {top:.3e})")));
    }
    let kept: Vec<usize> = (0..vals.len()).rev().filter(|&i| vals[i] > FIXED_POINT_CUTOFF * top).collect();
    let mut w = CMatrix::zeros(m.nrows(), kept.len());
    for (dst, &src) in kept.iter().enumerate() {
        w.set_column(dst, &vecs.column(src));
    }
    Ok((w, kept.iter().map(|&i| vals[i] / top).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{c, diag_real, max_abs};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_site(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> SiteTensor {
        std::array::from_fn(|_| CMatrix::from_fn(rows, cols, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
    }

    fn random_canonical(chi: usize, seed: u64) -> IMpsState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        IMpsState::from_raw(random_site(chi, chi, &mut rng), random_site(chi, chi, &mut rng)).unwrap().canonicalize().unwrap()
    }

    #[test]
    fn product_state_layout() {
        let s = IMpsState::from_product(&ProductState::down());
        assert_eq!(s.gamma(Sublattice::A)[0][(0, 0)], ZERO);
        assert_eq!(s.gamma(Sublattice::A)[1][(0, 0)], ONE);
        assert_eq!(s.schmidt_values(Bond::A), &[1.0]);
        assert_eq!(s.canonical_error(), 0.0);
        let v = ProductState::new(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        assert_eq!(IMpsState::from_product(&v).entanglement_entropy(Bond::A), 0.0);
    }

    #[test]
    fn rejects_unnormalized_spinor() {
        assert!(ProductState::new(c(1.0, 0.0), c(1.0, 0.0)).is_err());
        assert!(ProductState::normalized(ZERO, ZERO).is_err());
    }

    #[test]
    fn canonicalize_random_state() {
        let s = random_canonical(4, 1);
        assert!(s.canonical_error() < 1e-10, "{}", s.canonical_error());
        for bond in [Bond::A, Bond::B] {
            assert!((s.lambdas(bond).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let eta = s.transfer_eigenvalue().unwrap();
        assert!((eta - ONE).norm() < 1e-10);
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let s = random_canonical(5, 2);
        let t = s.canonicalize().unwrap();
        for bond in [Bond::A, Bond::B] {
            for (x, y) in s.lambdas(bond).iter().zip(t.lambdas(bond)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gauge_transform_is_undone() {
        let s = random_canonical(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ga =
            CMatrix::from_fn(4, 4, |i, j| c(if i == j { 1.0 } else { 0.0 } + 0.3 * (rng.random::<f64>() - 0.5), 0.3 * (rng.random::<f64>() - 0.5)));
        let gb =
            CMatrix::from_fn(4, 4, |i, j| c(if i == j { 1.0 } else { 0.0 } + 0.3 * (rng.random::<f64>() - 0.5), 0.3 * (rng.random::<f64>() - 0.5)));
        let ga_inv = ga.clone().try_inverse().unwrap();
        let gb_inv = gb.clone().try_inverse().unwrap();
        let la = s.schmidt_values(Bond::A).to_vec();
        let lb = s.schmidt_values(Bond::B).to_vec();
        let a: SiteTensor = std::array::from_fn(|k| &gb_inv * scale_cols(&scale_rows(&s.gamma(Sublattice::A)[k], &lb), &la) * &ga);
        let b: SiteTensor = std::array::from_fn(|k| &ga_inv * &s.gamma(Sublattice::B)[k] * &gb);
        let back = IMpsState::from_raw(a, b).unwrap().canonicalize().unwrap();
        for bond in [Bond::A, Bond::B] {
            for (x, y) in s.lambdas(bond).iter().zip(back.lambdas(bond)) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn truncation_counts() {
        let p = IMpsState::from_product(&ProductState::up());
        assert_eq!(p.truncate(4, 0.5).unwrap().max_chi(), 1);
        let s = random_canonical(6, 5);
        let t = s.truncate(3, 1e-12).unwrap();
        assert_eq!(t.chi(Bond::A), 3);
        assert!((t.lambdas(Bond::A).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.discarded_weight() > 0.0);
        assert!(matches!(s.truncate(3, 2.0), Err(Error::EmptyState { .. })));
        let (two, flag) = s.truncate_to_chi2().unwrap();
        assert!(flag && two.max_chi() == 2 && two.canonical_error() < 1e-10);
        let (same, _) = two.truncate_to_chi2().unwrap();
        assert_eq!(same.lambdas(Bond::A), two.lambdas(Bond::A));
    }

    #[test]
    fn single_site_rdm_of_product_state() {
        let v = ProductState::new(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        let s = IMpsState::from_product(&v);
        let rho = s.reduced_density_matrix(&[0], Sublattice::A).unwrap();
        let amp = CVector::from_vec(v.amplitudes().to_vec());
        assert!(max_abs(&(rho - &amp * amp.adjoint())) < 1e-15);
    }

    #[test]
    fn window_matches_explicit_contraction() {
        let s = random_canonical(3, 7);
        for origin in [Sublattice::A, Sublattice::B] {
            let rho = s.reduced_density_matrix(&[0, 1, 2], origin).unwrap();
            let sites = [origin, origin.other(), origin];
            let amplitude = |conf: usize| {
                let mut m = diag_real(s.schmidt_values(IMpsState::left_bond(origin)));
                for (k, &site) in sites.iter().enumerate() {
                    let bit = (conf >> (2 - k)) & 1;
                    m *= scale_cols(&s.gamma(site)[bit], s.schmidt_values(IMpsState::right_bond(site)));
                }
                m
            };
            let exact = CMatrix::from_fn(8, 8, |i, j| amplitude(i).component_mul(&amplitude(j).conjugate()).sum());
            assert!(max_abs(&(rho - exact)) < 1e-13);
        }
    }

    #[test]
    fn rdm_properties_on_random_state() {
        let s = random_canonical(4, 6);
        for sites in [vec![0], vec![1], vec![0, 1], vec![0, 3], vec![1, 2, 5]] {
            let rho = s.reduced_density_matrix(&sites, Sublattice::A).unwrap();
            assert!((rho.trace() - ONE).norm() < 1e-10);
            assert!(max_abs(&(&rho - rho.adjoint())) < 1e-12);
            let (vals, _) = eigh(&rho);
            assert!(vals[0] > -1e-12);
        }
        // Reduction is consistent: tracing site 1 from {0,1} gives {0}.
        let pair = s.reduced_density_matrix(&[0, 1], Sublattice::A).unwrap();
        let one = s.reduced_density_matrix(&[0], Sublattice::A).unwrap();
        assert!(max_abs(&(partial_trace(&pair, 2, &[0]) - one)) < 1e-12);
        assert!(matches!(s.reduced_density_matrix(&[0, 8], Sublattice::A), Err(Error::Capacity { .. })));
    }

    #[test]
    fn entropy_values() {
        assert!((von_neumann(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(von_neumann(&[1.0]), 0.0);
        assert_eq!(von_neumann(&[1.0, 0.0]), 0.0);
    }
}
