//! Local expectation values, connected correlators and mutual information.
//!
//! Everything is computed from reduced density matrices, so the same
//! routines serve the infinite chain and the exact finite ring through the
//! [`Marginals`] trait. Site labels are 0-based and relative to an origin;
//! density matrices order sites ascending with the leftmost site most
//! significant, physical index 0 being spin up.

use crate::error::{Error, Result};
use crate::imps::{partial_trace, von_neumann, IMpsState, Sublattice, RDM_MAX_SPAN};
use crate::models::{kron, Pauli};
use crate::numerics::{eigh, CMatrix, C64};

/// Largest correlator separation that fits in the density-matrix window.
pub const MAX_CORRELATOR_DISTANCE: usize = RDM_MAX_SPAN - 1;
/// Eigenvalues of a density matrix below this are treated as zero.
pub const EIGENVALUE_CLIP: f64 = 1e-15;

/// Source of reduced density matrices.
pub trait Marginals {
    /// Density matrix of the distinct `sites`, given in ascending order.
    fn marginal(&self, sites: &[usize]) -> Result<CMatrix>;
}

/// An infinite-chain state read with site 0 on a chosen sublattice.
#[derive(Debug, Clone, Copy)]
pub struct Anchored<'a> {
    pub state: &'a IMpsState,
    pub origin: Sublattice,
}

impl<'a> Anchored<'a> {
    pub fn new(state: &'a IMpsState, origin: Sublattice) -> Self {
        Self { state, origin }
    }
}

impl Marginals for Anchored<'_> {
    fn marginal(&self, sites: &[usize]) -> Result<CMatrix> {
        self.state.reduced_density_matrix(sites, self.origin)
    }
}

/// Density matrix of a block of consecutive sites, computed once and
/// reduced by partial traces for every request inside it.
#[derive(Debug, Clone)]
pub struct SharedWindow {
    first: usize,
    len: usize,
    rho: CMatrix,
}

impl SharedWindow {
    pub fn new<M: Marginals + ?Sized>(source: &M, first: usize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Validation("window must hold at least one site".into()));
        }
        let sites: Vec<usize> = (first..first + len).collect();
        Ok(Self { first, len, rho: source.marginal(&sites)? })
    }
}

impl Marginals for SharedWindow {
    fn marginal(&self, sites: &[usize]) -> Result<CMatrix> {
        let keep = sites
            .iter()
            .map(|&s| s.checked_sub(self.first).filter(|&k| k < self.len))
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| Error::Validation(format!("sites {sites:?} leave the window {}..{}", self.first, self.first + self.len)))?;
        if keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!("sites {sites:?} must be ascending and distinct")));
        }
        Ok(partial_trace(&self.rho, self.len, &keep))
    }
}

/// `Tr(ρ O)`.
pub fn trace_product(rho: &CMatrix, op: &CMatrix) -> C64 {
    let n = rho.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += rho[(i, k)] * op[(k, i)];
        }
    }
    acc
}

/// `⟨σ^a⟩` on `site`.
pub fn expectation<M: Marginals + ?Sized>(source: &M, pauli: Pauli, site: usize) -> Result<f64> {
    let rho = source.marginal(&[site])?;
    Ok(trace_product(&rho, &pauli.matrix()).re)
}

/// `⟨σ^a_i σ^b_{i+d}⟩ - ⟨σ^a_i⟩⟨σ^b_{i+d}⟩` with `i = site` and `d ≥ 1`.
pub fn correlator<M: Marginals + ?Sized>(source: &M, a: Pauli, b: Pauli, site: usize, distance: usize) -> Result<C64> {
    if distance > MAX_CORRELATOR_DISTANCE {
        return Err(Error::Capacity { what: "correlator distance", got: distance, limit: MAX_CORRELATOR_DISTANCE });
    }
    if distance == 0 {
        return Err(Error::Validation("correlator distance must be at least 1".into()));
    }
    let (ma, mb) = (a.matrix(), b.matrix());
    let rho = source.marginal(&[site, site + distance])?;
    let joint = trace_product(&rho, &kron(&ma, &mb));
    let left = trace_product(&partial_trace(&rho, 2, &[0]), &ma);
    let right = trace_product(&partial_trace(&rho, 2, &[1]), &mb);
    Ok(joint - left * right)
}

/// Von Neumann entropy (natural log) of a density matrix.
pub fn density_matrix_entropy(rho: &CMatrix) -> f64 {
    let (w, _) = eigh(rho);
    let probs: Vec<f64> = w.into_iter().map(|p| if p < EIGENVALUE_CLIP { 0.0 } else { p }).collect();
    von_neumann(&probs)
}

/// Entropies entering the mutual information of two regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutualInformation {
    pub s_a: f64,
    pub s_b: f64,
    pub s_ab: f64,
}

impl MutualInformation {
    /// `S(A) + S(B) - S(A ∪ B)`.
    pub fn value(&self) -> f64 {
        self.s_a + self.s_b - self.s_ab
    }
}

/// Entropies of two disjoint regions and of their union.
pub fn mutual_information_parts<M: Marginals + ?Sized>(source: &M, region_a: &[usize], region_b: &[usize]) -> Result<MutualInformation> {
    let ra = normalized_region(region_a, "region A")?;
    let rb = normalized_region(region_b, "region B")?;
    if ra.iter().any(|s| rb.contains(s)) {
        return Err(Error::Validation(format!("regions {ra:?} and {rb:?} overlap")));
    }
    let mut union: Vec<usize> = ra.iter().chain(&rb).copied().collect();
    union.sort_unstable();
    let span = union[union.len() - 1] - union[0] + 1;
    if span > RDM_MAX_SPAN {
        return Err(Error::Capacity { what: "mutual information span", got: span, limit: RDM_MAX_SPAN });
    }
    let rho = source.marginal(&union)?;
    let position = |s: &usize| union.iter().position(|u| u == s).expect("site is in the union");
    let keep_a: Vec<usize> = ra.iter().map(position).collect();
    let keep_b: Vec<usize> = rb.iter().map(position).collect();
    Ok(MutualInformation {
        s_a: density_matrix_entropy(&partial_trace(&rho, union.len(), &keep_a)),
        s_b: density_matrix_entropy(&partial_trace(&rho, union.len(), &keep_b)),
        s_ab: density_matrix_entropy(&rho),
    })
}

/// `I(A; B) = S(A) + S(B) - S(A ∪ B)`.
pub fn mutual_info<M: Marginals + ?Sized>(source: &M, region_a: &[usize], region_b: &[usize]) -> Result<f64> {
    mutual_information_parts(source, region_a, region_b).map(|m| m.value())
}

fn normalized_region(region: &[usize], name: &str) -> Result<Vec<usize>> {
    let mut r = region.to_vec();
    r.sort_unstable();
    r.dedup();
    if r.is_empty() || r.len() != region.len() {
        return Err(Error::Validation(format!("{name} must be a non-empty set of distinct sites, got {region:?}")));
    }
    Ok(r)
}

/// `⟨σ^a⟩` on one sublattice of a canonical state.
pub fn local_expectation(state: &IMpsState, pauli: Pauli, sublattice: Sublattice) -> f64 {
    expectation(&Anchored::new(state, sublattice), pauli, 0).expect("a single site always fits the window")
}

/// Connected correlator at `distance`, starting on `origin`.
pub fn connected_correlator(state: &IMpsState, a: Pauli, b: Pauli, distance: usize, origin: Sublattice) -> Result<C64> {
    correlator(&Anchored::new(state, origin), a, b, 0, distance)
}

/// Mutual information of two disjoint regions, site 0 on `origin`.
pub fn mutual_information(state: &IMpsState, region_a: &[usize], region_b: &[usize], origin: Sublattice) -> Result<f64> {
    mutual_info(&Anchored::new(state, origin), region_a, region_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imps::ProductState;

    #[test]
    fn product_state_values() {
        let s = IMpsState::from_product(&ProductState::down());
        assert!((local_expectation(&s, Pauli::Z, Sublattice::A) + 1.0).abs() < 1e-14);
        assert!(local_expectation(&s, Pauli::X, Sublattice::B).abs() < 1e-14);
        assert!(connected_correlator(&s, Pauli::Z, Pauli::Z, 3, Sublattice::A).unwrap().norm() < 1e-14);
        assert!(mutual_information(&s, &[0, 1], &[2], Sublattice::A).unwrap().abs() < 1e-14);
    }

    #[test]
    fn region_errors() {
        let s = IMpsState::from_product(&ProductState::up());
        assert!(matches!(mutual_information(&s, &[0, 1], &[1], Sublattice::A), Err(Error::Validation(_))));
        assert!(matches!(mutual_information(&s, &[0], &[8], Sublattice::A), Err(Error::Capacity { .. })));
        assert!(matches!(mutual_information(&s, &[], &[2], Sublattice::A), Err(Error::Validation(_))));
        assert!(matches!(connected_correlator(&s, Pauli::X, Pauli::X, 8, Sublattice::A), Err(Error::Capacity { .. })));
    }

    #[test]
    fn bell_pair_entropy() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut rho = CMatrix::zeros(4, 4);
        for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            rho[(i, j)] = C64::new(r * r, 0.0);
        }
        assert!((density_matrix_entropy(&rho)).abs() < 1e-12);
        assert!((density_matrix_entropy(&partial_trace(&rho, 2, &[0])) - 2f64.ln()).abs() < 1e-12);
    }
}
