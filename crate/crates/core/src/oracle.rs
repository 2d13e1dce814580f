//! Exact diagonalization on periodic rings of at most 12 sites.
//!
//! Basis state `b = Σ_i s_i 2^{L-1-i}` with `s_i = 0` for spin up, so site 0
//! is the most significant bit, matching the ordering of reduced density
//! matrices elsewhere in the crate. Both model families are real symmetric
//! in this basis; `H` is diagonalized once per `(model, L)` and cached.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::imps::ProductState;
use crate::models::{GateOp, SpinModel, TrotterGateSet};
use crate::numerics::{dgemm, eigh_real, gemm, CMatrix, CVector, Op, C64};
use crate::observables::Marginals;

pub const ED_MAX_SITES: usize = 12;
/// Tolerance on the norm of a stored state.
pub const NORM_TOL: f64 = 1e-12;
/// Times evolved per matrix product in batched evolution.
const TIME_BATCH: usize = 64;

/// A state on a periodic ring together with the model that evolves it.
#[derive(Debug, Clone)]
pub struct EdSystem {
    sites: usize,
    model: SpinModel,
    state: CVector,
    time: f64,
}

impl EdSystem {
    /// The uniform product state `v^{⊗L}`.
    pub fn new(sites: usize, model: SpinModel, v: &ProductState) -> Result<Self> {
        check_sites(sites)?;
        let [up, down] = v.amplitudes();
        let state = CVector::from_fn(1 << sites, |b, _| {
            let ups = sites - b.count_ones() as usize;
            up.powu(ups as u32) * down.powu(b.count_ones())
        });
        Self::from_vector(sites, model, state, 0.0)
    }

    pub fn from_vector(sites: usize, model: SpinModel, state: CVector, time: f64) -> Result<Self> {
        check_sites(sites)?;
        if state.len() != 1 << sites {
            return Err(Error::Validation(format!("state has length {}, expected {}", state.len(), 1usize << sites)));
        }
        let norm = state.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Validation(format!("state norm is {norm}, expected 1")));
        }
        Ok(Self { sites, model, state, time })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn model(&self) -> &SpinModel {
        &self.model
    }

    pub fn state(&self) -> &CVector {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `⟨ψ|H|ψ⟩`, applying `H` directly rather than through its spectrum.
    pub fn energy(&self) -> f64 {
        let hpsi = apply_hamiltonian(&self.model, self.sites, &self.state);
        self.state.dotc(&hpsi).re
    }

    pub fn overlap(&self, other: &EdSystem) -> C64 {
        self.state.dotc(&other.state)
    }
}

impl Marginals for EdSystem {
    /// Sites are taken modulo the ring length.
    fn marginal(&self, sites: &[usize]) -> Result<CMatrix> {
        let l = self.sites;
        let wrapped: Vec<usize> = sites.iter().map(|s| s % l).collect();
        let mut check = wrapped.clone();
        check.sort_unstable();
        check.dedup();
        if check.is_empty() || check.len() != sites.len() {
            return Err(Error::Validation(format!("sites {sites:?} are not distinct on a ring of {l}")));
        }
        let bits: Vec<usize> = wrapped.iter().map(|s| l - 1 - s).collect();
        let rest: Vec<usize> = (0..l).filter(|b| !bits.contains(b)).collect();
        let (dk, dr) = (1usize << bits.len(), 1usize << rest.len());
        let scatter = |value: usize, positions: &[usize]| -> usize {
            positions.iter().enumerate().filter(|(k, _)| value & (1 << (positions.len() - 1 - k)) != 0).map(|(_, &p)| 1usize << p).sum()
        };
        let kept_idx: Vec<usize> = (0..dk).map(|k| scatter(k, &bits)).collect();
        let rest_idx: Vec<usize> = (0..dr).map(|r| scatter(r, &rest)).collect();
        let m = CMatrix::from_fn(dk, dr, |k, r| self.state[kept_idx[k] | rest_idx[r]]);
        Ok(gemm(&m, Op::N, &m, Op::Adjoint))
    }
}

fn check_sites(sites: usize) -> Result<()> {
    if sites > ED_MAX_SITES {
        return Err(Error::Capacity { what: "ring length", got: sites, limit: ED_MAX_SITES });
    }
    if sites < 2 {
        return Err(Error::Validation(format!("a ring needs at least 2 sites, got {sites}")));
    }
    Ok(())
}

/// Couplings in the form used by the bit-level construction:
/// `zz σ^zσ^z + xy (σ^xσ^x + σ^yσ^y)` per bond, `hx σ^x + hz σ^z` per site.
struct Couplings {
    zz: f64,
    xy: f64,
    hx: f64,
    hz: f64,
}

impl Couplings {
    fn of(model: &SpinModel) -> Self {
        match *model {
            SpinModel::Ising { j, hx, hz } => Self { zz: j, xy: 0.0, hx, hz },
            SpinModel::Xxz { jxy, jz, hx, hz } => Self { zz: jz, xy: jxy, hx, hz },
        }
    }

    /// Calls `emit(target, amplitude)` for every nonzero `⟨target|H|b⟩`.
    fn row<F: FnMut(usize, f64)>(&self, sites: usize, b: usize, mut emit: F) {
        let z = |i: usize| if b >> (sites - 1 - i) & 1 == 0 { 1.0 } else { -1.0 };
        let mut diag = 0.0;
        for i in 0..sites {
            let j = (i + 1) % sites;
            diag += self.zz * z(i) * z(j) + self.hz * z(i);
            if self.hx != 0.0 {
                emit(b ^ (1 << (sites - 1 - i)), self.hx);
            }
            // σ^xσ^x + σ^yσ^y exchanges antiparallel neighbours with weight 2.
            if self.xy != 0.0 && z(i) != z(j) {
                emit(b ^ (1 << (sites - 1 - i)) ^ (1 << (sites - 1 - j)), 2.0 * self.xy);
            }
        }
        emit(b, diag);
    }
}

/// Dense `H` on a periodic ring of `sites` sites.
pub fn hamiltonian_matrix(model: &SpinModel, sites: usize) -> Result<DMatrix<f64>> {
    check_sites(sites)?;
    let dim = 1usize << sites;
    let cp = Couplings::of(model);
    let mut h = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        cp.row(sites, b, |target, amp| h[(target, b)] += amp);
    }
    Ok(h)
}

/// `H ψ` without forming `H`.
pub fn apply_hamiltonian(model: &SpinModel, sites: usize, psi: &CVector) -> CVector {
    let cp = Couplings::of(model);
    let mut out = CVector::zeros(psi.len());
    for b in 0..psi.len() {
        let x = psi[b];
        cp.row(sites, b, |target, amp| out[target] += x * amp);
    }
    out
}

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// as columns.
#[derive(Debug)]
pub struct Eigensystem {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigensystem {
    /// Expansion coefficients `V^T ψ`.
    fn coefficients(&self, psi: &CVector) -> (Vec<f64>, Vec<f64>) {
        let n = psi.len();
        let parts = DMatrix::from_fn(n, 2, |i, k| if k == 0 { psi[i].re } else { psi[i].im });
        let c = dgemm(&self.vectors, true, &parts);
        (c.column(0).iter().copied().collect(), c.column(1).iter().copied().collect())
    }
}

type CacheKey = (u8, [u64; 4], usize);
type CacheSlot = Arc<OnceLock<Result<Arc<Eigensystem>>>>;

fn cache() -> &'static RwLock<HashMap<CacheKey, CacheSlot>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, CacheSlot>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn cache_key(model: &SpinModel, sites: usize) -> CacheKey {
    match *model {
        SpinModel::Ising { j, hx, hz } => (0, [j.to_bits(), hx.to_bits(), hz.to_bits(), 0], sites),
        SpinModel::Xxz { jxy, jz, hx, hz } => (1, [jxy.to_bits(), jz.to_bits(), hx.to_bits(), hz.to_bits()], sites),
    }
}

/// The eigensystem of `H`, computed on first use and shared afterwards.
/// Concurrent callers asking for the same system wait for one computation.
pub fn eigensystem(model: &SpinModel, sites: usize) -> Result<Arc<Eigensystem>> {
    check_sites(sites)?;
    let key = cache_key(model, sites);
    let existing = cache().read().expect("eigensystem cache poisoned").get(&key).cloned();
    let slot = match existing {
        Some(slot) => slot,
        None => cache().write().expect("eigensystem cache poisoned").entry(key).or_default().clone(),
    };
    slot.get_or_init(|| {
        let h = hamiltonian_matrix(model, sites)?;
        let (energies, vectors) = eigh_real(&h)?;
        log::debug!("diagonalized {} on {sites} sites", model.family());
        Ok(Arc::new(Eigensystem { energies, vectors }))
    })
    .clone()
}

/// Drops every cached eigensystem.
pub fn clear_eigensystem_cache() {
    cache().write().expect("eigensystem cache poisoned").clear();
}

/// `e^{-iHt}` applied to the system's state; the clock advances by `t`.
pub fn ed_evolve(system: &EdSystem, t: f64) -> Result<EdSystem> {
    Ok(ed_evolve_many(system, &[t])?.pop().expect("one time in, one state out"))
}

/// [`ed_evolve`] for several times, batched into matrix products.
pub fn ed_evolve_many(system: &EdSystem, times: &[f64]) -> Result<Vec<EdSystem>> {
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::Validation(format!("evolution time must be finite, got {t}")));
    }
    let eig = eigensystem(&system.model, system.sites)?;
    let (cr, ci) = eig.coefficients(&system.state);
    let n = cr.len();
    let mut out = Vec::with_capacity(times.len());
    for chunk in times.chunks(TIME_BATCH) {
        // Columns: Re and Im of e^{-iE t} c for each time.
        let mut re = DMatrix::zeros(n, chunk.len());
        let mut im = DMatrix::zeros(n, chunk.len());
        for (col, &t) in chunk.iter().enumerate() {
            for k in 0..n {
                let phase = C64::from_polar(1.0, -eig.energies[k] * t);
                let d = phase * C64::new(cr[k], ci[k]);
                re[(k, col)] = d.re;
                im[(k, col)] = d.im;
            }
        }
        let pr = dgemm(&eig.vectors, false, &re);
        let pi = dgemm(&eig.vectors, false, &im);
        for (col, &t) in chunk.iter().enumerate() {
            let psi = CVector::from_fn(n, |i, _| C64::new(pr[(i, col)], pi[(i, col)]));
            let norm = psi.norm();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::Breakdown(format!("norm drifted to {norm} at t = {t}")));
            }
            out.push(EdSystem { sites: system.sites, model: system.model, state: psi, time: system.time + t });
        }
    }
    Ok(out)
}

/// Finite-ring return rate with an underflow flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateValue {
    pub f: f64,
    /// `|⟨ψ0|ψ(t)⟩|²` fell below the smallest normal double and was capped.
    pub underflow: bool,
}

/// `⟨ψ0|e^{-iHt}|ψ0⟩` for each time, from the spectral weights of `ψ0`.
/// At `t = 0` the amplitude is the norm, which is exactly 1 by construction.
pub fn ed_return_amplitudes(system: &EdSystem, times: &[f64]) -> Result<Vec<C64>> {
    let eig = eigensystem(&system.model, system.sites)?;
    let (cr, ci) = eig.coefficients(&system.state);
    let weights: Vec<f64> = cr.iter().zip(&ci).map(|(r, i)| r * r + i * i).collect();
    Ok(times
        .iter()
        .map(|&t| if t == 0.0 { C64::new(1.0, 0.0) } else { weights.iter().zip(&eig.energies).map(|(w, e)| C64::from_polar(*w, -e * t)).sum() })
        .collect())
}

/// `-(1/L) ln |⟨ψ0|e^{-iHt}|ψ0⟩|²` with `ψ0` the system's state.
pub fn ed_rate_function(system: &EdSystem, t: f64) -> Result<RateValue> {
    Ok(ed_rate_series(system, &[t])?[0])
}

/// [`ed_rate_function`] for several times.
pub fn ed_rate_series(system: &EdSystem, times: &[f64]) -> Result<Vec<RateValue>> {
    let l = system.sites as f64;
    Ok(ed_return_amplitudes(system, times)?
        .into_iter()
        .map(|amp| {
            let p = amp.norm_sqr();
            if p < f64::MIN_POSITIVE {
                RateValue { f: -f64::MIN_POSITIVE.ln() / l, underflow: true }
            } else {
                RateValue { f: (-p.ln() / l).max(0.0), underflow: false }
            }
        })
        .collect())
}

/// One Trotter step of `gates` on the ring. A-bonds join sites `(2k, 2k+1)`
/// and B-bonds `(2k+1, 2k+2)`, so the ring length must be even.
pub fn trotter_step(system: &EdSystem, gates: &TrotterGateSet) -> Result<EdSystem> {
    let l = system.sites;
    if !l.is_multiple_of(2) {
        return Err(Error::Validation(format!("a two-site cell needs an even ring, got {l}")));
    }
    let mut psi = system.state.clone();
    for op in gates.sequence() {
        match op {
            GateOp::SiteHalf => {
                for i in 0..l {
                    psi = apply_one_site(&psi, l, i, &gates.single_site_half);
                }
            }
            GateOp::Bond { on_a, half } => {
                let first = if on_a { 0 } else { 1 };
                for i in (first..l).step_by(2) {
                    psi = apply_two_site(&psi, l, i, (i + 1) % l, gates.bond_gate(half));
                }
            }
        }
    }
    Ok(EdSystem { sites: l, model: system.model, state: psi, time: system.time + gates.dt })
}

fn apply_one_site(psi: &CVector, l: usize, site: usize, u: &CMatrix) -> CVector {
    let bit = 1usize << (l - 1 - site);
    let mut out = CVector::zeros(psi.len());
    for b in 0..psi.len() {
        if b & bit == 0 {
            let (x0, x1) = (psi[b], psi[b | bit]);
            out[b] = u[(0, 0)] * x0 + u[(0, 1)] * x1;
            out[b | bit] = u[(1, 0)] * x0 + u[(1, 1)] * x1;
        }
    }
    out
}

/// Applies a two-site gate with index `2 s_i + s_j`.
fn apply_two_site(psi: &CVector, l: usize, i: usize, j: usize, g: &CMatrix) -> CVector {
    let (bi, bj) = (1usize << (l - 1 - i), 1usize << (l - 1 - j));
    let mut out = CVector::zeros(psi.len());
    for b in 0..psi.len() {
        if b & (bi | bj) == 0 {
            let idx = [b, b | bj, b | bi, b | bi | bj];
            let x: [C64; 4] = std::array::from_fn(|k| psi[idx[k]]);
            for (r, &target) in idx.iter().enumerate() {
                out[target] = (0..4).map(|k| g[(r, k)] * x[k]).sum();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_gates, Pauli, TrotterOrder};
    use crate::numerics::c;
    use crate::observables::expectation;

    #[test]
    fn hamiltonian_is_symmetric_and_matches_bond_terms() {
        let model = SpinModel::xxz(0.3, 0.3, 1.0, 0.3, 0.1).unwrap();
        let h = hamiltonian_matrix(&model, 4).unwrap();
        assert!((&h - h.transpose()).abs().max() < 1e-15);
        // The two-site ring counts each bond twice; compare against 2 H_bond + 2 H_site terms.
        let h2 = hamiltonian_matrix(&model, 2).unwrap();
        let hb = model.bond_hamiltonian();
        let hs = model.site_hamiltonian();
        let id = CMatrix::identity(2, 2);
        let expect = hb * c(2.0, 0.0) + crate::models::kron(&hs, &id) + crate::models::kron(&id, &hs);
        for i in 0..4 {
            for j in 0..4 {
                assert!((expect[(i, j)] - c(h2[(i, j)], 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn product_state_marginals() {
        let model = SpinModel::ising(1.0, 0.0, 0.0).unwrap();
        let s = EdSystem::new(6, model, &ProductState::down()).unwrap();
        assert!((expectation(&s, Pauli::Z, 3).unwrap() + 1.0).abs() < 1e-14);
        let rho = s.marginal(&[5, 6]).unwrap();
        assert!((rho[(3, 3)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ring_limits() {
        let model = SpinModel::ising(1.0, 0.0, 0.0).unwrap();
        assert!(matches!(EdSystem::new(13, model, &ProductState::up()), Err(Error::Capacity { .. })));
        let odd = EdSystem::new(5, model, &ProductState::up()).unwrap();
        let gates = build_gates(&model, 0.1, TrotterOrder::Second).unwrap();
        assert!(trotter_step(&odd, &gates).is_err());
    }
}
