//! Closed-form χ = 2 states for the Ising chain.
//!
//! * [`PrecessionAnsatz`]: rotating-frame effective Hamiltonian for quenches
//!   from `|↓⟩` in the precession-dominated regime.
//! * [`EntanglementAnsatz`]: one symmetric Trotter step of the full
//!   evolution applied to `|→⟩`; exact when `h_x = 0`.
//! * [`classical_ising_exact`]: closed forms on the `h_x = 0` line.

use crate::error::{Error, Result};
use crate::imps::{IMpsState, SiteTensor};
use crate::models::{Pauli, SpinModel};
use crate::numerics::{c, expm_hermitian, CMatrix, C64, I, ONE, ZERO};

/// Couplings of the rotating-frame construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecessionAnsatz {
    pub j: f64,
    pub hx: f64,
    pub hz: f64,
}

impl PrecessionAnsatz {
    pub fn new(j: f64, hx: f64, hz: f64) -> Result<Self> {
        if ![j, hx, hz].iter().all(|x| x.is_finite()) {
            return Err(Error::Validation("couplings must be finite".into()));
        }
        if hx == 0.0 && hz == 0.0 {
            return Err(Error::DegenerateModel("the precession ansatz needs a nonzero field".into()));
        }
        Ok(Self { j, hx, hz })
    }

    /// Field magnitude `h`.
    pub fn h(&self) -> f64 {
        self.hx.hypot(self.hz)
    }

    /// Components of `e^{itH_0} σ^z e^{-itH_0}` in the Pauli basis.
    pub fn s(&self, t: f64) -> [f64; 3] {
        let (hx, hz, h) = (self.hx, self.hz, self.h());
        let h2 = h * h;
        [2.0 * hx * hz * (h * t).sin().powi(2) / h2, hx * (2.0 * h * t).sin() / h, (hx * hx * (2.0 * h * t).cos() + hz * hz) / h2]
    }

    /// `∫_0^t s_y²`.
    pub fn a(&self, t: f64) -> f64 {
        let (hx, h) = (self.hx, self.h());
        hx * hx * (4.0 * h * t - (4.0 * h * t).sin()) / (8.0 * h.powi(3))
    }

    /// `-2 ∫_0^t s_y (s_x² + s_z²)`.
    pub fn b(&self, t: f64) -> f64 {
        let (hx, hz, h) = (self.hx, self.hz, self.h());
        let h2 = h * h;
        hx * (hx * hx * (6.0 * h * t).cos() + 3.0 * (h2 + 3.0 * hz * hz) * (2.0 * h * t).cos() - 4.0 * (h2 + 2.0 * hz * hz)) / (12.0 * h2 * h2)
    }

    /// Effective Ising coupling `J s_y²`.
    pub fn j_eff(&self, t: f64) -> f64 {
        let [_, sy, _] = self.s(t);
        self.j * sy * sy
    }

    /// Effective field `-2 J s_y (s_x² + s_z²)`.
    pub fn h_eff(&self, t: f64) -> f64 {
        let [sx, sy, sz] = self.s(t);
        -2.0 * self.j * sy * (sx * sx + sz * sz)
    }

    /// Schmidt values `(|cos Ja|, |sin Ja|)`, sorted descending.
    pub fn lambdas(&self, t: f64) -> (f64, f64) {
        let x = self.j * self.a(t);
        let (p, q) = (x.cos().abs(), x.sin().abs());
        if p >= q {
            (p, q)
        } else {
            (q, p)
        }
    }

    /// Canonical tensor `e^{-itH_0} e^{-iJbσ^y} [[|↓⟩, |↑⟩], [i|↑⟩, -i|↓⟩]] Λ̄`
    /// in the unsorted order matching `(|cos Ja|, |sin Ja|)`. The signs in
    /// `Λ̄` take `sign(0) = +1`.
    pub fn gamma(&self, t: f64) -> SiteTensor {
        self.gamma_with_signs(t, self.signs(t, None))
    }

    /// Diagonal of `Λ̄`. Within 1e-12 of a zero of `cos Ja` or `sin Ja` the
    /// previous sign is carried over when given, so a sampled trajectory of
    /// `Γ` stays continuous through the crossing.
    pub fn signs(&self, t: f64, previous: Option<[f64; 2]>) -> [f64; 2] {
        let x = self.j * self.a(t);
        let mut out = [sign(x.cos()), sign(x.sin())];
        if let Some(prev) = previous {
            for (k, v) in [x.cos(), x.sin()].into_iter().enumerate() {
                if v.abs() < SIGN_EPS {
                    out[k] = prev[k];
                }
            }
        }
        out
    }

    /// [`Self::gamma`] with an explicit `Λ̄` diagonal.
    pub fn gamma_with_signs(&self, t: f64, signs: [f64; 2]) -> SiteTensor {
        let rot = self.frame_rotation(t) * expm_hermitian(&Pauli::Y.matrix(), self.j * self.b(t));
        let down = [ZERO, ONE];
        let up = [ONE, ZERO];
        let entries = [[(down, ONE), (up, ONE)], [(up, I), (down, -I)]];
        spinor_matrix(&rot, &entries, &signs)
    }

    /// Canonical state from [`Self::gamma`] and [`Self::lambdas`], with the
    /// Schmidt index reordered to descending values.
    pub fn canonical_state(&self, t: f64) -> Result<IMpsState> {
        let x = self.j * self.a(t);
        let raw = [x.cos().abs(), x.sin().abs()];
        let g = self.gamma(t);
        let order: [usize; 2] = if raw[0] >= raw[1] { [0, 1] } else { [1, 0] };
        let g: SiteTensor = g.map(|m| CMatrix::from_fn(2, 2, |i, j| m[(order[i], order[j])]));
        let lam: Vec<f64> = order.iter().map(|&k| raw[k]).collect();
        single_site_state(g, lam, t)
    }

    /// Raw χ = 2 state: the effective-Hamiltonian MPO applied to `|↓⟩`,
    /// followed by the frame rotation `e^{-itH_0}`. Not canonical.
    pub fn mpo_state(&self, t: f64) -> Result<IMpsState> {
        let (ja, jb) = (self.j * self.a(t), self.j * self.b(t));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let plus_y = [c(r, 0.0), c(0.0, r)];
        let minus_y = [c(r, 0.0), c(0.0, -r)];
        // P^{±y}|↓⟩ = |±y⟩⟨±y|↓⟩.
        let proj_down = |y: [C64; 2]| -> [C64; 2] {
            let amp = y[1].conj();
            [y[0] * amp, y[1] * amp]
        };
        let py = proj_down(plus_y);
        let my = proj_down(minus_y);
        let e = |phase: f64| C64::from_polar(1.0, phase);
        let blocks = [[(py, e(-ja - jb)), (py, e(ja - jb))], [(my, e(ja + jb)), (my, e(-ja + jb))]];
        let rot = self.frame_rotation(t);
        let a = spinor_matrix(&rot, &blocks, &[1.0, 1.0]);
        IMpsState::from_uniform_tensor(a).map(|s| s.with_time(t))
    }

    fn frame_rotation(&self, t: f64) -> CMatrix {
        let model = SpinModel::Ising { j: self.j, hx: self.hx, hz: self.hz };
        expm_hermitian(&model.site_hamiltonian(), t)
    }
}

const SIGN_EPS: f64 = 1e-12;

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Builds `Γ^σ_ij = col_sign_j · w_ij · (rot · spinor_ij)_σ`.
fn spinor_matrix(rot: &CMatrix, entries: &[[([C64; 2], C64); 2]; 2], col_signs: &[f64; 2]) -> SiteTensor {
    let mut g = [CMatrix::zeros(2, 2), CMatrix::zeros(2, 2)];
    for i in 0..2 {
        for j in 0..2 {
            let (v, w) = entries[i][j];
            for (s, gs) in g.iter_mut().enumerate() {
                gs[(i, j)] = (rot[(s, 0)] * v[0] + rot[(s, 1)] * v[1]) * w * col_signs[j];
            }
        }
    }
    g
}

fn single_site_state(g: SiteTensor, lam: Vec<f64>, t: f64) -> Result<IMpsState> {
    // Drop a vanishing Schmidt value (t = 0 and Ja ∈ πZ/2) to keep the
    // bond vector strictly positive.
    let keep = lam.iter().take_while(|&&l| l > 0.0).count();
    let g: SiteTensor = g.map(|m| m.view((0, 0), (keep, keep)).into_owned());
    let lam = lam[..keep].to_vec();
    IMpsState::from_parts(g.clone(), lam.clone(), g, lam, t)
}

/// Couplings of the Trotter-step construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntanglementAnsatz {
    pub j: f64,
    pub hx: f64,
    pub hz: f64,
}

impl EntanglementAnsatz {
    pub fn new(j: f64, hx: f64, hz: f64) -> Result<Self> {
        if ![j, hx, hz].iter().all(|x| x.is_finite()) {
            return Err(Error::Validation("couplings must be finite".into()));
        }
        Ok(Self { j, hx, hz })
    }

    /// `cos 2θ = [1 - cos(ht)] h_x h_z / h²` (zero without a field).
    fn cos_two_theta(&self, t: f64) -> f64 {
        let h2 = self.hx * self.hx + self.hz * self.hz;
        if h2 == 0.0 {
            return 0.0;
        }
        (1.0 - (h2.sqrt() * t).cos()) * self.hx * self.hz / h2
    }

    /// Mixing angle `θ(t)` from `2 cos²θ = 1 + [1 - cos(ht)] h_x h_z / h²`.
    pub fn theta(&self, t: f64) -> f64 {
        (0.5 * (1.0 + self.cos_two_theta(t))).sqrt().clamp(0.0, 1.0).acos()
    }

    /// `f(t) = 4 cos 4θ - cos 8θ + 8 sin⁴ 2θ cos 4Jt`.
    pub fn f_ent(&self, t: f64) -> f64 {
        let q = self.cos_two_theta(t);
        let c4 = 2.0 * q * q - 1.0;
        let c8 = 2.0 * c4 * c4 - 1.0;
        let s2sq = 1.0 - q * q;
        4.0 * c4 - c8 + 8.0 * s2sq * s2sq * (4.0 * self.j * t).cos()
    }

    /// Entanglement spectrum `λ_{1,2} = [4 ± √(f + 13)] / 8`.
    pub fn lambdas(&self, t: f64) -> Result<(f64, f64)> {
        let x = self.f_ent(t) + 13.0;
        if x < -1e-12 {
            return Err(Error::Breakdown(format!("f(t) + 13 = {x:e} is negative at t = {t}")));
        }
        let r = x.max(0.0).sqrt();
        let l1 = (4.0 + r) / 8.0;
        Ok((l1, 1.0 - l1))
    }

    /// Overlap amplitudes `(c_↑, c_↓)` of `e^{-itH_0/2}|→⟩`.
    pub fn overlaps(&self, t: f64) -> [C64; 2] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let u = self.half_rotation(t);
        [(u[(0, 0)] + u[(0, 1)]) * r, (u[(1, 0)] + u[(1, 1)]) * r]
    }

    /// `(|↑(t)⟩, |↓(t)⟩)`: basis spinors rotated by `e^{-itH_0/2}`.
    pub fn rotated_basis(&self, t: f64) -> [[C64; 2]; 2] {
        let u = self.half_rotation(t);
        [[u[(0, 0)], u[(1, 0)]], [u[(0, 1)], u[(1, 1)]]]
    }

    /// Raw χ = 2 tensor of the ansatz as a translation-invariant state.
    pub fn state(&self, t: f64) -> Result<IMpsState> {
        let [cu, cd] = self.overlaps(t);
        let [up, down] = self.rotated_basis(t);
        let p = C64::from_polar(1.0, -self.j * t);
        let entries = [[(up, p * cu), (up, p.conj() * cu)], [(down, p.conj() * cd), (down, p * cd)]];
        let a = spinor_matrix(&CMatrix::identity(2, 2), &entries, &[1.0, 1.0]);
        IMpsState::from_uniform_tensor(a).map(|s| s.with_time(t))
    }

    fn half_rotation(&self, t: f64) -> CMatrix {
        let model = SpinModel::Ising { j: self.j, hx: self.hx, hz: self.hz };
        expm_hermitian(&model.site_hamiltonian(), t / 2.0)
    }
}

/// Closed-form quantities of the `h_x = 0` chain quenched from `|→⟩`.
#[derive(Debug, Clone)]
pub struct ClassicalIsing {
    /// Per-site fidelity transfer eigenvalues, larger modulus first.
    pub e: (C64, C64),
    pub gamma: SiteTensor,
    pub overlap: CMatrix,
    /// Schmidt values `(|cos Jt|, |sin Jt|)` in the order matching `gamma`.
    pub schmidt: (f64, f64),
    /// Transition times in `[0, t]`: `(n + 1/2) π / (2|J|)` and
    /// `(m + 1/2) π / |h_z|`, ascending.
    pub dqpt_times: Vec<f64>,
}

pub fn classical_ising_exact(j: f64, hz: f64, t: f64) -> Result<ClassicalIsing> {
    if !(j.is_finite() && hz.is_finite() && t.is_finite()) {
        return Err(Error::Validation("couplings and time must be finite".into()));
    }
    if j == 0.0 && hz == 0.0 {
        return Err(Error::DegenerateModel("J = h_z = 0 has no dynamics".into()));
    }
    let (cz, sz) = ((hz * t).cos(), (hz * t).sin());
    let root = (C64::from_polar(1.0, 4.0 * j * t) + 0.5 * (2.0 * hz * t).cos() - 0.5).sqrt();
    let pre = C64::from_polar(0.5, -j * t);
    let mut e = (pre * (cz + root), pre * (cz - root));
    if e.1.norm() > e.0.norm() {
        e = (e.1, e.0);
    }

    let r = std::f64::consts::FRAC_1_SQRT_2;
    let right = [c(r, 0.0), c(r, 0.0)];
    let left = [c(r, 0.0), c(-r, 0.0)];
    let rot = expm_hermitian(&Pauli::Z.matrix(), hz * t);
    let entries = [[(right, ONE), (left, I)], [(left, -ONE), (right, -I)]];
    let gamma = spinor_matrix(&rot, &entries, &[1.0, 1.0]);
    let overlap = CMatrix::from_row_slice(2, 2, &[c(cz, 0.0), c(sz, 0.0), c(0.0, sz), c(0.0, -cz)]);

    let mut times = Vec::new();
    for (freq, period) in [(2.0 * j.abs(), std::f64::consts::PI), (hz.abs(), std::f64::consts::PI)] {
        if freq == 0.0 {
            continue;
        }
        let mut n = 0.0;
        loop {
            let tn = (n + 0.5) * period / freq;
            if tn > t {
                break;
            }
            times.push(tn);
            n += 1.0;
        }
    }
    times.sort_by(f64::total_cmp);
    Ok(ClassicalIsing { e, gamma, overlap, schmidt: ((j * t).cos().abs(), (j * t).sin().abs()), dqpt_times: times })
}

/// `(⟨σ^x⟩, ⟨σ^y⟩, ⟨σ^z⟩)` of a spinor, normalized first.
pub fn bloch_vector(spinor: [C64; 2]) -> Result<[f64; 3]> {
    let n2 = spinor[0].norm_sqr() + spinor[1].norm_sqr();
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::Validation("Bloch vector of a zero or non-finite spinor".into()));
    }
    let z = spinor[0].conj() * spinor[1];
    Ok([2.0 * z.re / n2, 2.0 * z.im / n2, (spinor[0].norm_sqr() - spinor[1].norm_sqr()) / n2])
}

/// Spinor `(Γ^↑_ij, Γ^↓_ij)` of a site tensor.
pub fn gamma_spinor(g: &SiteTensor, i: usize, j: usize) -> [C64; 2] {
    [g[0][(i, j)], g[1][(i, j)]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imps::Bond;

    #[test]
    fn precession_at_time_zero() {
        let p = PrecessionAnsatz::new(0.1, 1.0, 0.15).unwrap();
        assert_eq!(p.a(0.0), 0.0);
        assert!(p.b(0.0).abs() < 1e-16);
        assert_eq!(p.lambdas(0.0), (1.0, 0.0));
        let g = p.gamma(0.0);
        let close = |a: [C64; 2], b: [C64; 2]| (a[0] - b[0]).norm() + (a[1] - b[1]).norm() < 1e-14;
        assert!(close(gamma_spinor(&g, 0, 0), [ZERO, ONE]));
        assert!(close(gamma_spinor(&g, 0, 1), [ONE, ZERO]));
    }

    #[test]
    fn precession_coefficients_are_unit() {
        let p = PrecessionAnsatz::new(0.3, 0.7, -0.4).unwrap();
        for k in 0..50 {
            let s = p.s(0.13 * k as f64);
            assert!((s.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entanglement_spectrum_at_time_zero() {
        let e = EntanglementAnsatz::new(1.0, 0.1, 0.15).unwrap();
        assert!((e.theta(0.0) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((e.f_ent(0.0) - 3.0).abs() < 1e-14);
        let (l1, l2) = e.lambdas(0.0).unwrap();
        assert!((l1 - 1.0).abs() < 1e-15 && l2.abs() < 1e-15);
    }

    #[test]
    fn entanglement_spectrum_without_transverse_field() {
        let e = EntanglementAnsatz::new(0.8, 0.0, 0.3).unwrap();
        for k in 0..30 {
            let t = 0.1 * k as f64;
            let (l1, l2) = e.lambdas(t).unwrap();
            let (c2, s2) = ((0.8 * t).cos().powi(2), (0.8 * t).sin().powi(2));
            assert!((l1 - c2.max(s2)).abs() < 1e-12 && (l2 - c2.min(s2)).abs() < 1e-12);
        }
    }

    #[test]
    fn classical_closed_forms() {
        let r = classical_ising_exact(1.0, 0.1, 0.0).unwrap();
        assert!((r.e.0 - ONE).norm() < 1e-15 && r.e.1.norm() < 1e-15);
        let r = classical_ising_exact(1.0, 0.1, 3.0).unwrap();
        assert_eq!(r.dqpt_times.len(), 2);
        assert!((r.dqpt_times[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-12 && (r.dqpt_times[1] - 3.0 * std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(matches!(classical_ising_exact(0.0, 0.0, 1.0), Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn bloch_vectors() {
        assert_eq!(bloch_vector([ZERO, ONE]).unwrap(), [0.0, 0.0, -1.0]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v = bloch_vector([c(r, 0.0), c(r, 0.0)]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15 && v[2].abs() < 1e-15);
        assert!(bloch_vector([ZERO, ZERO]).is_err());
    }

    #[test]
    fn canonical_precession_state_at_crossing() {
        let p = PrecessionAnsatz::new(0.1, 1.0, 0.15).unwrap();
        let s = p.canonical_state(1.0).unwrap();
        assert!(s.canonical_error() < 1e-10, "{}", s.canonical_error());
        assert_eq!(s.chi(Bond::A), 2);
    }
}
