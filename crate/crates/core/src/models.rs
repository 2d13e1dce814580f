//! Spin-chain Hamiltonians, Trotter gates and named initial states.
//!
//! Basis conventions: physical index 0 is `|↑⟩` with `σ^z|↑⟩ = +|↑⟩`; a
//! two-site basis state `|s1 s2⟩` has index `2 s1 + s2`.

use crate::error::{Error, Result};
use crate::imps::ProductState;
use crate::numerics::{c, expm_hermitian, CMatrix, C64, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::X => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Pauli::Y => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Pauli::Z => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }

    pub fn label(self) -> char {
        match self {
            Pauli::X => 'x',
            Pauli::Y => 'y',
            Pauli::Z => 'z',
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Pauli::X),
            "y" => Ok(Pauli::Y),
            "z" => Ok(Pauli::Z),
            other => Err(Error::UnknownName { kind: "pauli operator", name: other.to_string() }),
        }
    }
}

/// Kronecker product `a ⊗ b` (left factor most significant).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Nearest-neighbour spin-1/2 chain with uniform couplings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpinModel {
    /// `H = Σ J σ^z σ^z + h_x σ^x + h_z σ^z`.
    Ising { j: f64, hx: f64, hz: f64 },
    /// `H = Σ J_xy (σ^x σ^x + σ^y σ^y) + J_z σ^z σ^z + h_x σ^x + h_z σ^z`.
    Xxz { jxy: f64, jz: f64, hx: f64, hz: f64 },
}

impl SpinModel {
    pub fn ising(j: f64, hx: f64, hz: f64) -> Result<Self> {
        check_finite(&[j, hx, hz])?;
        Ok(SpinModel::Ising { j, hx, hz })
    }

    /// XXZ chain; the in-plane couplings must be equal.
    pub fn xxz(jx: f64, jy: f64, jz: f64, hx: f64, hz: f64) -> Result<Self> {
        check_finite(&[jx, jy, jz, hx, hz])?;
        if jx != jy {
            return Err(Error::Validation(format!("XXZ model needs J_x = J_y, got {jx} and {jy}")));
        }
        Ok(SpinModel::Xxz { jxy: jx, jz, hx, hz })
    }

    pub fn family(&self) -> &'static str {
        match self {
            SpinModel::Ising { .. } => "ising",
            SpinModel::Xxz { .. } => "xxz",
        }
    }

    pub fn fields(&self) -> (f64, f64) {
        match *self {
            SpinModel::Ising { hx, hz, .. } | SpinModel::Xxz { hx, hz, .. } => (hx, hz),
        }
    }

    /// Single-site part `h_x σ^x + h_z σ^z`.
    pub fn site_hamiltonian(&self) -> CMatrix {
        let (hx, hz) = self.fields();
        Pauli::X.matrix() * c(hx, 0.0) + Pauli::Z.matrix() * c(hz, 0.0)
    }

    /// Two-site interaction on one bond.
    pub fn bond_hamiltonian(&self) -> CMatrix {
        let zz = kron(&Pauli::Z.matrix(), &Pauli::Z.matrix());
        match *self {
            SpinModel::Ising { j, .. } => zz * c(j, 0.0),
            SpinModel::Xxz { jxy, jz, .. } => {
                let xx = kron(&Pauli::X.matrix(), &Pauli::X.matrix());
                let yy = kron(&Pauli::Y.matrix(), &Pauli::Y.matrix());
                (xx + yy) * c(jxy, 0.0) + zz * c(jz, 0.0)
            }
        }
    }

    /// Whether gates on neighbouring bonds commute, so that one sweep over A
    /// then B bonds carries no splitting error between them.
    pub fn bonds_commute(&self) -> bool {
        match *self {
            SpinModel::Ising { .. } => true,
            SpinModel::Xxz { jxy, .. } => jxy == 0.0,
        }
    }

    pub fn is_noninteracting(&self) -> bool {
        match *self {
            SpinModel::Ising { j, .. } => j == 0.0,
            SpinModel::Xxz { jxy, jz, .. } => jxy == 0.0 && jz == 0.0,
        }
    }

    /// The model with every coupling negated (time reversal of the dynamics).
    pub fn negated(&self) -> Self {
        match *self {
            SpinModel::Ising { j, hx, hz } => SpinModel::Ising { j: -j, hx: -hx, hz: -hz },
            SpinModel::Xxz { jxy, jz, hx, hz } => SpinModel::Xxz { jxy: -jxy, jz: -jz, hx: -hx, hz: -hz },
        }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("couplings must be finite, got {values:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrotterOrder {
    First,
    Second,
}

impl TrotterOrder {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            1 => Ok(TrotterOrder::First),
            2 => Ok(TrotterOrder::Second),
            other => Err(Error::Validation(format!("trotter order must be 1 or 2, got {other}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            TrotterOrder::First => 1,
            TrotterOrder::Second => 2,
        }
    }
}

/// One gate application inside a Trotter step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateOp {
    /// `single_site_half` on every site.
    SiteHalf,
    /// `two_site` or `two_site_half` on every bond of one sublattice pair.
    Bond { on_a: bool, half: bool },
}

/// Gates for one time step of length `dt`.
#[derive(Debug, Clone)]
pub struct TrotterGateSet {
    /// `exp(-i dt H_site / 2)`.
    pub single_site_half: CMatrix,
    /// `exp(-i dt H_bond)`.
    pub two_site: CMatrix,
    /// `exp(-i dt H_bond / 2)`.
    pub two_site_half: CMatrix,
    pub dt: f64,
    pub order: TrotterOrder,
    pub bonds_commute: bool,
}

impl TrotterGateSet {
    /// Gate sequence of one step, in application order. The bond gate on
    /// A-bonds couples sites `(A, B)` and the one on B-bonds couples `(B, A)`.
    ///
    /// Second order uses `U(dt/2) V_A V_B U(dt/2)` when bond gates commute
    /// and the symmetric `U(dt/2) V_A(dt/2) V_B V_A(dt/2) U(dt/2)` otherwise;
    /// first order is `U(dt) V_A V_B`.
    pub fn sequence(&self) -> Vec<GateOp> {
        use GateOp::*;
        match (self.order, self.bonds_commute) {
            (TrotterOrder::First, _) => vec![SiteHalf, SiteHalf, Bond { on_a: true, half: false }, Bond { on_a: false, half: false }],
            (TrotterOrder::Second, true) => {
                vec![SiteHalf, Bond { on_a: true, half: false }, Bond { on_a: false, half: false }, SiteHalf]
            }
            (TrotterOrder::Second, false) => {
                vec![SiteHalf, Bond { on_a: true, half: true }, Bond { on_a: false, half: false }, Bond { on_a: true, half: true }, SiteHalf]
            }
        }
    }

    pub fn bond_gate(&self, half: bool) -> &CMatrix {
        if half {
            &self.two_site_half
        } else {
            &self.two_site
        }
    }
}

/// Exponentiates the single-site and bond parts of `model` for a step `dt`.
pub fn build_gates(model: &SpinModel, dt: f64, order: TrotterOrder) -> Result<TrotterGateSet> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Validation(format!("time step must be positive, got {dt}")));
    }
    let hs = model.site_hamiltonian();
    let hb = model.bond_hamiltonian();
    Ok(TrotterGateSet {
        single_site_half: expm_hermitian(&hs, dt / 2.0),
        two_site: expm_hermitian(&hb, dt),
        two_site_half: expm_hermitian(&hb, dt / 2.0),
        dt,
        order,
        bonds_commute: model.bonds_commute(),
    })
}

/// `down`, `up`, `right` or `left`.
pub fn named_initial_state(name: &str) -> Result<ProductState> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match name.trim().to_ascii_lowercase().as_str() {
        "down" => Ok(ProductState::down()),
        "up" => Ok(ProductState::up()),
        "right" => ProductState::new(c(r, 0.0), c(r, 0.0)),
        "left" => ProductState::new(c(r, 0.0), c(-r, 0.0)),
        other => Err(Error::UnknownName { kind: "initial state", name: other.to_string() }),
    }
}

/// Single-spin state `exp(-i t H_site) v`, the exact solution without
/// interactions.
pub fn precess(model: &SpinModel, v: &ProductState, t: f64) -> [C64; 2] {
    let u = expm_hermitian(&model.site_hamiltonian(), t);
    let [a, b] = v.amplitudes();
    [u[(0, 0)] * a + u[(0, 1)] * b, u[(1, 0)] * a + u[(1, 1)] * b]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{max_abs, unitarity_error};

    #[test]
    fn free_ising_has_identity_bond_gate() {
        let g = build_gates(&SpinModel::ising(0.0, 0.7, 0.3).unwrap(), 0.05, TrotterOrder::Second).unwrap();
        assert!(max_abs(&(&g.two_site - CMatrix::identity(4, 4))) < 1e-15);
    }

    #[test]
    fn zz_gate_pattern() {
        let (j, dt) = (0.8, 0.03);
        let g = build_gates(&SpinModel::ising(j, 0.0, 0.0).unwrap(), dt, TrotterOrder::Second).unwrap();
        assert!(max_abs(&(&g.single_site_half - CMatrix::identity(2, 2))) < 1e-15);
        let p = C64::from_polar(1.0, -j * dt);
        let expected = [p, p.conj(), p.conj(), p];
        for k in 0..4 {
            assert!((g.two_site[(k, k)] - expected[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn gates_are_unitary() {
        for model in [SpinModel::ising(0.1, 1.0, 0.15).unwrap(), SpinModel::xxz(0.9, 0.9, 1.0, 0.1, 1.0).unwrap()] {
            for dt in [0.01, 0.3] {
                let g = build_gates(&model, dt, TrotterOrder::Second).unwrap();
                assert!(unitarity_error(&g.two_site) < 1e-12);
                assert!(unitarity_error(&g.two_site_half) < 1e-12);
                assert!(unitarity_error(&g.single_site_half) < 1e-12);
            }
        }
    }

    #[test]
    fn xxz_requires_equal_planar_couplings() {
        assert!(SpinModel::xxz(0.9, 0.8, 1.0, 0.0, 0.0).is_err());
        assert!(!SpinModel::xxz(0.3, 0.3, 1.0, 0.3, 0.1).unwrap().bonds_commute());
    }

    #[test]
    fn named_states() {
        assert_eq!(named_initial_state("down").unwrap().amplitudes(), [ZERO, ONE]);
        let r = named_initial_state("right").unwrap().amplitudes();
        assert!((r[0] - c(std::f64::consts::FRAC_1_SQRT_2, 0.0)).norm() < 1e-16 && r[0] == r[1]);
        assert!(ProductState::new(c(0.6, 0.0), c(0.0, 0.8)).is_ok());
        assert!(matches!(named_initial_state("sideways"), Err(Error::UnknownName { .. })));
    }

    #[test]
    fn kron_ordering() {
        // σ^z ⊗ 1 is diagonal (1, 1, -1, -1) with the left factor most significant.
        let m = kron(&Pauli::Z.matrix(), &CMatrix::identity(2, 2));
        assert_eq!(m[(1, 1)], ONE);
        assert_eq!(m[(2, 2)], -ONE);
    }
}
