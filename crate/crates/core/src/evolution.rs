//! Real-time iTEBD on the two-site cell.
//!
//! Bond updates work with right-normalized tensors `B = Γ Λ_right` and never
//! divide by the Schmidt values of the bond outside the updated pair, which
//! keeps the update stable when tiny Schmidt values survive truncation.

use crate::error::{Error, Result};
use crate::imps::{Bond, IMpsState, Sublattice, CANONICAL_TOL, REGAUGE_FAIL_TOL};
use crate::models::{build_gates, GateOp, SpinModel, TrotterGateSet, TrotterOrder};
use crate::numerics::{gemm, matmul, scale_cols, scale_rows, svd, CMatrix, Op, C64};

/// Diagnostics of one time step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// Largest weight `Σ λ` discarded at a single bond update.
    pub discarded_weight: f64,
    /// Schmidt values above the threshold were dropped to respect `chi_max`.
    pub truncation_overflow: bool,
    /// The step ended with an explicit canonicalization.
    pub regauged: bool,
    pub canonical_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionParams {
    pub dt: f64,
    pub t_max: f64,
    pub chi_max: usize,
    pub sv_threshold: f64,
    pub order: TrotterOrder,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        Self { dt: 0.01, t_max: 2.0, chi_max: 256, sv_threshold: 1e-9, order: TrotterOrder::Second }
    }
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(Error::Validation(format!("t_max must be non-negative, got {}", self.t_max)));
        }
        if self.chi_max == 0 {
            return Err(Error::Validation("chi_max must be at least 1".into()));
        }
        if !(self.sv_threshold > 0.0 && self.sv_threshold < 1.0) {
            return Err(Error::Validation(format!("sv_threshold must lie in (0, 1), got {}", self.sv_threshold)));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_max`.
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Advances `state` by one step of `gates.dt`.
pub fn step(state: &IMpsState, gates: &TrotterGateSet, chi_max: usize, sv_threshold: f64) -> Result<(IMpsState, StepReport)> {
    let mut cell = Cell::from_state(state);
    let mut report = StepReport::default();
    for op in gates.sequence() {
        match op {
            GateOp::SiteHalf => {
                cell.ga = apply_site(&gates.single_site_half, &cell.ga);
                cell.gb = apply_site(&gates.single_site_half, &cell.gb);
            }
            GateOp::Bond { on_a, half } => {
                let (dropped, overflow) = cell.update_bond(on_a, gates.bond_gate(half), chi_max, sv_threshold)?;
                report.discarded_weight = report.discarded_weight.max(dropped);
                report.truncation_overflow |= overflow;
            }
        }
    }
    if report.truncation_overflow {
        log::debug!("t = {:.6}: chi_max = {chi_max} reached, weight {:.3e} discarded", state.time() + gates.dt, report.discarded_weight);
    }
    let mut next = IMpsState::assemble(cell.ga, cell.la, cell.gb, cell.lb, state.time() + gates.dt, report.discarded_weight);
    if next.canonical_error() > CANONICAL_TOL {
        next = next.canonicalize()?;
        report.regauged = true;
        if next.canonical_error() > REGAUGE_FAIL_TOL {
            return Err(Error::Breakdown(format!("canonical residual {:.3e} after re-gauging", next.canonical_error())));
        }
    }
    report.canonical_error = next.canonical_error();
    Ok((next, report))
}

/// Evolves `initial` under `model` and calls `observer` on the initial state
/// and after every step. Snapshot `k` carries time `k dt`. Returns the
/// number of steps taken.
pub fn evolve<F>(initial: &IMpsState, model: &SpinModel, params: &EvolutionParams, mut observer: F) -> Result<usize>
where
    F: FnMut(&IMpsState, &StepReport) -> Result<()>,
{
    params.validate()?;
    let gates = build_gates(model, params.dt, params.order)?;
    let n = params.steps();
    let mut state = initial.clone().with_time(0.0);
    let wrap = |time: f64, e: Error| Error::Evolution { time, source: Box::new(e) };
    observer(&state, &StepReport { canonical_error: state.canonical_error(), ..Default::default() }).map_err(|e| wrap(0.0, e))?;
    let mut overflows = 0usize;
    for k in 1..=n {
        let time = k as f64 * params.dt;
        let (next, report) = step(&state, &gates, params.chi_max, params.sv_threshold).map_err(|e| wrap(time, e))?;
        if report.truncation_overflow {
            if overflows == 0 {
                log::warn!("t = {time:.6}: chi_max = {} reached, weight {:.3e} discarded", params.chi_max, report.discarded_weight);
            }
            overflows += 1;
        }
        state = next.with_time(time);
        observer(&state, &report).map_err(|e| wrap(time, e))?;
    }
    if overflows > 1 {
        log::warn!("chi_max = {} was reached on {overflows} of {n} steps", params.chi_max);
    }
    Ok(n)
}

/// Convenience wrapper collecting every snapshot. Memory grows with
/// `steps · χ²`; meant for short or low-χ runs.
pub fn trajectory(initial: &IMpsState, model: &SpinModel, params: &EvolutionParams) -> Result<Vec<IMpsState>> {
    let mut out = Vec::with_capacity(params.steps() + 1);
    evolve(initial, model, params, |s, _| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

struct Cell {
    ga: [CMatrix; 2],
    gb: [CMatrix; 2],
    la: Vec<f64>,
    lb: Vec<f64>,
}

impl Cell {
    fn from_state(s: &IMpsState) -> Self {
        Self {
            ga: s.gamma(Sublattice::A).clone(),
            gb: s.gamma(Sublattice::B).clone(),
            la: s.schmidt_values(Bond::A).to_vec(),
            lb: s.schmidt_values(Bond::B).to_vec(),
        }
    }

    /// Applies `gate` to the pair (A, B) when `on_a`, otherwise to (B, A),
    /// and refactorizes the bond between them. Returns the discarded weight
    /// and whether `chi_max` cut above-threshold values.
    fn update_bond(&mut self, on_a: bool, gate: &CMatrix, chi_max: usize, threshold: f64) -> Result<(f64, bool)> {
        let (gx, gy, lm, lo) = if on_a { (&self.ga, &self.gb, &self.la, &self.lb) } else { (&self.gb, &self.ga, &self.lb, &self.la) };
        let chi_o = lo.len();
        let bx: Vec<CMatrix> = gx.iter().map(|g| scale_cols(g, lm)).collect();
        let by: Vec<CMatrix> = gy.iter().map(|g| scale_cols(g, lo)).collect();
        let theta: Vec<CMatrix> = (0..4).map(|k| matmul(&bx[k / 2], &by[k % 2])).collect();
        let mut rotated: Vec<CMatrix> = vec![CMatrix::zeros(chi_o, chi_o); 4];
        for (out, r) in rotated.iter_mut().enumerate() {
            for (inp, t) in theta.iter().enumerate() {
                let g = gate[(out, inp)];
                if g != C64::new(0.0, 0.0) {
                    *r += t * g;
                }
            }
        }

        // θ' with rows (i, s1) and columns (j, s2); Φ = Λ_o θ'.
        let mut theta_mat = CMatrix::zeros(2 * chi_o, 2 * chi_o);
        for s1 in 0..2 {
            for s2 in 0..2 {
                let block = &rotated[2 * s1 + s2];
                for j in 0..chi_o {
                    for i in 0..chi_o {
                        theta_mat[(2 * i + s1, 2 * j + s2)] = block[(i, j)];
                    }
                }
            }
        }
        let row_weights: Vec<f64> = lo.iter().flat_map(|&l| [l, l]).collect();
        let phi = scale_rows(&theta_mat, &row_weights);
        let dec = svd(&phi)?;
        let total: f64 = dec.s.iter().map(|s| s * s).sum::<f64>();
        if !(total > 0.0) {
            return Err(Error::EmptyState { threshold });
        }
        let norm = total.sqrt();
        let above = dec.s.iter().take_while(|&&s| s / norm >= threshold).count();
        if above == 0 {
            return Err(Error::EmptyState { threshold });
        }
        let keep = above.min(chi_max);
        let kept: f64 = dec.s[..keep].iter().map(|s| s * s).sum();
        let dropped = 1.0 - kept / total;
        let kept_norm = kept.sqrt();
        let lam: Vec<f64> = dec.s[..keep].iter().map(|s| s / kept_norm).collect();

        // Γ_Y = V† Λ_o⁻¹ on the columns.
        let inv_o: Vec<f64> = lo.iter().map(|l| 1.0 / l).collect();
        let new_y: [CMatrix; 2] = std::array::from_fn(|s2| CMatrix::from_fn(keep, chi_o, |a, j| dec.vdag[(a, 2 * j + s2)] * inv_o[j]));
        // B_X = θ' V, then Γ_X = B_X / λ on the columns.
        let inv_lam: Vec<f64> = lam.iter().map(|l| 1.0 / (l * kept_norm)).collect();
        let bxn = scale_cols(&gemm(&theta_mat, Op::N, &dec.vdag.rows(0, keep).into_owned(), Op::Adjoint), &inv_lam);
        let new_x: [CMatrix; 2] = std::array::from_fn(|s1| CMatrix::from_fn(chi_o, keep, |i, a| bxn[(2 * i + s1, a)]));

        if on_a {
            self.ga = new_x;
            self.gb = new_y;
            self.la = lam;
        } else {
            self.gb = new_x;
            self.ga = new_y;
            self.lb = lam;
        }
        Ok((dropped.max(0.0), above > keep))
    }
}

fn apply_site(u: &CMatrix, g: &[CMatrix; 2]) -> [CMatrix; 2] {
    std::array::from_fn(|s| &g[0] * u[(s, 0)] + &g[1] * u[(s, 1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imps::ProductState;
    use crate::models::{named_initial_state, precess};

    #[test]
    fn step_counting() {
        let p = EvolutionParams { t_max: 3.0, dt: 0.01, ..Default::default() };
        assert_eq!(p.steps(), 300);
        assert_eq!(EvolutionParams { t_max: 0.0, ..p }.steps(), 0);
        assert_eq!(EvolutionParams { t_max: 0.015, ..p }.steps(), 2);
    }

    #[test]
    fn free_precession_stays_product() {
        let model = SpinModel::ising(0.0, 0.7, 0.4).unwrap();
        let v = ProductState::down();
        let params = EvolutionParams { t_max: 1.0, dt: 0.05, ..Default::default() };
        let traj = trajectory(&IMpsState::from_product(&v), &model, &params).unwrap();
        assert_eq!(traj.len(), 21);
        for s in &traj {
            assert_eq!(s.max_chi(), 1);
            let exact = precess(&model, &v, s.time());
            let g = s.gamma(Sublattice::A);
            // Equal up to a global phase.
            let overlap = exact[0].conj() * g[0][(0, 0)] + exact[1].conj() * g[1][(0, 0)];
            assert!((overlap.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn classical_ising_schmidt_values() {
        let model = SpinModel::ising(1.0, 0.0, 0.1).unwrap();
        let v = named_initial_state("right").unwrap();
        let params = EvolutionParams { t_max: 1.0, dt: 0.01, ..Default::default() };
        evolve(&IMpsState::from_product(&v), &model, &params, |s, r| {
            assert!(r.canonical_error <= 1e-8);
            let t = s.time();
            let mut exact = [t.cos().abs(), t.sin().abs()];
            exact.sort_by(|a, b| b.total_cmp(a));
            let sv = s.schmidt_values(Bond::A);
            for (k, e) in exact.iter().enumerate() {
                if *e >= 1e-9 {
                    assert!((sv[k] - e).abs() < 1e-6, "t={t}: {sv:?} vs {exact:?}");
                }
            }
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn observer_errors_carry_time() {
        let model = SpinModel::ising(0.3, 1.0, 0.0).unwrap();
        let params = EvolutionParams { t_max: 0.1, dt: 0.02, ..Default::default() };
        let err = evolve(&IMpsState::from_product(&ProductState::up()), &model, &params, |s, _| {
            if s.time() > 0.05 {
                Err(Error::Validation("stop".into()))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        match err {
            Error::Evolution { time, .. } => assert!((time - 0.06).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }
}
