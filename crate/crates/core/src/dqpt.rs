//! Fidelity transfer matrix, return-rate density, overlap matrix, and
//! detection and classification of dynamical phase transitions.
//!
//! The fidelity transfer matrix is built for the whole two-site cell, so its
//! eigenvalues `E_i` are squares of the per-site eigenvalues. Per-site
//! quantities are reported as `|E|^{1/2}` with phase `arg(E)/2`.

use crate::error::{Error, Result};
use crate::imps::{Bond, IMpsState, ProductState, SiteTensor, Sublattice};
use crate::numerics::{eig_dense, matmul, scale_rows, CMatrix, C64};

/// Number of sites in the unit cell of the simulated state.
pub const CELL_SITES: usize = 2;
/// Moduli below this are treated as an underflowed spectrum.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;
/// Negative rates this small are rounding and are reported as zero.
pub const RATE_ROUNDING: f64 = 1e-12;
/// Value substituted for `f` when the spectrum underflows.
pub fn rate_cap() -> f64 {
    2.0 * (1e300f64).ln()
}

/// `Σ_σ (v^σ)* Γ^σ`.
pub fn overlap_matrix(gamma: &SiteTensor, v: &ProductState) -> CMatrix {
    let [a, b] = v.amplitudes();
    &gamma[0] * a.conj() + &gamma[1] * b.conj()
}

/// `(Λ_B o_A)(Λ_A o_B)`: the transfer matrix of `⟨ψ0|ψ(t)⟩` over one cell.
pub fn fidelity_transfer_matrix(state: &IMpsState, v0: &ProductState) -> CMatrix {
    let oa = overlap_matrix(state.gamma(Sublattice::A), v0);
    let ob = overlap_matrix(state.gamma(Sublattice::B), v0);
    matmul(&scale_rows(&oa, state.schmidt_values(Bond::B)), &scale_rows(&ob, state.schmidt_values(Bond::A)))
}

/// Spectrum of the fidelity transfer matrix at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelitySpectrum {
    pub time: f64,
    /// Cell eigenvalues, sorted by descending modulus.
    pub eigenvalues: Vec<C64>,
    /// Rate per site, `-(2 / n_cell) ln max |E_i|`.
    pub f: f64,
    /// Continuity labels parallel to `eigenvalues`; empty until assigned by
    /// a [`BranchTracker`].
    pub branch_ids: Vec<usize>,
    /// The branch assignment at this time was ambiguous for a leading
    /// eigenvalue.
    pub ambiguous: bool,
}

impl FidelitySpectrum {
    /// Per-site eigenvalue `|E|^{1/2} e^{i arg(E)/2}` of entry `k`, or zero
    /// when the spectrum is shorter.
    pub fn per_site(&self, k: usize) -> C64 {
        self.eigenvalues.get(k).map(|e| C64::from_polar(e.norm().sqrt(), e.arg() / 2.0)).unwrap_or_default()
    }

    /// Per-site modulus of the eigenvalue carrying `id`.
    pub fn modulus_of(&self, id: usize) -> Option<f64> {
        self.branch_ids.iter().position(|&b| b == id).map(|k| self.eigenvalues[k].norm().sqrt())
    }

    pub fn leading_id(&self) -> Option<usize> {
        self.branch_ids.first().copied()
    }
}

/// Diagonalizes the fidelity transfer matrix and evaluates the rate `f`.
pub fn fidelity_density(state: &IMpsState, v0: &ProductState) -> Result<FidelitySpectrum> {
    let eigenvalues = eig_dense(&fidelity_transfer_matrix(state, v0))?;
    let top = eigenvalues.first().map(|e| e.norm()).unwrap_or(0.0);
    if !(top >= UNDERFLOW_FLOOR) {
        return Err(Error::SpectrumUnderflow { time: state.time() });
    }
    let f = -(2.0 / CELL_SITES as f64) * top.ln();
    // |E| ≤ 1 holds exactly; rounding can push it a few ulps above.
    let f = if (-RATE_ROUNDING..0.0).contains(&f) { 0.0 } else { f };
    Ok(FidelitySpectrum { time: state.time(), eigenvalues, f, branch_ids: Vec::new(), ambiguous: false })
}

/// Overlap matrix of sublattice A with the reported magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    pub time: f64,
    pub o: CMatrix,
    pub o11_abs: f64,
    /// `|o_12|`, zero for χ = 1.
    pub ood_abs: f64,
    /// `|o_21|`, zero for χ = 1.
    pub o21_abs: f64,
}

pub fn overlap_decomposition(state: &IMpsState, v0: &ProductState) -> OverlapMatrix {
    let o = overlap_matrix(state.gamma(Sublattice::A), v0);
    let at = |i: usize, j: usize| if i < o.nrows() && j < o.ncols() { o[(i, j)].norm() } else { 0.0 };
    OverlapMatrix { time: state.time(), o11_abs: at(0, 0), ood_abs: at(0, 1), o21_abs: at(1, 0), o }
}

/// Two candidate matches closer than this are reported as ambiguous.
pub const BRANCH_AMBIGUITY: f64 = 1e-12;
/// Ambiguity only matters for this many leading eigenvalues.
const TRACKED_LEADERS: usize = 2;

/// Labels eigenvalues across time steps by nearest-neighbour matching in the
/// complex plane, greedily in order of descending modulus.
#[derive(Debug, Clone, Default)]
pub struct BranchTracker {
    previous: Vec<(C64, usize)>,
    next_id: usize,
}

impl BranchTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fills `branch_ids` and `ambiguous` of `spec`.
    pub fn assign(&mut self, spec: &mut FidelitySpectrum) {
        let mut used = vec![false; self.previous.len()];
        let mut ids = Vec::with_capacity(spec.eigenvalues.len());
        let mut ambiguous = false;
        for (k, e) in spec.eigenvalues.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            let mut second = f64::INFINITY;
            for (j, (p, _)) in self.previous.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let d = (e - p).norm();
                match best {
                    Some((_, bd)) if d >= bd => second = second.min(d),
                    Some((_, bd)) => {
                        second = bd;
                        best = Some((j, d));
                    }
                    None => best = Some((j, d)),
                }
            }
            match best {
                Some((j, d)) => {
                    used[j] = true;
                    ids.push(self.previous[j].1);
                    if k < TRACKED_LEADERS && second - d < BRANCH_AMBIGUITY {
                        ambiguous = true;
                    }
                }
                None => {
                    ids.push(self.next_id);
                    self.next_id += 1;
                }
            }
        }
        self.previous = spec.eigenvalues.iter().copied().zip(ids.iter().copied()).collect();
        spec.branch_ids = ids;
        spec.ambiguous = ambiguous;
    }
}

/// Assigns branch ids to a time-ordered sequence in place.
pub fn track_branches(spectra: &mut [FidelitySpectrum]) {
    let mut tracker = BranchTracker::new();
    for s in spectra.iter_mut() {
        tracker.assign(s);
    }
}

/// A change of the leading transfer-matrix eigenvalue between two samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DqptEvent {
    /// Crossing time from linear interpolation of `|e_a| - |e_b|`.
    pub time: f64,
    /// Branch leading before the crossing.
    pub branch_before: usize,
    /// Branch leading after it.
    pub branch_after: usize,
    /// `d(|e_a| - |e_b|)/dt` across the crossing (per-site moduli).
    pub gap_slope: f64,
    /// Bracketing sample times.
    pub bracket: (f64, f64),
    /// The branch assignment near the event was ambiguous, or the new
    /// leader had no predecessor to interpolate from.
    pub ambiguous: bool,
}

/// Finds every exchange of the leading eigenvalue branch. Spectra must carry
/// branch ids (see [`track_branches`]).
pub fn detect_dqpts(spectra: &[FidelitySpectrum]) -> Result<Vec<DqptEvent>> {
    if spectra.len() < 3 {
        return Err(Error::Validation(format!("detection needs at least 3 samples, got {}", spectra.len())));
    }
    if spectra.iter().any(|s| s.branch_ids.len() != s.eigenvalues.len()) {
        return Err(Error::Validation("spectra have no branch assignment".into()));
    }
    let mut events = Vec::new();
    for w in spectra.windows(2) {
        let (s0, s1) = (&w[0], &w[1]);
        let (Some(a), Some(b)) = (s0.leading_id(), s1.leading_id()) else { continue };
        if a == b {
            continue;
        }
        let dt = s1.time - s0.time;
        let before = s0.modulus_of(b).map(|mb| s0.eigenvalues[0].norm().sqrt() - mb);
        let after = s1.modulus_of(a).map(|ma| ma - s1.eigenvalues[0].norm().sqrt());
        let (time, slope, missing) = match (before, after) {
            (Some(d0), Some(d1)) if d0 - d1 > 0.0 => (s0.time + dt * d0 / (d0 - d1), (d1 - d0) / dt, false),
            _ => (0.5 * (s0.time + s1.time), f64::NAN, true),
        };
        events.push(DqptEvent {
            time,
            branch_before: a,
            branch_after: b,
            gap_slope: slope,
            bracket: (s0.time, s1.time),
            ambiguous: missing || s0.ambiguous || s1.ambiguous,
        });
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqptKind {
    Precession,
    Entanglement,
    Hybrid,
}

impl DqptKind {
    pub fn label(self) -> &'static str {
        match self {
            DqptKind::Precession => "pDQPT",
            DqptKind::Entanglement => "eDQPT",
            DqptKind::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierParams {
    /// `|o_11| / |o_od|` at a local minimum of `|o_11|` near the event must
    /// be below this for a precession label.
    pub overlap_threshold: f64,
    /// The minimum of `λ1 - λ2` near the event must be below this for an
    /// entanglement label.
    pub gap_threshold: f64,
    /// Half-width of the analysis window around the event.
    pub window: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self { overlap_threshold: 0.5, gap_threshold: 0.2, window: 0.5 }
    }
}

/// One sample of the quantities the classifier looks at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisPoint {
    pub time: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub o11_abs: f64,
    pub ood_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub kind: DqptKind,
    /// `λ2/λ1` interpolated at the event time; the precession score.
    pub ratio_at_event: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Smallest interior local minimum of `λ1 - λ2` in the window, with its
    /// time, if any.
    pub gap_minimum: Option<(f64, f64)>,
    /// Smallest interior local minimum of `|o_11|` in the window, with its
    /// time, if any.
    pub o11_minimum: Option<(f64, f64)>,
    /// Smallest `|o_11| / |o_od|` over the interior local minima of
    /// `|o_11|`, with its time, if any.
    pub overlap_ratio_minimum: Option<(f64, f64)>,
    pub precession_fired: bool,
    pub entanglement_fired: bool,
}

/// Labels an event as precession-driven (`|o_11|` dips well below `|o_od|`
/// nearby, so the subleading component takes over), entanglement-driven (an
/// avoided crossing of `λ1`, `λ2` nearby), or hybrid when both or neither
/// criterion holds. `λ2/λ1` at the event is reported as the precession score
/// but does not enter the label.
pub fn classify_dqpt(event_time: f64, history: &[AnalysisPoint], params: &ClassifierParams) -> Result<Classification> {
    let (lo, hi) = (event_time - params.window, event_time + params.window);
    let (first, last) = match (history.first(), history.last()) {
        (Some(a), Some(b)) => (a.time, b.time),
        _ => return Err(Error::Validation("empty analysis history".into())),
    };
    let slack = 1e-9 * (1.0 + hi.abs());
    if lo < first - slack || hi > last + slack {
        return Err(Error::WindowOutOfBounds { need_start: lo, need_end: hi, have_start: first, have_end: last });
    }
    let inside: Vec<&AnalysisPoint> = history.iter().filter(|p| p.time >= lo - slack && p.time <= hi + slack).collect();
    if inside.len() < 3 {
        return Err(Error::Validation("analysis window holds fewer than 3 samples".into()));
    }

    let ratio = |p: &AnalysisPoint| if p.lambda1 > 0.0 { p.lambda2 / p.lambda1 } else { 0.0 };
    let ratio_at_event = interpolate(history, event_time, ratio);
    let ratios: Vec<f64> = inside.iter().map(|p| ratio(p)).collect();
    let ratio_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let times: Vec<f64> = inside.iter().map(|p| p.time).collect();
    let gaps: Vec<f64> = inside.iter().map(|p| p.lambda1 - p.lambda2).collect();
    let o11: Vec<f64> = inside.iter().map(|p| p.o11_abs).collect();
    let gap_minimum = interior_minimum(&times, &gaps);
    let o11_minimum = interior_minimum(&times, &o11);
    let overlap_ratio_minimum = interior_minima(&o11).map(|i| (times[i], overlap_ratio(inside[i]))).min_by(|a, b| a.1.total_cmp(&b.1));

    let precession_fired = overlap_ratio_minimum.is_some_and(|(_, q)| q < params.overlap_threshold);
    let entanglement_fired = gap_minimum.is_some_and(|(_, g)| g < params.gap_threshold);
    let kind = match (precession_fired, entanglement_fired) {
        (true, false) => DqptKind::Precession,
        (false, true) => DqptKind::Entanglement,
        _ => DqptKind::Hybrid,
    };
    Ok(Classification {
        kind,
        ratio_at_event,
        ratio_min,
        ratio_max,
        gap_minimum,
        o11_minimum,
        overlap_ratio_minimum,
        precession_fired,
        entanglement_fired,
    })
}

fn interpolate(history: &[AnalysisPoint], t: f64, value: impl Fn(&AnalysisPoint) -> f64) -> f64 {
    let k = history.partition_point(|p| p.time < t);
    if k == 0 {
        return value(&history[0]);
    }
    if k >= history.len() {
        return value(&history[history.len() - 1]);
    }
    let (a, b) = (&history[k - 1], &history[k]);
    let w = if b.time > a.time { (t - a.time) / (b.time - a.time) } else { 0.0 };
    value(a) * (1.0 - w) + value(b) * w
}

fn overlap_ratio(p: &AnalysisPoint) -> f64 {
    if p.ood_abs > 0.0 {
        p.o11_abs / p.ood_abs
    } else {
        f64::INFINITY
    }
}

/// Samples no larger than their neighbours and strictly smaller than at
/// least one of them, excluding the window edges.
fn interior_minima(values: &[f64]) -> impl Iterator<Item = usize> + '_ {
    (1..values.len().saturating_sub(1)).filter(move |&i| {
        let (l, c, r) = (values[i - 1], values[i], values[i + 1]);
        c <= l && c <= r && (c < l || c < r)
    })
}

/// Smallest interior local minimum, with its time.
fn interior_minimum(times: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    interior_minima(values).map(|i| (times[i], values[i])).min_by(|a, b| a.1.total_cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::named_initial_state;
    use crate::numerics::{c, ONE};

    fn spectrum(time: f64, eigenvalues: Vec<C64>) -> FidelitySpectrum {
        FidelitySpectrum { time, eigenvalues, f: 0.0, branch_ids: Vec::new(), ambiguous: false }
    }

    #[test]
    fn product_state_at_time_zero() {
        let v = named_initial_state("right").unwrap();
        let s = IMpsState::from_product(&v);
        let t = fidelity_transfer_matrix(&s, &v);
        assert_eq!(t.shape(), (1, 1));
        assert!((t[(0, 0)] - ONE).norm() < 1e-15);
        let spec = fidelity_density(&s, &v).unwrap();
        assert!(spec.f.abs() < 1e-12);
        let o = overlap_decomposition(&s, &v);
        assert!((o.o11_abs - 1.0).abs() < 1e-15 && o.ood_abs == 0.0);
    }

    #[test]
    fn orthogonal_state_underflows() {
        let s = IMpsState::from_product(&ProductState::up());
        let t = fidelity_transfer_matrix(&s, &ProductState::down());
        assert_eq!(t[(0, 0)].norm(), 0.0);
        assert!(matches!(fidelity_density(&s, &ProductState::down()), Err(Error::SpectrumUnderflow { .. })));
    }

    #[test]
    fn constant_spectra_have_no_events() {
        let mut spectra: Vec<_> = (0..5).map(|k| spectrum(k as f64 * 0.1, vec![c(0.9, 0.0), c(0.5, 0.1)])).collect();
        track_branches(&mut spectra);
        assert!(detect_dqpts(&spectra).unwrap().is_empty());
    }

    #[test]
    fn crossing_is_located_by_interpolation() {
        // |e_a| = 1 - t, |e_b| = 0.5 with distinct phases: cross at t = 0.5.
        let mut spectra: Vec<_> = (0..=10)
            .map(|k| {
                let t = k as f64 * 0.1;
                let a = C64::from_polar((1.0 - t).powi(2), 0.3);
                let b = C64::from_polar(0.25, 2.0);
                let mut v = vec![a, b];
                crate::numerics::sort_eigenvalues(&mut v);
                spectrum(t, v)
            })
            .collect();
        track_branches(&mut spectra);
        let events = detect_dqpts(&spectra).unwrap();
        assert_eq!(events.len(), 1);
        assert!((events[0].time - 0.5).abs() < 1e-9, "{}", events[0].time);
        assert!(events[0].gap_slope < 0.0 && !events[0].ambiguous);
    }

    #[test]
    fn too_few_samples() {
        assert!(detect_dqpts(&[spectrum(0.0, vec![ONE])]).is_err());
    }

    #[test]
    fn overlap_magnitudes_ignore_schmidt_phases() {
        let v = named_initial_state("right").unwrap();
        let g: SiteTensor = [
            CMatrix::from_row_slice(2, 2, &[c(0.3, 0.1), c(-0.2, 0.4), c(0.5, 0.0), c(0.1, -0.7)]),
            CMatrix::from_row_slice(2, 2, &[c(0.2, 0.2), c(0.6, 0.1), c(-0.4, 0.3), c(0.0, 0.2)]),
        ];
        let o = overlap_matrix(&g, &v);
        let (p, q) = (C64::from_polar(1.0, 0.7), C64::from_polar(1.0, -1.9));
        let phased: SiteTensor = g.clone().map(|m| {
            let mut m = m;
            m.row_mut(1).iter_mut().for_each(|z| *z *= p);
            m.column_mut(0).iter_mut().for_each(|z| *z *= q);
            m
        });
        let o2 = overlap_matrix(&phased, &v);
        for i in 0..2 {
            for j in 0..2 {
                assert!((o[(i, j)].norm() - o2[(i, j)].norm()).abs() < 1e-12);
            }
        }
    }

    fn history(f: impl Fn(f64) -> (f64, f64, f64, f64)) -> Vec<AnalysisPoint> {
        (0..=200)
            .map(|k| {
                let t = k as f64 * 0.01;
                let (l1, l2, o11, ood) = f(t);
                AnalysisPoint { time: t, lambda1: l1, lambda2: l2, o11_abs: o11, ood_abs: ood }
            })
            .collect()
    }

    #[test]
    fn classifier_labels() {
        let p = ClassifierParams::default();
        // Gapped spectrum with a deep overlap dip: precession.
        let h = history(|t| (0.99, 0.01, 0.2 + (t - 1.0).powi(2), 0.95));
        let c = classify_dqpt(1.0, &h, &p).unwrap();
        assert_eq!(c.kind, DqptKind::Precession);
        assert!((c.ratio_at_event - 0.01 / 0.99).abs() < 1e-12);
        // Avoided crossing with a shallow overlap dip: entanglement.
        let h = history(|t| {
            let g = 0.05 + (t - 1.0).powi(2);
            ((1.0 + g) / 2.0, (1.0 - g) / 2.0, 0.8 + 0.1 * (t - 1.0).powi(2), 0.6)
        });
        let c = classify_dqpt(1.0, &h, &p).unwrap();
        assert_eq!(c.kind, DqptKind::Entanglement);
        assert!(c.o11_minimum.is_some() && !c.precession_fired);
        // Avoided crossing and a deep overlap dip: hybrid.
        let h = history(|t| {
            let g = 0.05 + (t - 1.0).powi(2);
            ((1.0 + g) / 2.0, (1.0 - g) / 2.0, 0.1 + (t - 1.0).powi(2), 0.9)
        });
        assert_eq!(classify_dqpt(1.0, &h, &p).unwrap().kind, DqptKind::Hybrid);
        // Neither signature: hybrid.
        let h = history(|t| (0.7, 0.3, 1.0 - 0.1 * t, 0.5));
        assert_eq!(classify_dqpt(1.0, &h, &p).unwrap().kind, DqptKind::Hybrid);
        assert!(matches!(classify_dqpt(1.8, &h, &p), Err(Error::WindowOutOfBounds { .. })));
    }
}
