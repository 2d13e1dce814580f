use std::sync::Arc;

use dqpt_core::ansatz::classical_ising_exact;
use dqpt_core::dqpt::fidelity_density;
use dqpt_core::evolution::{trajectory, EvolutionParams};
use dqpt_core::imps::{IMpsState, ProductState};
use dqpt_core::models::{build_gates, named_initial_state, precess, Pauli, SpinModel, TrotterOrder};
use dqpt_core::observables::expectation;
use dqpt_core::oracle::{ed_evolve, ed_evolve_many, ed_rate_function, ed_rate_series, eigensystem, trotter_step, EdSystem};
use dqpt_core::Error;

fn right() -> ProductState {
    named_initial_state("right").unwrap()
}

#[test]
fn zero_hamiltonian_leaves_state_unchanged() {
    let model = SpinModel::ising(0.0, 0.0, 0.0).unwrap();
    let v = ProductState::normalized(0.3.into(), dqpt_core::numerics::c(0.1, 0.7)).unwrap();
    let s = EdSystem::new(8, model, &v).unwrap();
    let e = ed_evolve(&s, 2.7).unwrap();
    assert!((e.state() - s.state()).norm() < 1e-12);
    assert!(ed_rate_function(&s, 2.7).unwrap().f < 1e-14);
}

#[test]
fn free_precession_matches_single_spin() {
    let model = SpinModel::ising(0.0, 0.8, -0.35).unwrap();
    let v = ProductState::down();
    let s = EdSystem::new(8, model, &v).unwrap();
    let times: Vec<f64> = (0..=30).map(|k| 0.1 * k as f64).collect();
    for e in ed_evolve_many(&s, &times).unwrap() {
        let [a, b] = precess(&model, &v, e.time());
        let exact = 2.0 * (a.conj() * b).re;
        let got = expectation(&e, Pauli::X, 3).unwrap();
        assert!((got - exact).abs() < 1e-10, "t = {}: {got} vs {exact}", e.time());
    }
}

#[test]
fn energy_is_conserved() {
    let model = SpinModel::ising(1.0, 0.1, 0.15).unwrap();
    let s = EdSystem::new(10, model, &right()).unwrap();
    let e0 = s.energy();
    let times: Vec<f64> = (0..=30).map(|k| 0.1 * k as f64).collect();
    for e in ed_evolve_many(&s, &times).unwrap() {
        assert!((e.energy() - e0).abs() < 1e-10, "t = {}", e.time());
        assert!((e.state().norm() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn rate_is_zero_at_start_and_capacity_is_enforced() {
    let model = SpinModel::xxz(0.9, 0.9, 1.0, 0.1, 1.0).unwrap();
    let s = EdSystem::new(8, model, &right()).unwrap();
    assert_eq!(ed_rate_function(&s, 0.0).unwrap().f, 0.0);
    assert!(matches!(EdSystem::new(13, model, &right()), Err(Error::Capacity { .. })));
}

#[test]
fn concurrent_readers_share_one_eigensystem() {
    let model = SpinModel::ising(0.7, 0.2, 0.4).unwrap();
    let handles: Vec<_> = (0..4).map(|_| std::thread::spawn(move || eigensystem(&model, 8).unwrap())).collect();
    let systems: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(systems.windows(2).all(|w| Arc::ptr_eq(&w[0], &w[1])));
}

/// Largest deviation of the ring rate from the infinite-chain closed form
/// near the first cusp (excluding ±0.1 around it, where the finite-ring
/// cancellation depends on the parity of L), and the ring's peak location.
fn classical_ring_deviation(sites: usize) -> (f64, f64) {
    let model = SpinModel::ising(1.0, 0.0, 0.1).unwrap();
    let s = EdSystem::new(sites, model, &right()).unwrap();
    let times: Vec<f64> = (0..=600).map(|k| 0.5 + 0.001 * k as f64).collect();
    let f = ed_rate_series(&s, &times).unwrap();
    let mut worst = 0.0f64;
    for (t, r) in times.iter().zip(&f) {
        if (t - std::f64::consts::FRAC_PI_4).abs() < 0.1 {
            continue;
        }
        let exact = -2.0 * classical_ising_exact(1.0, 0.1, *t).unwrap().e.0.norm().ln();
        worst = worst.max((r.f - exact).abs());
    }
    let k = (0..f.len()).max_by(|&a, &b| f[a].f.total_cmp(&f[b].f)).unwrap();
    (worst, times[k])
}

#[test]
fn classical_ring_approaches_infinite_cusp() {
    let cusp = classical_ising_exact(1.0, 0.1, 1.0).unwrap().dqpt_times[0];
    assert!((cusp - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    let runs: Vec<(f64, f64)> = [8, 10, 12].iter().map(|&l| classical_ring_deviation(l)).collect();
    for w in runs.windows(2) {
        assert!((w[1].1 - cusp).abs() <= (w[0].1 - cusp).abs() && (w[1].1 - cusp).abs() < 0.01, "{runs:?}");
    }
    assert!(runs[0].0 > runs[1].0 && runs[1].0 > runs[2].0, "{runs:?}");
}

#[test]
fn ring_rate_matches_infinite_chain_for_precession_quench() {
    let model = SpinModel::ising(0.1, 1.0, 0.15).unwrap();
    let v = ProductState::down();
    let params = EvolutionParams { dt: 0.01, t_max: 1.0, ..Default::default() };
    let run = trajectory(&IMpsState::from_product(&v), &model, &params).unwrap();
    let times: Vec<f64> = run.iter().map(|s| s.time()).collect();
    let ring = ed_rate_series(&EdSystem::new(12, model, &v).unwrap(), &times).unwrap();
    for (s, r) in run.iter().zip(&ring) {
        let f = fidelity_density(s, &v).unwrap().f;
        assert!((f - r.f).abs() < 0.02, "t = {}: {f} vs {}", s.time(), r.f);
    }
}

fn local_trotter_error(model: SpinModel, dt: f64) -> f64 {
    let s = EdSystem::new(8, model, &right()).unwrap();
    let gates = build_gates(&model, dt, TrotterOrder::Second).unwrap();
    let approx = trotter_step(&s, &gates).unwrap();
    let exact = ed_evolve(&s, dt).unwrap();
    (approx.state() - exact.state()).norm()
}

#[test]
fn second_order_step_error_scales_with_third_power() {
    for model in [SpinModel::ising(1.0, 0.7, 0.3).unwrap(), SpinModel::xxz(0.3, 0.3, 1.0, 0.3, 0.1).unwrap()] {
        let dts = [0.08, 0.04, 0.02, 0.01];
        let errs: Vec<f64> = dts.iter().map(|&dt| local_trotter_error(model, dt)).collect();
        let n = dts.len() as f64;
        let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope - 3.0).abs() < 0.2, "{}: slope {slope}, errors {errs:?}", model.family());
    }
}
