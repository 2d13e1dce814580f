use dqpt_core::evolution::{trajectory, EvolutionParams};
use dqpt_core::imps::{IMpsState, ProductState, Sublattice};
use dqpt_core::models::{named_initial_state, Pauli, SpinModel, TrotterOrder};
use dqpt_core::observables::{
    connected_correlator, expectation, local_expectation, mutual_info, mutual_information, mutual_information_parts, Anchored, Marginals,
    SharedWindow,
};
use dqpt_core::oracle::{ed_evolve_many, EdSystem};
use proptest::prelude::*;

fn run(model: SpinModel, v: &ProductState, t_max: f64) -> Vec<IMpsState> {
    let params = EvolutionParams { dt: 0.01, t_max, chi_max: 64, sv_threshold: 1e-9, order: TrotterOrder::Second };
    trajectory(&IMpsState::from_product(v), &model, &params).unwrap()
}

#[test]
fn product_states() {
    let down = IMpsState::from_product(&ProductState::down());
    assert!((local_expectation(&down, Pauli::Z, Sublattice::A) + 1.0).abs() < 1e-12);
    let right = IMpsState::from_product(&named_initial_state("right").unwrap());
    assert!((local_expectation(&right, Pauli::X, Sublattice::B) - 1.0).abs() < 1e-12);
    for a in Pauli::ALL {
        for b in Pauli::ALL {
            for d in 1..=7 {
                assert!(connected_correlator(&right, a, b, d, Sublattice::A).unwrap().norm() < 1e-12);
            }
        }
    }
    assert_eq!(mutual_information(&right, &[0, 1], &[3], Sublattice::A).unwrap(), 0.0);
}

#[test]
fn precession_quench_reverses_magnetization_at_transition() {
    let states = run(SpinModel::ising(0.1, 1.0, 0.15).unwrap(), &ProductState::down(), 1.5);
    let z0 = local_expectation(&states[0], Pauli::Z, Sublattice::A);
    let z = local_expectation(states.last().unwrap(), Pauli::Z, Sublattice::A);
    assert!(z0 < -0.99);
    assert!(z > 0.9 * -z0, "sigma_z went from {z0} to {z}");
}

#[test]
fn origin_choice_does_not_matter_for_translation_invariant_quenches() {
    let states = run(SpinModel::ising(1.0, 0.1, 0.15).unwrap(), &named_initial_state("right").unwrap(), 1.5);
    for s in states.iter().step_by(10) {
        for a in Pauli::ALL {
            let ea = local_expectation(s, a, Sublattice::A);
            let eb = local_expectation(s, a, Sublattice::B);
            assert!((ea - eb).abs() < 5e-3);
            assert!(ea.abs() <= 1.0 + 1e-9);
            for d in [1, 2, 5] {
                let ca = connected_correlator(s, a, Pauli::Z, d, Sublattice::A).unwrap();
                let cb = connected_correlator(s, a, Pauli::Z, d, Sublattice::B).unwrap();
                assert!((ca - cb).norm() < 5e-3, "t = {}, {a:?}z at {d}", s.time());
            }
        }
        let ma = mutual_information(s, &[0, 1], &[2], Sublattice::A).unwrap();
        let mb = mutual_information(s, &[0, 1], &[2], Sublattice::B).unwrap();
        assert!((ma - mb).abs() < 5e-3);
    }
}

#[test]
fn hermitian_pair_correlator_is_real() {
    let states = run(SpinModel::xxz(0.3, 0.3, 1.0, 0.3, 0.1).unwrap(), &named_initial_state("right").unwrap(), 0.8);
    let s = states.last().unwrap();
    for a in Pauli::ALL {
        for d in 1..=7 {
            assert!(connected_correlator(s, a, a, d, Sublattice::A).unwrap().im.abs() < 1e-12);
        }
    }
}

#[test]
fn correlators_match_exact_ring() {
    let model = SpinModel::ising(1.0, 0.1, 0.15).unwrap();
    let v = named_initial_state("right").unwrap();
    let states = run(model, &v, 1.0);
    let times: Vec<f64> = states.iter().step_by(5).map(|s| s.time()).collect();
    let ring = ed_evolve_many(&EdSystem::new(12, model, &v).unwrap(), &times).unwrap();
    for (s, e) in states.iter().step_by(5).zip(&ring) {
        for (a, b) in [(Pauli::Z, Pauli::Z), (Pauli::X, Pauli::X), (Pauli::Y, Pauli::Z)] {
            for d in 1..=2 {
                let c_imps = connected_correlator(s, a, b, d, Sublattice::A).unwrap();
                let c_ed = dqpt_core::observables::correlator(e, a, b, 6, d).unwrap();
                assert!((c_imps - c_ed).norm() < 1e-3, "t = {}: {c_imps} vs {c_ed}", s.time());
            }
        }
        let x = expectation(&Anchored::new(s, Sublattice::A), Pauli::X, 0).unwrap();
        assert!((x - expectation(e, Pauli::X, 6).unwrap()).abs() < 1e-3);
    }
}

#[test]
fn mutual_information_bounds_along_evolution() {
    let states = run(SpinModel::ising(1.0, 1.0, 1.0).unwrap(), &ProductState::down(), 2.0);
    for s in states.iter().step_by(4) {
        for (ra, rb) in [(&[0usize][..], &[1usize][..]), (&[0], &[2]), (&[0, 1], &[2]), (&[0, 1], &[3]), (&[0], &[3, 4])] {
            let m = mutual_information_parts(&Anchored::new(s, Sublattice::A), ra, rb).unwrap();
            assert!(m.value() >= -1e-9, "t = {}: {}", s.time(), m.value());
            assert!(m.value() <= 2.0 * m.s_a.min(m.s_b) + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mutual_information_is_symmetric(
        j in 0.1..1.5f64, hx in -1.0..1.0f64, hz in -1.0..1.0f64,
        t in 0.1..0.8f64, split in 1usize..4, gap in 0usize..3,
    ) {
        let model = SpinModel::ising(j, hx, hz).unwrap();
        let params = EvolutionParams { dt: 0.05, t_max: t, chi_max: 32, sv_threshold: 1e-9, order: TrotterOrder::Second };
        let s = trajectory(&IMpsState::from_product(&named_initial_state("right").unwrap()), &model, &params).unwrap().pop().unwrap();
        let a: Vec<usize> = (0..split).collect();
        let b: Vec<usize> = vec![split + gap];
        let ab = mutual_information(&s, &a, &b, Sublattice::A).unwrap();
        let ba = mutual_information(&s, &b, &a, Sublattice::A).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab >= -1e-9);
        for p in Pauli::ALL {
            let e = local_expectation(&s, p, Sublattice::B);
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&e));
        }
    }
}

#[test]
fn shared_window_matches_direct_marginals() {
    let states = run(SpinModel::ising(1.0, 1.0, 1.0).unwrap(), &ProductState::down(), 0.6);
    let s = Anchored::new(states.last().unwrap(), Sublattice::B);
    let w = SharedWindow::new(&s, 0, 5).unwrap();
    for sites in [&[0usize][..], &[1, 3], &[0, 2, 4], &[0, 1, 2, 3, 4]] {
        let diff = w.marginal(sites).unwrap() - s.marginal(sites).unwrap();
        assert!(dqpt_core::numerics::max_abs(&diff) < 1e-12);
    }
    assert_eq!(mutual_info(&w, &[0, 1], &[3]).unwrap().to_bits(), mutual_info(&w, &[3], &[0, 1]).unwrap().to_bits());
    assert!(w.marginal(&[5]).is_err());
}
