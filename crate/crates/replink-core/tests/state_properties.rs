//! Property suite for the density-matrix engine: every operation must keep
//! its output inside the physical set, and the algebraic identities relating
//! the estimators must hold on arbitrary states.

use proptest::prelude::*;

use replink_core::qstate::{
    chsh_value, state_fidelity, trace_distance, witness_fidelity, BellKind, ChshSettings,
    DensityMatrix, Observable,
};
use replink_core::rng::tagged_rng;

fn arb_state() -> impl Strategy<Value = DensityMatrix> {
    any::<u64>().prop_map(|seed| {
        let mut rng = tagged_rng(seed, 0xD3);
        DensityMatrix::random(&mut rng)
    })
}

fn arb_observable() -> impl Strategy<Value = Observable> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter_map("zero vector", |(x, y, z)| Observable::new(x, y, z).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_states_satisfy_invariants(rho in arb_state()) {
        rho.check_invariants().unwrap();
    }

    #[test]
    fn unitary_maps_preserve_invariants(rho in arb_state(), phi in -10.0f64..10.0) {
        rho.phase_flip_a().check_invariants().unwrap();
        rho.dephase_relative(phi).check_invariants().unwrap();
    }

    #[test]
    fn phase_flip_is_an_involution(rho in arb_state()) {
        let back = rho.phase_flip_a().phase_flip_a();
        prop_assert!(trace_distance(&rho, &back) < 1e-12);
    }

    #[test]
    fn witness_identity_matches_fidelity(rho in arb_state()) {
        let t = rho.correlation_tensor();
        for kind in [BellKind::PsiPlus, BellKind::PsiMinus] {
            let w = witness_fidelity(t[0][0], t[1][1], t[2][2], kind).unwrap();
            prop_assert!((w - rho.fidelity_to_bell(kind)).abs() < 1e-10);
        }
    }

    #[test]
    fn expectations_are_bounded(rho in arb_state(), a in arb_observable(), b in arb_observable()) {
        let e = rho.expectation(&a, &b);
        prop_assert!((-1.0..=1.0).contains(&e));
        let probs = rho.outcome_probabilities(&replink_core::qstate::MeasurementSetting { a, b });
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(probs.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn tsirelson_bound(rho in arb_state()) {
        let s = chsh_value(&rho, &ChshSettings::psi_plus_optimal());
        prop_assert!(s.abs() <= 2.0 * std::f64::consts::SQRT_2 + 1e-9);
    }

    #[test]
    fn record_round_trip_preserves_state(rho in arb_state()) {
        let back = DensityMatrix::from_record(&rho.to_record()).unwrap();
        prop_assert!(trace_distance(&rho, &back) < 1e-12);
    }

    #[test]
    fn state_fidelity_is_symmetric_and_bounded(a in arb_state(), b in arb_state()) {
        let f_ab = state_fidelity(&a, &b);
        let f_ba = state_fidelity(&b, &a);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&f_ab));
        prop_assert!((f_ab - f_ba).abs() < 1e-8);
    }

    #[test]
    fn werner_closed_forms(p in 0.0f64..=1.0) {
        let w = DensityMatrix::werner(p, BellKind::PsiPlus).unwrap();
        let expect_f = (3.0 * p + 1.0) / 4.0;
        prop_assert!((w.fidelity_to_bell(BellKind::PsiPlus) - expect_f).abs() < 1e-12);
        let s = chsh_value(&w, &ChshSettings::psi_plus_optimal());
        prop_assert!((s - 2.0 * std::f64::consts::SQRT_2 * p).abs() < 1e-9);
    }
}
