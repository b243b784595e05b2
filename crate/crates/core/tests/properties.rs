use delayed_swap::analysis::{correlation, fidelity_from_correlations, CoincidenceCounts};
use delayed_swap::bisa::{bisa_apply, bisa_unitary, BisaOutcome, BisaSetting, IN_B, IN_C};
use delayed_swap::experiment::{run_trials, sort_subensembles, ExperimentConfig};
use delayed_swap::fock::{
    attenuate_spatial, beam_splitter, beam_splitter_modes, pattern_distribution, single_photon,
    wave_plate, DetectorBank, Ensemble, FockVector, ModeLabel, WavePlate,
};
use delayed_swap::qrng::{pack_bits, unpack_bits};
use delayed_swap::qstate::{
    bell_decompose_14_23, bell_state, fidelity, partial_trace, pauli_correlation,
    witness_from_fidelity, BellKind, DensityMatrix, PauliAxis, QubitRegisterState, C64,
};
use delayed_swap::timeline::{check_delayed_choice, event_times, DelayBudget};
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
}

fn register(n: usize) -> impl Strategy<Value = QubitRegisterState> {
    prop::collection::vec(c64(), 1 << n)
        .prop_filter("non-zero", |v| v.iter().map(|a| a.norm_sqr()).sum::<f64>() > 1e-3)
        .prop_map(move |v| {
            QubitRegisterState::from_amplitudes(n, v).unwrap().normalized().unwrap()
        })
}

fn two_qubit_mixture() -> impl Strategy<Value = DensityMatrix> {
    prop::collection::vec((0.01f64..1.0, register(2)), 1..4).prop_map(|parts| {
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let parts: Vec<_> = parts.into_iter().map(|(w, s)| (w / total, s)).collect();
        DensityMatrix::mixture(&parts).unwrap()
    })
}

fn photon_pair() -> impl Strategy<Value = FockVector> {
    (c64(), c64(), c64(), c64())
        .prop_filter("non-zero", |(a, b, c, d)| (a.norm_sqr() + b.norm_sqr()) * (c.norm_sqr() + d.norm_sqr()) > 1e-3)
        .prop_map(|(a, b, c, d)| {
            let x = single_photon(IN_B, a, b, 3).unwrap();
            let y = single_photon(IN_C, c, d, 3).unwrap();
            x.tensor(&y).unwrap().normalized().unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optical_elements_preserve_norm(s in photon_pair(), t in 0.0f64..=1.0, phi in -3.2f64..3.2, theta in -3.2f64..3.2) {
        let out = beam_splitter(&s, IN_B, IN_C, t, phi).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-9);
        for plate in [WavePlate::Qwp(theta), WavePlate::Ewp(theta), WavePlate::QwpPlus45, WavePlate::QwpMinus45] {
            let out = wave_plate(&s, IN_B, plate).unwrap();
            prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-9);
        }
        for setting in [BisaSetting::Bsm, BisaSetting::Ssm] {
            prop_assert!((bisa_unitary(&s, setting).unwrap().norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn hom_null_for_any_phase(phi in -3.2f64..3.2) {
        let modes = vec![ModeLabel::h("x"), ModeLabel::h("y")];
        let s = FockVector::from_terms(modes.clone(), 3, [(vec![1, 1], C64::new(1.0, 0.0))]).unwrap();
        let out = beam_splitter_modes(&s, &modes[0], &modes[1], 0.5, phi).unwrap();
        prop_assert!(out.amplitude(&[1, 1]).norm_sqr() < 1e-12);
    }

    #[test]
    fn analyzer_ensemble_is_trace_preserving(s in photon_pair(), v in 0.0f64..=1.0) {
        for setting in [BisaSetting::Bsm, BisaSetting::Ssm] {
            let ens = bisa_apply(&s, setting, v).unwrap();
            prop_assert!((ens.total_weight() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_conserves_probability(s in photon_pair(), eta in 0.0f64..=1.0, e in 0.0f64..=1.0) {
        let ens = attenuate_spatial(&Ensemble::pure(s), IN_B, eta).unwrap();
        prop_assert!((ens.total_weight() - 1.0).abs() < 1e-9);
        let bank = DetectorBank::for_spatials(&[IN_B, IN_C]);
        let dist = pattern_distribution(&ens, &bank, &[e; 4]).unwrap();
        prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(dist.iter().all(|&p| p >= -1e-15));
    }

    #[test]
    fn bell_decomposition_is_complete(s in register(4)) {
        let c = bell_decompose_14_23(&s).unwrap();
        prop_assert!((c.norm_sqr() - 1.0).abs() < 1e-10);
        prop_assert!((c.reconstruct().overlap(&s).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn partial_trace_keeps_unit_trace(s in register(4), a in 0usize..4, b in 0usize..4) {
        prop_assume!(a != b);
        let rho = partial_trace(&s.to_density(), &[a.min(b), a.max(b)]).unwrap();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(rho.validate().is_ok());
    }

    #[test]
    fn correlation_fidelity_matches_trace(rho in two_qubit_mixture()) {
        let e = |a| pauli_correlation(&rho, a).unwrap();
        let (z, x, y) = (e(PauliAxis::Z), e(PauliAxis::X), e(PauliAxis::Y));
        for target in BellKind::ALL {
            let via_corr = fidelity_from_correlations(z, x, y, target).unwrap();
            let direct = fidelity(&rho, &bell_state(target)).unwrap();
            prop_assert!((via_corr - direct).abs() < 1e-10, "{target}: {via_corr} vs {direct}");
            prop_assert_eq!(witness_from_fidelity(via_corr), 0.5 - via_corr);
        }
    }

    #[test]
    fn correlation_scale_invariance(jj in 0u64..500, pp in 0u64..500, jp in 0u64..500, pj in 0u64..500, k in 1u64..50) {
        prop_assume!(jj + pp + jp + pj > 0);
        let base = correlation(&CoincidenceCounts::new(PauliAxis::X, jj, pp, jp, pj)).unwrap();
        let scaled = correlation(&CoincidenceCounts::new(PauliAxis::X, k * jj, k * pp, k * jp, k * pj)).unwrap();
        prop_assert_eq!(base.value, scaled.value);
        prop_assert!((scaled.sigma * (k as f64).sqrt() - base.sigma).abs() < 1e-12);
        prop_assert!(base.value.abs() <= 1.0);
    }

    #[test]
    fn bit_packing_round_trips(bits in prop::collection::vec(any::<bool>(), 0..300)) {
        prop_assert_eq!(unpack_bits(&pack_bits(&bits), bits.len()), bits);
    }

    #[test]
    fn delayed_choice_iff_window_after_measurements(
        ab in 0.0f64..50.0, v in 0.0f64..200.0, eom in 0.0f64..100.0, on in 0.0f64..300.0,
    ) {
        let b = DelayBudget {
            fiber_length_ab: ab,
            fiber_length_v: v,
            eom_driver_delay: eom,
            eom_on_time: on,
            ..DelayBudget::default()
        };
        if let Ok(t) = event_times(&b) {
            let r = check_delayed_choice(&t);
            prop_assert_eq!(r.satisfied, t.c_v_lower > t.m_a && t.m_v > t.m_a);
            prop_assert!(t.c_v_lower <= t.c_v_upper && t.c_v_upper <= t.m_v);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ideal_runs_are_consistent(seed in any::<u64>(), trials in 1u64..400) {
        let cfg = ExperimentConfig::ideal(trials, seed);
        let a = run_trials(&cfg).unwrap();
        prop_assert_eq!(&a, &run_trials(&cfg).unwrap());
        prop_assert_eq!(a.len() as u64, trials);
        for r in &a {
            if r.kept {
                let allowed = match r.victor_choice {
                    BisaSetting::Bsm => matches!(r.victor_outcome, BisaOutcome::PhiPlus23 | BisaOutcome::PhiMinus23),
                    BisaSetting::Ssm => matches!(r.victor_outcome, BisaOutcome::HH23 | BisaOutcome::VV23),
                };
                prop_assert!(allowed, "{:?}", r);
                prop_assert!(r.event_times.c_v_lower > r.event_times.m_a);
            }
        }
        let set = sort_subensembles(&a);
        prop_assert_eq!(set.sizes().iter().sum::<usize>() + set.excluded, a.len());
    }
}
