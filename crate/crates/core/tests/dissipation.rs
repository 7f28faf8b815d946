use hybrid_cqed::device::DeviceParams;
use hybrid_cqed::dissipation::{
    atom_population_probs, damped_cat, relaxation_times, sequential_pulse_probs, BathParams, PopulationModel, ProbeSource,
};
use hybrid_cqed::fockspace::Parity;
use hybrid_cqed::C64;
use proptest::prelude::*;

fn bath(t_k: f64) -> BathParams {
    BathParams::new(1e-3, t_k, 1e-6).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn populations_are_normalized_and_coherence_bounded(t in 0.0f64..20e-9, t_k in 0.005f64..0.1) {
        let d = DeviceParams::reference();
        let b = bath(t_k);
        let tau_phi = relaxation_times(&d, &b).unwrap().tau_phi;
        for m in [PopulationModel::Full, PopulationModel::Tanh1] {
            let p = atom_population_probs(t, &d, &b, m).unwrap();
            match m {
                PopulationModel::Tanh1 => prop_assert!((p.p0 + p.p1 - 1.0).abs() < 1e-12),
                PopulationModel::Full => prop_assert!(p.p0 + p.p1 <= 1.0 + 1e-12),
            }
            prop_assert!(p.p_t.norm() <= (-t / tau_phi).exp() + 1e-15);
        }
    }

    #[test]
    fn tanh1_matches_full_when_lambda_is_large(t in 0.0f64..20e-9) {
        let mut d = DeviceParams::reference();
        // Λ = E_J/(k_B T) = 20 at 30 mK.
        let b = bath(0.030);
        let lambda = relaxation_times(&d, &b).unwrap().lambda_cap;
        d.e_j_over_hbar *= 20.0 / lambda;
        let full = atom_population_probs(t, &d, &b, PopulationModel::Full).unwrap();
        let tanh1 = atom_population_probs(t, &d, &b, PopulationModel::Tanh1).unwrap();
        prop_assert!((full.p0 - tanh1.p0).abs() < 1e-6);
    }

    #[test]
    fn dephasing_time_falls_with_temperature(t1 in 0.005f64..0.1, dt in 0.001f64..0.1) {
        let d = DeviceParams::reference();
        let a = relaxation_times(&d, &bath(t1)).unwrap().tau_phi;
        let b = relaxation_times(&d, &bath(t1 + dt)).unwrap().tau_phi;
        prop_assert!(b < a);
    }

    #[test]
    fn cat_coherence_decays_monotonically(a2 in 0.05f64..10.0, t in 0.0f64..2e-6, dt in 1e-9f64..1e-6) {
        let a = C64::new(a2.sqrt(), 0.0);
        let b = bath(0.02);
        let w0 = damped_cat(a, Parity::Even, t, &b).unwrap().coherence_weight;
        let w1 = damped_cat(a, Parity::Even, t + dt, &b).unwrap().coherence_weight;
        prop_assert!(w1 <= w0 && w1 >= 0.0 && w0 <= 1.0);
    }

    #[test]
    fn probe_formula_agrees_with_channel_before_tau(a2 in 0.05f64..10.0, x in 0.0f64..1.0) {
        let a = C64::new(a2.sqrt(), 0.0);
        let b = bath(0.02);
        let t = x * b.tau_kappa;
        let f = sequential_pulse_probs(t, a, &b, ProbeSource::ClosedForm).unwrap();
        let o = sequential_pulse_probs(t, a, &b, ProbeSource::ChannelOracle).unwrap();
        prop_assert!((f.p00 - o.p00).abs() < 1e-12 && (f.p10 - o.p10).abs() < 1e-12);
        prop_assert!(!f.nonphysical_branch);
        prop_assert!((o.p00 + o.p10 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn probe_formula_after_tau_is_flagged(a2 in 0.05f64..10.0, x in 1.01f64..5.0) {
        let a = C64::new(a2.sqrt(), 0.0);
        let b = bath(0.02);
        let f = sequential_pulse_probs(x * b.tau_kappa, a, &b, ProbeSource::ClosedForm).unwrap();
        prop_assert!(f.nonphysical_branch);
        prop_assert!((f.p00 + f.p10 - 1.0).abs() > 1e-9);
    }
}

#[test]
fn negative_times_are_rejected() {
    let d = DeviceParams::reference();
    assert!(atom_population_probs(-1e-9, &d, &bath(0.02), PopulationModel::Full).is_err());
    assert!(BathParams::new(1e-3, -0.02, 1e-6).is_err());
}
