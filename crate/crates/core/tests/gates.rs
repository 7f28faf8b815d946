use hybrid_cqed::device::{FluxPulse, PulseMode};
use hybrid_cqed::gates::{
    branch_weights, conditional_pulse, encode_field_qubit, encoding_probabilities, ghz_branch_amplitudes, ghz_generate, hadamard_field,
    CoherentRegister, ConditionalPulse, Engine, OutcomePolicy, Register,
};
use hybrid_cqed::C64;
use proptest::prelude::*;

fn gate() -> ConditionalPulse {
    let nu = 16.0 * std::f64::consts::PI * 1e6;
    ConditionalPulse::ideal(FluxPulse::half_period_window(nu, 0.0, 0.0, PulseMode::Hermitized).unwrap()).unwrap()
}

fn alpha() -> impl Strategy<Value = C64> {
    (0.02f64..10.0, 0.0f64..std::f64::consts::TAU).prop_map(|(r2, ph)| C64::from_polar(r2.sqrt(), ph))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_probabilities_match_closed_form(a in alpha()) {
        let r = encode_field_qubit(a, &gate(), &Engine::Effective, OutcomePolicy::BothBranches).unwrap();
        let p0 = 0.5 * (1.0 + (-2.0 * a.norm_sqr()).exp());
        prop_assert!((r.branches[0].probability - p0).abs() < 1e-12);
        prop_assert!((r.branches[1].probability - (1.0 - p0)).abs() < 1e-12);
        let (q0, q1) = encoding_probabilities(a);
        prop_assert!((q0 - p0).abs() < 1e-12 && (q0 + q1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_encoding_is_reproducible(a in alpha(), seed in any::<u64>()) {
        let run = || encode_field_qubit(a, &gate(), &Engine::Effective, OutcomePolicy::Sample(seed)).unwrap();
        let (x, y) = (run(), run());
        prop_assert_eq!(x.branches.len(), 1);
        prop_assert_eq!(&x.branches[0].outcomes, &y.branches[0].outcomes);
        prop_assert_eq!(x.branches[0].probability, y.branches[0].probability);
    }

    #[test]
    fn ghz_branch_weights_are_normalized(a in alpha(), n in 1usize..5) {
        let r = ghz_generate(a, &vec![gate(); n], true, &Engine::Effective).unwrap();
        let (zero, one) = ghz_branch_amplitudes(r.final_state(), a).unwrap();
        prop_assert!((zero.norm_sqr() + one.norm_sqr() - 1.0).abs() < 1e-12);
        let (wp, wm) = branch_weights(a);
        prop_assert!((zero.norm() - wp).abs() < 1e-12 && (one.norm() - wm).abs() < 1e-12);
    }

    #[test]
    fn double_pulse_is_identity(a in alpha(), bits in prop::collection::vec(0u8..2, 1..4), q in 0usize..3) {
        let q = q % bits.len();
        let init = Register::Coherent(CoherentRegister::product(&bits, a).unwrap());
        let once = conditional_pulse(&init, q, &gate(), &Engine::Effective).unwrap();
        let twice = conditional_pulse(&once, q, &gate(), &Engine::Effective).unwrap();
        prop_assert!(1.0 - twice.fidelity(&init).unwrap() < 1e-10);
    }

    #[test]
    fn field_hadamard_keeps_norm(a in alpha(), atom in 0u8..2) {
        let out = hadamard_field(atom, a, &gate(), &Engine::Effective).unwrap();
        let total: f64 = out.qubit_distribution().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn impossible_qubit_count_is_rejected() {
    assert!(CoherentRegister::product(&[0, 2], C64::new(0.5, 0.0)).is_err());
}

