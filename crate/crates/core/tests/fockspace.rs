use hybrid_cqed::fockspace::{
    annihilation_matrix, cat_state, coherent_state, fidelity, measure_qubit, tensor_compose, CatState, Parity, SpaceLayout,
    StateVector,
};
use hybrid_cqed::C64;
use proptest::prelude::*;

fn alpha() -> impl Strategy<Value = C64> {
    (0.05f64..3.0, 0.0f64..std::f64::consts::TAU).prop_map(|(r2, ph)| C64::from_polar(r2.sqrt(), ph))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coherent_states_are_normalized(a in alpha()) {
        let s = coherent_state(a, 40).unwrap();
        prop_assert!((s.norm() - 1.0).abs() < 1e-10);
        prop_assert!((s.mean_photon_number() - a.norm_sqr()).abs() < 1e-8);
    }

    #[test]
    fn cats_of_opposite_parity_are_orthogonal(a in alpha()) {
        let e = cat_state(a, Parity::Even, 40).unwrap();
        let o = cat_state(a, Parity::Odd, 40).unwrap();
        prop_assert!(e.inner(&o).unwrap().norm() < 1e-10);
        prop_assert!((e.norm() - 1.0).abs() < 1e-10 && (o.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn norm_constants_match_closed_form(a in alpha()) {
        let x = (-2.0 * a.norm_sqr()).exp();
        let even = CatState::new(a, Parity::Even).unwrap().norm_constant();
        let odd = CatState::new(a, Parity::Odd).unwrap().norm_constant();
        prop_assert!((even - (2.0 * (1.0 + x)).sqrt()).abs() < 1e-12);
        prop_assert!((odd - (2.0 * (1.0 - x)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn annihilation_flips_cat_parity(a in alpha()) {
        let f = 48;
        let even = cat_state(a, Parity::Even, f).unwrap();
        let lowered = StateVector::new(even.layout().clone(), annihilation_matrix(f) * even.amplitudes()).unwrap();
        prop_assert!(1.0 - fidelity(&lowered, &cat_state(a, Parity::Odd, f).unwrap()).unwrap() < 1e-10);
    }

    #[test]
    fn measurement_probabilities_sum_to_one(b0 in 0u8..2, a in alpha()) {
        let plus = StateVector::dressed(hybrid_cqed::fockspace::Dressed::Plus);
        let state = tensor_compose(&[StateVector::qubit(b0).unwrap(), plus, coherent_state(a, 24).unwrap()]).unwrap();
        for q in 0..2 {
            let p0 = measure_qubit(&state, q, 0).unwrap().probability;
            let p1 = measure_qubit(&state, q, 1).unwrap().probability;
            prop_assert!((p0 + p1 - 1.0).abs() < 1e-12);
        }
        let m = measure_qubit(&state, 0, 1 - b0).unwrap();
        prop_assert!(m.is_impossible());
    }
}

#[test]
fn layout_is_qubit_major() {
    let l = SpaceLayout::new(2, 5).unwrap();
    assert_eq!(l.dim(), 20);
    assert_eq!(l.index(0b10, 3), 13);
    assert_eq!(l.qubit_bit(13, 0), 1);
    assert_eq!(l.qubit_bit(13, 1), 0);
}
