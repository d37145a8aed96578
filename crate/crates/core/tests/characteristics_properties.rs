use proptest::prelude::*;
use specflow::characteristics::{
    far_field_seed, integrate_characteristic, invert_by_descent, invert_to_target, CharSystem,
};
use specflow::chiral_flow::{evolve_green_chiral, ChiralFlowSpec};
use specflow::gaussian_flow::{evolve_green, GaussianFlowSpec};
use specflow::measures::{green_of_measure, SpectralMeasure};
use specflow::rootflow::GreenEvaluation;
use specflow::C64;

fn off_axis() -> impl Strategy<Value = C64> {
    (-3.0..3.0f64, 0.05..2.0f64, any::<bool>()).prop_map(|(re, im, lower)| C64::new(re, if lower { -im } else { im }))
}

/// Shooting from the far-field seed, with the descent walk as a fallback.
fn shoot(sys: &CharSystem, z: C64, tau: f64) -> GreenEvaluation {
    match far_field_seed(sys, z, tau).and_then(|seed| invert_to_target(sys, z, tau, seed)) {
        Ok(e) if e.branch_ok => e,
        _ => invert_by_descent(sys, z, tau).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_green_is_constant_along_characteristics(
        a in 0.2..1.5f64,
        alpha in off_axis(),
        beta_end in 0.1..2.0f64,
    ) {
        let initial = SpectralMeasure::symmetric_pair(a, 1.0);
        let sys = CharSystem::gaussian(move |z| green_of_measure(&initial, z));
        let path = integrate_characteristic(&sys, alpha, beta_end, beta_end / 20.0).unwrap();
        let g0 = path.states[0].g;
        let drift = path.states.iter().map(|s| (s.g - g0).norm()).fold(0.0, f64::max);
        prop_assert!(drift < 1e-10, "drift {drift:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gaussian_shooting_matches_the_functional_equation(a in 0.3..1.5f64, tau in 0.1..1.0f64, z in off_axis()) {
        let initial = SpectralMeasure::symmetric_pair(a, 1.0);
        let spec = GaussianFlowSpec::new(initial.clone(), tau).unwrap();
        let sys = CharSystem::gaussian(move |w| green_of_measure(&initial, w));
        let shot = shoot(&sys, z, tau).g;
        let solved = evolve_green(&spec, z).unwrap().g;
        prop_assert!((shot - solved).norm() < 1e-8, "{shot} vs {solved}");
    }

    #[test]
    fn chiral_shooting_matches_the_functional_equation(
        b in 0.3..1.5f64,
        tau in 0.1..0.8f64,
        a_hat in 0.0..2.0f64,
        z in off_axis(),
    ) {
        let spec = ChiralFlowSpec::singular_value_delta(b, tau, a_hat).unwrap();
        let initial = SpectralMeasure::symmetric_pair(b, 2.0);
        let sys = CharSystem::chiral(a_hat, move |w| green_of_measure(&initial, w));
        let shot = shoot(&sys, z, tau).g;
        let solved = evolve_green_chiral(&spec, z).unwrap().g;
        prop_assert!((shot - solved).norm() < 1e-8, "{shot} vs {solved}");
    }
}
