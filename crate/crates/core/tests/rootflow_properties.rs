use proptest::prelude::*;
use specflow::gaussian_flow::{evolve_green, GaussianFlowSpec};
use specflow::measures::{green_with_derivative, Domain, SpectralMeasure, Symmetry};
use specflow::rootflow::{continuation_solve, path_between, solve_cubic, solve_quadratic, ContinuationPlan, FAR_FIELD};
use specflow::C64;

fn complex_in(radius: f64) -> impl Strategy<Value = C64> {
    (-radius..radius, -radius..radius).prop_map(|(re, im)| C64::new(re, im))
}

/// Three roots pairwise at least `gap` apart.
fn separated_roots(gap: f64) -> impl Strategy<Value = [C64; 3]> {
    [complex_in(3.0), complex_in(3.0), complex_in(3.0)].prop_filter("roots too close", move |r| {
        (r[0] - r[1]).norm() > gap && (r[0] - r[2]).norm() > gap && (r[1] - r[2]).norm() > gap
    })
}

/// Size of one Newton step on `c[0] w^n + c[1] w^(n-1) + ...` from `w`.
fn newton_step(coeffs: &[C64], w: C64) -> f64 {
    let (mut p, mut dp) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for &c in coeffs {
        dp = dp * w + p;
        p = p * w + c;
    }
    (p / dp).norm()
}

fn atomic_measure() -> impl Strategy<Value = SpectralMeasure> {
    prop::collection::vec((-2.0..2.0f64, 0.1..1.0f64), 1..=4).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let atoms = atoms.into_iter().map(|(x, w)| (x, w / total)).collect();
        SpectralMeasure::new(atoms, None, Symmetry::None, Domain::RealLine).unwrap()
    })
}

/// Residual `g - G0(z - tau g)` of the Gaussian flow and its `g`-derivative.
fn gaussian_equation(initial: &SpectralMeasure, tau: f64) -> (impl Fn(C64, C64) -> C64 + '_, impl Fn(C64, C64) -> C64 + '_) {
    let f = move |g: C64, z: C64| g - green_with_derivative(initial, z - tau * g).unwrap().0;
    let dfdg = move |g: C64, z: C64| 1.0 + tau * green_with_derivative(initial, z - tau * g).unwrap().1;
    (f, dfdg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quadratic_roots_are_newton_fixed_points(r in [complex_in(3.0), complex_in(3.0)], lead in complex_in(2.0)) {
        prop_assume!((r[0] - r[1]).norm() > 0.1 && lead.norm() > 0.1);
        let coeffs = [lead, -lead * (r[0] + r[1]), lead * r[0] * r[1]];
        for w in solve_quadratic(coeffs[0], coeffs[1], coeffs[2]).unwrap() {
            prop_assert!(newton_step(&coeffs, w) < 1e-13 * (1.0 + w.norm()), "root {w}");
        }
    }

    #[test]
    fn cubic_roots_are_newton_fixed_points(r in separated_roots(0.1), lead in complex_in(2.0)) {
        prop_assume!(lead.norm() > 0.1);
        let coeffs = [
            lead,
            -lead * (r[0] + r[1] + r[2]),
            lead * (r[0] * r[1] + r[0] * r[2] + r[1] * r[2]),
            -lead * r[0] * r[1] * r[2],
        ];
        for w in solve_cubic(coeffs[0], coeffs[1], coeffs[2], coeffs[3]).unwrap() {
            prop_assert!(newton_step(&coeffs, w) < 1e-13 * (1.0 + w.norm()), "root {w}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn continuation_does_not_depend_on_the_path(
        initial in atomic_measure(),
        tau in 0.05..1.5f64,
        re in -3.0..3.0f64,
        im in 0.01..2.0f64,
        detour in (-4.0..4.0f64, 0.5..3.0f64),
    ) {
        let (f, dfdg) = gaussian_equation(&initial, tau);
        let target = C64::new(re, im);
        let start = C64::new(0.0, FAR_FIELD);
        let g_start = 1.0 / start;
        let direct = ContinuationPlan::new(start, path_between(start, target));
        let waypoint = C64::new(detour.0, detour.1);
        let mut winding = path_between(start, waypoint);
        winding.extend(path_between(waypoint, target));
        let winding = ContinuationPlan::new(start, winding);
        let a = continuation_solve(&f, &dfdg, &direct, g_start).unwrap().last().unwrap().g;
        let b = continuation_solve(&f, &dfdg, &winding, g_start).unwrap().last().unwrap().g;
        prop_assert!((a - b).norm() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn solutions_commute_with_conjugation(
        initial in atomic_measure(),
        tau in 0.0..2.0f64,
        re in -3.0..3.0f64,
        im in 0.01..2.0f64,
    ) {
        let spec = GaussianFlowSpec::new(initial, tau).unwrap();
        let z = C64::new(re, im);
        let up = evolve_green(&spec, z).unwrap().g;
        let down = evolve_green(&spec, z.conj()).unwrap().g;
        prop_assert!((down - up.conj()).norm() < 1e-12 * up.norm().max(1.0), "{up} vs {down}");
    }
}
