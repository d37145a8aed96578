use proptest::prelude::*;
use specflow::chiral_flow::{
    chiral_block_green, evolve_density_chiral, raney_density, raney_number, wishart_density, ChiralFlowSpec,
};
use specflow::gaussian_flow::{evolve_density, evolve_green, wigner_semicircle, GaussianFlowSpec};
use specflow::measures::{
    green_of_measure, moments, stieltjes_invert, support_detect, uniform_grid, AcPart, DensityCurve, Domain,
    EnsembleTag, SpectralMeasure, Symmetry, DEFAULT_EPS_LADDER,
};
use specflow::C64;

fn measure(atoms: Vec<(f64, f64)>, ac: Option<AcPart>, symmetry: Symmetry) -> SpectralMeasure {
    SpectralMeasure::new(atoms, ac, symmetry, Domain::RealLine).unwrap()
}

/// Unit-mass semicircle of radius `r` centered at `c` on `n` points.
fn semicircle_bump(c: f64, r: f64, n: usize) -> AcPart {
    let grid = uniform_grid(c - r, c + r, n);
    let values = grid.iter().map(|&x| wigner_semicircle((x - c) / r) / r).collect();
    AcPart { grid, values }
}

fn max_asymmetry(curve: &DensityCurve) -> f64 {
    let v = &curve.values;
    (0..v.len()).map(|i| (v[i] - v[v.len() - 1 - i]).abs()).fold(0.0, f64::max)
}

fn l1_distance(a: &DensityCurve, b: &DensityCurve) -> f64 {
    let h = a.grid[1] - a.grid[0];
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>() * h
}

/// Grid covering the initial hull widened by the semicircle radius `2 sqrt(tau)` of a delta.
fn covering_grid(hull: (f64, f64), tau: f64, n: usize) -> Vec<f64> {
    let reach = 2.0 * tau.sqrt() + 0.2;
    uniform_grid(hull.0 - reach, hull.1 + reach, n)
}

fn even_atoms() -> impl Strategy<Value = SpectralMeasure> {
    (prop::collection::vec((0.1..1.5f64, 0.1..1.0f64), 1..=3), prop::option::of(0.1..1.0f64)).prop_map(|(pairs, center)| {
        let total = 2.0 * pairs.iter().map(|p| p.1).sum::<f64>() + center.unwrap_or(0.0);
        let mut atoms: Vec<(f64, f64)> = pairs.iter().flat_map(|&(x, w)| [(-x, w / total), (x, w / total)]).collect();
        atoms.extend(center.map(|w| (0.0, w / total)));
        measure(atoms, None, Symmetry::Even)
    })
}

#[test]
fn gaussian_mass_is_conserved() {
    let initials = [
        measure(vec![(0.0, 1.0)], None, Symmetry::Even),
        measure(vec![(-0.7, 0.5), (0.7, 0.5)], None, Symmetry::Even),
        measure(vec![(-1.0, 0.2), (0.3, 0.5), (1.2, 0.3)], None, Symmetry::None),
        measure(vec![], Some(semicircle_bump(0.4, 0.6, 801)), Symmetry::None),
    ];
    for initial in &initials {
        for tau in [0.05, 0.25, 1.0, 4.0] {
            let spec = GaussianFlowSpec::new(initial.clone(), tau).unwrap();
            let grid = covering_grid(initial.support_hull().unwrap(), tau, 8001);
            let mass = evolve_density(&spec, &grid).unwrap().mass().unwrap();
            assert!((mass - 1.0).abs() < 1e-4, "tau {tau}, hull {:?}: mass {mass}", initial.support_hull());
        }
    }
}

#[test]
fn gaussian_flow_is_a_semigroup() {
    let initial = measure(vec![(-0.8, 0.5), (0.8, 0.5)], None, Symmetry::Even);
    let grid = uniform_grid(-2.5, 2.5, 2001);
    let first = evolve_density(&GaussianFlowSpec::new(initial.clone(), 0.1).unwrap(), &grid).unwrap();
    let restart = SpectralMeasure::from_density(grid.clone(), first.values.clone(), Symmetry::None, Domain::RealLine).unwrap();
    let restart = restart.scaled(1.0 / restart.total_mass()).unwrap();
    let composed = evolve_density(&GaussianFlowSpec::new(restart, 0.15).unwrap(), &grid).unwrap();
    let direct = evolve_density(&GaussianFlowSpec::new(initial, 0.25).unwrap(), &grid).unwrap();
    let l1 = l1_distance(&composed, &direct);
    assert!(l1 < 5e-3, "L1 {l1:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn even_gaussian_data_stays_even(initial in even_atoms(), tau in 0.05..2.0f64) {
        let spec = GaussianFlowSpec::new(initial, tau).unwrap();
        let curve = evolve_density(&spec, &uniform_grid(-4.5, 4.5, 601)).unwrap();
        prop_assert!(max_asymmetry(&curve) < 1e-6, "asymmetry {:e}", max_asymmetry(&curve));
    }

    #[test]
    fn quarter_time_solution_solves_the_shifted_equation(
        atoms in prop::collection::vec((-2.0..2.0f64, 0.1..1.0f64), 1..=4),
        re in -3.0..3.0f64,
        im in 0.01..2.0f64,
        lower in any::<bool>(),
    ) {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let initial = measure(atoms.into_iter().map(|(x, w)| (x, w / total)).collect(), None, Symmetry::None);
        let spec = GaussianFlowSpec::new(initial.clone(), 0.25).unwrap();
        let z = C64::new(re, if lower { -im } else { im });
        let g = evolve_green(&spec, z).unwrap().g;
        let shifted = green_of_measure(&initial, z - g / 4.0).unwrap();
        prop_assert!((g - shifted).norm() < 1e-10, "{g} vs {shifted}");
    }

    #[test]
    fn chiral_densities_are_even(b in 0.2..1.5f64, tau in 0.05..1.0f64, a_hat in 0.0..2.0f64) {
        let spec = ChiralFlowSpec::singular_value_delta(b, tau, a_hat).unwrap();
        let curve = evolve_density_chiral(&spec, &uniform_grid(-4.0, 4.0, 400)).unwrap();
        prop_assert!(max_asymmetry(&curve) < 1e-6, "asymmetry {:e}", max_asymmetry(&curve));
    }

    #[test]
    fn chiral_bridge_to_gaussian(a in 0.2..1.5f64, tau in 0.1..1.5f64) {
        let grid = uniform_grid(-4.0, 4.0, 401);
        let gaussian = evolve_density(&GaussianFlowSpec::new(SpectralMeasure::symmetric_pair(a, 1.0), tau).unwrap(), &grid).unwrap();
        let chiral = evolve_density_chiral(&ChiralFlowSpec::singular_value_delta(a, tau / 2.0, 0.0).unwrap(), &grid).unwrap();
        let gap = gaussian.values.iter().zip(&chiral.values).map(|(g, c)| (g - 0.5 * c).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-5, "gap {gap:e}");
    }
}

#[test]
fn chiral_half_line_mass_is_one() {
    for (b, tau, a_hat) in [(0.0, 0.125, 0.0), (1.0, 0.5, 0.0), (1.0, 0.5, 1.0), (0.5, 0.2, 2.0), (0.0, 0.5, 1.0)] {
        let spec = ChiralFlowSpec::singular_value_delta(b, tau, a_hat).unwrap();
        let curve = evolve_density_chiral(&spec, &uniform_grid(0.0, 5.0, 8001)).unwrap();
        let mass = curve.mass().unwrap();
        assert!((mass - 1.0).abs() < 1e-4, "b {b}, tau {tau}, a_hat {a_hat}: mass {mass}");
    }
}

#[test]
fn raney_density_moments() {
    // Grid uniform in the cube root of y to resolve the y^(-1/3) hard edge.
    let grid = uniform_grid(1e-3, 1.0, 6001).iter().map(|s| 6.75 * s * s * s).collect();
    let curve = DensityCurve::from_fn(grid, 0.0, EnsembleTag::Wishart, raney_density).unwrap();
    for k in 0..=5u32 {
        let exact = raney_number(3, 2, k as u64).unwrap() as f64;
        let m = moments(&curve, k).unwrap();
        assert!((m - exact).abs() < 1e-3, "k = {k}: {m} vs {exact}");
    }
}

#[test]
fn positive_asymmetry_detaches_the_support_from_the_origin() {
    let spec = ChiralFlowSpec::singular_value_delta(1.0, 0.5, 1.0).unwrap();
    let curve = evolve_density_chiral(&spec, &uniform_grid(0.0, 3.0, 601)).unwrap();
    let runs = support_detect(&curve, 1e-6).unwrap();
    assert!(runs[0].0 > 0.05, "support starts at {}", runs[0].0);
}

#[test]
fn three_viewpoints_agree() {
    for (b, tau, a_hat) in [(1.0, 0.5, 1.0), (0.5, 0.3, 0.0), (0.8, 0.4, 2.5)] {
        let spec = ChiralFlowSpec::singular_value_delta(b, tau, a_hat).unwrap();
        let grid = uniform_grid(0.05, 3.5, 346);
        let direct = evolve_density_chiral(&spec, &grid).unwrap();
        let block = stieltjes_invert(|z| chiral_block_green(&spec, z), &grid, &DEFAULT_EPS_LADDER).unwrap();
        let squared: Vec<f64> = grid.iter().map(|x| x * x).collect();
        let wishart = wishart_density(&spec, &squared).unwrap();
        for (i, &x) in grid.iter().enumerate() {
            let from_block = (2.0 + a_hat) * block.values[i];
            let from_wishart = 2.0 * x * wishart.values[i];
            let spread = (direct.values[i] - from_block).abs().max((direct.values[i] - from_wishart).abs());
            assert!(
                spread < 1e-5,
                "b {b}, a_hat {a_hat}, x {x}: {} / {from_block} / {from_wishart}",
                direct.values[i]
            );
        }
    }
}
