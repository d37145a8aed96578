use proptest::prelude::*;
use specflow::measures::{
    green_of_measure, hilbert_transform, stieltjes_invert, uniform_grid, AcPart, Domain, SpectralMeasure, Symmetry,
    DEFAULT_EPS_LADDER,
};
use specflow::C64;

/// Semicircle bump of radius `r` centered at `c`, sampled on `n` points across its support.
fn bump(c: f64, r: f64, weight: f64, n: usize) -> AcPart {
    let grid = uniform_grid(c - r, c + r, n);
    let values = grid
        .iter()
        .map(|&x| {
            let u = (x - c) / r;
            weight * 2.0 / (std::f64::consts::PI * r) * (1.0 - u * u).max(0.0).sqrt()
        })
        .collect();
    AcPart { grid, values }
}

fn measure(atoms: Vec<(f64, f64)>, ac: Option<AcPart>) -> SpectralMeasure {
    SpectralMeasure::new(atoms, ac, Symmetry::None, Domain::RealLine).unwrap()
}

fn atoms_within(span: f64, max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-span..span, 0.05..1.0f64), 1..=max)
}

fn random_measure(span: f64) -> impl Strategy<Value = SpectralMeasure> {
    (atoms_within(span, 5), prop::option::of((-span * 0.5..span * 0.5, 0.1..span * 0.5, 0.1..1.0f64))).prop_map(
        move |(atoms, bump_params)| {
            let ac = bump_params.map(|(c, r, w)| bump(c, r, w, 201));
            measure(atoms, ac)
        },
    )
}

fn unit_mass_measure(span: f64) -> impl Strategy<Value = SpectralMeasure> {
    random_measure(span).prop_map(|m| {
        let mass = m.total_mass();
        m.scaled(1.0 / mass).unwrap()
    })
}

/// `Re G(x + i eps)` extrapolated to `eps = 0` over the default ladder, assuming an expansion in powers of `eps`.
fn boundary_real_part(m: &SpectralMeasure, x: f64) -> f64 {
    let f: Vec<f64> = DEFAULT_EPS_LADDER
        .iter()
        .map(|&e| {
            let plus = green_of_measure(m, C64::new(x, e)).unwrap();
            let minus = green_of_measure(m, C64::new(x, -e)).unwrap();
            0.5 * (plus + minus).re
        })
        .collect();
    let first = 2.0 * f[1] - f[0];
    let second = 2.0 * f[2] - f[1];
    (4.0 * second - first) / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn upper_half_plane_maps_to_lower(m in random_measure(3.0), re in -5.0..5.0f64, im in 1e-3..5.0f64) {
        let g = green_of_measure(&m, C64::new(re, im)).unwrap();
        prop_assert!(g.im < 0.0, "G({re} + {im}i) = {g}");
    }

    #[test]
    fn conjugate_symmetry(m in random_measure(3.0), re in -5.0..5.0f64, im in 1e-3..5.0f64) {
        let z = C64::new(re, im);
        let up = green_of_measure(&m, z).unwrap();
        let down = green_of_measure(&m, z.conj()).unwrap();
        prop_assert!((down - up.conj()).norm() <= 1e-14 * up.norm().max(1.0));
    }

    // The decay rate is the first moment over |z|, so the support stays inside [-1, 1].
    #[test]
    fn far_field_decay(m in unit_mass_measure(0.9), angle in 0.0..std::f64::consts::TAU) {
        let z = C64::from_polar(1e6, angle);
        let g = green_of_measure(&m, z).unwrap();
        prop_assert!((z * g - m.total_mass()).norm() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn inversion_reproduces_the_density(c in -1.0..1.0f64, r in 0.5..2.0f64) {
        let ac = bump(c, r, 1.0, 2001);
        let m = measure(vec![], Some(ac.clone()));
        let curve = stieltjes_invert(|z| green_of_measure(&m, z), &ac.grid, &DEFAULT_EPS_LADDER).unwrap();
        let h = ac.grid[1] - ac.grid[0];
        let l1: f64 = curve.values.iter().zip(&ac.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * h;
        prop_assert!(l1 < 1e-3, "L1 {l1:e}");
    }

    #[test]
    fn hilbert_transform_is_the_boundary_real_part(
        c in -1.0..1.0f64,
        r in 0.5..2.0f64,
        frac in -0.9..0.9f64,
        atom in prop::option::of((3.0..4.0f64, 0.1..1.0f64)),
    ) {
        let m = measure(atom.into_iter().collect(), Some(bump(c, r, 1.0, 2001)));
        let x = c + frac * r;
        let pv = hilbert_transform(&m, x).unwrap();
        let boundary = boundary_real_part(&m, x);
        prop_assert!((pv - boundary).abs() < 1e-5, "x = {x}: {pv} vs {boundary}");
    }
}
