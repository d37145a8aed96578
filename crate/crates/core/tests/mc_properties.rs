use specflow::chiral_flow::ChiralFlowSpec;
use specflow::gaussian_flow::{wigner_semicircle, GaussianFlowSpec};
use specflow::mc_oracle::{sample_chiral_flow, sample_circular_flow, sample_gaussian_flow, wasserstein1_samples};
use specflow::measures::{uniform_grid, DensityCurve, EnsembleTag, SpectralMeasure};

/// Delta at the origin run to `tau = 1/4`: the semicircle on `[-1, 1]`.
fn quarter_time_delta() -> GaussianFlowSpec {
    GaussianFlowSpec::new(SpectralMeasure::delta(0.0, 1.0), 0.25).unwrap()
}

fn semicircle() -> DensityCurve {
    DensityCurve::from_fn(uniform_grid(-1.0, 1.0, 4001), 0.25, EnsembleTag::Gaussian, wigner_semicircle).unwrap()
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

#[test]
fn identical_seeds_give_identical_spectra() {
    let gaussian = quarter_time_delta();
    let chiral = ChiralFlowSpec::singular_value_delta(1.0, 0.5, 1.0).unwrap();
    let runs: [&dyn Fn(u64) -> String; 3] = [
        &|seed| sample_gaussian_flow(48, &gaussian, 1, 3, seed).unwrap().to_jsonl(),
        &|seed| sample_chiral_flow(24, 48, &chiral, 2, 3, seed).unwrap().to_jsonl(),
        &|seed| sample_circular_flow(16, 100, 0.5, 3, seed).unwrap().to_jsonl(),
    ];
    for run in runs {
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }
}

#[test]
fn more_trials_bring_the_spectrum_closer_to_the_law() {
    let spec = quarter_time_delta();
    let theory = semicircle();
    let median_w1 = |trials: usize| {
        median(
            (0..5u64)
                .map(|seed| wasserstein1_samples(&sample_gaussian_flow(64, &spec, 2, trials, seed).unwrap().values, &theory).unwrap())
                .collect(),
        )
    };
    let (few, many) = (median_w1(4), median_w1(64));
    assert!(many < few, "median W1: {few:e} at 4 trials, {many:e} at 64");
}

#[test]
fn real_and_complex_ensembles_share_the_global_law() {
    let spec = quarter_time_delta();
    let theory = semicircle();
    let w1 = |beta: u8| wasserstein1_samples(&sample_gaussian_flow(512, &spec, beta, 4, 7).unwrap().values, &theory).unwrap();
    let (real, complex) = (w1(1), w1(2));
    assert!((real - complex).abs() < 0.01, "W1: {real:e} real, {complex:e} complex");
}
