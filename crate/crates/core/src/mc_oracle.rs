//! Finite-N Monte Carlo samplers for the matrix models behind each flow and
//! distances between their empirical spectra and predicted densities.
//!
//! Variance conventions are fixed by the large-N anchors: the delta-init
//! Gaussian model fills `[-2 sqrt(tau), 2 sqrt(tau)]`, the square chiral model
//! fills `[0, 2 sqrt(2 tau)]`, and the unitary walk starts out like the
//! Gaussian model in the eigenphases.

use std::fmt::Write as _;

use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::chiral_flow::{half_line_weights, ChiralFlowSpec};
use crate::circular_jacobi_flow::wrap_angle;
use crate::error::{FlowError, Result};
use crate::gaussian_flow::{merged_atoms, GaussianFlowSpec};
use crate::measures::{DensityCurve, EnsembleTag};

/// Pooled spectra of independent trials.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalSpectrum {
    /// All trials pooled, ascending.
    pub values: Vec<f64>,
    pub ensemble: EnsembleTag,
    pub n_dim: usize,
    pub m_dim: Option<usize>,
    pub tau_hat: f64,
    pub seed: u64,
    pub trials: usize,
    per_trial: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct TrialLine<'a> {
    trial: usize,
    values: &'a [f64],
}

impl EmpiricalSpectrum {
    fn pooled(
        per_trial: Vec<Vec<f64>>,
        ensemble: EnsembleTag,
        n_dim: usize,
        m_dim: Option<usize>,
        tau_hat: f64,
        seed: u64,
    ) -> Self {
        let mut values: Vec<f64> = per_trial.iter().flatten().copied().collect();
        values.sort_by(f64::total_cmp);
        EmpiricalSpectrum { values, ensemble, n_dim, m_dim, tau_hat, seed, trials: per_trial.len(), per_trial }
    }

    pub fn trial(&self, k: usize) -> Option<&[f64]> {
        self.per_trial.get(k).map(Vec::as_slice)
    }

    /// Squared values, retagged for comparison with Wishart densities.
    pub fn squared(&self) -> EmpiricalSpectrum {
        let per_trial = self.per_trial.iter().map(|t| t.iter().map(|v| v * v).collect()).collect();
        Self::pooled(per_trial, EnsembleTag::Wishart, self.n_dim, self.m_dim, self.tau_hat, self.seed)
    }

    /// One JSON object per trial: `{"trial": k, "values": [...]}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (trial, values) in self.per_trial.iter().enumerate() {
            let line = serde_json::to_string(&TrialLine { trial, values }).expect("finite floats serialize");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,mass\n");
        for (i, m) in self.masses.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", self.bin_edges[i], self.bin_edges[i + 1], m);
        }
        out
    }

    /// Largest deviation of the bin densities from `density(bin centre)`.
    pub fn sup_deviation(&self, density: impl Fn(f64) -> f64) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let (a, b) = (self.bin_edges[i], self.bin_edges[i + 1]);
                (m / (b - a) - density(0.5 * (a + b))).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn check_common(trials: usize, beta: u8) -> Result<()> {
    if trials == 0 {
        return Err(FlowError::InvalidArgument("trials must be positive".into()));
    }
    if beta != 1 && beta != 2 {
        return Err(FlowError::InvalidArgument(format!("beta must be 1 or 2, got {beta}")));
    }
    Ok(())
}

/// Independent stream per trial, so trials can run in any order.
fn trial_rng(seed: u64, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Integer multiplicities `round(n w)` for weights summing to `total`.
fn atom_counts(atoms: &[(f64, f64)], n: usize, total: f64) -> Result<Vec<(f64, usize)>> {
    let mut out = Vec::with_capacity(atoms.len());
    let mut residual = 0.0;
    for &(x, w) in atoms {
        let exact = n as f64 * w / total;
        let count = exact.round();
        residual += (exact - count).abs() / n as f64;
        out.push((x, count as usize));
    }
    let sum: usize = out.iter().map(|p| p.1).sum();
    if sum != n || residual > 1.0 / n as f64 {
        return Err(FlowError::AtomRoundingError { n });
    }
    Ok(out)
}

fn diagonal(counts: &[(f64, usize)]) -> Vec<f64> {
    counts.iter().flat_map(|&(x, c)| std::iter::repeat_n(x, c)).collect()
}

/// GUE-normalized Hermitian matrix: `E|H_ij|² = 1` off the diagonal, unit diagonal variance.
fn gue(n: usize, rng: &mut ChaCha20Rng) -> Mat<C64> {
    let mut h = Mat::<C64>::zeros(n, n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..n {
        h[(j, j)] = C64::new(normal(rng), 0.0);
        for i in j + 1..n {
            let v = C64::new(s * normal(rng), s * normal(rng));
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
    }
    h
}

/// Eigenvalues of `diag(x0) + sqrt(tau/N) H` pooled over trials.
pub fn sample_gaussian_flow(
    n: usize,
    spec: &GaussianFlowSpec,
    beta: u8,
    trials: usize,
    seed: u64,
) -> Result<EmpiricalSpectrum> {
    check_common(trials, beta)?;
    if n == 0 {
        return Err(FlowError::InvalidArgument("matrix size must be positive".into()));
    }
    if !spec.initial.is_atomic() {
        return Err(FlowError::InvalidInitialData("Monte Carlo needs an atomic initial measure".into()));
    }
    let x0 = diagonal(&atom_counts(&merged_atoms(spec.initial.atoms()), n, spec.initial.total_mass())?);
    let scale = (spec.tau_hat / n as f64).sqrt();
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k);
            let eig = if beta == 1 {
                let mut y = Mat::<f64>::zeros(n, n);
                for j in 0..n {
                    // Diagonal variance 2 keeps the real ensemble on the same semicircle.
                    y[(j, j)] = x0[j] + scale * std::f64::consts::SQRT_2 * normal(&mut rng);
                    for i in j + 1..n {
                        let v = scale * normal(&mut rng);
                        y[(i, j)] = v;
                        y[(j, i)] = v;
                    }
                }
                y.self_adjoint_eigenvalues(Side::Lower)
            } else {
                let mut y = gue(n, &mut rng);
                for j in 0..n {
                    for i in 0..n {
                        y[(i, j)] *= scale;
                    }
                    y[(j, j)] += x0[j];
                }
                y.self_adjoint_eigenvalues(Side::Lower)
            };
            eig.map_err(|e| FlowError::InvalidArgument(format!("eigensolver failed: {e:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalSpectrum::pooled(per_trial, EnsembleTag::Gaussian, n, None, spec.tau_hat, seed))
}

/// Singular values of the `m × n` matrix `Z0 + sqrt(2 tau / m) Z` pooled over trials.
pub fn sample_chiral_flow(
    m: usize,
    n: usize,
    spec: &ChiralFlowSpec,
    beta: u8,
    trials: usize,
    seed: u64,
) -> Result<EmpiricalSpectrum> {
    check_common(trials, beta)?;
    if n < m {
        return Err(FlowError::DimensionOrder { m, n });
    }
    if m == 0 {
        return Err(FlowError::InvalidArgument("matrix size must be positive".into()));
    }
    let aspect = n as f64 / m as f64 - 1.0;
    if (aspect - spec.a_hat).abs() > 0.02 {
        return Err(FlowError::InvalidArgument(format!("n/m - 1 = {aspect} does not match a_hat = {}", spec.a_hat)));
    }
    if !spec.initial.is_atomic() {
        return Err(FlowError::InvalidInitialData("Monte Carlo needs an atomic initial measure".into()));
    }
    let z0 = diagonal(&atom_counts(&half_line_weights(spec.initial.atoms()), m, 1.0)?);
    let scale = (2.0 * spec.tau_hat / m as f64).sqrt();
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k);
            let sv = if beta == 1 {
                let mut w = Mat::<f64>::from_fn(m, n, |_, _| 0.0);
                for j in 0..n {
                    for i in 0..m {
                        w[(i, j)] = scale * normal(&mut rng);
                    }
                }
                for (i, &s) in z0.iter().enumerate() {
                    w[(i, i)] += s;
                }
                w.singular_values()
            } else {
                let s2 = scale * std::f64::consts::FRAC_1_SQRT_2;
                let mut w = Mat::<C64>::zeros(m, n);
                for j in 0..n {
                    for i in 0..m {
                        w[(i, j)] = C64::new(s2 * normal(&mut rng), s2 * normal(&mut rng));
                    }
                }
                for (i, &s) in z0.iter().enumerate() {
                    w[(i, i)] += s;
                }
                w.singular_values()
            };
            sv.map_err(|e| FlowError::InvalidArgument(format!("SVD failed: {e:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalSpectrum::pooled(per_trial, EnsembleTag::Chiral, n, Some(m), spec.tau_hat, seed))
}

/// `exp(i X)` for Hermitian `X` through its eigendecomposition.
fn unitary_exp(x: &Mat<C64>) -> Result<Mat<C64>> {
    let evd = x.self_adjoint_eigen(Side::Lower).map_err(|e| FlowError::InvalidArgument(format!("{e:?}")))?;
    let v = evd.U();
    let s = evd.S().column_vector();
    let n = x.nrows();
    let scaled = Mat::<C64>::from_fn(n, n, |i, j| v[(i, j)] * C64::from_polar(1.0, s[j].re));
    Ok(&scaled * v.adjoint())
}

/// Eigenphases of `U_steps` with `U_0 = 1` and `U <- exp(i sqrt(tau / (N steps)) H) U`.
pub fn sample_circular_flow(n: usize, steps: usize, tau_hat: f64, trials: usize, seed: u64) -> Result<EmpiricalSpectrum> {
    check_common(trials, 2)?;
    if n == 0 || !(tau_hat >= 0.0) || !tau_hat.is_finite() {
        return Err(FlowError::InvalidArgument("need n > 0 and finite tau_hat >= 0".into()));
    }
    if (steps as f64) < 50.0 * tau_hat || steps == 0 {
        return Err(FlowError::DiscretizationTooCoarse { steps, tau_hat });
    }
    let scale = (tau_hat / (n * steps) as f64).sqrt();
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|k| {
            if tau_hat == 0.0 {
                return Ok(vec![0.0; n]);
            }
            let mut rng = trial_rng(seed, k);
            let mut u = Mat::<C64>::identity(n, n);
            for _ in 0..steps {
                let mut h = gue(n, &mut rng);
                for j in 0..n {
                    for i in 0..n {
                        h[(i, j)] *= scale;
                    }
                }
                u = &unitary_exp(&h)? * &u;
            }
            let eig = u.eigenvalues().map_err(|e| FlowError::InvalidArgument(format!("{e:?}")))?;
            Ok(eig.iter().map(|l| wrap_angle(l.arg())).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalSpectrum::pooled(per_trial, EnsembleTag::Circular, n, None, tau_hat, seed))
}

/// Equal-width histogram over the sample range.
pub fn empirical_histogram(s: &EmpiricalSpectrum, bins: usize) -> Result<Histogram> {
    histogram_on(s, bins, None)
}

/// Equal-width histogram on `[lo, hi]`; samples outside are dropped before normalizing.
pub fn empirical_histogram_on(s: &EmpiricalSpectrum, bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    histogram_on(s, bins, Some((lo, hi)))
}

fn histogram_on(s: &EmpiricalSpectrum, bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if bins < 10 {
        return Err(FlowError::InvalidArgument(format!("need at least 10 bins, got {bins}")));
    }
    if s.values.is_empty() {
        return Err(FlowError::EmptyMeasure);
    }
    let (mut lo, mut hi) = range.unwrap_or((s.values[0], s.values[s.values.len() - 1]));
    if !(hi > lo) {
        if range.is_some() {
            return Err(FlowError::InvalidArgument(format!("empty histogram range [{lo}, {hi}]")));
        }
        // A point mass: keep it narrow so distances stay exact to O(delta).
        let delta = 1e-9 * (1.0 + lo.abs());
        lo -= delta;
        hi += delta;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut total = 0usize;
    for &v in &s.values {
        if v < lo || v > hi {
            continue;
        }
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(FlowError::EmptyMeasure);
    }
    let bin_edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let masses = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(Histogram { bin_edges, masses })
}

/// `∫ |F_hist - F_curve|`, with the histogram uniform inside each bin.
pub fn wasserstein1(h: &Histogram, curve: &DensityCurve) -> Result<f64> {
    let mass = curve.mass()?;
    if (mass - 1.0).abs() > 1e-3 {
        return Err(FlowError::DomainMismatch(format!("curve mass {mass} is not 1")));
    }
    let curve_cdf = curve.cumulative()?;
    let mut hist_cdf = vec![0.0];
    for m in &h.masses {
        hist_cdf.push(hist_cdf[hist_cdf.len() - 1] + m);
    }
    let mut xs: Vec<f64> = h.bin_edges.iter().chain(&curve.grid).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let diff = |x: f64| piecewise_linear(&h.bin_edges, &hist_cdf, x) - piecewise_linear(&curve.grid, &curve_cdf, x) / mass;
    let mut total = 0.0;
    let mut prev = diff(xs[0]);
    for w in xs.windows(2) {
        let next = diff(w[1]);
        total += abs_linear_integral(prev, next, w[1] - w[0]);
        prev = next;
    }
    Ok(total)
}

/// Exact `∫ |F_samples - F_curve|` against the raw empirical CDF.
pub fn wasserstein1_samples(values: &[f64], curve: &DensityCurve) -> Result<f64> {
    if values.is_empty() {
        return Err(FlowError::EmptyMeasure);
    }
    let mass = curve.mass()?;
    if (mass - 1.0).abs() > 1e-3 {
        return Err(FlowError::DomainMismatch(format!("curve mass {mass} is not 1")));
    }
    let curve_cdf = curve.cumulative()?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut xs: Vec<f64> = sorted.iter().chain(&curve.grid).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let n = sorted.len() as f64;
    let mut total = 0.0;
    for w in xs.windows(2) {
        // The empirical CDF is constant on [w0, w1).
        let fe = sorted.partition_point(|&v| v <= w[0]) as f64 / n;
        let a = fe - piecewise_linear(&curve.grid, &curve_cdf, w[0]) / mass;
        let b = fe - piecewise_linear(&curve.grid, &curve_cdf, w[1]) / mass;
        total += abs_linear_integral(a, b, w[1] - w[0]);
    }
    Ok(total)
}

/// `∫ |F_a - F_b|` between two empirical distributions.
pub fn wasserstein1_between(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(FlowError::EmptyMeasure);
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let mut xs: Vec<f64> = sa.iter().chain(&sb).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    Ok(xs
        .windows(2)
        .map(|w| {
            let fa = sa.partition_point(|&v| v <= w[0]) as f64 / na;
            let fb = sb.partition_point(|&v| v <= w[0]) as f64 / nb;
            (fa - fb).abs() * (w[1] - w[0])
        })
        .sum())
}

/// Linear interpolation clamped to the end values outside the knots.
fn piecewise_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= x);
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

/// `∫_0^h |a + (b - a) s / h| ds`.
fn abs_linear_integral(a: f64, b: f64, h: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * h * (a.abs() + b.abs())
    } else {
        0.5 * h * (a * a + b * b) / (a.abs() + b.abs())
    }
}
