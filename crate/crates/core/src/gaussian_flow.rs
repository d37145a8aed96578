//! Gaussian flow: the density of `X0 + sqrt(tau) H` in the large-N limit.
//!
//! The evolved Green's function solves `G = G0(z - tau_hat G)`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{FlowError, Result};
use crate::measures::{
    check_ladder, green_of_measure, green_with_derivative, invert_point, DensityCurve, Domain, EnsembleTag,
    SpectralMeasure,
};
use crate::rootflow::{
    density_sweep, herglotz_select, path_between, polynomial_roots, poly_add, poly_mul, poly_scale_by,
    solve_by_descent, GreenEvaluation, Residual, DEFAULT_NEWTON_TOL, FAR_FIELD,
};

/// Initial data with more atoms than this are solved by continuation.
pub(crate) const MAX_POLYNOMIAL_ATOMS: usize = 6;
const UNIT_MASS_TOLERANCE: f64 = 1e-4;
/// Polished roots with a larger relative residual are discarded.
const ROOT_FILTER: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct GaussianFlowSpec {
    pub initial: SpectralMeasure,
    pub tau_hat: f64,
}

impl GaussianFlowSpec {
    pub fn new(initial: SpectralMeasure, tau_hat: f64) -> Result<Self> {
        if !(tau_hat >= 0.0) || !tau_hat.is_finite() {
            return Err(FlowError::InvalidArgument(format!("tau_hat must be finite and nonnegative, got {tau_hat}")));
        }
        if initial.domain() != Domain::RealLine {
            return Err(FlowError::InvalidMeasure("Gaussian flow needs a real-line measure".into()));
        }
        if (initial.total_mass() - 1.0).abs() > UNIT_MASS_TOLERANCE {
            return Err(FlowError::InvalidMeasure(format!("initial mass {} is not 1", initial.total_mass())));
        }
        Ok(GaussianFlowSpec { initial, tau_hat })
    }

    /// `|G - G0(z - tau_hat G)|`.
    pub fn residual(&self, z: C64, g: C64) -> Result<f64> {
        Ok((g - green_of_measure(&self.initial, z - self.tau_hat * g)?).norm())
    }
}

/// Atoms with equal locations merged.
pub(crate) fn merged_atoms(atoms: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (x, w) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 += w,
            _ => out.push((x, w)),
        }
    }
    out
}

/// `G Π(v - x_i) - Σ w_i Π_{j≠i}(v - x_j)` with `v = z - tau_hat G`, ascending in G.
fn gaussian_polynomial(atoms: &[(f64, f64)], tau_hat: f64, z: C64) -> Vec<C64> {
    let one = C64::new(1.0, 0.0);
    let factor = |x: f64| vec![z - x, C64::new(-tau_hat, 0.0)];
    let mut product = vec![one];
    for &(x, _) in atoms {
        product = poly_mul(&product, &factor(x));
    }
    let mut poly = poly_mul(&product, &[C64::new(0.0, 0.0), one]);
    for (i, &(_, w)) in atoms.iter().enumerate() {
        let mut rest = vec![one];
        for (j, &(x, _)) in atoms.iter().enumerate() {
            if j != i {
                rest = poly_mul(&rest, &factor(x));
            }
        }
        poly = poly_add(&poly, &poly_scale_by(&rest, C64::new(-w, 0.0)));
    }
    poly
}

/// Residual of `G = G0(z - tau_hat G)` for atomic `G0`, with its g-derivative.
fn atomic_residual(atoms: &[(f64, f64)], tau_hat: f64, g: C64, z: C64) -> (C64, C64) {
    let v = z - tau_hat * g;
    let mut value = g;
    let mut deriv = C64::new(1.0, 0.0);
    for &(x, w) in atoms {
        let inv = 1.0 / (v - x);
        value -= w * inv;
        deriv -= tau_hat * w * inv * inv;
    }
    (value, deriv)
}

/// Newton polish steps per polynomial root; near-double roots converge only linearly.
const MAX_POLISH_STEPS: usize = 40;

/// Roots of a polynomial reduction, polished on the unreduced residual and
/// filtered. `residual` returns the residual and its derivative.
pub(crate) fn admissible_roots(poly: &[C64], residual: impl Fn(C64) -> (C64, C64)) -> Result<Vec<C64>> {
    let mut out = Vec::new();
    for root in polynomial_roots(poly)? {
        let mut g = root;
        let (mut r, mut d) = residual(g);
        for _ in 0..MAX_POLISH_STEPS {
            if !(r.norm() > 0.0) || d.norm() == 0.0 {
                break;
            }
            let next = g - r / d;
            let (nr, nd) = residual(next);
            if !(nr.norm() < r.norm()) {
                break;
            }
            g = next;
            r = nr;
            d = nd;
        }
        if r.norm() <= ROOT_FILTER * (1.0 + g.norm()) && g.is_finite() {
            out.push(g);
        }
    }
    Ok(out)
}

/// Root selection: the unique Herglotz root when there is one, otherwise the
/// root reached by closest-root tracking from the far field.
pub(crate) fn select_root(
    z: C64,
    mass: f64,
    candidates_at: &dyn Fn(C64) -> Result<Vec<C64>>,
    roots: &[C64],
) -> Result<C64> {
    let strict: Vec<C64> = roots.iter().copied().filter(|r| r.im * z.im < -1e-12 * (1.0 + r.norm())).collect();
    if strict.len() == 1 {
        return Ok(strict[0]);
    }
    let sign = if z.im < 0.0 { -1.0 } else { 1.0 };
    let start = C64::new(z.re, sign * FAR_FIELD);
    let mut current = herglotz_select(&candidates_at(start)?, start, Some(mass / start), mass)?;
    for w in path_between(start, z) {
        let pool = if w == z { roots.to_vec() } else { candidates_at(w)? };
        if pool.is_empty() {
            return Err(FlowError::BranchAmbiguity { z: w });
        }
        current = herglotz_select(&pool, w, Some(current), mass)?;
    }
    Ok(current)
}

fn polynomial_green(spec: &GaussianFlowSpec, atoms: &[(f64, f64)], z: C64) -> Result<GreenEvaluation> {
    let tau = spec.tau_hat;
    let candidates = |w: C64| admissible_roots(&gaussian_polynomial(atoms, tau, w), |g| atomic_residual(atoms, tau, g, w));
    let roots = candidates(z)?;
    if roots.is_empty() {
        return Err(FlowError::BranchAmbiguity { z });
    }
    let g = select_root(z, spec.initial.total_mass(), &candidates, &roots)?;
    Ok(finish(spec, z, g))
}

fn finish(spec: &GaussianFlowSpec, z: C64, g: C64) -> GreenEvaluation {
    let residual = spec.residual(z, g).unwrap_or(f64::INFINITY);
    let herglotz = z.im == 0.0 || g.im * z.im <= 0.0;
    GreenEvaluation { z, g, residual, branch_ok: herglotz && residual < 1e-8, newton_iters: 0 }
}

/// Implicit equation for gridded initial data.
struct GaussianResidual<'a> {
    spec: &'a GaussianFlowSpec,
}

impl Residual for GaussianResidual<'_> {
    fn residual(&self, g: C64, z: C64) -> Result<(C64, C64)> {
        let tau = self.spec.tau_hat;
        let (g0, dg0) = green_with_derivative(&self.spec.initial, z - tau * g)?;
        Ok((g - g0, 1.0 + tau * dg0))
    }

    fn seed(&self, z: C64) -> C64 {
        self.spec.initial.total_mass() / z
    }
}

fn uses_polynomial(spec: &GaussianFlowSpec) -> bool {
    spec.initial.is_atomic() && merged_atoms(spec.initial.atoms()).len() <= MAX_POLYNOMIAL_ATOMS
}

/// Evolved Green's function at `z`.
pub fn evolve_green(spec: &GaussianFlowSpec, z: C64) -> Result<GreenEvaluation> {
    if spec.tau_hat == 0.0 {
        let g = green_of_measure(&spec.initial, z)?;
        return Ok(finish(spec, z, g));
    }
    if uses_polynomial(spec) {
        return polynomial_green(spec, &merged_atoms(spec.initial.atoms()), z);
    }
    let mut e = solve_by_descent(&GaussianResidual { spec }, z)?;
    e.residual = spec.residual(z, e.g)?;
    e.branch_ok &= e.residual < DEFAULT_NEWTON_TOL.max(1e-8);
    Ok(e)
}

/// Evolved density on `grid` from boundary values over `eps_ladder`.
pub fn evolve_density_with_ladder(spec: &GaussianFlowSpec, grid: &[f64], eps_ladder: &[f64]) -> Result<DensityCurve> {
    check_grid(grid)?;
    check_ladder(eps_ladder)?;
    let values = if spec.tau_hat == 0.0 || uses_polynomial(spec) {
        grid.par_iter()
            .map(|&x| invert_point(x, eps_ladder, |eps| Ok(evolve_green(spec, C64::new(x, eps))?.g)))
            .collect::<Result<Vec<f64>>>()?
    } else {
        density_sweep(&GaussianResidual { spec }, grid, eps_ladder)?
    };
    DensityCurve::new(grid.to_vec(), values, spec.tau_hat, EnsembleTag::Gaussian)
}

pub fn evolve_density(spec: &GaussianFlowSpec, grid: &[f64]) -> Result<DensityCurve> {
    evolve_density_with_ladder(spec, grid, &crate::measures::DEFAULT_EPS_LADDER)
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
        return Err(FlowError::InvalidArgument("grid must be finite, strictly increasing, with >= 2 points".into()));
    }
    Ok(())
}

/// Semicircle of variance 1/4, the flow of a delta at `tau_hat = 1/4`.
pub fn wigner_semicircle(x: f64) -> f64 {
    semicircle_density(x, 0.25)
}

/// `sqrt(4 tau - x²) / (2 pi tau)` on `|x| ≤ 2 sqrt(tau)`.
pub fn semicircle_density(x: f64, tau_hat: f64) -> f64 {
    let r = 4.0 * tau_hat - x * x;
    if r <= 0.0 || tau_hat <= 0.0 {
        0.0
    } else {
        r.sqrt() / (2.0 * PI * tau_hat)
    }
}

/// Density of the two-delta flow at the time its two intervals merge, on `|y| ≤ sqrt(27/8)`.
pub fn two_delta_merged_density(y: f64) -> f64 {
    let r = 27.0 - 8.0 * y * y;
    if r < 0.0 {
        return 0.0;
    }
    let s = r.sqrt();
    let b = 3.0 * 3f64.sqrt();
    y.abs().cbrt() / (2.0 * 3f64.sqrt() * PI) * ((b + s).powf(2.0 / 3.0) - (b - s).max(0.0).powf(2.0 / 3.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{uniform_grid, AcPart, Symmetry};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn delta_spec(tau: f64) -> GaussianFlowSpec {
        GaussianFlowSpec::new(SpectralMeasure::delta(0.0, 1.0), tau).unwrap()
    }

    #[test]
    fn delta_at_quarter_time_outside_the_support() {
        let e = evolve_green(&delta_spec(0.25), c(1.25, 0.0)).unwrap();
        assert!((e.g - 1.0).norm() < 1e-12, "{}", e.g);
    }

    #[test]
    fn zero_time_is_the_initial_transform() {
        let m = SpectralMeasure::symmetric_pair(1.0, 1.0);
        let spec = GaussianFlowSpec::new(m.clone(), 0.0).unwrap();
        let z = c(0.3, 0.4);
        assert_eq!(evolve_green(&spec, z).unwrap().g, green_of_measure(&m, z).unwrap());
    }

    #[test]
    fn two_delta_solution_solves_the_cubic() {
        let spec = GaussianFlowSpec::new(SpectralMeasure::symmetric_pair(1.0, 1.0), 1.0).unwrap();
        for z in [c(0.5, 0.2), c(-1.3, 0.01), c(2.0, -0.7)] {
            let g = evolve_green(&spec, z).unwrap().g;
            let cubic = g * g * g - 2.0 * z * g * g + (z * z) * g - z;
            assert!(cubic.norm() < 1e-10, "{cubic}");
            assert!(g.im * z.im < 0.0);
        }
    }

    #[test]
    fn semicircle_density_at_the_origin() {
        let curve = evolve_density(&delta_spec(0.25), &[-0.5, 0.0, 0.5]).unwrap();
        assert!((curve.values[1] - 2.0 / PI).abs() < 1e-5);
        assert_eq!(curve.ensemble_tag, EnsembleTag::Gaussian);
    }

    #[test]
    fn two_delta_density_vanishes_at_the_merge_point() {
        let spec = GaussianFlowSpec::new(SpectralMeasure::symmetric_pair(1.0, 1.0), 1.0).unwrap();
        let curve = evolve_density(&spec, &[-0.1, 0.0, 0.1]).unwrap();
        assert!(curve.values[1] < 1e-3, "{}", curve.values[1]);
    }

    #[test]
    fn closed_forms() {
        assert_eq!(wigner_semicircle(0.0), 2.0 / PI);
        assert_eq!(wigner_semicircle(1.0), 0.0);
        assert_eq!(two_delta_merged_density((27.0f64 / 8.0).sqrt()), 0.0);
        assert_eq!(two_delta_merged_density(0.0), 0.0);
    }

    #[test]
    fn gridded_initial_data_uses_continuation() {
        let grid = uniform_grid(-1.0, 1.0, 801);
        let values = grid.iter().map(|&x| wigner_semicircle(x)).collect();
        let m = SpectralMeasure::new(vec![], Some(AcPart { grid, values }), Symmetry::Even, Domain::RealLine).unwrap();
        let spec = GaussianFlowSpec::new(m, 0.25).unwrap();
        // Semicircle of variance 1/4 evolved by 1/4 is the semicircle of variance 1/2.
        let z = c(0.3, 0.2);
        let g = evolve_green(&spec, z).unwrap().g;
        let exact = (z - (z * z - 2.0).sqrt()) / 1.0;
        assert!((g - exact).norm() < 1e-5, "{g} vs {exact}");
        assert!(spec.residual(z, g).unwrap() < 1e-10);
    }

    #[test]
    fn more_than_six_atoms_use_continuation() {
        let atoms: Vec<(f64, f64)> = (0..8).map(|k| (k as f64 - 3.5, 0.125)).collect();
        let m = SpectralMeasure::new(atoms.clone(), None, Symmetry::Even, Domain::RealLine).unwrap();
        let spec = GaussianFlowSpec::new(m, 0.3).unwrap();
        let z = c(0.2, 0.5);
        let e = evolve_green(&spec, z).unwrap();
        assert!(e.residual < 1e-10 && e.branch_ok);
        let poly = GaussianFlowSpec { initial: spec.initial.clone(), tau_hat: 0.3 };
        let direct = polynomial_green(&poly, &merged_atoms(&atoms), z).unwrap();
        assert!((direct.g - e.g).norm() < 1e-9);
    }

    #[test]
    fn non_unit_mass_is_rejected() {
        let r = GaussianFlowSpec::new(SpectralMeasure::delta(0.0, 2.0), 0.1);
        assert!(matches!(r, Err(FlowError::InvalidMeasure(_))));
    }
}
