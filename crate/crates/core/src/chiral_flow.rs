//! Chiral and Wishart flows: singular values of `Z0 + sqrt(tau) Z` for a
//! rectangular Gaussian `Z` with aspect ratio `n/m = 1 + a_hat`.
//!
//! Three equivalent Green's functions are exposed: the symmetrized chiral
//! function `G^c` of the even singular-value density (total mass 2), the
//! block-matrix function `g^ch` which adds the `n - m` zero modes, and the
//! Wishart function `g^W` of the squared singular values.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{FlowError, Result};
use crate::gaussian_flow::{admissible_roots, check_grid, merged_atoms, select_root};
use crate::measures::{
    check_ladder, green_with_derivative, invert_point, DensityCurve, Domain, EnsembleTag, SpectralMeasure, Symmetry,
    DEFAULT_EPS_LADDER,
};
use crate::rootflow::{
    density_sweep, poly_add, poly_mul, poly_scale_by, solve_by_descent, GreenEvaluation, Residual,
};

const MAX_POLYNOMIAL_PAIRS: usize = 3;
const CHIRAL_MASS: f64 = 2.0;
const MASS_TOLERANCE: f64 = 1e-4;
/// Below this modulus chiral evaluations go through the Wishart variable.
const SMALL_Z: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct ChiralFlowSpec {
    pub initial: SpectralMeasure,
    pub tau_hat: f64,
    pub a_hat: f64,
}

impl ChiralFlowSpec {
    pub fn new(initial: SpectralMeasure, tau_hat: f64, a_hat: f64) -> Result<Self> {
        if !(tau_hat >= 0.0) || !tau_hat.is_finite() {
            return Err(FlowError::InvalidArgument(format!("tau_hat must be finite and nonnegative, got {tau_hat}")));
        }
        if !(a_hat >= 0.0) || !a_hat.is_finite() {
            return Err(FlowError::InvalidArgument(format!("a_hat must be finite and nonnegative, got {a_hat}")));
        }
        if initial.domain() != Domain::RealLine || initial.symmetry() != Symmetry::Even {
            return Err(FlowError::InvalidMeasure("chiral flow needs an even real-line measure".into()));
        }
        if (initial.total_mass() - CHIRAL_MASS).abs() > MASS_TOLERANCE {
            return Err(FlowError::InvalidMeasure(format!("initial mass {} is not 2", initial.total_mass())));
        }
        Ok(ChiralFlowSpec { initial, tau_hat, a_hat })
    }

    /// Initial singular values all at `b`: atoms at `±b` of weight 1 (or `2 δ` when `b = 0`).
    pub fn singular_value_delta(b: f64, tau_hat: f64, a_hat: f64) -> Result<Self> {
        Self::new(SpectralMeasure::symmetric_pair(b.abs(), CHIRAL_MASS), tau_hat, a_hat)
    }

    /// `|G - ∫ rho0(mu) / (v - 2 a tau / z - mu² / v)|` with `v = z - tau G`.
    pub fn residual(&self, z: C64, g: C64) -> Result<f64> {
        Ok(chiral_continuum_residual(self, g, z)?.0.norm())
    }

    /// `|g - F ∫ rhoW0(y) / (x F² - 2 a tau F - y)|` with `F = 1 - 2 tau g`.
    pub fn wishart_residual(&self, x: C64, g: C64) -> Result<f64> {
        Ok(wishart_continuum_residual(self, g, x)?.0.norm())
    }

    fn pairs(&self) -> Option<Vec<(f64, f64)>> {
        if !self.initial.is_atomic() {
            return None;
        }
        let pairs = half_line_weights(self.initial.atoms());
        (pairs.len() <= MAX_POLYNOMIAL_PAIRS).then_some(pairs)
    }
}

/// Half-line weights `(mu, h)`: a `±mu` pair contributes its per-atom weight,
/// an atom at the origin half its weight.
pub(crate) fn half_line_weights(atoms: &[(f64, f64)]) -> Vec<(f64, f64)> {
    merged_atoms(atoms)
        .into_iter()
        .filter(|a| a.0 >= 0.0)
        .map(|(mu, w)| if mu == 0.0 { (0.0, 0.5 * w) } else { (mu, w) })
        .collect()
}

/// `G ΠD_j - Σ 2h_j z v Π_{i≠j} D_i`, `D_j = z v² - 2 a tau v - z mu_j²`, ascending in G.
fn chiral_polynomial(pairs: &[(f64, f64)], tau: f64, a: f64, z: C64) -> Vec<C64> {
    let one = C64::new(1.0, 0.0);
    let v = [z, C64::new(-tau, 0.0)];
    let v2 = poly_mul(&v, &v);
    let factor = |mu: f64| {
        let mut d = poly_scale_by(&v2, z);
        d = poly_add(&d, &poly_scale_by(&v, C64::new(-2.0 * a * tau, 0.0)));
        d[0] -= z * mu * mu;
        d
    };
    let mut product = vec![one];
    for &(mu, _) in pairs {
        product = poly_mul(&product, &factor(mu));
    }
    let mut poly = poly_mul(&product, &[C64::new(0.0, 0.0), one]);
    for (j, &(_, h)) in pairs.iter().enumerate() {
        let mut rest = poly_scale_by(&v, -2.0 * h * z);
        for (i, &(mu, _)) in pairs.iter().enumerate() {
            if i != j {
                rest = poly_mul(&rest, &factor(mu));
            }
        }
        poly = poly_add(&poly, &rest);
    }
    poly
}

fn chiral_atomic_residual(pairs: &[(f64, f64)], tau: f64, a: f64, g: C64, z: C64) -> (C64, C64) {
    let v = z - tau * g;
    let mut value = g;
    let mut deriv = C64::new(1.0, 0.0);
    for &(mu, h) in pairs {
        let q = v * v - 2.0 * a * tau * v / z - mu * mu;
        let dq = 2.0 * v - 2.0 * a * tau / z;
        value -= 2.0 * h * v / q;
        deriv += tau * 2.0 * h * (q - v * dq) / (q * q);
    }
    (value, deriv)
}

/// Branch-free continuum form `G - (v / w) G0(w)` with `w² = v (v - 2 a tau / z)`.
fn chiral_continuum_residual(spec: &ChiralFlowSpec, g: C64, z: C64) -> Result<(C64, C64)> {
    if z.norm() == 0.0 {
        return Err(FlowError::PoleProximity { z });
    }
    let (tau, a) = (spec.tau_hat, spec.a_hat);
    let v = z - tau * g;
    let mut w = (v * (v - 2.0 * a * tau / z)).sqrt();
    if w.im < 0.0 {
        w = -w;
    }
    if w.norm() == 0.0 {
        return Err(FlowError::PoleProximity { z });
    }
    let (g0, dg0) = green_with_derivative(&spec.initial, w)?;
    let phi = g0 / w;
    let dphi = dg0 / w - g0 / (w * w);
    let dw = -tau * (v - a * tau / z) / w;
    Ok((g - v * phi, 1.0 + tau * phi - v * dphi * dw))
}

/// `u = x F² - 2 a tau F` and the initial Wishart transform `G0(s) / (2s)`, `s² = u`.
fn wishart_continuum_residual(spec: &ChiralFlowSpec, g: C64, x: C64) -> Result<(C64, C64)> {
    let (tau, a) = (spec.tau_hat, spec.a_hat);
    let f = 1.0 - 2.0 * tau * g;
    let u = x * f * f - 2.0 * a * tau * f;
    let mut s = u.sqrt();
    if s.im < 0.0 {
        s = -s;
    }
    if s.norm() == 0.0 {
        return Err(FlowError::PoleProximity { z: x });
    }
    let (g0, dg0) = green_with_derivative(&spec.initial, s)?;
    let gw0 = g0 / (2.0 * s);
    let dgw0 = (dg0 / (2.0 * s) - g0 / (2.0 * s * s)) / (2.0 * s);
    let du = (2.0 * x * f - 2.0 * a * tau) * (-2.0 * tau);
    Ok((g - f * gw0, 1.0 + 2.0 * tau * gw0 - f * dgw0 * du))
}

/// `g ΠE_j - Σ h_j F Π_{i≠j} E_i`, `E_j = x F² - 2 a tau F - mu_j²`, ascending in g.
fn wishart_polynomial(pairs: &[(f64, f64)], tau: f64, a: f64, x: C64) -> Vec<C64> {
    let one = C64::new(1.0, 0.0);
    let f = [one, C64::new(-2.0 * tau, 0.0)];
    let f2 = poly_mul(&f, &f);
    let factor = |mu: f64| {
        let mut e = poly_add(&poly_scale_by(&f2, x), &poly_scale_by(&f, C64::new(-2.0 * a * tau, 0.0)));
        e[0] -= mu * mu;
        e
    };
    let mut product = vec![one];
    for &(mu, _) in pairs {
        product = poly_mul(&product, &factor(mu));
    }
    let mut poly = poly_mul(&product, &[C64::new(0.0, 0.0), one]);
    for (j, &(_, h)) in pairs.iter().enumerate() {
        let mut rest = poly_scale_by(&f, C64::new(-h, 0.0));
        for (i, &(mu, _)) in pairs.iter().enumerate() {
            if i != j {
                rest = poly_mul(&rest, &factor(mu));
            }
        }
        poly = poly_add(&poly, &rest);
    }
    poly
}

fn wishart_atomic_residual(pairs: &[(f64, f64)], tau: f64, a: f64, g: C64, x: C64) -> (C64, C64) {
    let f = 1.0 - 2.0 * tau * g;
    let de = (2.0 * x * f - 2.0 * a * tau) * (-2.0 * tau);
    let mut value = g;
    let mut deriv = C64::new(1.0, 0.0);
    for &(mu, h) in pairs {
        let e = x * f * f - 2.0 * a * tau * f - mu * mu;
        value -= h * f / e;
        deriv -= h * (-2.0 * tau * e - f * de) / (e * e);
    }
    (value, deriv)
}

struct ChiralResidual<'a>(&'a ChiralFlowSpec);

impl Residual for ChiralResidual<'_> {
    fn residual(&self, g: C64, z: C64) -> Result<(C64, C64)> {
        chiral_continuum_residual(self.0, g, z)
    }
    fn seed(&self, z: C64) -> C64 {
        self.0.initial.total_mass() / z
    }
}

struct WishartResidual<'a>(&'a ChiralFlowSpec);

impl Residual for WishartResidual<'_> {
    fn residual(&self, g: C64, x: C64) -> Result<(C64, C64)> {
        wishart_continuum_residual(self.0, g, x)
    }
    fn seed(&self, x: C64) -> C64 {
        0.5 * self.0.initial.total_mass() / x
    }
}

fn evaluation(z: C64, g: C64, residual: f64) -> GreenEvaluation {
    let herglotz = z.im == 0.0 || g.im * z.im <= 0.0;
    GreenEvaluation { z, g, residual, branch_ok: herglotz && residual < 1e-8, newton_iters: 0 }
}

/// Wishart Green's function from its own implicit equation, without passing through `G^c`.
pub fn wishart_green_direct(spec: &ChiralFlowSpec, x: C64) -> Result<GreenEvaluation> {
    if x.norm() == 0.0 {
        return Err(FlowError::PoleProximity { z: x });
    }
    let g = if let Some(pairs) = spec.pairs() {
        let (tau, a) = (spec.tau_hat, spec.a_hat);
        let candidates = |w: C64| {
            admissible_roots(&wishart_polynomial(&pairs, tau, a, w), |g| wishart_atomic_residual(&pairs, tau, a, g, w))
        };
        let roots = candidates(x)?;
        if roots.is_empty() {
            return Err(FlowError::BranchAmbiguity { z: x });
        }
        select_root(x, 1.0, &candidates, &roots)?
    } else {
        solve_by_descent(&WishartResidual(spec), x)?.g
    };
    Ok(evaluation(x, g, spec.wishart_residual(x, g)?))
}

/// Symmetrized chiral Green's function `G^c(z)`.
pub fn evolve_green_chiral(spec: &ChiralFlowSpec, z: C64) -> Result<GreenEvaluation> {
    if z.norm() == 0.0 {
        return Err(FlowError::PoleProximity { z });
    }
    if spec.tau_hat == 0.0 {
        let g = green_with_derivative(&spec.initial, z)?.0;
        return Ok(evaluation(z, g, 0.0));
    }
    if z.norm() < SMALL_Z {
        if let Some(pairs) = spec.pairs() {
            // Wishart roots mapped back to G^c, so the branch is chosen in z: near
            // the imaginary axis z² hugs the negative reals, where every Wishart
            // root is real and the Herglotz test in z² cannot separate them.
            let (tau, a) = (spec.tau_hat, spec.a_hat);
            let candidates = |w: C64| -> Result<Vec<C64>> {
                let x = w * w;
                let roots = admissible_roots(&wishart_polynomial(&pairs, tau, a, x), |g| {
                    wishart_atomic_residual(&pairs, tau, a, g, x)
                })?;
                Ok(roots.into_iter().map(|g| 2.0 * w * g).collect())
            };
            let roots = candidates(z)?;
            if roots.is_empty() {
                return Err(FlowError::BranchAmbiguity { z });
            }
            let g = select_root(z, CHIRAL_MASS, &candidates, &roots)?;
            let residual = spec.wishart_residual(z * z, g / (2.0 * z))?;
            return Ok(evaluation(z, g, spec.residual(z, g).unwrap_or(residual)));
        }
        let gw = wishart_green_direct(spec, z * z)?;
        let g = 2.0 * z * gw.g;
        return Ok(evaluation(z, g, spec.residual(z, g).unwrap_or(gw.residual)));
    }
    let g = if let Some(pairs) = spec.pairs() {
        let (tau, a) = (spec.tau_hat, spec.a_hat);
        let candidates = |w: C64| {
            admissible_roots(&chiral_polynomial(&pairs, tau, a, w), |g| chiral_atomic_residual(&pairs, tau, a, g, w))
        };
        let roots = candidates(z)?;
        if roots.is_empty() {
            return Err(FlowError::BranchAmbiguity { z });
        }
        select_root(z, CHIRAL_MASS, &candidates, &roots)?
    } else {
        solve_by_descent(&ChiralResidual(spec), z)?.g
    };
    Ok(evaluation(z, g, spec.residual(z, g)?))
}

/// Green's function of the full block-matrix spectrum including the zero modes.
pub fn chiral_block_green(spec: &ChiralFlowSpec, z: C64) -> Result<C64> {
    let gc = evolve_green_chiral(spec, z)?.g;
    let a = spec.a_hat;
    Ok(gc / (2.0 + a) + a / (2.0 + a) / z)
}

/// Wishart Green's function `g^W(x) = G^c(s) / (2 s)` with `s` the principal root of `x`.
pub fn wishart_green(spec: &ChiralFlowSpec, x: C64) -> Result<GreenEvaluation> {
    if x.im == 0.0 && x.re > 0.0 {
        return Err(FlowError::PoleProximity { z: x });
    }
    let s = x.sqrt();
    if s.norm() == 0.0 {
        return Err(FlowError::PoleProximity { z: x });
    }
    let gc = evolve_green_chiral(spec, s)?.g;
    let g = gc / (2.0 * s);
    if !(g.im * x.im <= 0.0) {
        return Err(FlowError::BranchAmbiguity { z: x });
    }
    Ok(evaluation(x, g, spec.wishart_residual(x, g)?))
}

/// Chiral density `rho^c` (even, unit mass on the half line) on `grid`.
pub fn evolve_density_chiral_with_ladder(
    spec: &ChiralFlowSpec,
    grid: &[f64],
    eps_ladder: &[f64],
) -> Result<DensityCurve> {
    check_grid(grid)?;
    check_ladder(eps_ladder)?;
    let pointwise = |x: f64| invert_point(x, eps_ladder, |eps| Ok(evolve_green_chiral(spec, C64::new(x, eps))?.g));
    let values = if spec.tau_hat == 0.0 || spec.pairs().is_some() {
        grid.par_iter().map(|&x| pointwise(x)).collect::<Result<Vec<f64>>>()?
    } else {
        let mut values = density_sweep(&ChiralResidual(spec), grid, eps_ladder)?;
        for (v, &x) in values.iter_mut().zip(grid) {
            if x.abs() < SMALL_Z {
                *v = pointwise(x)?;
            }
        }
        values
    };
    DensityCurve::new(grid.to_vec(), values, spec.tau_hat, EnsembleTag::Chiral)
}

pub fn evolve_density_chiral(spec: &ChiralFlowSpec, grid: &[f64]) -> Result<DensityCurve> {
    evolve_density_chiral_with_ladder(spec, grid, &DEFAULT_EPS_LADDER)
}

/// Wishart density `rho^W(y)` of the squared singular values on `grid`.
pub fn wishart_density(spec: &ChiralFlowSpec, grid: &[f64]) -> Result<DensityCurve> {
    check_grid(grid)?;
    let values = grid
        .par_iter()
        .map(|&y| invert_point(y, &DEFAULT_EPS_LADDER, |eps| Ok(wishart_green(spec, C64::new(y, eps))?.g)))
        .collect::<Result<Vec<f64>>>()?;
    DensityCurve::new(grid.to_vec(), values, spec.tau_hat, EnsembleTag::Wishart)
}

/// `sqrt(8 tau - x²) / (2 pi tau)` on `0 ≤ x ≤ 2 sqrt(2 tau)`.
pub fn chiral_semicircle(x: f64, tau_hat: f64) -> f64 {
    let r = 8.0 * tau_hat - x * x;
    if x < 0.0 || r <= 0.0 || tau_hat <= 0.0 {
        0.0
    } else {
        r.sqrt() / (2.0 * PI * tau_hat)
    }
}

/// `sqrt(8 tau - y) / (4 pi tau sqrt(y))` on `0 < y < 8 tau`.
pub fn marchenko_pastur(y: f64, tau_hat: f64) -> f64 {
    let r = 8.0 * tau_hat - y;
    if y <= 0.0 || r <= 0.0 || tau_hat <= 0.0 {
        0.0
    } else {
        r.sqrt() / (4.0 * PI * tau_hat * y.sqrt())
    }
}

/// Singular-value density of the chiral flow from `2 δ` at `tau_hat = 1/2`.
pub fn quartic_law(x: f64, a_hat: f64) -> f64 {
    let r = -x.powi(4) + (2.0 * a_hat + 4.0) * x * x - a_hat * a_hat;
    if x <= 0.0 || r <= 0.0 {
        0.0
    } else {
        r.sqrt() / (PI * x)
    }
}

/// Support `[lo, hi]` of [`quartic_law`]: the positive roots of its radicand.
pub fn quartic_law_edges(a_hat: f64) -> (f64, f64) {
    let mid = a_hat + 2.0;
    let spread = (mid * mid - a_hat * a_hat).sqrt();
    ((mid - spread).max(0.0).sqrt(), (mid + spread).sqrt())
}

/// Raney density with parameters `(3, 2)` on `0 < x ≤ 27/4`.
pub fn raney_density(x: f64) -> f64 {
    if x <= 0.0 || x > 6.75 {
        return 0.0;
    }
    let b = 3.0 * 3f64.sqrt();
    let s = (27.0 - 4.0 * x).max(0.0).sqrt();
    ((b + s).powf(2.0 / 3.0) - (b - s).max(0.0).powf(2.0 / 3.0)) / (2f64.powf(5.0 / 3.0) * 3f64.sqrt() * PI * x.cbrt())
}

/// Raney numbers `r / (p k + r) · binom(p k + r, k)` in exact integer arithmetic.
pub fn raney_number(p: u64, r: u64, k: u64) -> Result<u128> {
    if p <= 1 || r == 0 || r > p {
        return Err(FlowError::InvalidRaneyParams { p, r });
    }
    let overflow = || FlowError::InvalidArgument(format!("raney_number({p}, {r}, {k}) overflows u128"));
    let n = (p as u128).checked_mul(k as u128).and_then(|v| v.checked_add(r as u128)).ok_or_else(overflow)?;
    let mut binom: u128 = 1;
    for i in 0..k as u128 {
        binom = binom.checked_mul(n - i).ok_or_else(overflow)? / (i + 1);
    }
    Ok(binom.checked_mul(r as u128).ok_or_else(overflow)? / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn raney_numbers() {
        assert_eq!(raney_number(2, 1, 2).unwrap(), 2);
        assert_eq!(raney_number(3, 2, 2).unwrap(), 7);
        let catalan = [1u128, 1, 2, 5, 14, 42, 132];
        for (k, &want) in catalan.iter().enumerate() {
            assert_eq!(raney_number(2, 1, k as u64).unwrap(), want);
        }
        assert_eq!(raney_number(1, 1, 2), Err(FlowError::InvalidRaneyParams { p: 1, r: 1 }));
        assert_eq!(raney_number(3, 4, 2), Err(FlowError::InvalidRaneyParams { p: 3, r: 4 }));
        assert_eq!(raney_number(3, 0, 2), Err(FlowError::InvalidRaneyParams { p: 3, r: 0 }));
    }

    #[test]
    fn quartic_law_edges_for_unit_a() {
        let (lo, hi) = quartic_law_edges(1.0);
        assert!((lo - (2f64.sqrt() - 1.0)).abs() < 1e-14 && (hi - (2f64.sqrt() + 1.0)).abs() < 1e-14);
        assert_eq!(quartic_law(lo * 0.999, 1.0), 0.0);
        assert!(quartic_law(1.0, 1.0) > 0.0);
    }

    #[test]
    fn marchenko_pastur_has_an_inverse_square_root_hard_edge() {
        let ratio = marchenko_pastur(1e-8, 0.125) / marchenko_pastur(1e-6, 0.125);
        assert!((ratio - 10.0).abs() < 1e-4);
    }

    #[test]
    fn chiral_delta_at_the_origin() {
        let spec = ChiralFlowSpec::singular_value_delta(0.0, 0.5, 0.0).unwrap();
        let curve = evolve_density_chiral(&spec, &[0.0, 1.0]).unwrap();
        assert!((curve.values[0] - 2.0 / PI).abs() < 1e-5, "{}", curve.values[0]);
        assert!((curve.values[1] - chiral_semicircle(1.0, 0.5)).abs() < 1e-6);
    }

    #[test]
    fn quartic_law_value_at_root_three() {
        let spec = ChiralFlowSpec::singular_value_delta(0.0, 0.5, 1.0).unwrap();
        let x = 3f64.sqrt();
        let curve = evolve_density_chiral(&spec, &[x, 2.0]).unwrap();
        let want = 2.0 * 2f64.sqrt() / (PI * 3f64.sqrt());
        assert!((curve.values[0] - want).abs() < 1e-4, "{} vs {want}", curve.values[0]);
    }

    #[test]
    fn pair_solution_satisfies_the_cubic_in_scaled_variables() {
        let spec = ChiralFlowSpec::singular_value_delta(1.0, 0.5, 1.0).unwrap();
        for z in [c(0.7, 0.3), c(1.9, 0.05), c(-0.4, 1.2)] {
            let gc = evolve_green_chiral(&spec, z).unwrap().g;
            let g = gc * 0.5 / z;
            let lhs = g * (z * z * (1.0 - g) * (1.0 - g) - (1.0 - g) - 1.0);
            assert!((lhs - (1.0 - g)).norm() < 1e-10, "{}", (lhs - (1.0 - g)).norm());
        }
    }

    #[test]
    fn block_green_at_zero_asymmetry_halves() {
        let spec = ChiralFlowSpec::singular_value_delta(1.0, 0.3, 0.0).unwrap();
        let z = c(0.2, 0.9);
        let gc = evolve_green_chiral(&spec, z).unwrap().g;
        assert!((chiral_block_green(&spec, z).unwrap() - gc / 2.0).norm() < 1e-15);
    }

    #[test]
    fn block_green_far_field() {
        let spec = ChiralFlowSpec::singular_value_delta(1.0, 0.5, 1.0).unwrap();
        let z = c(0.0, 1e5);
        assert!((z * chiral_block_green(&spec, z).unwrap() - 1.0).norm() < 1e-8);
    }

    #[test]
    fn wishart_routes_agree() {
        let spec = ChiralFlowSpec::singular_value_delta(1.0, 0.5, 1.0).unwrap();
        for x in [c(1.0, 0.1), c(3.0, 0.5), c(-0.5, 0.2), c(5.0, -0.3)] {
            let via_chiral = wishart_green(&spec, x).unwrap();
            let direct = wishart_green_direct(&spec, x).unwrap();
            assert!((via_chiral.g - direct.g).norm() < 1e-10, "{x}: {} vs {}", via_chiral.g, direct.g);
            assert!(via_chiral.residual < 1e-9);
        }
    }

    #[test]
    fn wishart_at_zero_time_is_the_initial_transform() {
        let spec = ChiralFlowSpec::singular_value_delta(2.0, 0.0, 0.5).unwrap();
        let x = c(1.0, 1.0);
        let g = wishart_green(&spec, x).unwrap().g;
        assert!((g - 1.0 / (x - 4.0)).norm() < 1e-14);
    }

    #[test]
    fn marchenko_pastur_density_from_the_solver() {
        let spec = ChiralFlowSpec::singular_value_delta(0.0, 0.125, 0.0).unwrap();
        let curve = wishart_density(&spec, &[0.5, 0.9]).unwrap();
        assert!((curve.values[0] - 2.0 / PI).abs() < 1e-5, "{}", curve.values[0]);
        assert!((curve.values[1] - marchenko_pastur(0.9, 0.125)).abs() < 1e-5);
    }

    #[test]
    fn small_arguments_use_the_wishart_variable() {
        let spec = ChiralFlowSpec::singular_value_delta(1.0, 0.5, 1.0).unwrap();
        let z = c(2e-4, 3e-4);
        let e = evolve_green_chiral(&spec, z).unwrap();
        assert!(e.residual < 1e-9 && e.branch_ok, "{e:?}");
        assert!(matches!(evolve_green_chiral(&spec, c(0.0, 0.0)), Err(FlowError::PoleProximity { .. })));
    }

    #[test]
    fn branch_on_the_imaginary_axis_near_the_origin() {
        // Merged pair: the density at 0 is positive, so -Im G^c(i eps) / pi must stay
        // put as eps shrinks instead of jumping to a real Wishart root.
        let spec = ChiralFlowSpec::singular_value_delta(0.9, 0.45, 0.0).unwrap();
        let at = |eps: f64| -evolve_green_chiral(&spec, c(0.0, eps)).unwrap().g.im / PI;
        let reference = at(2e-3);
        for eps in [2.5e-4, 1e-6, 1e-10] {
            assert!((at(eps) - reference).abs() < 0.01, "eps {eps}: {} vs {reference}", at(eps));
        }
    }

    #[test]
    fn gridded_initial_data_matches_the_atomic_solver() {
        // A narrow even bump approximates the pair; compare far from the support.
        let spec_atoms = ChiralFlowSpec::singular_value_delta(0.0, 0.5, 1.0).unwrap();
        let grid = crate::measures::uniform_grid(-0.01, 0.01, 201);
        let values: Vec<f64> = grid.iter().map(|&x| (1e-4 - x * x).max(0.0).sqrt() * 2.0 / (PI * 0.5e-4)).collect();
        let bump = SpectralMeasure::from_density(grid, values, Symmetry::Even, Domain::RealLine).unwrap();
        let spec_bump = ChiralFlowSpec::new(bump, 0.5, 1.0).unwrap();
        let z = c(1.0, 0.5);
        let a = evolve_green_chiral(&spec_atoms, z).unwrap().g;
        let b = evolve_green_chiral(&spec_bump, z).unwrap().g;
        assert!((a - b).norm() < 1e-4, "{a} vs {b}");
    }
}
