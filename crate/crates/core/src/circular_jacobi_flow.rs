//! Eigenphase flows on the unit circle: unitary Brownian motion (circular)
//! and the trigonometric Jacobi flow, which adds a fixed charge `a_hat` at
//! the origin and mirror symmetry `phi -> -phi`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::characteristics::{CharSystem, ShootingWalker};
use crate::error::{FlowError, Result};
use crate::gaussian_flow::check_grid;
use crate::measures::quadrature::half_cot;
use crate::measures::{
    check_ladder, green_with_derivative, invert_point, DensityCurve, Domain, EnsembleTag, SpectralMeasure, Symmetry,
    DEFAULT_EPS_LADDER,
};
use crate::rootflow::{density_sweep, solve_by_descent, GreenEvaluation, Residual};

const MASS_TOLERANCE: f64 = 1e-4;
/// Distance to the support below which the cot kernel is treated as singular.
const SUPPORT_GAP: f64 = 1e-6;
/// Starting height of Jacobi shooting; the kernel is constant to `exp(-20)` there.
const JACOBI_START_HEIGHT: f64 = 20.0;
/// Angles below this use the pole variable `sin²(z/2)`.
const NEAR_POLE: f64 = 0.5;
/// Starting height of shooting in the pole variable.
const POLE_START_HEIGHT: f64 = 4.0;

#[derive(Clone, Debug)]
pub struct CircularFlowSpec {
    pub initial: SpectralMeasure,
    pub tau_hat: f64,
}

impl CircularFlowSpec {
    pub fn new(initial: SpectralMeasure, tau_hat: f64) -> Result<Self> {
        check_time(tau_hat)?;
        if initial.domain() != Domain::Circle {
            return Err(FlowError::InvalidMeasure("circular flow needs a circle-domain measure".into()));
        }
        if (initial.total_mass() - 1.0).abs() > MASS_TOLERANCE {
            return Err(FlowError::InvalidMeasure(format!("initial mass {} is not 1", initial.total_mass())));
        }
        Ok(CircularFlowSpec { initial, tau_hat })
    }

    /// `|g - (1/2) ∫ cot((z - tau g - mu)/2) rho0(mu) dmu|`.
    pub fn residual(&self, z: C64, g: C64) -> Result<f64> {
        Ok(cot_residual(&self.initial, self.tau_hat, g, z)?.0.norm())
    }
}

fn check_time(tau_hat: f64) -> Result<()> {
    if !(tau_hat >= 0.0) || !tau_hat.is_finite() {
        return Err(FlowError::InvalidArgument(format!("tau_hat must be finite and nonnegative, got {tau_hat}")));
    }
    Ok(())
}

/// Representative of `phi` in `(-pi, pi]`.
pub fn wrap_angle(phi: f64) -> f64 {
    let r = phi - 2.0 * PI * ((phi + PI) / (2.0 * PI)).floor();
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

fn cot_residual(initial: &SpectralMeasure, tau: f64, g: C64, z: C64) -> Result<(C64, C64)> {
    let (g0, dg0) = green_with_derivative(initial, z - tau * g)?;
    Ok((g - g0, 1.0 + tau * dg0))
}

struct CircularResidual<'a>(&'a CircularFlowSpec);

impl Residual for CircularResidual<'_> {
    fn residual(&self, g: C64, z: C64) -> Result<(C64, C64)> {
        cot_residual(&self.0.initial, self.0.tau_hat, g, z)
    }
    fn seed(&self, z: C64) -> C64 {
        C64::new(0.0, -0.5 * z.im.signum() * self.0.initial.total_mass())
    }
}

fn touches_support(m: &SpectralMeasure, w: C64) -> bool {
    if w.im.abs() >= SUPPORT_GAP {
        return false;
    }
    let x = wrap_angle(w.re);
    m.atoms().iter().any(|&(a, _)| wrap_angle(x - a).abs() < SUPPORT_GAP) || m.model().density(x) > 0.0
}

/// Circular Green's function `G°(z) = (1/2) ∫ cot((z - y)/2) rho(y; tau) dy`.
pub fn circular_green(spec: &CircularFlowSpec, z: C64) -> Result<GreenEvaluation> {
    if z.im == 0.0 {
        return Err(FlowError::PoleProximity { z });
    }
    let z = C64::new(wrap_angle(z.re), z.im);
    let g = if spec.tau_hat == 0.0 {
        green_with_derivative(&spec.initial, z)?.0
    } else {
        solve_by_descent(&CircularResidual(spec), z)?.g
    };
    if touches_support(&spec.initial, z - spec.tau_hat * g) {
        return Err(FlowError::PoleProximity { z });
    }
    let residual = spec.residual(z, g)?;
    if residual >= 1e-10 {
        return Err(FlowError::ContinuationStall { last_z: z });
    }
    Ok(GreenEvaluation { z, g, residual, branch_ok: g.im * z.im <= 0.0, newton_iters: 0 })
}

/// Eigenphase density on `phi_grid ⊂ (-pi, pi]`.
pub fn circular_density_with_ladder(
    spec: &CircularFlowSpec,
    phi_grid: &[f64],
    eps_ladder: &[f64],
) -> Result<DensityCurve> {
    check_grid(phi_grid)?;
    check_ladder(eps_ladder)?;
    if phi_grid[0] <= -PI || phi_grid[phi_grid.len() - 1] > PI {
        return Err(FlowError::InvalidArgument("phi grid must lie in (-pi, pi]".into()));
    }
    let values = if spec.tau_hat == 0.0 {
        phi_grid
            .par_iter()
            .map(|&x| invert_point(x, eps_ladder, |eps| green_with_derivative(&spec.initial, C64::new(x, eps)).map(|p| p.0)))
            .collect::<Result<Vec<f64>>>()?
    } else {
        density_sweep(&CircularResidual(spec), phi_grid, eps_ladder)?
    };
    DensityCurve::new(phi_grid.to_vec(), values, spec.tau_hat, EnsembleTag::Circular)
}

pub fn circular_density(spec: &CircularFlowSpec, phi_grid: &[f64]) -> Result<DensityCurve> {
    circular_density_with_ladder(spec, phi_grid, &DEFAULT_EPS_LADDER)
}

#[derive(Clone, Debug)]
pub struct JacobiFlowSpec {
    pub initial: SpectralMeasure,
    pub tau_hat: f64,
    pub a_hat: f64,
}

impl JacobiFlowSpec {
    /// `initial` is the even extension to `(-pi, pi]`, mass 1 on each half.
    pub fn new(initial: SpectralMeasure, tau_hat: f64, a_hat: f64) -> Result<Self> {
        check_time(tau_hat)?;
        if !(a_hat >= 0.0) || !a_hat.is_finite() {
            return Err(FlowError::InvalidArgument(format!("a_hat must be finite and nonnegative, got {a_hat}")));
        }
        if initial.domain() != Domain::Circle || initial.symmetry() != Symmetry::Even {
            return Err(FlowError::InvalidMeasure("Jacobi flow needs an even circle-domain measure".into()));
        }
        if (initial.total_mass() - 2.0).abs() > MASS_TOLERANCE {
            return Err(FlowError::InvalidMeasure(format!("initial mass {} is not 2", initial.total_mass())));
        }
        if a_hat > 0.0 {
            let at_pole = |x: f64| wrap_angle(x).abs() < 1e-12 || PI - wrap_angle(x).abs() < 1e-12;
            let model = initial.model();
            if initial.atoms().iter().any(|&(x, _)| at_pole(x)) || model.density(0.0) > 0.0 || model.density(PI) > 0.0
            {
                return Err(FlowError::InvalidInitialData("initial mass at phi = 0 or pi with a_hat > 0".into()));
            }
        }
        Ok(JacobiFlowSpec { initial, tau_hat, a_hat })
    }

    /// Angles `±phi0`, each of weight 1.
    pub fn mirror_pair(phi0: f64, tau_hat: f64, a_hat: f64) -> Result<Self> {
        let measure = SpectralMeasure::new(vec![(-phi0, 1.0), (phi0, 1.0)], None, Symmetry::Even, Domain::Circle)?;
        Self::new(measure, tau_hat, a_hat)
    }

    /// Circular flow equal to this one at `a_hat = 0` after halving the mass and
    /// doubling the time: `rho^J(phi; tau) = 2 rho°(phi; 2 tau)`.
    pub fn circular_counterpart(&self) -> Result<CircularFlowSpec> {
        let half = self.initial.scaled(0.5)?;
        CircularFlowSpec::new(half, 2.0 * self.tau_hat)
    }

    fn system(&self) -> CharSystem {
        let initial = self.initial.clone();
        CharSystem::jacobi(self.a_hat, move |z| Ok(green_with_derivative(&initial, z)?.0))
    }
}

/// Shooting for one Jacobi target region. Near the charge at `phi = 0` the
/// characteristics run through the pole of `cot(z/2)`, so there the flow is
/// integrated in `x = sin²(z/2)`, `w = G cot(z/2) / 2`, where it reads
/// `dx/dβ = (a/2)(1 - x) + 2wx`, `dw/dβ = -w²/(1 - x)` and is regular at `x = 0`.
struct JacobiShooter<'a> {
    walker: ShootingWalker<'a>,
    near_pole: bool,
}

impl<'a> JacobiShooter<'a> {
    fn start(systems: &'a (CharSystem, CharSystem), tau_hat: f64, target: C64) -> Result<Self> {
        let near_pole = target.re.abs() < NEAR_POLE;
        let walker = if near_pole {
            let x = to_pole_variable(target);
            let sign = if x.im == 0.0 { target.im.signum() } else { x.im.signum() };
            ShootingWalker::start_scaled(&systems.1, C64::new(x.re, POLE_START_HEIGHT * sign), tau_hat, pole_miss_scale)?
        } else {
            ShootingWalker::start(&systems.0, C64::new(target.re, JACOBI_START_HEIGHT * target.im.signum()), tau_hat)?
        };
        Ok(JacobiShooter { walker, near_pole })
    }

    fn green(&mut self, z: C64) -> Result<GreenEvaluation> {
        if !self.near_pole {
            return self.walker.walk_to(z);
        }
        let e = self.walker.walk_to(to_pole_variable(z))?;
        let g = e.g / half_cot(z).0;
        Ok(GreenEvaluation { z, g, residual: e.residual, branch_ok: g.im * z.im <= 0.0, newton_iters: e.newton_iters })
    }
}

/// Miss tolerance in `x` matching the default one in `z`, through `|dx/dz| = |sin z| / 2`.
fn pole_miss_scale(x: C64) -> f64 {
    (x * (1.0 - x)).norm().sqrt() * (1.0 + 2.0 * x.sqrt().asin().norm())
}

fn to_pole_variable(z: C64) -> C64 {
    let s = (0.5 * z).sin();
    s * s
}

impl JacobiFlowSpec {
    /// The flow in `z` and in the pole variable `x = sin²(z/2)`.
    fn systems(&self) -> (CharSystem, CharSystem) {
        let (initial, a) = (self.initial.clone(), self.a_hat);
        let one = C64::new(1.0, 0.0);
        let pole = CharSystem::new(
            move |_, _, _| one,
            move |w, x, _| 0.5 * a * (one - x) + 2.0 * w * x,
            move |w, x, _| -w * w / (one - x),
            // w is even in z and symmetric about pi, so any preimage of x will do.
            move |x| {
                let z = 2.0 * x.sqrt().asin();
                Ok(green_with_derivative(&initial, z)?.0 * half_cot(z).0)
            },
        );
        (self.system(), pole)
    }
}

/// `G^J(z) = (1/2) ∫ cot((z - y)/2) rho^J(y) dy` over the full period, by shooting.
pub fn jacobi_green(spec: &JacobiFlowSpec, z: C64) -> Result<GreenEvaluation> {
    if z.im == 0.0 {
        return Err(FlowError::PoleProximity { z });
    }
    let z = C64::new(wrap_angle(z.re), z.im);
    if spec.tau_hat == 0.0 {
        let g = green_with_derivative(&spec.initial, z)?.0;
        return Ok(GreenEvaluation { z, g, residual: 0.0, branch_ok: true, newton_iters: 0 });
    }
    let systems = spec.systems();
    JacobiShooter::start(&systems, spec.tau_hat, z)?.green(z)
}

/// Jacobi density on `phi_grid ⊂ (0, pi)`, one shooting descent per point.
pub fn jacobi_density_with_ladder(spec: &JacobiFlowSpec, phi_grid: &[f64], eps_ladder: &[f64]) -> Result<DensityCurve> {
    check_grid(phi_grid)?;
    check_ladder(eps_ladder)?;
    if phi_grid[0] <= 0.0 || phi_grid[phi_grid.len() - 1] >= PI {
        return Err(FlowError::InvalidArgument("phi grid must lie in (0, pi)".into()));
    }
    let systems = spec.systems();
    let ladder = eps_ladder;
    let values = phi_grid
        .par_iter()
        .map(|&x| {
            if spec.tau_hat == 0.0 {
                return invert_point(x, ladder, |eps| Ok(green_with_derivative(&spec.initial, C64::new(x, eps))?.0));
            }
            let mut shooter = JacobiShooter::start(&systems, spec.tau_hat, C64::new(x, ladder[0]))?;
            invert_point(x, ladder, |eps| Ok(shooter.green(C64::new(x, eps))?.g))
        })
        .collect::<Result<Vec<f64>>>()?;
    DensityCurve::new(phi_grid.to_vec(), values, spec.tau_hat, EnsembleTag::Jacobi)
}

pub fn jacobi_density(spec: &JacobiFlowSpec, phi_grid: &[f64]) -> Result<DensityCurve> {
    jacobi_density_with_ladder(spec, phi_grid, &DEFAULT_EPS_LADDER)
}
