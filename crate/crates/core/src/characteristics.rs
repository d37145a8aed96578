//! Method of characteristics for first-order Green's-function PDEs.
//!
//! Along a characteristic labelled by its starting point `alpha`,
//! `dt/dβ = time_rate`, `dz/dβ = z_rate`, `dg/dβ = g_rate`, with
//! `z(0) = alpha`, `t(0) = 0` and `g(0)` the initial Green's function.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{FlowError, Result};
use crate::measures::quadrature::half_cot;
use crate::rootflow::{path_between, GreenEvaluation, FAR_FIELD};

type Rate = Arc<dyn Fn(C64, C64, f64) -> C64 + Send + Sync>;
type Initial = Arc<dyn Fn(C64) -> Result<C64> + Send + Sync>;

const BLOWUP: f64 = 1e12;
const DEGENERATE_RATE: f64 = 1e-14;
/// Richardson error allowed per unit of β, relative to `1 + |z| + |g|`.
const STEP_TOLERANCE: f64 = 1e-10;
const MAX_STEPS: usize = 1 << 20;
/// Times a failed walker step is halved before giving up.
const MAX_WALK_SPLITS: u32 = 6;
/// Opening step of a shot as a fraction of the path, and the smallest allowed.
const FIRST_STEP: f64 = 1.0 / 16.0;
const MIN_FRACTION: f64 = 1e-14;
const SHOOTING_TOLERANCE: f64 = 1e-10;
const MAX_SHOOTING_ITERS: usize = 100;
const TINY_JACOBIAN: f64 = 1e-10;

/// Right-hand side of a characteristic system plus its initial data.
#[derive(Clone)]
pub struct CharSystem {
    pub time_rate: Rate,
    pub z_rate: Rate,
    pub g_rate: Rate,
    pub initial_green: Initial,
}

impl CharSystem {
    pub fn new(
        time_rate: impl Fn(C64, C64, f64) -> C64 + Send + Sync + 'static,
        z_rate: impl Fn(C64, C64, f64) -> C64 + Send + Sync + 'static,
        g_rate: impl Fn(C64, C64, f64) -> C64 + Send + Sync + 'static,
        initial_green: impl Fn(C64) -> Result<C64> + Send + Sync + 'static,
    ) -> Self {
        CharSystem {
            time_rate: Arc::new(time_rate),
            z_rate: Arc::new(z_rate),
            g_rate: Arc::new(g_rate),
            initial_green: Arc::new(initial_green),
        }
    }

    /// Inviscid Burgers flow `∂t g + g ∂z g = 0`.
    pub fn gaussian(initial_green: impl Fn(C64) -> Result<C64> + Send + Sync + 'static) -> Self {
        let one = C64::new(1.0, 0.0);
        Self::new(move |_, _, _| one, |g, _, _| g, |_, _, _| C64::new(0.0, 0.0), initial_green)
    }

    /// Chiral flow of the symmetrized Green's function.
    pub fn chiral(a_hat: f64, initial_green: impl Fn(C64) -> Result<C64> + Send + Sync + 'static) -> Self {
        let one = C64::new(1.0, 0.0);
        Self::new(
            move |_, _, _| one,
            move |g, z, _| g + a_hat / z,
            move |g, z, _| a_hat * g / (z * z),
            initial_green,
        )
    }

    /// Wishart flow in the squared variable.
    pub fn wishart(a_hat: f64, initial_green: impl Fn(C64) -> Result<C64> + Send + Sync + 'static) -> Self {
        let half = C64::new(0.5, 0.0);
        Self::new(move |_, _, _| half, move |g, z, _| a_hat + 2.0 * z * g, |g, _, _| -g * g, initial_green)
    }

    /// Jacobi flow on the circle.
    pub fn jacobi(a_hat: f64, initial_green: impl Fn(C64) -> Result<C64> + Send + Sync + 'static) -> Self {
        let one = C64::new(1.0, 0.0);
        Self::new(
            move |_, _, _| one,
            move |g, z, _| a_hat * half_cot(z).0 + g,
            move |g, z, _| -a_hat * g * half_cot(z).1,
            initial_green,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharState {
    pub beta: f64,
    pub z: C64,
    pub g: C64,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharPath {
    pub alpha: C64,
    pub states: Vec<CharState>,
}

impl CharPath {
    /// CSV dump with header `beta,z_re,z_im,g_re,g_im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,z_re,z_im,g_re,g_im\n");
        for s in &self.states {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", s.beta, s.z.re, s.z.im, s.g.re, s.g.im);
        }
        out
    }

    pub fn terminal(&self) -> CharState {
        *self.states.last().expect("paths hold at least the initial state")
    }
}

fn check_state(sys: &CharSystem, s: &CharState) -> Result<C64> {
    if !(s.z.norm() <= BLOWUP && s.g.norm() <= BLOWUP) {
        return Err(FlowError::CharacteristicBlowup { beta: s.beta });
    }
    let rate = (sys.time_rate)(s.g, s.z, s.t);
    if !(rate.norm() >= DEGENERATE_RATE) {
        return Err(FlowError::CharacteristicDegenerate { z: s.z });
    }
    Ok(rate)
}

fn rk4_step(sys: &CharSystem, s: &CharState, h: f64) -> CharState {
    let f = |z: C64, g: C64, t: f64| ((sys.z_rate)(g, z, t), (sys.g_rate)(g, z, t), (sys.time_rate)(g, z, t).re);
    let (kz1, kg1, kt1) = f(s.z, s.g, s.t);
    let (kz2, kg2, kt2) = f(s.z + 0.5 * h * kz1, s.g + 0.5 * h * kg1, s.t + 0.5 * h * kt1);
    let (kz3, kg3, kt3) = f(s.z + 0.5 * h * kz2, s.g + 0.5 * h * kg2, s.t + 0.5 * h * kt2);
    let (kz4, kg4, kt4) = f(s.z + h * kz3, s.g + h * kg3, s.t + h * kt3);
    CharState {
        beta: s.beta + h,
        z: s.z + h / 6.0 * (kz1 + 2.0 * kz2 + 2.0 * kz3 + kz4),
        g: s.g + h / 6.0 * (kg1 + 2.0 * kg2 + 2.0 * kg3 + kg4),
        t: s.t + h / 6.0 * (kt1 + 2.0 * kt2 + 2.0 * kt3 + kt4),
    }
}

/// Fixed-step RK4 from `alpha` to `beta_end` in `steps` steps.
pub fn integrate_fixed(
    sys: &CharSystem,
    alpha: C64,
    beta_end: f64,
    steps: usize,
    mut record: Option<&mut Vec<CharState>>,
) -> Result<CharState> {
    let g0 = (sys.initial_green)(alpha)?;
    let mut s = CharState { beta: 0.0, z: alpha, g: g0, t: 0.0 };
    let h = beta_end / steps as f64;
    if let Some(r) = record.as_deref_mut() {
        r.push(s);
    }
    for k in 0..steps {
        check_state(sys, &s)?;
        s = rk4_step(sys, &s, h);
        if k + 1 == steps {
            s.beta = beta_end;
        }
        if let Some(r) = record.as_deref_mut() {
            r.push(s);
        }
    }
    check_state(sys, &s)?;
    Ok(s)
}

/// Terminal state with step doubling until the Richardson estimate meets the tolerance.
/// Returns the state and the accepted step count.
fn integrate_adaptive(sys: &CharSystem, alpha: C64, beta_end: f64, start_steps: usize) -> Result<(CharState, usize)> {
    let mut n = start_steps.max(1);
    let mut coarse = integrate_fixed(sys, alpha, beta_end, n, None)?;
    loop {
        let fine = integrate_fixed(sys, alpha, beta_end, 2 * n, None)?;
        let scale = 1.0 + fine.z.norm() + fine.g.norm();
        let err = ((fine.z - coarse.z).norm() + (fine.g - coarse.g).norm()) / 15.0;
        if err <= STEP_TOLERANCE * beta_end.abs().max(1e-300) * scale {
            return Ok((fine, 2 * n));
        }
        n *= 2;
        if n > MAX_STEPS {
            return Err(FlowError::CharacteristicDegenerate { z: fine.z });
        }
        coarse = fine;
    }
}

/// RK4 path from β = 0 to `beta_end`, refined by step halving.
pub fn integrate_characteristic(sys: &CharSystem, alpha: C64, beta_end: f64, step: f64) -> Result<CharPath> {
    if !(step > 0.0) || step > beta_end / 10.0 {
        return Err(FlowError::InvalidArgument(format!("step {step} must be positive and at most beta_end/10")));
    }
    let start = (beta_end / step).ceil() as usize;
    let (_, n) = integrate_adaptive(sys, alpha, beta_end, start)?;
    let mut states = Vec::with_capacity(n + 1);
    integrate_fixed(sys, alpha, beta_end, n, Some(&mut states))?;
    Ok(CharPath { alpha, states })
}

/// Locally adaptive RK4 by step doubling: a step is accepted when its Richardson
/// estimate is within `STEP_TOLERANCE` per unit of β. Steps shrink geometrically
/// near poles of the rates instead of refining the whole path. Returns the
/// terminal state and the accepted steps as fractions of `beta_end`.
fn integrate_local(sys: &CharSystem, alpha: C64, beta_end: f64, first: f64) -> Result<(CharState, Vec<f64>)> {
    let g0 = (sys.initial_green)(alpha)?;
    let mut s = CharState { beta: 0.0, z: alpha, g: g0, t: 0.0 };
    let mut fractions = Vec::new();
    let mut done = 0.0;
    let mut h = first.clamp(MIN_FRACTION, 1.0);
    while done < 1.0 {
        check_state(sys, &s)?;
        h = h.min(1.0 - done);
        let step = h * beta_end;
        let coarse = rk4_step(sys, &s, step);
        let fine = rk4_step(sys, &rk4_step(sys, &s, 0.5 * step), 0.5 * step);
        let err = ((fine.z - coarse.z).norm() + (fine.g - coarse.g).norm()) / 15.0;
        let allowed = STEP_TOLERANCE * step.abs() * (1.0 + fine.z.norm() + fine.g.norm());
        let factor = if err > 0.0 { 0.9 * (allowed / err).powf(0.2) } else { 2.0 };
        if err <= allowed {
            s = fine;
            done += h;
            fractions.push(h);
            if fractions.len() > MAX_STEPS {
                return Err(FlowError::CharacteristicDegenerate { z: s.z });
            }
            h *= factor.clamp(0.2, 2.0);
        } else {
            h *= if factor.is_finite() { factor.clamp(0.1, 0.5) } else { 0.1 };
            if h < MIN_FRACTION {
                return Err(FlowError::CharacteristicDegenerate { z: s.z });
            }
        }
    }
    s.beta = beta_end;
    check_state(sys, &s)?;
    Ok((s, fractions))
}

/// Replays the accepted steps of `integrate_local` from another starting point.
fn integrate_replay(sys: &CharSystem, alpha: C64, beta_end: f64, fractions: &[f64]) -> Result<CharState> {
    let g0 = (sys.initial_green)(alpha)?;
    let mut s = CharState { beta: 0.0, z: alpha, g: g0, t: 0.0 };
    for &h in fractions {
        check_state(sys, &s)?;
        let step = h * beta_end;
        s = rk4_step(sys, &rk4_step(sys, &s, 0.5 * step), 0.5 * step);
    }
    s.beta = beta_end;
    check_state(sys, &s)?;
    Ok(s)
}

/// Shooting state carried between neighbouring targets.
#[derive(Clone, Copy, Debug)]
struct Shot {
    alpha: C64,
    jacobian: C64,
    /// First accepted step, as a fraction of the path; seeds the next shot.
    first_step: f64,
    g: C64,
    miss: f64,
}

fn beta_end(sys: &CharSystem, alpha: C64, tau_hat: f64) -> Result<f64> {
    let g0 = (sys.initial_green)(alpha)?;
    let rate = check_state(sys, &CharState { beta: 0.0, z: alpha, g: g0, t: 0.0 })?;
    Ok(tau_hat / rate.re)
}

fn shoot(sys: &CharSystem, target: C64, tau_hat: f64, seed: C64, mut first: f64, prev_j: Option<C64>, scale: f64) -> Result<Shot> {
    let mut alpha = seed;
    let mut last_j: Option<C64> = prev_j;
    let mut best_miss = f64::INFINITY;
    for _ in 0..MAX_SHOOTING_ITERS {
        let end = beta_end(sys, alpha, tau_hat)?;
        let (state, fractions) = integrate_local(sys, alpha, end, first)?;
        first = fractions[0];
        let miss = (target - state.z).norm();
        best_miss = best_miss.min(miss);
        let delta = 1e-7 * (1.0 + alpha.norm());
        let shifted = alpha + delta;
        let end_shifted = beta_end(sys, shifted, tau_hat)?;
        let moved = integrate_replay(sys, shifted, end_shifted, &fractions)?;
        let jacobian = (moved.z - state.z) / delta;
        if jacobian.norm() < TINY_JACOBIAN {
            return Err(FlowError::CausticEncountered { z: state.z });
        }
        if let Some(j) = last_j {
            if (jacobian * j.conj()).re < 0.0 {
                return Err(FlowError::CausticEncountered { z: state.z });
            }
        }
        last_j = Some(jacobian);
        if miss <= SHOOTING_TOLERANCE * scale {
            return Ok(Shot { alpha, jacobian, first_step: first, g: state.g, miss });
        }
        let mut update = (target - state.z) / jacobian;
        // Keep each correction within a fraction of the current distance to the axis.
        let limit = 0.5 * (1.0 + alpha.norm());
        if update.norm() > limit {
            update *= limit / update.norm();
        }
        alpha += update;
    }
    Err(FlowError::ShootingFailure { target, miss: best_miss })
}

/// Finds the characteristic that reaches `z_target` at time `tau_hat` and returns its `g`.
pub fn invert_to_target(sys: &CharSystem, z_target: C64, tau_hat: f64, alpha_seed: C64) -> Result<GreenEvaluation> {
    if tau_hat < 0.0 || !tau_hat.is_finite() {
        return Err(FlowError::InvalidArgument(format!("tau_hat must be finite and nonnegative, got {tau_hat}")));
    }
    if tau_hat == 0.0 {
        let g = (sys.initial_green)(z_target)?;
        return Ok(GreenEvaluation { z: z_target, g, residual: 0.0, branch_ok: true, newton_iters: 0 });
    }
    let shot = shoot(sys, z_target, tau_hat, alpha_seed, FIRST_STEP, None, default_miss_scale(z_target))?;
    Ok(evaluation(z_target, &shot))
}

fn default_miss_scale(target: C64) -> f64 {
    1.0 + target.norm()
}

fn evaluation(z: C64, shot: &Shot) -> GreenEvaluation {
    let herglotz = z.im == 0.0 || shot.g.im * z.im <= 0.0;
    GreenEvaluation { z, g: shot.g, residual: shot.miss, branch_ok: herglotz, newton_iters: 0 }
}

/// Far-field seed `alpha ≈ z - β_end · z_rate(G⁰(z), z)`.
pub fn far_field_seed(sys: &CharSystem, z: C64, tau_hat: f64) -> Result<C64> {
    let g0 = (sys.initial_green)(z)?;
    let rate = (sys.time_rate)(g0, z, 0.0).re;
    Ok(z - tau_hat / rate * (sys.z_rate)(g0, z, 0.0))
}

/// Shooting continued from the far field down to `target`, reusing each
/// solution as the seed of the next and watching for Jacobian sign flips.
pub fn invert_by_descent(sys: &CharSystem, target: C64, tau_hat: f64) -> Result<GreenEvaluation> {
    if tau_hat == 0.0 {
        return invert_to_target(sys, target, 0.0, target);
    }
    let sign = if target.im < 0.0 { -1.0 } else { 1.0 };
    let start = C64::new(target.re, sign * FAR_FIELD);
    let mut walker = ShootingWalker::start(sys, start, tau_hat)?;
    walker.walk_to(target)
}

/// Shooting state moved along a sequence of nearby targets.
pub(crate) struct ShootingWalker<'a> {
    sys: &'a CharSystem,
    tau_hat: f64,
    z: C64,
    shot: Shot,
    miss_scale: fn(C64) -> f64,
}

impl<'a> ShootingWalker<'a> {
    pub(crate) fn start(sys: &'a CharSystem, z: C64, tau_hat: f64) -> Result<Self> {
        ShootingWalker::start_scaled(sys, z, tau_hat, default_miss_scale)
    }

    /// A walker whose shots stop once the miss is below the tolerance times `miss_scale(target)`.
    pub(crate) fn start_scaled(sys: &'a CharSystem, z: C64, tau_hat: f64, miss_scale: fn(C64) -> f64) -> Result<Self> {
        let seed = far_field_seed(sys, z, tau_hat)?;
        let shot = shoot(sys, z, tau_hat, seed, FIRST_STEP, None, miss_scale(z))?;
        Ok(ShootingWalker { sys, tau_hat, z, shot, miss_scale })
    }

    pub(crate) fn advance(&mut self, z: C64) -> Result<GreenEvaluation> {
        self.advance_split(z, MAX_WALK_SPLITS)
    }

    /// One walker step, halved when the shot fails.
    fn advance_split(&mut self, z: C64, splits: u32) -> Result<GreenEvaluation> {
        // alpha(z) is analytic: predict with the inverse Jacobian.
        let mut seed = self.shot.alpha + (z - self.z) / self.shot.jacobian;
        if !seed.is_finite() {
            seed = self.shot.alpha;
        }
        let scale = (self.miss_scale)(z);
        match shoot(self.sys, z, self.tau_hat, seed, self.shot.first_step, Some(self.shot.jacobian), scale) {
            Ok(shot) => {
                self.z = z;
                self.shot = shot;
                Ok(evaluation(z, &shot))
            }
            Err(_) if splits > 0 => {
                self.advance_split(0.5 * (self.z + z), splits - 1)?;
                self.advance_split(z, splits - 1)
            }
            Err(e) => Err(e),
        }
    }

    pub(crate) fn walk_to(&mut self, target: C64) -> Result<GreenEvaluation> {
        let mut last = evaluation(self.z, &self.shot);
        for z in path_between(self.z, target) {
            last = self.advance(z)?;
        }
        Ok(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{green_of_measure, SpectralMeasure};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn delta_system() -> CharSystem {
        CharSystem::gaussian(|z| Ok(1.0 / z))
    }

    #[test]
    fn gaussian_paths_are_straight_lines() {
        let m = SpectralMeasure::symmetric_pair(1.0, 1.0);
        let sys = CharSystem::gaussian(move |z| green_of_measure(&m, z));
        let alpha = c(0.3, 0.7);
        let path = integrate_characteristic(&sys, alpha, 1.0, 0.05).unwrap();
        let g0 = alpha / (alpha * alpha - 1.0);
        for s in &path.states {
            assert!((s.z - (alpha + s.beta * g0)).norm() < 1e-12);
            assert!((s.g - g0).norm() < 1e-10);
        }
    }

    #[test]
    fn gaussian_rk4_is_exact_so_halving_changes_nothing() {
        let sys = delta_system();
        let exact = c(0.2, 1.0) + 0.7 / c(0.2, 1.0);
        for n in [4, 8, 16] {
            let s = integrate_fixed(&sys, c(0.2, 1.0), 0.7, n, None).unwrap();
            assert!((s.z - exact).norm() < 1e-14);
        }
    }

    #[test]
    fn chiral_rk4_converges_at_fourth_order() {
        let sys = CharSystem::chiral(1.0, |z| Ok(2.0 * z / (z * z - 1.0)));
        let alpha = c(0.4, 0.9);
        let reference = integrate_fixed(&sys, alpha, 0.5, 4096, None).unwrap();
        let e1 = (integrate_fixed(&sys, alpha, 0.5, 16, None).unwrap().z - reference.z).norm();
        let e2 = (integrate_fixed(&sys, alpha, 0.5, 32, None).unwrap().z - reference.z).norm();
        let order = (e1 / e2).log2();
        assert!(order >= 3.8, "order {order}");
    }

    #[test]
    fn step_must_resolve_the_interval() {
        let sys = delta_system();
        assert!(matches!(integrate_characteristic(&sys, c(0.0, 1.0), 1.0, 0.5), Err(FlowError::InvalidArgument(_))));
    }

    #[test]
    fn vanishing_time_rate_is_degenerate() {
        let sys = CharSystem::new(|_, _, _| c(0.0, 0.0), |g, _, _| g, |_, _, _| c(0.0, 0.0), |z| Ok(1.0 / z));
        assert!(matches!(
            integrate_characteristic(&sys, c(0.0, 1.0), 1.0, 0.1),
            Err(FlowError::CharacteristicDegenerate { .. })
        ));
    }

    #[test]
    fn runaway_paths_are_reported() {
        let sys = CharSystem::new(|_, _, _| c(1.0, 0.0), |_, z, _| z * z, |_, _, _| c(0.0, 0.0), |z| Ok(1.0 / z));
        assert!(matches!(
            integrate_characteristic(&sys, c(1.0, 0.0), 2.0, 0.01),
            Err(FlowError::CharacteristicBlowup { .. }) | Err(FlowError::CharacteristicDegenerate { .. })
        ));
    }

    #[test]
    fn shooting_reaches_the_semicircle_value() {
        let sys = delta_system();
        let e = invert_by_descent(&sys, c(1.25, 1e-6), 0.25).unwrap();
        let exact = 2.0 * (e.z - (e.z * e.z - 1.0).sqrt());
        assert!((e.g - exact).norm() < 1e-8, "{} vs {exact}", e.g);
        assert!((e.g.re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_time_returns_the_initial_green() {
        let sys = delta_system();
        let e = invert_to_target(&sys, c(0.5, 0.5), 0.0, c(9.0, 9.0)).unwrap();
        assert_eq!(e.g, 1.0 / c(0.5, 0.5));
    }

    #[test]
    fn path_csv_has_the_documented_header() {
        let sys = delta_system();
        let p = integrate_characteristic(&sys, c(0.0, 1.0), 1.0, 0.1).unwrap();
        let csv = p.to_csv();
        assert!(csv.starts_with("beta,z_re,z_im,g_re,g_im\n"));
        assert_eq!(csv.lines().count(), p.states.len() + 1);
    }
}
