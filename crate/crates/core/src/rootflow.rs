//! Polynomial root finders, Herglotz branch selection and damped-Newton
//! continuation for implicit Green's-function equations.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FlowError, Result};
use crate::measures::invert_point;

/// Distance of the far-field seed from the real axis.
pub const FAR_FIELD: f64 = 1e3;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-11;
pub const RELAXED_NEWTON_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_HALVINGS: u32 = 40;
const SEED_TOLERANCE: f64 = 1e-6;
const SINGULAR_JACOBIAN: f64 = 1e-14;
const MAX_NEWTON_ITERS: usize = 100;
/// Ratio between successive heights of a vertical descent.
const DESCENT_RATIO: f64 = 0.6;
/// Height of the horizontal spine used by density sweeps.
const SPINE_HEIGHT: f64 = 0.5;
/// Grid points served by one far-field anchor in a sweep.
const ANCHOR_STRIDE: usize = 32;

/// A solved point of a Green's-function equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GreenEvaluation {
    pub z: C64,
    pub g: C64,
    pub residual: f64,
    pub branch_ok: bool,
    pub newton_iters: usize,
}

impl GreenEvaluation {
    fn new(z: C64, g: C64, residual: f64, tol: f64, newton_iters: usize) -> Self {
        let herglotz = z.im == 0.0 || g.im * z.im <= 0.0;
        GreenEvaluation { z, g, residual, branch_ok: residual < tol.max(RELAXED_NEWTON_TOL) && herglotz, newton_iters }
    }
}

/// One JSON object per evaluation: `z_re, z_im, g_re, g_im, residual, newton_iters`.
pub fn diagnostics_jsonl(evals: &[GreenEvaluation]) -> String {
    let mut out = String::new();
    for e in evals {
        let row = serde_json::json!({
            "z_re": e.z.re, "z_im": e.z.im, "g_re": e.g.re, "g_im": e.g.im,
            "residual": e.residual, "newton_iters": e.newton_iters,
        });
        out.push_str(&row.to_string());
        out.push('\n');
    }
    out
}

/// Path of z targets walked by [`continuation_solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuationPlan {
    pub start_z: C64,
    pub path: Vec<C64>,
    pub newton_tol: f64,
    pub max_damping_halvings: u32,
}

impl ContinuationPlan {
    pub fn new(start_z: C64, path: Vec<C64>) -> Self {
        ContinuationPlan { start_z, path, newton_tol: DEFAULT_NEWTON_TOL, max_damping_halvings: DEFAULT_MAX_HALVINGS }
    }

    /// Far-field start straight above (or below) `target` and a geometric descent onto it.
    pub fn descent(target: C64) -> Self {
        let sign = if target.im < 0.0 { -1.0 } else { 1.0 };
        let start = C64::new(target.re, sign * FAR_FIELD);
        ContinuationPlan::new(start, path_between(start, target))
    }
}

/// Intermediate targets from `from` to `to`: a horizontal walk at the height of
/// `from`, then a geometric vertical move. Steps stay below half the height.
pub fn path_between(from: C64, to: C64) -> Vec<C64> {
    let mut path = Vec::new();
    let height = from.im;
    let dx = to.re - from.re;
    if dx != 0.0 {
        let max_step = 0.4 * height.abs().max(1e-300);
        let n = (dx.abs() / max_step).ceil().max(1.0) as usize;
        for k in 1..=n {
            path.push(C64::new(from.re + dx * k as f64 / n as f64, height));
        }
    }
    let x = to.re;
    let (a, b) = (height.abs(), to.im.abs());
    let sign = if height != 0.0 { height.signum() } else { to.im.signum() };
    if a > b {
        let floor = b.max(1e-9 * a.min(1.0));
        let mut h = a * DESCENT_RATIO;
        while h > floor {
            path.push(C64::new(x, sign * h));
            h *= DESCENT_RATIO;
        }
    } else if b > a && a > 0.0 {
        let mut h = a / DESCENT_RATIO;
        while h < b {
            path.push(C64::new(x, sign * h));
            h /= DESCENT_RATIO;
        }
    }
    if path.last() != Some(&to) && (dx != 0.0 || a != b) {
        path.push(to);
    }
    path
}

/// Damped-Newton continuation along `plan.path`, warm-started at every step.
pub fn continuation_solve(
    f: impl Fn(C64, C64) -> C64,
    dfdg: impl Fn(C64, C64) -> C64,
    plan: &ContinuationPlan,
    g_start: C64,
) -> Result<Vec<GreenEvaluation>> {
    let mut tracker = Tracker::start(|g, z| Ok((f(g, z), dfdg(g, z))), plan, g_start)?;
    let mut out = Vec::with_capacity(plan.path.len());
    for &z in &plan.path {
        out.push(tracker.advance(z)?);
    }
    Ok(out)
}

/// Residual of an implicit equation and its g-derivative.
pub(crate) trait Residual: Sync {
    fn residual(&self, g: C64, z: C64) -> Result<(C64, C64)>;
    /// Far-field seed, normally `mass / z` in the appropriate convention.
    fn seed(&self, z: C64) -> C64;
}

impl<F: Fn(C64, C64) -> Result<(C64, C64)> + Sync> Residual for (F, f64) {
    fn residual(&self, g: C64, z: C64) -> Result<(C64, C64)> {
        (self.0)(g, z)
    }
    fn seed(&self, z: C64) -> C64 {
        self.1 / z
    }
}

/// Warm-started Newton state along a sequence of z targets.
pub(crate) struct Tracker<F> {
    f: F,
    tol: f64,
    halvings: u32,
    z: C64,
    g: C64,
    prev: Option<(C64, C64)>,
}

impl<F: FnMut(C64, C64) -> Result<(C64, C64)>> Tracker<F> {
    /// Polishes `g_start` at `plan.start_z` and checks the seed.
    pub(crate) fn start(f: F, plan: &ContinuationPlan, g_start: C64) -> Result<Self> {
        Self::start_at(f, plan.start_z, g_start, plan.newton_tol, plan.max_damping_halvings)
    }

    pub(crate) fn start_at(mut f: F, z: C64, g_start: C64, tol: f64, halvings: u32) -> Result<Self> {
        let (g, res, _) = newton(&mut f, z, g_start, tol, halvings, z)?;
        if res >= SEED_TOLERANCE {
            return Err(FlowError::InvalidArgument(format!("far-field seed residual {res:e} at z = {z}")));
        }
        Ok(Tracker { f, tol, halvings, z, g, prev: None })
    }

    /// Resumes from a known solution without re-checking.
    pub(crate) fn resume(f: F, z: C64, g: C64) -> Self {
        Tracker { f, tol: DEFAULT_NEWTON_TOL, halvings: DEFAULT_MAX_HALVINGS, z, g, prev: None }
    }

    pub(crate) fn state(&self) -> (C64, C64) {
        (self.z, self.g)
    }

    /// Solves at `z`, warm-started by linear extrapolation from the last two points.
    pub(crate) fn advance(&mut self, z: C64) -> Result<GreenEvaluation> {
        let mut guesses = vec![self.g];
        if let Some((zp, gp)) = self.prev {
            if zp != self.z {
                let predicted = self.g + (self.g - gp) / (self.z - zp) * (z - self.z);
                if predicted.is_finite() {
                    guesses.insert(0, predicted);
                }
            }
        }
        let mut last_err = None;
        for guess in guesses {
            match newton(&mut self.f, z, guess, self.tol, self.halvings, self.z) {
                Ok((g, residual, iters)) if (g - self.g).norm() <= 1.0 + self.g.norm() || self.prev.is_none() => {
                    self.prev = Some((self.z, self.g));
                    self.z = z;
                    self.g = g;
                    return Ok(GreenEvaluation::new(z, g, residual, self.tol, iters));
                }
                Ok(_) => last_err = Some(FlowError::ContinuationStall { last_z: self.z }),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or(FlowError::ContinuationStall { last_z: self.z }))
    }

    /// Walks to `target` through intermediate points.
    pub(crate) fn walk_to(&mut self, target: C64) -> Result<GreenEvaluation> {
        let mut last = None;
        for z in path_between(self.z, target) {
            last = Some(self.advance(z)?);
        }
        match last {
            Some(e) => Ok(e),
            None => {
                let g = self.g;
                let (r, _) = (self.f)(g, self.z)?;
                Ok(GreenEvaluation::new(self.z, g, r.norm(), self.tol, 0))
            }
        }
    }
}

/// Damped Newton at fixed `z`. Returns the root, its residual and the iteration count.
fn newton<F: FnMut(C64, C64) -> Result<(C64, C64)>>(
    f: &mut F,
    z: C64,
    mut g: C64,
    tol: f64,
    halvings: u32,
    last_good: C64,
) -> Result<(C64, f64, usize)> {
    let (mut r, mut d) = f(g, z)?;
    let mut res = r.norm();
    for iter in 0..MAX_NEWTON_ITERS {
        if res < tol {
            return Ok((g, res, iter));
        }
        if !(d.norm() >= SINGULAR_JACOBIAN) {
            return Err(FlowError::SingularJacobian { z });
        }
        let step = r / d;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=halvings {
            let trial = g - lambda * step;
            if let Ok((tr, td)) = f(trial, z) {
                if tr.norm() < res {
                    accepted = Some((trial, tr, td));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((ng, nr, nd)) => {
                g = ng;
                r = nr;
                d = nd;
                res = r.norm();
            }
            None if res < RELAXED_NEWTON_TOL => return Ok((g, res, iter)),
            None => return Err(FlowError::ContinuationStall { last_z: last_good }),
        }
    }
    if res < RELAXED_NEWTON_TOL {
        Ok((g, res, MAX_NEWTON_ITERS))
    } else {
        Err(FlowError::ContinuationStall { last_z: last_good })
    }
}

/// Solves the equation at `target` by a fresh descent from the far field.
pub(crate) fn solve_by_descent<R: Residual + ?Sized>(problem: &R, target: C64) -> Result<GreenEvaluation> {
    let plan = ContinuationPlan::descent(target);
    let mut tracker = Tracker::start(|g, z| problem.residual(g, z), &plan, problem.seed(plan.start_z))?;
    let mut last = None;
    for &z in &plan.path {
        last = Some(tracker.advance(z)?);
    }
    last.ok_or(FlowError::ContinuationStall { last_z: plan.start_z })
}

/// Boundary-value density on `grid` by continuation: a far-field anchor every
/// [`ANCHOR_STRIDE`] points, a horizontal spine between neighbours and a
/// vertical descent through the offset ladder at each point.
pub(crate) fn density_sweep<R: Residual + ?Sized>(problem: &R, grid: &[f64], ladder: &[f64]) -> Result<Vec<f64>> {
    crate::measures::check_ladder(ladder)?;
    let blocks: Vec<&[f64]> = grid.chunks(ANCHOR_STRIDE).collect();
    let parts = blocks
        .par_iter()
        .map(|block| {
            let anchor = solve_by_descent(problem, C64::new(block[0], SPINE_HEIGHT))?;
            let mut spine = (anchor.z, anchor.g);
            let mut out = Vec::with_capacity(block.len());
            for &x in block.iter() {
                let mut walker = Tracker::resume(|g, z| problem.residual(g, z), spine.0, spine.1);
                walker.walk_to(C64::new(x, SPINE_HEIGHT))?;
                spine = walker.state();
                let rho = invert_point(x, ladder, |eps| Ok(walker.walk_to(C64::new(x, eps))?.g))?;
                out.push(rho);
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Both roots of `c2 w² + c1 w + c0`, computed without cancellation.
pub fn solve_quadratic(c2: C64, c1: C64, c0: C64) -> Result<[C64; 2]> {
    if c2 == C64::new(0.0, 0.0) {
        return Err(FlowError::DegenerateLeadingCoefficient);
    }
    let disc = (c1 * c1 - 4.0 * c2 * c0).sqrt();
    let sign = if (c1.conj() * disc).re >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (c1 + sign * disc);
    if q == C64::new(0.0, 0.0) {
        return Ok([q, q]);
    }
    Ok([q / c2, c0 / q])
}

/// All three roots of `c3 w³ + c2 w² + c1 w + c0` by Cardano's method with a Newton polish.
pub fn solve_cubic(c3: C64, c2: C64, c1: C64, c0: C64) -> Result<[C64; 3]> {
    if c3 == C64::new(0.0, 0.0) {
        return Err(FlowError::DegenerateLeadingCoefficient);
    }
    let (a, b, c) = (c2 / c3, c1 / c3, c0 / c3);
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (0.25 * q * q + p * p * p / 27.0).sqrt();
    let plus = -0.5 * q + disc;
    let minus = -0.5 * q - disc;
    let inner = if plus.norm() >= minus.norm() { plus } else { minus };
    let omega = C64::new(-0.5, 0.75f64.sqrt());
    let mut roots = [C64::new(0.0, 0.0); 3];
    if inner.norm() == 0.0 {
        roots = [-shift; 3];
    } else {
        let u = inner.cbrt();
        let mut rot = C64::new(1.0, 0.0);
        for root in roots.iter_mut() {
            let uk = u * rot;
            *root = uk - p / (3.0 * uk) - shift;
            rot *= omega;
        }
    }
    let coeffs = [c0, c1, c2, c3];
    for root in roots.iter_mut() {
        *root = polish_root(&coeffs, *root);
    }
    Ok(roots)
}

/// Roots of `Σ coeffs[k] w^k`; closed forms up to degree 3, Aberth iteration beyond.
pub fn polynomial_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 || coeffs[degree] == C64::new(0.0, 0.0) {
        return Err(FlowError::DegenerateLeadingCoefficient);
    }
    match degree {
        1 => Ok(vec![-coeffs[0] / coeffs[1]]),
        2 => Ok(solve_quadratic(coeffs[2], coeffs[1], coeffs[0])?.to_vec()),
        3 => Ok(solve_cubic(coeffs[3], coeffs[2], coeffs[1], coeffs[0])?.to_vec()),
        _ => Ok(aberth(coeffs)),
    }
}

fn aberth(coeffs: &[C64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    let lead = coeffs[n];
    let monic: Vec<C64> = coeffs.iter().map(|c| c / lead).collect();
    let radius = 1.0 + monic[..n].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut roots: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(0.5 * radius, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64 + 0.4))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = horner(&monic, roots[i]);
            if p == C64::new(0.0, 0.0) {
                continue;
            }
            let ratio = p / dp;
            let repulsion: C64 = (0..n).filter(|&j| j != i).map(|j| 1.0 / (roots[i] - roots[j])).sum();
            let step = ratio / (1.0 - ratio * repulsion);
            if step.is_finite() {
                roots[i] -= step;
                moved = moved.max(step.norm() / (1.0 + roots[i].norm()));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    roots.iter().map(|&r| polish_root(coeffs, r)).collect()
}

/// Value and derivative of `Σ coeffs[k] w^k`.
pub(crate) fn horner(coeffs: &[C64], w: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * w + p;
        p = p * w + c;
    }
    (p, dp)
}

/// Newton steps that are kept only while they reduce the residual.
fn polish_root(coeffs: &[C64], mut w: C64) -> C64 {
    let (mut p, mut dp) = horner(coeffs, w);
    for _ in 0..4 {
        if dp == C64::new(0.0, 0.0) || p == C64::new(0.0, 0.0) {
            break;
        }
        let candidate = w - p / dp;
        let (cp, cdp) = horner(coeffs, candidate);
        if !(cp.norm() < p.norm()) {
            break;
        }
        w = candidate;
        p = cp;
        dp = cdp;
    }
    w
}

/// Product of polynomials in ascending-coefficient form.
pub(crate) fn poly_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub(crate) fn poly_add(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

pub(crate) fn poly_scale_by(a: &[C64], s: C64) -> Vec<C64> {
    a.iter().map(|c| c * s).collect()
}

/// Picks the physical root: the closest to `prev` when given, otherwise the
/// unique root on the Herglotz side of the axis, ties broken by `mass / z`.
pub fn herglotz_select(roots: &[C64], z: C64, prev: Option<C64>, mass: f64) -> Result<C64> {
    if roots.is_empty() {
        return Err(FlowError::InvalidArgument("no candidate roots".into()));
    }
    if roots.len() == 1 {
        return Ok(roots[0]);
    }
    let closest = |target: C64, pool: &mut dyn Iterator<Item = C64>| {
        pool.min_by(|a, b| (a - target).norm().partial_cmp(&(b - target).norm()).unwrap())
    };
    if let Some(p) = prev {
        return Ok(closest(p, &mut roots.iter().copied()).unwrap());
    }
    let mut admissible = roots.iter().copied().filter(|r| r.im * z.im < 0.0).peekable();
    if admissible.peek().is_none() {
        return Err(FlowError::BranchAmbiguity { z });
    }
    Ok(closest(mass / z, &mut admissible).unwrap())
}
