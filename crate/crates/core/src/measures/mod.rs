//! Spectral measures, their Green's functions and density curves.

mod io;
pub(crate) mod quadrature;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
pub use io::{read_curve_csv, read_measure_json, write_curve_csv, MeasureJson};
pub use quadrature::AcModel;
use quadrature::{half_cot, neville_at_zero, Shape, GL8_W, GL8_X};

/// Default imaginary offsets for boundary-value extraction.
pub const DEFAULT_EPS_LADDER: [f64; 3] = [1e-3, 5e-4, 2.5e-4];

const POLE_TOLERANCE: f64 = 1e-13;
const MASS_TOLERANCE: f64 = 1e-10;
const TARGET_SPREAD: f64 = 1e-7;
const MAX_SPREAD: f64 = 1e-4;
const NEGATIVE_CLAMP: f64 = 1e-8;
const SMALLEST_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    Even,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "real")]
    RealLine,
    #[serde(rename = "halfline")]
    PositiveHalfline,
    #[serde(rename = "circle")]
    Circle,
}

/// Gridded absolutely continuous part of a measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcPart {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Atoms plus an optional gridded density.
#[derive(Clone, Debug)]
pub struct SpectralMeasure {
    atoms: Vec<(f64, f64)>,
    ac: Option<AcPart>,
    symmetry: Symmetry,
    domain: Domain,
    total_mass: f64,
    model: Arc<AcModel>,
}

impl SpectralMeasure {
    /// Validates the parts and derives the total mass.
    pub fn new(atoms: Vec<(f64, f64)>, ac: Option<AcPart>, symmetry: Symmetry, domain: Domain) -> Result<Self> {
        let invalid = |msg: String| Err(FlowError::InvalidMeasure(msg));
        for &(x, w) in &atoms {
            if !x.is_finite() || !w.is_finite() || w <= 0.0 {
                return invalid(format!("atom ({x}, {w}) needs a finite location and positive weight"));
            }
        }
        if let Some(ac) = &ac {
            if ac.grid.len() != ac.values.len() || ac.grid.len() < 2 {
                return invalid("ac grid and values need equal length of at least 2".into());
            }
            if ac.grid.windows(2).any(|w| !(w[1] > w[0])) || ac.grid.iter().any(|g| !g.is_finite()) {
                return invalid("ac grid must be finite and strictly increasing".into());
            }
            if ac.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return invalid("ac values must be finite and nonnegative".into());
            }
        }
        match domain {
            Domain::Circle => {
                let inside = |x: f64| x > -PI - 1e-12 && x <= PI + 1e-12;
                if atoms.iter().any(|a| !inside(a.0) || a.0 <= -PI) {
                    return invalid("circle atoms must lie in (-pi, pi]".into());
                }
                if ac.as_ref().is_some_and(|ac| ac.grid.iter().any(|&g| !inside(g))) {
                    return invalid("circle grid must lie in [-pi, pi]".into());
                }
            }
            Domain::PositiveHalfline => {
                if atoms.iter().any(|a| a.0 < 0.0) || ac.as_ref().is_some_and(|ac| ac.grid[0] < 0.0) {
                    return invalid("half-line measures live on [0, inf)".into());
                }
            }
            Domain::RealLine => {}
        }
        if symmetry == Symmetry::Even {
            check_even(&atoms, ac.as_ref())?;
        }
        let model = match &ac {
            Some(ac) => AcModel::build(&ac.grid, &ac.values),
            None => AcModel::default(),
        };
        let total_mass = atoms.iter().map(|a| a.1).sum::<f64>() + model.mass();
        if atoms.is_empty() && model.is_empty() {
            return Err(FlowError::EmptyMeasure);
        }
        Ok(SpectralMeasure { atoms, ac, symmetry, domain, total_mass, model: Arc::new(model) })
    }

    /// Like [`SpectralMeasure::new`] but also checks a declared total mass.
    pub fn with_declared_mass(
        atoms: Vec<(f64, f64)>,
        ac: Option<AcPart>,
        symmetry: Symmetry,
        domain: Domain,
        mass: f64,
    ) -> Result<Self> {
        let m = Self::new(atoms, ac, symmetry, domain)?;
        if (m.total_mass - mass).abs() > MASS_TOLERANCE * mass.abs().max(1e-300) {
            return Err(FlowError::InvalidMeasure(format!(
                "declared mass {mass} differs from computed mass {}",
                m.total_mass
            )));
        }
        Ok(m)
    }

    pub fn delta(x: f64, weight: f64) -> Self {
        Self::new(vec![(x, weight)], None, Symmetry::None, Domain::RealLine).expect("valid atom")
    }

    /// Equal atoms at `±a` with total weight `mass`.
    pub fn symmetric_pair(a: f64, mass: f64) -> Self {
        let atoms = if a == 0.0 { vec![(0.0, mass)] } else { vec![(-a, 0.5 * mass), (a, 0.5 * mass)] };
        Self::new(atoms, None, Symmetry::Even, Domain::RealLine).expect("valid pair")
    }

    pub fn from_density(grid: Vec<f64>, values: Vec<f64>, symmetry: Symmetry, domain: Domain) -> Result<Self> {
        Self::new(Vec::new(), Some(AcPart { grid, values }), symmetry, domain)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn ac(&self) -> Option<&AcPart> {
        self.ac.as_ref()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_atomic(&self) -> bool {
        self.model.is_empty()
    }

    pub(crate) fn model(&self) -> &AcModel {
        &self.model
    }

    /// Same parts with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let atoms = self.atoms.iter().map(|&(x, w)| (x, w * factor)).collect();
        let ac = self.ac.as_ref().map(|ac| AcPart {
            grid: ac.grid.clone(),
            values: ac.values.iter().map(|v| v * factor).collect(),
        });
        Self::new(atoms, ac, self.symmetry, self.domain)
    }

    /// Same parts reinterpreted on another domain.
    pub fn on_domain(&self, domain: Domain) -> Result<Self> {
        Self::new(self.atoms.clone(), self.ac.clone(), self.symmetry, domain)
    }

    /// Smallest interval containing all atoms and the ac support.
    pub fn support_hull(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(x, _) in &self.atoms {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if let Some((a, b)) = self.model.support_hull() {
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Transform value and z-derivative without pole checks.
    pub(crate) fn transform(&self, z: C64) -> (C64, C64) {
        let mut value = C64::new(0.0, 0.0);
        let mut deriv = C64::new(0.0, 0.0);
        match self.domain {
            Domain::Circle => {
                for &(x, w) in &self.atoms {
                    let (v, d) = half_cot(z - x);
                    value += w * v;
                    deriv += w * d;
                }
                if !self.model.is_empty() {
                    let (v, d) = self.model.cot_green(z);
                    value += v;
                    deriv += d;
                }
            }
            _ => {
                for &(x, w) in &self.atoms {
                    let inv = 1.0 / (z - x);
                    value += w * inv;
                    deriv -= w * inv * inv;
                }
                if !self.model.is_empty() {
                    let (v, d) = self.model.green(z);
                    value += v;
                    deriv += d;
                }
            }
        }
        (value, deriv)
    }

    fn check_pole(&self, z: C64) -> Result<()> {
        let pole = Err(FlowError::PoleProximity { z });
        match self.domain {
            Domain::Circle => {
                if z.im.abs() <= POLE_TOLERANCE {
                    return pole;
                }
            }
            _ => {
                if self.atoms.iter().any(|&(x, _)| (z - x).norm() <= POLE_TOLERANCE) {
                    return pole;
                }
                if z.im.abs() <= POLE_TOLERANCE && self.model.density(z.re) > 0.0 {
                    return pole;
                }
            }
        }
        Ok(())
    }
}

fn check_even(atoms: &[(f64, f64)], ac: Option<&AcPart>) -> Result<()> {
    let invalid = |msg: &str| Err(FlowError::InvalidMeasure(msg.to_string()));
    for &(x, w) in atoms {
        if x == 0.0 {
            continue;
        }
        let mirrored = atoms
            .iter()
            .any(|&(y, v)| (y + x).abs() <= 1e-12 * x.abs().max(1.0) && (v - w).abs() <= 1e-12 * w.max(1.0));
        if !mirrored {
            return invalid("even measure needs mirrored atoms of equal weight");
        }
    }
    if let Some(ac) = ac {
        let n = ac.grid.len();
        for i in 0..n {
            let j = n - 1 - i;
            if (ac.grid[i] + ac.grid[j]).abs() > 1e-12 * ac.grid[i].abs().max(1.0) {
                return invalid("even measure needs a grid symmetric about 0");
            }
            if (ac.values[i] - ac.values[j]).abs() > 1e-12 {
                return invalid("even measure needs mirrored density values");
            }
        }
    }
    Ok(())
}

/// Ensemble convention attached to a density curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleTag {
    Gaussian,
    Chiral,
    Wishart,
    Circular,
    Jacobi,
    Empirical,
}

impl EnsembleTag {
    /// Curves of this family start at a hard boundary at the origin.
    fn hard_origin(self) -> bool {
        matches!(self, EnsembleTag::Wishart)
    }

    /// Header used for CSV output.
    pub fn csv_header(self) -> &'static str {
        match self {
            EnsembleTag::Chiral => "x,rho_c",
            EnsembleTag::Wishart => "y,rho_W",
            EnsembleTag::Circular | EnsembleTag::Jacobi => "phi,rho",
            _ => "x,rho",
        }
    }
}

/// Density sampled on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub tau_hat: f64,
    pub ensemble_tag: EnsembleTag,
}

impl DensityCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, tau_hat: f64, ensemble_tag: EnsembleTag) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(FlowError::InvalidArgument("curve grid and values need equal length >= 2".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FlowError::InvalidArgument("curve grid must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FlowError::InvalidArgument("curve values must be finite and nonnegative".into()));
        }
        Ok(DensityCurve { grid, values, tau_hat, ensemble_tag })
    }

    /// Samples `f` on `grid`.
    pub fn from_fn(grid: Vec<f64>, tau_hat: f64, tag: EnsembleTag, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values, tau_hat, tag)
    }

    /// Total mass of the curve under the cell models.
    pub fn mass(&self) -> Result<f64> {
        moments(self, 0)
    }

    /// Cumulative mass at every grid node.
    pub fn cumulative(&self) -> Result<Vec<f64>> {
        let model = CurveModel::build(self)?;
        let mut out = Vec::with_capacity(self.grid.len());
        for &x in &self.grid {
            out.push(model.integrate_below(x));
        }
        Ok(out)
    }

    /// Linear interpolation of the values, zero outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let i = g.partition_point(|&y| y <= x).clamp(1, g.len() - 1);
        let t = (x - g[i - 1]) / (g[i] - g[i - 1]);
        self.values[i - 1] * (1.0 - t) + self.values[i] * t
    }
}

/// Uniform grid of `n` points on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Green's function of the measure; the periodic kernel on the circle.
pub fn green_of_measure(m: &SpectralMeasure, z: C64) -> Result<C64> {
    m.check_pole(z)?;
    Ok(m.transform(z).0)
}

/// Green's function together with its z-derivative.
pub fn green_with_derivative(m: &SpectralMeasure, z: C64) -> Result<(C64, C64)> {
    m.check_pole(z)?;
    Ok(m.transform(z))
}

/// Principal-value transform of the measure at a real point.
///
/// Computed as the real part of the exact boundary value of the cell models,
/// which equals the principal value of the piecewise density.
pub fn hilbert_transform(m: &SpectralMeasure, x: f64) -> Result<f64> {
    if m.atoms.iter().any(|&(a, _)| (a - x).abs() <= POLE_TOLERANCE) {
        return Err(FlowError::PoleProximity { z: C64::new(x, 0.0) });
    }
    let z = C64::new(x, 1e-100);
    Ok(m.transform(z).0.re)
}

/// Extracts `-(1/pi) Im G(x + i eps)` extrapolated to `eps = 0` from samples
/// taken at the decreasing offsets passed to `sample`.
pub(crate) fn invert_point(x: f64, ladder: &[f64], mut sample: impl FnMut(f64) -> Result<C64>) -> Result<f64> {
    let order = ladder.len();
    let mut eps = Vec::with_capacity(order + 8);
    let mut vals = Vec::with_capacity(order + 8);
    for &e in ladder {
        eps.push(e);
        vals.push(-sample(e)?.im / PI);
    }
    let (mut estimate, mut spread);
    loop {
        let k = eps.len();
        estimate = neville_at_zero(&eps[k - order..], &vals[k - order..]);
        let lower = neville_at_zero(&eps[k - order + 1..], &vals[k - order + 1..]);
        spread = (estimate - lower).abs();
        if spread <= TARGET_SPREAD && estimate >= -NEGATIVE_CLAMP {
            break;
        }
        let next = eps[k - 1] / 4.0;
        if next < SMALLEST_EPS {
            break;
        }
        eps.push(next);
        vals.push(-sample(next)?.im / PI);
    }
    if spread > MAX_SPREAD {
        return Err(FlowError::NonConvergedInversion { x, spread });
    }
    if estimate < 0.0 {
        if estimate > -NEGATIVE_CLAMP {
            return Ok(0.0);
        }
        return Err(FlowError::NegativeDensity { x, value: estimate });
    }
    Ok(estimate)
}

pub(crate) fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 2 || ladder.iter().any(|&e| !(e > 0.0)) || ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(FlowError::InvalidArgument("eps ladder needs >= 2 strictly decreasing positive entries".into()));
    }
    Ok(())
}

/// Density from boundary values of `green_at`.
pub fn stieltjes_invert(
    green_at: impl Fn(C64) -> Result<C64> + Sync,
    x_grid: &[f64],
    eps_ladder: &[f64],
) -> Result<DensityCurve> {
    check_ladder(eps_ladder)?;
    let values = x_grid
        .par_iter()
        .map(|&x| invert_point(x, eps_ladder, |e| green_at(C64::new(x, e))))
        .collect::<Result<Vec<f64>>>()?;
    DensityCurve::new(x_grid.to_vec(), values, 0.0, EnsembleTag::Gaussian)
}

/// Model of a curve used for moments and cumulative masses.
struct CurveModel {
    /// Power-law head `c y^p` on `[0, head_end]` for hard-origin curves.
    head: Option<(f64, f64, f64)>,
    model: AcModel,
}

impl CurveModel {
    fn build(curve: &DensityCurve) -> Result<CurveModel> {
        let g = &curve.grid;
        let v = &curve.values;
        let hard = curve.ensemble_tag.hard_origin() && g[0] > 0.0 && v[0] > 0.0 && v.len() > 2 && v[1] > 0.0;
        if !hard {
            return Ok(CurveModel { head: None, model: AcModel::build(g, v) });
        }
        let p = (v[1] / v[0]).ln() / (g[1] / g[0]).ln();
        if !(p > -1.0) {
            return Err(FlowError::QuadratureAccuracy { estimate: f64::INFINITY });
        }
        let c = v[0] / g[0].powf(p);
        Ok(CurveModel { head: Some((c, p, g[1])), model: AcModel::build(&g[1..], &v[1..]) })
    }

    fn moment(&self, k: i32) -> f64 {
        let mut total = 0.0;
        if let Some((c, p, end)) = self.head {
            let e = p + k as f64 + 1.0;
            total += c * end.powf(e) / e;
        }
        total + simpson_over_model(&self.model, |y| y.powi(k))
    }

    fn integrate_below(&self, x: f64) -> f64 {
        let mut total = 0.0;
        if let Some((c, p, end)) = self.head {
            let upper = x.min(end).max(0.0);
            total += c * upper.powf(p + 1.0) / (p + 1.0);
        }
        let mut nodes = Vec::with_capacity(8);
        for cell in &self.model.cells {
            if cell.y0 >= x {
                break;
            }
            if cell.y1 <= x {
                nodes.clear();
                cell.nodes(&GL8_X, &GL8_W, &mut nodes);
                total += nodes.iter().map(|n| n.1).sum::<f64>();
            } else {
                let mut part = cell.clone();
                part.y1 = x;
                if let Shape::Linear = part.shape {
                    part.r1 = cell.density(x);
                }
                nodes.clear();
                part.nodes(&GL8_X, &GL8_W, &mut nodes);
                total += nodes.iter().map(|n| n.1).sum::<f64>();
            }
        }
        total
    }
}

/// `∫ rho f` with composite Simpson on interior runs and the cell models elsewhere.
fn simpson_over_model(model: &AcModel, f: impl Fn(f64) -> f64) -> f64 {
    let cells = &model.cells;
    let mut total = 0.0;
    let mut nodes = Vec::with_capacity(8);
    let mut i = 0;
    while i < cells.len() {
        if !cells[i].interior {
            nodes.clear();
            cells[i].nodes(&GL8_X, &GL8_W, &mut nodes);
            total += nodes.iter().map(|&(y, w)| w * f(y)).sum::<f64>();
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < cells.len() && cells[i + 1].interior && cells[i + 1].y0 == cells[i].y1 {
            i += 1;
        }
        let mut xs = vec![cells[start].y0];
        let mut fs = vec![cells[start].r0 * f(cells[start].y0)];
        for c in &cells[start..=i] {
            xs.push(c.y1);
            fs.push(c.r1 * f(c.y1));
        }
        total += composite_simpson(&xs, &fs);
        i += 1;
    }
    total
}

/// Composite Simpson on a possibly nonuniform grid; an odd cell count closes
/// with the quadratic through the last three nodes.
pub(crate) fn composite_simpson(xs: &[f64], fs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1]);
    }
    let cells = n - 1;
    let paired = if cells % 2 == 0 { cells } else { cells - 1 };
    let mut total = 0.0;
    let mut j = 0;
    while j < paired {
        let h0 = xs[j + 1] - xs[j];
        let h1 = xs[j + 2] - xs[j + 1];
        let s = h0 + h1;
        total += s / 6.0 * ((2.0 - h1 / h0) * fs[j] + s * s / (h0 * h1) * fs[j + 1] + (2.0 - h0 / h1) * fs[j + 2]);
        j += 2;
    }
    if paired < cells {
        let (x0, x1, x2) = (xs[n - 3], xs[n - 2], xs[n - 1]);
        let (f0, f1, f2) = (fs[n - 3], fs[n - 2], fs[n - 1]);
        let quad = |x: f64| {
            f0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2))
                + f1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2))
                + f2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1))
        };
        let half = 0.5 * (x2 - x1);
        let mid = 0.5 * (x1 + x2);
        let r = (0.6f64).sqrt();
        total += half / 9.0 * (5.0 * quad(mid - half * r) + 8.0 * quad(mid) + 5.0 * quad(mid + half * r));
    }
    total
}

const MAX_MOMENT_ORDER: u32 = 20;
const MOMENT_TOLERANCE: f64 = 1e-6;

/// `∫ x^k rho(x) dx` of a curve.
pub fn moments(curve: &DensityCurve, k: u32) -> Result<f64> {
    if k > MAX_MOMENT_ORDER {
        return Err(FlowError::InvalidArgument(format!("moment order {k} exceeds {MAX_MOMENT_ORDER}")));
    }
    let value = CurveModel::build(curve)?.moment(k as i32);
    if curve.grid.len() >= 9 {
        // Every other node, keeping the last one so both grids span the same interval.
        let keep = |i: usize| i % 2 == 0 || i + 1 == curve.grid.len();
        let coarse = DensityCurve {
            grid: curve.grid.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, &x)| x).collect(),
            values: curve.values.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, &v)| v).collect(),
            tau_hat: curve.tau_hat,
            ensemble_tag: curve.ensemble_tag,
        };
        let coarse_value = CurveModel::build(&coarse)?.moment(k as i32);
        let estimate = (value - coarse_value).abs() / 15.0;
        if estimate > MOMENT_TOLERANCE * value.abs().max(1.0) {
            return Err(FlowError::QuadratureAccuracy { estimate });
        }
    }
    Ok(value)
}

/// Maximal grid intervals where the curve exceeds `threshold`.
pub fn support_detect(curve: &DensityCurve, threshold: f64) -> Result<Vec<(f64, f64)>> {
    if !(threshold > 0.0) {
        return Err(FlowError::InvalidArgument("support threshold must be positive".into()));
    }
    let g = &curve.grid;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < g.len() {
        if curve.values[i] <= threshold {
            i += 1;
            continue;
        }
        let a = i;
        while i + 1 < g.len() && curve.values[i + 1] > threshold {
            i += 1;
        }
        match runs.last_mut() {
            Some(last) if g[a] - g[last.1] <= 2.0 * (g[a] - g[a - 1]) * (1.0 + 1e-9) => last.1 = i,
            _ => runs.push((a, i)),
        }
        i += 1;
    }
    if runs.is_empty() {
        return Err(FlowError::EmptySupport);
    }
    Ok(runs.into_iter().map(|(a, b)| (g[a], g[b])).collect())
}
