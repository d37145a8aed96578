//! Hydrodynamic action functionals on discretized trajectories `rho(t, p)`,
//! `v(t, p)`, and the Hilbert-transform identity behind their potential term.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::measures::{hilbert_transform, DensityCurve, Domain, SpectralMeasure, Symmetry};

const MASS_DRIFT: f64 = 1e-6;
const UNIFORM_TOLERANCE: f64 = 1e-9;

/// Density and velocity sampled on a uniform time × space grid (row = time slice).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    time_grid: Vec<f64>,
    space_grid: Vec<f64>,
    rho: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Interchange form with row-major flattened matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryJson {
    pub time_grid: Vec<f64>,
    pub space_grid: Vec<f64>,
    pub rho: Vec<f64>,
    pub v: Vec<f64>,
}

fn check_uniform(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        return Err(FlowError::InvalidArgument(format!("{name} must be finite and nonempty")));
    }
    if grid.len() < 2 {
        return Ok(());
    }
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(FlowError::InvalidArgument(format!("{name} must be increasing")));
    }
    for (i, &x) in grid.iter().enumerate() {
        if (x - (grid[0] + h * i as f64)).abs() > UNIFORM_TOLERANCE * (h + x.abs()) {
            return Err(FlowError::InvalidArgument(format!("{name} must be uniform")));
        }
    }
    Ok(())
}

impl Trajectory {
    pub fn new(time_grid: Vec<f64>, space_grid: Vec<f64>, rho: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<Self> {
        check_uniform("time grid", &time_grid)?;
        check_uniform("space grid", &space_grid)?;
        if space_grid.len() < 2 {
            return Err(FlowError::InvalidArgument("space grid needs at least two points".into()));
        }
        let shape_ok = |m: &[Vec<f64>]| m.len() == time_grid.len() && m.iter().all(|r| r.len() == space_grid.len());
        if !shape_ok(&rho) || !shape_ok(&v) {
            return Err(FlowError::InvalidArgument("rho and v must be time × space matrices".into()));
        }
        if rho.iter().flatten().any(|&r| !(r >= 0.0) || !r.is_finite()) || v.iter().flatten().any(|x| !x.is_finite()) {
            return Err(FlowError::InvalidArgument("rho must be finite and nonnegative, v finite".into()));
        }
        Ok(Trajectory { time_grid, space_grid, rho, v })
    }

    /// Density `rho(p)` and velocity `v(p)` held fixed over `time_grid`.
    pub fn stationary(time_grid: Vec<f64>, space_grid: Vec<f64>, rho: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = time_grid.len();
        Self::new(time_grid, space_grid, vec![rho; n], vec![v; n])
    }

    pub fn from_json(j: TrajectoryJson) -> Result<Self> {
        let cols = j.space_grid.len();
        if cols == 0 || j.rho.len() != j.time_grid.len() * cols || j.v.len() != j.rho.len() {
            return Err(FlowError::InvalidArgument("flattened matrices do not match the grids".into()));
        }
        let rows = |flat: Vec<f64>| flat.chunks(cols).map(<[f64]>::to_vec).collect();
        Self::new(j.time_grid, j.space_grid, rows(j.rho), rows(j.v))
    }

    pub fn to_json(&self) -> TrajectoryJson {
        TrajectoryJson {
            time_grid: self.time_grid.clone(),
            space_grid: self.space_grid.clone(),
            rho: self.rho.concat(),
            v: self.v.concat(),
        }
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn space_grid(&self) -> &[f64] {
        &self.space_grid
    }

    /// Restriction to the time nodes `range`.
    pub fn slice_times(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(
            self.time_grid[range.clone()].to_vec(),
            self.space_grid.clone(),
            self.rho[range.clone()].to_vec(),
            self.v[range].to_vec(),
        )
    }

    fn space_step(&self) -> f64 {
        self.space_grid[1] - self.space_grid[0]
    }

    fn time_step(&self) -> f64 {
        if self.time_grid.len() < 2 {
            0.0
        } else {
            self.time_grid[1] - self.time_grid[0]
        }
    }

    fn check_mass(&self) -> Result<()> {
        let h = self.space_step();
        let masses: Vec<f64> = self.rho.iter().map(|r| simpson_uniform(h, r)).collect();
        let drift = masses.iter().map(|m| (m - masses[0]).abs()).fold(0.0, f64::max);
        if drift > MASS_DRIFT {
            return Err(FlowError::MassDrift { drift });
        }
        Ok(())
    }

    /// `(1/2) ∫dt ∫dp f(slice)` with the slice integrand given pointwise.
    fn integrate(&self, per_slice: impl Fn(usize) -> Result<f64> + Sync + Send) -> Result<f64> {
        let slices = (0..self.time_grid.len()).into_par_iter().map(per_slice).collect::<Result<Vec<f64>>>()?;
        Ok(0.5 * simpson_uniform(self.time_step(), &slices))
    }

    fn kinetic_and_potential(&self, i: usize) -> f64 {
        let (rho, v) = (&self.rho[i], &self.v[i]);
        let f: Vec<f64> = rho.iter().zip(v).map(|(r, v)| r * (v * v + PI * PI / 3.0 * r * r)).collect();
        simpson_uniform(self.space_step(), &f)
    }
}

/// Composite Simpson on uniform samples, closing an odd cell count with the 3/8 rule.
pub fn simpson_uniform(h: f64, f: &[f64]) -> f64 {
    let n = f.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (f[0] + f[1]),
        3 => h / 3.0 * (f[0] + 4.0 * f[1] + f[2]),
        _ => {
            let cells = n - 1;
            let simpson_cells = if cells % 2 == 0 { cells } else { cells - 3 };
            let mut total = 0.0;
            for j in (0..simpson_cells).step_by(2) {
                total += h / 3.0 * (f[j] + 4.0 * f[j + 1] + f[j + 2]);
            }
            if simpson_cells < cells {
                let j = simpson_cells;
                total += 3.0 * h / 8.0 * (f[j] + 3.0 * f[j + 1] + 3.0 * f[j + 2] + f[j + 3]);
            }
            total
        }
    }
}

/// `S = (1/2) ∫dt ∫dp rho (v² + (pi²/3) rho²)`.
pub fn gaussian_action(t: &Trajectory) -> Result<f64> {
    t.check_mass()?;
    t.integrate(|i| Ok(t.kinetic_and_potential(i)))
}

/// Chiral action: the Gaussian integrand plus the `(2 a_hat / p) v` drift of the
/// charge at the origin. The space grid must be symmetric about 0 and, when
/// `a_hat > 0`, must straddle it without a node there.
pub fn chiral_action(t: &Trajectory, a_hat: f64) -> Result<f64> {
    if !(a_hat >= 0.0) || !a_hat.is_finite() {
        return Err(FlowError::InvalidArgument(format!("a_hat must be finite and nonnegative, got {a_hat}")));
    }
    let p = &t.space_grid;
    let n = p.len();
    let scale = p[n - 1].abs().max(p[0].abs());
    if (0..n).any(|i| (p[i] + p[n - 1 - i]).abs() > 1e-12 * scale) {
        return Err(FlowError::InvalidArgument("chiral action needs a space grid symmetric about 0".into()));
    }
    if a_hat > 0.0 && n % 2 == 1 {
        return Err(FlowError::SingularIntegrand);
    }
    t.check_mass()?;
    t.integrate(|i| {
        let mut s = t.kinetic_and_potential(i);
        if a_hat > 0.0 {
            let f: Vec<f64> = (0..n).map(|k| t.rho[i][k] * t.v[i][k] / p[k]).collect();
            s += 2.0 * a_hat * straddling_integral(t.space_step(), &f);
        }
        Ok(s)
    })
}

/// `∫ f` over a symmetric grid with nodes at `±h/2, ±3h/2, ...`. The odd part of
/// `f` cancels; the even part is integrated on the positive half, with the cell
/// `[0, h/2]` from the even quadratic through the two nodes nearest the origin.
fn straddling_integral(h: f64, f: &[f64]) -> f64 {
    let n = f.len();
    let half = n / 2;
    let even: Vec<f64> = (0..half).map(|k| 0.5 * (f[half + k] + f[half - 1 - k])).collect();
    let head = if even.len() >= 2 {
        // e(p) = a + b p² through p = h/2 and 3h/2.
        let b = (even[1] - even[0]) / (2.0 * h * h);
        let a = even[0] - b * h * h / 4.0;
        a * h / 2.0 + b * h * h * h / 24.0
    } else {
        even[0] * h / 2.0
    };
    2.0 * (head + simpson_uniform(h, &even))
}

/// `(∫ rho H[rho]², (pi²/3) ∫ rho³)` with `H[rho](x) = PV ∫ rho(y) / (x - y) dy`.
pub fn hilbert_identity_check(slice: &DensityCurve) -> (f64, f64) {
    if slice.values.iter().all(|&v| v == 0.0) {
        return (0.0, 0.0);
    }
    let measure = match SpectralMeasure::from_density(slice.grid.clone(), slice.values.clone(), Symmetry::None, Domain::RealLine) {
        Ok(m) => m,
        Err(_) => return (f64::NAN, f64::NAN),
    };
    let model = measure.model();
    let lhs = model.integrate(|y| hilbert_transform(&measure, y).map_or(f64::NAN, |h| h * h));
    let rhs = PI * PI / 3.0 * model.integrate(|y| model.density(y).powi(2));
    (lhs, rhs)
}
