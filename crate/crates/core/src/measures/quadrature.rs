//! Cell models for gridded densities.
//!
//! Every cell between two grid nodes carries either a linear interpolant or,
//! next to a soft edge, the model `rho = sqrt(s) * (p + q s)` where `s` is the
//! distance to the estimated edge. Transforms are Gauss-Legendre sums over the
//! model; cells close to the evaluation point use closed-form integrals.

use num_complex::Complex64 as C64;

pub(crate) const GL4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
pub(crate) const GL4_W: [f64; 4] = [
    0.347_854_845_137_453_8,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_8,
];
pub(crate) const GL8_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
pub(crate) const GL8_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Cells closer than this many cell widths to `z` are integrated analytically.
const NEAR_CELLS: f64 = 4.0;
/// Fraction of a support run treated with the square-root edge model.
const EDGE_ZONE_FRACTION: f64 = 0.02;
/// Nodes below this fraction of the peak value count as zero when locating runs.
const ZERO_FRACTION: f64 = 1e-10;
/// Extrapolated edge closer to a node than this fraction of the next cell counts as on the node.
const ON_NODE_FRACTION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Shape {
    Linear,
    /// rho = sqrt(s) (p + q s), s = side * (y - edge); side = +1 when the support lies to the right.
    SqrtEdge { edge: f64, side: f64, p: f64, q: f64 },
}

#[derive(Clone, Debug)]
pub(crate) struct Cell {
    pub y0: f64,
    pub y1: f64,
    pub r0: f64,
    pub r1: f64,
    pub shape: Shape,
    /// Both end nodes are strictly inside a support run.
    pub interior: bool,
}

impl Cell {
    fn width(&self) -> f64 {
        self.y1 - self.y0
    }

    fn mid(&self) -> f64 {
        0.5 * (self.y0 + self.y1)
    }

    pub fn density(&self, y: f64) -> f64 {
        match self.shape {
            Shape::Linear => self.r0 + (self.r1 - self.r0) * (y - self.y0) / self.width(),
            Shape::SqrtEdge { edge, side, p, q } => {
                let s = (side * (y - edge)).max(0.0);
                s.sqrt() * (p + q * s)
            }
        }
    }

    /// Quadrature nodes `(y, weight * rho(y))` of the cell model.
    pub fn nodes<const N: usize>(&self, xs: &[f64; N], ws: &[f64; N], out: &mut Vec<(f64, f64)>) {
        match self.shape {
            Shape::Linear => {
                let half = 0.5 * self.width();
                let mid = self.mid();
                for (x, w) in xs.iter().zip(ws) {
                    let y = mid + half * x;
                    out.push((y, half * w * self.density(y)));
                }
            }
            Shape::SqrtEdge { edge, side, p, q } => {
                let (ulo, uhi) = self.u_range();
                let uh = 0.5 * (uhi - ulo);
                let um = 0.5 * (uhi + ulo);
                for (x, w) in xs.iter().zip(ws) {
                    let u = um + uh * x;
                    let s = u * u;
                    out.push((edge + side * s, uh * w * 2.0 * s * (p + q * s)));
                }
            }
        }
    }

    fn u_range(&self) -> (f64, f64) {
        match self.shape {
            Shape::SqrtEdge { edge, side, .. } => {
                let a = (side * (self.y0 - edge)).max(0.0).sqrt();
                let b = (side * (self.y1 - edge)).max(0.0).sqrt();
                (a.min(b), a.max(b))
            }
            Shape::Linear => (0.0, 0.0),
        }
    }

    /// Exact `∫ rho(y) / (z - y) dy` over the cell and its z-derivative.
    fn green_exact(&self, z: C64) -> (C64, C64) {
        match self.shape {
            Shape::Linear => {
                let h = self.width();
                let b = (self.r1 - self.r0) / h;
                let rho_z = self.r0 + b * (z - self.y0);
                let log_ratio = log1p_c(h / (z - self.y1));
                let value = rho_z * log_ratio - b * h;
                let inv_diff = 1.0 / (z - self.y1) - 1.0 / (z - self.y0);
                let deriv = -rho_z * inv_diff + b * log_ratio;
                (value, deriv)
            }
            Shape::SqrtEdge { edge, side, p, q } => {
                let (ulo, uhi) = self.u_range();
                let k = -side * (z - edge);
                let sk = k.sqrt();
                let pk = p - q * k;
                let atan_term = |u: f64| (C64::new(u, 0.0) / sk).atan() / sk;
                let prim = |u: f64| {
                    let a = atan_term(u);
                    q * u * u * u / 3.0 + pk * u - k * pk * a
                };
                let prim_k = |u: f64| {
                    let a = atan_term(u);
                    -q * u - (p - 2.0 * q * k) * a + pk * (u / (u * u + k) + a) * 0.5
                };
                let value = -side * 2.0 * (prim(uhi) - prim(ulo));
                let deriv = 2.0 * (prim_k(uhi) - prim_k(ulo));
                (value, deriv)
            }
        }
    }
}

/// `ln(1 + w)` without cancellation for small `w`.
pub(crate) fn log1p_c(w: C64) -> C64 {
    let v = C64::new(1.0, 0.0) + w;
    let d = v - 1.0;
    if d == C64::new(0.0, 0.0) {
        w
    } else {
        v.ln() * (w / d)
    }
}

/// `cot(w/2)/2` and its derivative `-1/(4 sin²(w/2))`, stable for large `|Im w|`.
pub(crate) fn half_cot(w: C64) -> (C64, C64) {
    let i = C64::new(0.0, 1.0);
    let one = C64::new(1.0, 0.0);
    // q = exp(±i w) is bounded by one on the chosen side.
    let (q, sign) = if w.im >= 0.0 { ((i * w).exp(), 1.0) } else { ((-i * w).exp(), -1.0) };
    let cot = sign * i * (q + one) / (q - one);
    (0.5 * cot, -0.25 * (one + cot * cot))
}

/// `cot(w/2)/2 - 1/w`, the smooth part of the periodic kernel.
pub(crate) fn cot_remainder(w: C64) -> C64 {
    if w.norm() < 0.2 {
        let w2 = w * w;
        -w * (1.0 / 12.0 + w2 * (1.0 / 720.0 + w2 * (1.0 / 30240.0 + w2 / 1_209_600.0)))
    } else {
        0.5 / (0.5 * w).tan() - 1.0 / w
    }
}

/// Derivative of [`cot_remainder`].
pub(crate) fn cot_remainder_deriv(w: C64) -> C64 {
    if w.norm() < 0.2 {
        let w2 = w * w;
        -(1.0 / 12.0 + w2 * (1.0 / 240.0 + w2 * (1.0 / 6048.0 + w2 / 172_800.0)))
    } else {
        let s = (0.5 * w).sin();
        -0.25 / (s * s) + 1.0 / (w * w)
    }
}

/// Piecewise model of a gridded density.
#[derive(Clone, Debug, Default)]
pub struct AcModel {
    pub(crate) cells: Vec<Cell>,
    far: Vec<(f64, f64)>,
    /// `exp(-i y)` for each far node, used by the periodic kernel.
    far_phase: Vec<C64>,
    mass: f64,
    max_width: f64,
}

impl AcModel {
    pub fn build(grid: &[f64], values: &[f64]) -> AcModel {
        let n = grid.len();
        let peak = values.iter().cloned().fold(0.0, f64::max);
        if n < 2 || peak <= 0.0 {
            return AcModel::default();
        }
        let zero = peak * ZERO_FRACTION;
        let positive: Vec<bool> = values.iter().map(|&v| v > zero).collect();
        let mut cells = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            if !positive[i] {
                i += 1;
                continue;
            }
            let a = i;
            while i + 1 < n && positive[i + 1] {
                i += 1;
            }
            let b = i;
            i += 1;
            build_run(grid, values, a, b, &mut cells);
        }
        cells.sort_by(|x, y| x.y0.partial_cmp(&y.y0).unwrap());
        let mut far = Vec::with_capacity(4 * cells.len());
        for c in &cells {
            c.nodes(&GL4_X, &GL4_W, &mut far);
        }
        let far_phase = far.iter().map(|&(y, _)| C64::from_polar(1.0, -y)).collect();
        let mass = far.iter().map(|&(_, w)| w).sum();
        let max_width = cells.iter().map(|c| c.width()).fold(0.0, f64::max);
        AcModel { cells, far, far_phase, mass, max_width }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn support_hull(&self) -> Option<(f64, f64)> {
        Some((self.cells.first()?.y0, self.cells.last()?.y1))
    }

    pub fn density(&self, y: f64) -> f64 {
        match self.locate(y) {
            Some(c) => self.cells[c].density(y),
            None => 0.0,
        }
    }

    fn locate(&self, y: f64) -> Option<usize> {
        let idx = self.cells.partition_point(|c| c.y1 < y);
        (idx < self.cells.len() && self.cells[idx].y0 <= y).then_some(idx)
    }

    /// Indices of cells within the analytic-treatment radius of `z`.
    fn near_cells(&self, z: C64) -> std::ops::Range<usize> {
        let reach = NEAR_CELLS * self.max_width;
        if z.im.abs() > reach || self.cells.is_empty() {
            return 0..0;
        }
        let lo = self.cells.partition_point(|c| c.y1 < z.re - reach);
        let hi = self.cells.partition_point(|c| c.y0 <= z.re + reach);
        lo..hi.max(lo)
    }

    fn is_near(cell: &Cell, z: C64) -> bool {
        (z - cell.mid()).norm() <= NEAR_CELLS * cell.width()
    }

    /// `∫ rho(y)/(z - y) dy` and its derivative in `z`.
    pub fn green(&self, z: C64) -> (C64, C64) {
        let mut value = C64::new(0.0, 0.0);
        let mut deriv = C64::new(0.0, 0.0);
        let near = self.near_cells(z);
        for (c, cell) in self.cells.iter().enumerate() {
            if near.contains(&c) && Self::is_near(cell, z) {
                let (v, d) = cell.green_exact(z);
                value += v;
                deriv += d;
                continue;
            }
            for &(y, w) in &self.far[4 * c..4 * c + 4] {
                let inv = 1.0 / (z - y);
                value += w * inv;
                deriv -= w * inv * inv;
            }
        }
        (value, deriv)
    }

    /// `(1/2) ∫ cot((z - y)/2) rho(y) dy` and its derivative in `z`.
    pub fn cot_green(&self, z: C64) -> (C64, C64) {
        if z.im < 0.0 {
            let (v, d) = self.cot_green(z.conj());
            return (v.conj(), d.conj());
        }
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let zeta = C64::from_polar((-z.im).exp(), z.re);
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut value = C64::new(0.0, 0.0);
        let mut deriv = C64::new(0.0, 0.0);
        for (c, cell) in self.cells.iter().enumerate() {
            let shift = ((z.re - cell.mid()) / two_pi).round() * two_pi;
            let zi = z - shift;
            if Self::is_near(cell, zi) {
                let (v, d) = cell.green_exact(zi);
                value += v;
                deriv += d;
                for &(y, w) in &self.far[4 * c..4 * c + 4] {
                    value += w * cot_remainder(zi - y);
                    deriv += w * cot_remainder_deriv(zi - y);
                }
                continue;
            }
            for (&(_, w), &ph) in self.far[4 * c..4 * c + 4].iter().zip(&self.far_phase[4 * c..4 * c + 4]) {
                let e = zeta * ph;
                let inv = 1.0 / (e - one);
                value += w * 0.5 * i * (e + one) * inv;
                deriv += w * e * inv * inv;
            }
        }
        (value, deriv)
    }

    /// `∫ rho(y) f(y) dy` over the model with eight-point rules per cell.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut nodes = Vec::with_capacity(8);
        let mut total = 0.0;
        for c in &self.cells {
            nodes.clear();
            c.nodes(&GL8_X, &GL8_W, &mut nodes);
            total += nodes.iter().map(|&(y, w)| w * f(y)).sum::<f64>();
        }
        total
    }
}

fn build_run(grid: &[f64], values: &[f64], a: usize, b: usize, cells: &mut Vec<Cell>) {
    let n = grid.len();
    let left = soft_edge(grid, values, a, b, 1.0);
    let right = soft_edge(grid, values, b, a, -1.0);
    let lo = left.map_or(if a > 0 { grid[a - 1] } else { grid[a] }, |e| e.0);
    let hi = right.map_or(if b + 1 < n { grid[b + 1] } else { grid[b] }, |e| e.0);
    let zone = EDGE_ZONE_FRACTION * (hi - lo);

    let mut first_linear = a;
    let mut last_linear = b;
    if let Some((edge, start)) = left {
        let last = edge_zone_end(grid, start, b, edge, zone, 1);
        push_sqrt_zone(grid, values, edge, 1.0, start, last, cells);
        first_linear = last;
    } else if a > 0 {
        cells.push(linear(grid, values, a - 1, false));
    }
    if let Some((edge, start)) = right {
        let first = edge_zone_end(grid, start, a, edge, zone, -1);
        let first = first.max(first_linear);
        push_sqrt_zone(grid, values, edge, -1.0, start, first, cells);
        last_linear = first;
    } else if b + 1 < n {
        cells.push(linear(grid, values, b, false));
    }
    for j in first_linear..last_linear {
        cells.push(linear(grid, values, j, true));
    }
}

fn linear(grid: &[f64], values: &[f64], j: usize, interior: bool) -> Cell {
    Cell {
        y0: grid[j],
        y1: grid[j + 1],
        r0: values[j].max(0.0),
        r1: values[j + 1].max(0.0),
        shape: Shape::Linear,
        interior,
    }
}

/// Edge location and first node of the square-root zone when the run starting at
/// node `start` looks like a square-root edge. A leading node that sits on the
/// edge itself becomes the edge.
fn soft_edge(grid: &[f64], values: &[f64], start: usize, other_end: usize, dir: f64) -> Option<(f64, usize)> {
    let step = |k: usize| -> Option<usize> {
        if dir > 0.0 {
            let j = start + k;
            (j <= other_end).then_some(j)
        } else {
            start.checked_sub(k).filter(|&j| j >= other_end)
        }
    };
    let (j0, j1, j2) = (step(0)?, step(1)?, step(2)?);
    let sq = |j: usize| values[j] * values[j];
    let slope1 = (sq(j1) - sq(j0)) / (grid[j1] - grid[j0]).abs();
    let slope2 = (sq(j2) - sq(j1)) / (grid[j2] - grid[j1]).abs();
    if slope1 <= 0.0 || (slope2 - slope1).abs() > 0.25 * slope1 {
        return None;
    }
    let inner = (grid[j1] - grid[j0]).abs();
    if sq(j0) / slope1 < ON_NODE_FRACTION * inner && step(3).is_some() {
        return Some((grid[j0], j1));
    }
    let outside = if dir > 0.0 { start.checked_sub(1)? } else { Some(start + 1).filter(|&j| j < grid.len())? };
    let gap = (grid[start] - grid[outside]).abs();
    let dist = (sq(j0) / slope1).clamp(1e-3 * gap, gap);
    Some((grid[start] - dir * dist, start))
}

/// Node index where the edge zone hands over to linear cells.
fn edge_zone_end(grid: &[f64], start: usize, other_end: usize, edge: f64, zone: f64, dir: i64) -> usize {
    let mut j = start;
    let limit = 0.3 * (grid[other_end] - edge).abs();
    loop {
        let next = j as i64 + dir;
        let within = if dir > 0 { next <= other_end as i64 } else { next >= other_end as i64 };
        if !within {
            return j;
        }
        let next = next as usize;
        let reach = (grid[next] - edge).abs();
        if j != start && (reach > zone || reach > limit) {
            return j;
        }
        j = next;
    }
}

/// Square-root cells from the edge through node `last` (inclusive range walked from `start`).
fn push_sqrt_zone(
    grid: &[f64],
    values: &[f64],
    edge: f64,
    side: f64,
    start: usize,
    last: usize,
    cells: &mut Vec<Cell>,
) {
    let s = |j: usize| side * (grid[j] - edge);
    let phi = |j: usize| values[j] / s(j).sqrt();
    let towards = |j: usize| if side > 0.0 { j + 1 } else { j - 1 };
    let (j0, j1) = (start, towards(start));
    let phi_edge = phi(j0) - (phi(j1) - phi(j0)) * s(j0) / (s(j1) - s(j0));
    let q0 = (phi(j0) - phi_edge) / s(j0);
    let (y0, y1) = if side > 0.0 { (edge, grid[j0]) } else { (grid[j0], edge) };
    let (r0, r1) = if side > 0.0 { (0.0, values[j0]) } else { (values[j0], 0.0) };
    cells.push(Cell { y0, y1, r0, r1, shape: Shape::SqrtEdge { edge, side, p: phi_edge, q: q0 }, interior: false });
    let mut j = start;
    while j != last {
        let k = towards(j);
        let q = (phi(k) - phi(j)) / (s(k) - s(j));
        let p = phi(j) - q * s(j);
        let (lo, hi) = if side > 0.0 { (j, k) } else { (k, j) };
        cells.push(Cell {
            y0: grid[lo],
            y1: grid[hi],
            r0: values[lo],
            r1: values[hi],
            shape: Shape::SqrtEdge { edge, side, p, q },
            interior: false,
        });
        j = k;
    }
}

/// Polynomial extrapolation to zero through `(xs, ys)` (Neville).
pub(crate) fn neville_at_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (xs[i + m] * p[i] - xs[i] * p[i + 1]) / (xs[i + m] - xs[i]);
        }
    }
    p[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn semicircle(n: usize) -> (Vec<f64>, Vec<f64>) {
        let grid: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let values = grid.iter().map(|&x| 2.0 / std::f64::consts::PI * (1.0 - x * x).max(0.0).sqrt()).collect();
        (grid, values)
    }

    #[test]
    fn edges_of_a_semicircle_use_the_square_root_model() {
        let (g, v) = semicircle(401);
        let m = AcModel::build(&g, &v);
        let sqrt_cells = m.cells.iter().filter(|c| matches!(c.shape, Shape::SqrtEdge { .. })).count();
        assert!(sqrt_cells >= 4);
        match m.cells[0].shape {
            Shape::SqrtEdge { edge, .. } => assert!((edge + 1.0).abs() < 1e-3),
            _ => panic!("left edge not detected"),
        }
    }

    #[test]
    fn model_mass_of_a_semicircle() {
        let (g, v) = semicircle(2001);
        let m = AcModel::build(&g, &v);
        assert!((m.mass() - 1.0).abs() < 1e-6, "{}", m.mass());
    }

    #[test]
    fn near_and_far_rules_agree_at_the_switch_radius() {
        let (g, v) = semicircle(201);
        let m = AcModel::build(&g, &v);
        let h = 0.01;
        let exact = |z: C64| 2.0 * (z - (z - 1.0).sqrt() * (z + 1.0).sqrt());
        let za = C64::new(0.3, NEAR_CELLS * h * 0.999);
        let zb = C64::new(0.3, NEAR_CELLS * h * 1.001);
        let err_a = m.green(za).0 - exact(za);
        let err_b = m.green(zb).0 - exact(zb);
        assert!((err_a - err_b).norm() < 1e-7, "{err_a} vs {err_b}");
    }

    #[test]
    fn linear_cell_closed_form_matches_fine_quadrature() {
        let cell = Cell { y0: 0.0, y1: 0.5, r0: 1.0, r1: 2.0, shape: Shape::Linear, interior: true };
        let z = C64::new(0.2, 0.05);
        let exact = cell.green_exact(z).0;
        let n = 200_000;
        let mut sum = C64::new(0.0, 0.0);
        for k in 0..n {
            let y = (k as f64 + 0.5) * 0.5 / n as f64;
            sum += cell.density(y) / (z - y) * (0.5 / n as f64);
        }
        assert!((exact - sum).norm() < 1e-6, "{exact} vs {sum}");
    }

    #[test]
    fn sqrt_cell_closed_form_matches_fine_quadrature() {
        for side in [1.0, -1.0] {
            let edge = 0.1;
            let (y0, y1) = if side > 0.0 { (0.1, 0.3) } else { (-0.1, 0.1) };
            let cell = Cell {
                y0,
                y1,
                r0: 0.0,
                r1: 0.0,
                shape: Shape::SqrtEdge { edge, side, p: 1.3, q: -0.7 },
                interior: false,
            };
            for z in [C64::new(0.15, 0.02), C64::new(0.05, -0.03), C64::new(0.4, 0.2)] {
                let (exact, deriv) = cell.green_exact(z);
                let n = 400_000;
                let (mut sum, mut dsum) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
                let (ulo, uhi) = cell.u_range();
                for k in 0..n {
                    let u = ulo + (k as f64 + 0.5) * (uhi - ulo) / n as f64;
                    let y = edge + side * u * u;
                    let w = 2.0 * u * u * (1.3 - 0.7 * u * u) * (uhi - ulo) / n as f64;
                    sum += w / (z - y);
                    dsum -= w / ((z - y) * (z - y));
                }
                assert!((exact - sum).norm() < 1e-7, "side {side}: {exact} vs {sum}");
                assert!((deriv - dsum).norm() < 1e-5, "side {side}: {deriv} vs {dsum}");
            }
        }
    }

    #[test]
    fn cot_remainder_series_and_direct_forms_meet() {
        for w in [C64::new(0.199, 0.0), C64::new(0.1, 0.17), C64::new(-0.15, -0.12)] {
            let direct = 0.5 / (0.5 * w).tan() - 1.0 / w;
            assert!((cot_remainder(w) - direct).norm() < 1e-12);
            let s = (0.5 * w).sin();
            let direct_d = -0.25 / (s * s) + 1.0 / (w * w);
            assert!((cot_remainder_deriv(w) - direct_d).norm() < 1e-10);
        }
    }

    #[test]
    fn neville_recovers_a_quadratic() {
        let xs = [1e-3, 5e-4, 2.5e-4];
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 + 3.0 * x - 40.0 * x * x).collect();
        assert!((neville_at_zero(&xs, &ys) - 0.7).abs() < 1e-14);
    }
}
