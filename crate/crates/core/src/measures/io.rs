//! JSON and CSV interchange for measures and curves.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AcPart, DensityCurve, Domain, EnsembleTag, SpectralMeasure, Symmetry};
use crate::error::{FlowError, Result};

/// Serialized form of a [`SpectralMeasure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureJson {
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub ac: Option<AcPart>,
    #[serde(default = "default_symmetry")]
    pub symmetry: Symmetry,
    #[serde(default = "default_domain")]
    pub domain: Domain,
    #[serde(default)]
    pub mass: Option<f64>,
}

fn default_symmetry() -> Symmetry {
    Symmetry::None
}

fn default_domain() -> Domain {
    Domain::RealLine
}

impl MeasureJson {
    pub fn into_measure(self) -> Result<SpectralMeasure> {
        let atoms = self.atoms.iter().map(|a| (a[0], a[1])).collect();
        match self.mass {
            Some(m) => SpectralMeasure::with_declared_mass(atoms, self.ac, self.symmetry, self.domain, m),
            None => SpectralMeasure::new(atoms, self.ac, self.symmetry, self.domain),
        }
    }
}

impl From<&SpectralMeasure> for MeasureJson {
    fn from(m: &SpectralMeasure) -> Self {
        MeasureJson {
            atoms: m.atoms().iter().map(|&(x, w)| [x, w]).collect(),
            ac: m.ac().cloned(),
            symmetry: m.symmetry(),
            domain: m.domain(),
            mass: Some(m.total_mass()),
        }
    }
}

pub fn read_measure_json(path: &Path) -> Result<SpectralMeasure> {
    let text = std::fs::read_to_string(path)?;
    let parsed: MeasureJson =
        serde_json::from_str(&text).map_err(|e| FlowError::InvalidMeasure(format!("{}: {e}", path.display())))?;
    parsed.into_measure()
}

/// Writes `header` and one `x,rho` row per grid point with 17 significant digits.
pub fn write_curve_csv(curve: &DensityCurve, path: &Path) -> Result<()> {
    std::fs::write(path, curve_csv_string(curve))?;
    Ok(())
}

impl DensityCurve {
    /// CSV text as written by [`write_curve_csv`].
    pub fn to_csv(&self) -> String {
        curve_csv_string(self)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        parse_curve_csv(text)
    }
}

pub(crate) fn curve_csv_string(curve: &DensityCurve) -> String {
    let mut out = String::with_capacity(48 * curve.grid.len() + 16);
    out.push_str(curve.ensemble_tag.csv_header());
    out.push('\n');
    for (x, v) in curve.grid.iter().zip(&curve.values) {
        let _ = writeln!(out, "{x:.16e},{v:.16e}");
    }
    out
}

/// Reads a two-column CSV; the header names the ensemble convention.
pub fn read_curve_csv(path: &Path) -> Result<DensityCurve> {
    let text = std::fs::read_to_string(path)?;
    parse_curve_csv(&text)
}

pub(crate) fn parse_curve_csv(text: &str) -> Result<DensityCurve> {
    let bad = |line: usize, msg: &str| FlowError::InvalidArgument(format!("csv line {line}: {msg}"));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    let tag = match header.trim() {
        "x,rho_c" => EnsembleTag::Chiral,
        "y,rho_W" => EnsembleTag::Wishart,
        "phi,rho" => EnsembleTag::Circular,
        h if h.split(',').count() == 2 && h.parse::<f64>().is_err() => EnsembleTag::Empirical,
        _ => return Err(bad(1, "expected a two-column header")),
    };
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        let mut cols = line.split(',');
        let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(bad(i + 1, "expected two columns"));
        };
        let x: f64 = a.trim().parse().map_err(|_| bad(i + 1, "unparsable abscissa"))?;
        let v: f64 = b.trim().parse().map_err(|_| bad(i + 1, "unparsable density"))?;
        grid.push(x);
        values.push(v);
    }
    DensityCurve::new(grid, values, 0.0, tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::uniform_grid;

    #[test]
    fn measure_json_round_trip() {
        let m = SpectralMeasure::new(
            vec![(-1.0, 0.25), (1.0, 0.25)],
            Some(AcPart { grid: uniform_grid(-0.5, 0.5, 5), values: vec![0.0, 1.0, 1.0, 1.0, 0.0] }),
            Symmetry::Even,
            Domain::RealLine,
        )
        .unwrap();
        let text = serde_json::to_string(&MeasureJson::from(&m)).unwrap();
        let back: MeasureJson = serde_json::from_str(&text).unwrap();
        let m2 = back.into_measure().unwrap();
        assert_eq!(m2.atoms(), m.atoms());
        assert_eq!(m2.ac(), m.ac());
        assert_eq!(m2.total_mass(), m.total_mass());
    }

    #[test]
    fn measure_json_schema_fields() {
        let text = r#"{"atoms":[[0.0,1.0]],"symmetry":"even","domain":"real","mass":1.0}"#;
        let m: MeasureJson = serde_json::from_str(text).unwrap();
        assert_eq!(m.into_measure().unwrap().total_mass(), 1.0);
        let unknown = r#"{"atoms":[[0.0,1.0]],"weights":[1]}"#;
        assert!(serde_json::from_str::<MeasureJson>(unknown).is_err());
    }

    #[test]
    fn csv_is_bit_stable() {
        let curve = DensityCurve::new(vec![0.1, 0.2], vec![1.0 / 3.0, 0.0], 0.0, EnsembleTag::Gaussian).unwrap();
        let text = curve_csv_string(&curve);
        assert_eq!(text, "x,rho\n1.0000000000000001e-1,3.3333333333333331e-1\n2.0000000000000001e-1,0.0000000000000000e0\n");
        let back = parse_curve_csv(&text).unwrap();
        assert_eq!(back.grid, curve.grid);
        assert_eq!(back.values, curve.values);
    }

    #[test]
    fn csv_headers_follow_the_tag() {
        let curve = DensityCurve::new(vec![0.1, 0.2], vec![1.0, 1.0], 0.5, EnsembleTag::Wishart).unwrap();
        let text = curve_csv_string(&curve);
        assert!(text.starts_with("y,rho_W\n"));
        assert_eq!(parse_curve_csv(&text).unwrap().ensemble_tag, EnsembleTag::Wishart);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(parse_curve_csv("x,rho\n1,2,3\n").is_err());
        assert!(parse_curve_csv("x,rho\n1,abc\n").is_err());
    }
}
