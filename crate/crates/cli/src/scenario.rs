//! Scenario files, `--init` shorthands and construction of solver specs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specflow::chiral_flow::ChiralFlowSpec;
use specflow::circular_jacobi_flow::{CircularFlowSpec, JacobiFlowSpec};
use specflow::gaussian_flow::GaussianFlowSpec;
use specflow::measures::{uniform_grid, AcPart, Domain, MeasureJson, SpectralMeasure, Symmetry};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Gaussian,
    Chiral,
    Wishart,
    Circular,
    Jacobi,
}

impl Ensemble {
    fn uses_a_hat(self) -> bool {
        matches!(self, Ensemble::Chiral | Ensemble::Wishart | Ensemble::Jacobi)
    }

    fn mass(self) -> f64 {
        match self {
            Ensemble::Gaussian | Ensemble::Circular => 1.0,
            Ensemble::Chiral | Ensemble::Wishart | Ensemble::Jacobi => 2.0,
        }
    }

    fn domain(self) -> Domain {
        match self {
            Ensemble::Circular | Ensemble::Jacobi => Domain::Circle,
            _ => Domain::RealLine,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Density,
    Green,
    Moments,
    Support,
    McCompare,
    Action,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("--grid expects min:max:n, got {text:?}"));
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(GridSpec {
            min: parts[0].trim().parse().map_err(|_| bad())?,
            max: parts[1].trim().parse().map_err(|_| bad())?,
            n: parts[2].trim().parse().map_err(|_| bad())?,
        })
    }

    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        if self.n < 2 || !(self.max > self.min) {
            return Err(CliError::Config("grid needs n >= 2 and max > min".into()));
        }
        Ok(uniform_grid(self.min, self.max, self.n))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McParams {
    /// Matrix size; the long side `n >= m` for chiral and Wishart models.
    pub n: usize,
    /// Short side for chiral and Wishart models; defaults to `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default = "default_beta")]
    pub beta: u8,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_beta() -> u8 {
    2
}

fn default_bins() -> usize {
    400
}

fn default_outputs() -> Vec<Output> {
    vec![Output::Density]
}

/// Initial data as a measure object or an `--init` shorthand string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Initial {
    Shorthand(String),
    Measure(MeasureJson),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub ensemble: Ensemble,
    pub tau_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_hat: Option<f64>,
    pub initial: Initial,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McParams>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub green_points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments_k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
}

/// Solver spec for one ensemble.
pub enum FlowSpec {
    Gaussian(GaussianFlowSpec),
    Chiral(ChiralFlowSpec),
    Wishart(ChiralFlowSpec),
    Circular(CircularFlowSpec),
    Jacobi(JacobiFlowSpec),
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.tau_hat >= 0.0) || !self.tau_hat.is_finite() {
            return Err(CliError::Config(format!("field `tau_hat`: must be finite and nonnegative, got {}", self.tau_hat)));
        }
        match (self.a_hat, self.ensemble.uses_a_hat()) {
            (Some(_), false) => {
                return Err(CliError::Config(format!("field `a_hat`: not allowed for {:?}", self.ensemble)));
            }
            (Some(a), true) if !(a >= 0.0) || !a.is_finite() => {
                return Err(CliError::Config(format!("field `a_hat`: must be finite and nonnegative, got {a}")));
            }
            _ => {}
        }
        let needs_grid = self.outputs.iter().any(|o| matches!(o, Output::Density | Output::Moments | Output::Support | Output::McCompare));
        if needs_grid && self.grid.is_none() {
            return Err(CliError::Config("field `grid`: required by the requested outputs".into()));
        }
        if let Some(g) = &self.grid {
            g.points()?;
        }
        if self.outputs.contains(&Output::McCompare) && self.mc.is_none() {
            return Err(CliError::Config("field `mc`: required by mc_compare".into()));
        }
        if self.outputs.contains(&Output::Green) && self.green_points.is_empty() {
            return Err(CliError::Config("field `green_points`: required by green".into()));
        }
        if self.outputs.contains(&Output::Action) && self.trajectory.is_none() {
            return Err(CliError::Config("field `trajectory`: required by action".into()));
        }
        if let Initial::Shorthand(s) = &self.initial {
            init_measure(s, self.ensemble)?;
        }
        Ok(())
    }

    pub fn a_hat(&self) -> f64 {
        self.a_hat.unwrap_or(0.0)
    }

    /// Replaces a shorthand initial condition by the measure it denotes.
    pub fn resolved(&self) -> Result<Self, CliError> {
        let mut out = self.clone();
        if let Initial::Shorthand(s) = &self.initial {
            out.initial = Initial::Measure(init_measure(s, self.ensemble)?);
        }
        Ok(out)
    }

    pub fn measure(&self) -> Result<SpectralMeasure, CliError> {
        let json = match &self.initial {
            Initial::Shorthand(s) => init_measure(s, self.ensemble)?,
            Initial::Measure(m) => m.clone(),
        };
        Ok(json.into_measure()?)
    }

    pub fn spec(&self) -> Result<FlowSpec, CliError> {
        let m = self.measure()?;
        let (tau, a) = (self.tau_hat, self.a_hat());
        Ok(match self.ensemble {
            Ensemble::Gaussian => FlowSpec::Gaussian(GaussianFlowSpec::new(m, tau)?),
            Ensemble::Chiral => FlowSpec::Chiral(ChiralFlowSpec::new(m, tau, a)?),
            Ensemble::Wishart => FlowSpec::Wishart(ChiralFlowSpec::new(m, tau, a)?),
            Ensemble::Circular => FlowSpec::Circular(CircularFlowSpec::new(m, tau)?),
            Ensemble::Jacobi => FlowSpec::Jacobi(JacobiFlowSpec::new(m, tau, a)?),
        })
    }
}

fn parse_number(text: &str, what: &str) -> Result<f64, CliError> {
    text.trim().parse::<f64>().map_err(|_| CliError::Config(format!("--init {what}: not a number: {text:?}")))
}

/// `delta:x`, `pair:a`, `uniform:a:b` or `file:path`, in the ensemble's mass convention.
pub fn init_measure(text: &str, ensemble: Ensemble) -> Result<MeasureJson, CliError> {
    let (kind, rest) = text.split_once(':').ok_or_else(|| CliError::Config(format!("--init: unknown form {text:?}")))?;
    let mass = ensemble.mass();
    let domain = ensemble.domain();
    let measure = |atoms: Vec<[f64; 2]>, ac: Option<AcPart>, symmetry: Symmetry| MeasureJson {
        atoms,
        ac,
        symmetry,
        domain,
        mass: None,
    };
    let mirrored = mass == 2.0;
    match kind {
        "delta" | "pair" => {
            let x = parse_number(rest, kind)?;
            if mirrored {
                let atoms = if x == 0.0 { vec![[0.0, 2.0]] } else { vec![[-x.abs(), 1.0], [x.abs(), 1.0]] };
                Ok(measure(atoms, None, Symmetry::Even))
            } else if kind == "delta" {
                let symmetry = if x == 0.0 { Symmetry::Even } else { Symmetry::None };
                Ok(measure(vec![[x, 1.0]], None, symmetry))
            } else if x == 0.0 {
                Ok(measure(vec![[0.0, 1.0]], None, Symmetry::Even))
            } else {
                Ok(measure(vec![[-x.abs(), 0.5], [x.abs(), 0.5]], None, Symmetry::Even))
            }
        }
        "uniform" => {
            let (a, b) = rest
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("--init uniform expects uniform:a:b, got {text:?}")))?;
            let (a, b) = (parse_number(a, "uniform")?, parse_number(b, "uniform")?);
            if !(b > a) {
                return Err(CliError::Config("--init uniform:a:b needs b > a".into()));
            }
            let grid = uniform_grid(a, b, 65);
            let values = vec![mass / (b - a); grid.len()];
            let symmetry = if (a + b).abs() <= 1e-12 * (b - a) { Symmetry::Even } else { Symmetry::None };
            Ok(measure(vec![], Some(AcPart { grid, values }), symmetry))
        }
        "file" => {
            let text = std::fs::read_to_string(rest).map_err(|e| CliError::Io(format!("{rest}: {e}")))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{rest}: {e}")))
        }
        _ => Err(CliError::Config(format!("--init: unknown form {text:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthand_masses_follow_the_ensemble() {
        let g = init_measure("delta:0", Ensemble::Gaussian).unwrap().into_measure().unwrap();
        assert_eq!(g.total_mass(), 1.0);
        let c = init_measure("pair:1", Ensemble::Chiral).unwrap().into_measure().unwrap();
        assert_eq!(c.total_mass(), 2.0);
        let u = init_measure("uniform:-1:1", Ensemble::Chiral).unwrap().into_measure().unwrap();
        assert!((u.total_mass() - 2.0).abs() < 1e-12);
        assert!(matches!(init_measure("spike:1", Ensemble::Gaussian), Err(CliError::Config(_))));
    }

    #[test]
    fn a_hat_is_rejected_for_gaussian() {
        let text = r#"{"ensemble":"gaussian","tau_hat":0.25,"a_hat":1,"initial":"delta:0","grid":{"min":-1,"max":1,"n":11}}"#;
        assert!(matches!(Scenario::parse(text), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_fields_are_schema_errors() {
        let text = r#"{"ensemble":"gaussian","tau_hat":0.25,"initial":"delta:0","grid":{"min":-1,"max":1,"n":11},"colour":1}"#;
        match Scenario::parse(text) {
            Err(CliError::Config(msg)) => assert!(msg.contains("colour") && msg.contains("line"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_flag_parses() {
        assert_eq!(GridSpec::parse("-1:1:5").unwrap(), GridSpec { min: -1.0, max: 1.0, n: 5 });
        assert!(GridSpec::parse("1:2").is_err());
    }
}
