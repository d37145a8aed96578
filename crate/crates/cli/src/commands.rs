//! Subcommand implementations and artifact writing.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use specflow::action::{chiral_action, gaussian_action, Trajectory, TrajectoryJson};
use specflow::chiral_flow::{evolve_density_chiral, evolve_green_chiral, wishart_density, wishart_green};
use specflow::circular_jacobi_flow::{circular_density, circular_green, jacobi_density, jacobi_green};
use specflow::gaussian_flow::{evolve_density, evolve_green};
use specflow::mc_oracle::{
    empirical_histogram, sample_chiral_flow, sample_circular_flow, sample_gaussian_flow, wasserstein1,
    EmpiricalSpectrum,
};
use specflow::measures::{moments as curve_moment, read_curve_csv, support_detect, DensityCurve, Domain};
use specflow::rootflow::{diagnostics_jsonl, GreenEvaluation};
use specflow::{FlowError, C64};

use crate::scenario::{Ensemble, FlowSpec, Initial, McParams, Output, Scenario};
use crate::{grid_override, CliError, FlowArgs};

const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-6;
const DEFAULT_MOMENT_ORDER: u32 = 4;

/// Files written so far; removed again if the command fails.
struct Artifacts {
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts { written: Vec::new() }
    }

    /// Writes through a temporary file in the same directory and renames it into place.
    fn write(&mut self, path: &Path, contents: &str) -> Result<(), CliError> {
        let tmp = path.with_file_name(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact")
        ));
        let result = (|| {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(contents.as_bytes())?;
            f.sync_all()?;
            std::fs::rename(&tmp, path)
        })();
        if let Err(e) = result {
            let _ = std::fs::remove_file(&tmp);
            return Err(CliError::Io(format!("{}: {e}", path.display())));
        }
        self.written.push(path.to_path_buf());
        Ok(())
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => Artifacts::new().write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Scenario from `--scenario` or `--ensemble/--init`, with flag overrides applied.
fn scenario_from(flow: &FlowArgs) -> Result<Scenario, CliError> {
    let mut scn = match (&flow.scenario, flow.ensemble, &flow.init) {
        (Some(path), _, _) => Scenario::load(path)?,
        (None, Some(ensemble), Some(init)) => Scenario {
            ensemble,
            tau_hat: flow.tau.ok_or_else(|| CliError::Config("--tau is required with --ensemble".into()))?,
            a_hat: None,
            initial: Initial::Shorthand(init.clone()),
            grid: None,
            outputs: Vec::new(),
            mc: None,
            green_points: Vec::new(),
            moments_k: None,
            support_threshold: None,
            trajectory: None,
        },
        _ => return Err(CliError::Config("give --scenario, or --ensemble together with --init".into())),
    };
    if let Some(t) = flow.tau {
        scn.tau_hat = t;
    }
    if flow.a_hat.is_some() {
        scn.a_hat = flow.a_hat;
    }
    if let Some(g) = grid_override(&flow.grid)? {
        scn.grid = Some(g);
    }
    if let (Some(seed), Some(mc)) = (flow.seed, scn.mc.as_mut()) {
        mc.seed = seed;
    }
    scn.validate()?;
    Ok(scn)
}

fn compute_density(spec: &FlowSpec, grid: &[f64]) -> Result<DensityCurve, CliError> {
    Ok(match spec {
        FlowSpec::Gaussian(s) => evolve_density(s, grid)?,
        FlowSpec::Chiral(s) => evolve_density_chiral(s, grid)?,
        FlowSpec::Wishart(s) => wishart_density(s, grid)?,
        FlowSpec::Circular(s) => circular_density(s, grid)?,
        FlowSpec::Jacobi(s) => jacobi_density(s, grid)?,
    })
}

fn compute_green(spec: &FlowSpec, z: C64) -> Result<GreenEvaluation, CliError> {
    Ok(match spec {
        FlowSpec::Gaussian(s) => evolve_green(s, z)?,
        FlowSpec::Chiral(s) => evolve_green_chiral(s, z)?,
        FlowSpec::Wishart(s) => wishart_green(s, z)?,
        FlowSpec::Circular(s) => circular_green(s, z)?,
        FlowSpec::Jacobi(s) => jacobi_green(s, z)?,
    })
}

fn sample(scn: &Scenario, spec: &FlowSpec, mc: &McParams) -> Result<EmpiricalSpectrum, CliError> {
    let short = mc.m.unwrap_or(mc.n);
    Ok(match spec {
        FlowSpec::Gaussian(s) => sample_gaussian_flow(mc.n, s, mc.beta, mc.trials, mc.seed)?,
        FlowSpec::Chiral(s) => sample_chiral_flow(short, mc.n, s, mc.beta, mc.trials, mc.seed)?,
        FlowSpec::Wishart(s) => sample_chiral_flow(short, mc.n, s, mc.beta, mc.trials, mc.seed)?.squared(),
        FlowSpec::Circular(s) => {
            let m = &s.initial;
            let identity = m.domain() == Domain::Circle && m.atoms().len() == 1 && m.atoms()[0].0 == 0.0;
            if !identity {
                return Err(FlowError::InvalidInitialData("unitary sampler starts from the identity (delta:0)".into()).into());
            }
            let steps = ((50.0 * scn.tau_hat).ceil() as usize).max(1);
            sample_circular_flow(mc.n, steps, scn.tau_hat, mc.trials, mc.seed)?
        }
        FlowSpec::Jacobi(_) => return Err(CliError::Config("no Monte Carlo sampler for the jacobi ensemble".into())),
    })
}

fn parse_point(text: &str) -> Result<C64, CliError> {
    let bad = || CliError::Config(format!("--z expects re,im, got {text:?}"));
    let (re, im) = text.split_once(',').ok_or_else(bad)?;
    Ok(C64::new(re.trim().parse().map_err(|_| bad())?, im.trim().parse().map_err(|_| bad())?))
}

fn parse_orders(text: &str) -> Result<std::ops::RangeInclusive<u32>, CliError> {
    let bad = || CliError::Config(format!("--k expects a..b or a single order, got {text:?}"));
    match text.split_once("..") {
        Some((a, b)) => {
            let a: u32 = a.trim().parse().map_err(|_| bad())?;
            let b: u32 = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            Ok(a..=b)
        }
        None => {
            let k: u32 = text.trim().parse().map_err(|_| bad())?;
            Ok(k..=k)
        }
    }
}

fn moments_csv(curve: &DensityCurve, orders: std::ops::RangeInclusive<u32>) -> Result<(String, Vec<f64>), CliError> {
    let mut csv = String::from("k,moment\n");
    let mut values = Vec::new();
    for k in orders {
        let m = curve_moment(curve, k)?;
        csv.push_str(&format!("{k},{m:.16e}\n"));
        values.push(m);
    }
    Ok((csv, values))
}

pub fn density(flow: &FlowArgs, out: Option<&Path>) -> Result<(), CliError> {
    let scn = scenario_from(flow)?;
    let grid = scn.grid.ok_or_else(|| CliError::Config("--grid is required".into()))?.points()?;
    let curve = compute_density(&scn.spec()?, &grid)?;
    emit(&curve.to_csv(), out)
}

pub fn green(flow: &FlowArgs, points: &[String], out: Option<&Path>) -> Result<(), CliError> {
    let scn = scenario_from(flow)?;
    let spec = scn.spec()?;
    let evals = points
        .iter()
        .map(|p| compute_green(&spec, parse_point(p)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    emit(&diagnostics_jsonl(&evals), out)
}

pub fn mc(
    flow: &FlowArgs,
    n: usize,
    m: Option<usize>,
    beta: u8,
    trials: usize,
    bins: usize,
    out: &Path,
) -> Result<(), CliError> {
    let scn = scenario_from(flow)?;
    let seed = flow.seed.or(scn.mc.as_ref().map(|p| p.seed)).unwrap_or(0);
    let params = McParams { n, m, beta, trials, seed, bins };
    let spec = scn.spec()?;
    std::fs::create_dir_all(out)?;
    let mut artifacts = Artifacts::new();
    let result = (|| {
        let spectrum = sample(&scn, &spec, &params)?;
        let hist = empirical_histogram(&spectrum, bins)?;
        artifacts.write(&out.join("mc_spectra.jsonl"), &spectrum.to_jsonl())?;
        artifacts.write(&out.join("mc_histogram.csv"), &hist.to_csv())?;
        let mut summary = json!({ "count": spectrum.values.len(), "seed": seed });
        if let Some(g) = scn.grid {
            let curve = compute_density(&spec, &g.points()?)?;
            summary["w1"] = json!(wasserstein1(&hist, &curve)?);
        }
        println!("{summary}");
        Ok(())
    })();
    if result.is_err() {
        artifacts.discard();
    }
    result
}

pub fn moments(input: &Path, k: &str, out: Option<&Path>) -> Result<(), CliError> {
    let orders = parse_orders(k)?;
    let curve = read_curve_csv(input)?;
    emit(&moments_csv(&curve, orders)?.0, out)
}

fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let parsed: TrajectoryJson =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Trajectory::from_json(parsed)?)
}

fn trajectory_action(t: &Trajectory, ensemble: Ensemble, a_hat: Option<f64>) -> Result<f64, CliError> {
    match ensemble {
        Ensemble::Gaussian if a_hat.is_some() => Err(CliError::Config("--a-hat is not allowed for gaussian".into())),
        Ensemble::Gaussian => Ok(gaussian_action(t)?),
        Ensemble::Chiral => Ok(chiral_action(t, a_hat.unwrap_or(0.0))?),
        other => Err(CliError::Config(format!("no action functional for {other:?}"))),
    }
}

pub fn action(path: &Path, ensemble: Ensemble, a_hat: Option<f64>, out: Option<&Path>) -> Result<(), CliError> {
    let t = read_trajectory(path)?;
    let s = trajectory_action(&t, ensemble, a_hat)?;
    emit(&format!("{}\n", json!({ "action": s })), out)
}

/// Linear interpolation clamped to the end values.
fn clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= x);
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

/// `∫_0^h |a + (b - a) s / h| ds`.
fn abs_linear(a: f64, b: f64, h: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * h * (a.abs() + b.abs())
    } else {
        0.5 * h * (a * a + b * b) / (a.abs() + b.abs())
    }
}

/// `(L1, W1, sup)` between two curves on their merged grid.
pub fn curve_distances(a: &DensityCurve, b: &DensityCurve) -> Result<(f64, f64, f64), CliError> {
    let mut xs: Vec<f64> = a.grid.iter().chain(&b.grid).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (ca, cb) = (a.cumulative()?, b.cumulative()?);
    let d: Vec<f64> = xs.iter().map(|&x| a.value_at(x) - b.value_at(x)).collect();
    let f: Vec<f64> = xs.iter().map(|&x| clamped(&a.grid, &ca, x) - clamped(&b.grid, &cb, x)).collect();
    let mut l1 = 0.0;
    let mut w1 = 0.0;
    for i in 0..xs.len() - 1 {
        let h = xs[i + 1] - xs[i];
        l1 += abs_linear(d[i], d[i + 1], h);
        w1 += abs_linear(f[i], f[i + 1], h);
    }
    let sup = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((l1, w1, sup))
}

pub fn compare(first: &Path, second: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let (a, b) = (read_curve_csv(first)?, read_curve_csv(second)?);
    let (l1, w1, sup) = curve_distances(&a, &b)?;
    emit(&format!("{}\n", json!({ "l1": l1, "w1": w1, "sup": sup })), out)
}

fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn run(overrides: &FlowArgs, out: &Path) -> Result<(), CliError> {
    let scn = scenario_from(overrides)?;
    let resolved = scn.resolved()?;
    let spec = scn.spec()?;
    std::fs::create_dir_all(out)?;
    let mut artifacts = Artifacts::new();
    let result = run_outputs(&resolved, &spec, out, &mut artifacts);
    if result.is_err() {
        artifacts.discard();
    }
    result
}

fn run_outputs(scn: &Scenario, spec: &FlowSpec, out: &Path, artifacts: &mut Artifacts) -> Result<(), CliError> {
    let mut metrics = Map::new();
    let needs_curve = scn.outputs.iter().any(|o| matches!(o, Output::Density | Output::Moments | Output::Support | Output::McCompare));
    let curve = match (needs_curve, scn.grid) {
        (true, Some(g)) => Some(compute_density(spec, &g.points()?)?),
        _ => None,
    };
    for output in &scn.outputs {
        match output {
            Output::Density => {
                let c = curve.as_ref().expect("grid checked by validate");
                artifacts.write(&out.join("density.csv"), &c.to_csv())?;
                metrics.insert("mass".into(), json!(c.mass()?));
            }
            Output::Moments => {
                let c = curve.as_ref().expect("grid checked by validate");
                let (csv, values) = moments_csv(c, 0..=scn.moments_k.unwrap_or(DEFAULT_MOMENT_ORDER))?;
                artifacts.write(&out.join("moments.csv"), &csv)?;
                metrics.insert("moments".into(), json!(values));
            }
            Output::Support => {
                let c = curve.as_ref().expect("grid checked by validate");
                let runs = support_detect(c, scn.support_threshold.unwrap_or(DEFAULT_SUPPORT_THRESHOLD))?;
                metrics.insert("support".into(), json!(runs.iter().map(|&(a, b)| [a, b]).collect::<Vec<_>>()));
            }
            Output::Green => {
                let evals = scn
                    .green_points
                    .iter()
                    .map(|p| compute_green(spec, C64::new(p[0], p[1])))
                    .collect::<Result<Vec<_>, CliError>>()?;
                artifacts.write(&out.join("green.jsonl"), &diagnostics_jsonl(&evals))?;
                let worst = evals.iter().map(|e| e.residual).fold(0.0, f64::max);
                metrics.insert("green_max_residual".into(), json!(worst));
            }
            Output::McCompare => {
                let params = scn.mc.as_ref().expect("mc checked by validate");
                let spectrum = sample(scn, spec, params)?;
                let hist = empirical_histogram(&spectrum, params.bins)?;
                artifacts.write(&out.join("mc_spectra.jsonl"), &spectrum.to_jsonl())?;
                artifacts.write(&out.join("mc_histogram.csv"), &hist.to_csv())?;
                let c = curve.as_ref().expect("grid checked by validate");
                metrics.insert("w1".into(), json!(wasserstein1(&hist, c)?));
            }
            Output::Action => {
                let path = scn.trajectory.as_ref().expect("trajectory checked by validate");
                let t = read_trajectory(path)?;
                metrics.insert("action".into(), json!(trajectory_action(&t, scn.ensemble, scn.a_hat)?));
            }
        }
    }
    let report = json!({
        "meta": { "timestamp": timestamp(), "version": env!("CARGO_PKG_VERSION") },
        "config": scn,
        "metrics": Value::Object(metrics),
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    artifacts.write(&out.join("report.json"), &(text + "\n"))
}
