//! `specflow`: run spectral-flow scenarios, evaluate densities and Green's
//! functions, sample the matrix models and compare curves.

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use specflow::FlowError;

use scenario::{Ensemble, GridSpec};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(FlowError),
    Io(String),
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Io(msg) => CliError::Io(msg),
            other => CliError::Solver(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn report(&self) -> String {
        match self {
            CliError::Config(msg) => format!("config error: {msg}"),
            CliError::Solver(e) => format!("solver error: {}: {e}", e.name()),
            CliError::Io(msg) => format!("io error: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "specflow", version, about = "Hydrodynamic spectral flows of random matrix ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flow selection: a scenario file or an ensemble with `--init`, plus overrides.
#[derive(Args, Debug, Clone)]
pub struct FlowArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with_all = ["ensemble", "init"])]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum, requires = "init")]
    pub ensemble: Option<Ensemble>,
    /// `delta:x`, `pair:a`, `uniform:a:b` or `file:path`.
    #[arg(long, requires = "ensemble")]
    pub init: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long = "a-hat")]
    pub a_hat: Option<f64>,
    /// `min:max:n`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every output requested by a scenario file and write `report.json`.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long = "a-hat")]
        a_hat: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "specflow-out")]
        out: PathBuf,
    },
    /// Density on a grid as CSV.
    Density {
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Green's function at points `re,im`, one JSON line each.
    Green {
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long = "z", required = true, allow_hyphen_values = true)]
        z: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo spectra and histogram; W1 to the solver density when a grid is given.
    Mc {
        #[command(flatten)]
        flow: FlowArgs,
        /// Matrix size; the long side for chiral and Wishart.
        #[arg(long)]
        n: usize,
        /// Short side for chiral and Wishart; defaults to `n`.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 2)]
        beta: u8,
        #[arg(long, default_value_t = 16)]
        trials: usize,
        #[arg(long, default_value_t = 400)]
        bins: usize,
        /// Output directory.
        #[arg(long, default_value = "specflow-out")]
        out: PathBuf,
    },
    /// Moments of a density CSV.
    Moments {
        #[arg(long)]
        input: PathBuf,
        /// Inclusive range `a..b` or a single order.
        #[arg(long, default_value = "0..4")]
        k: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Action of a trajectory JSON file.
    Action {
        #[arg(long)]
        trajectory: PathBuf,
        /// `gaussian` or `chiral`.
        #[arg(long, value_enum, default_value = "gaussian")]
        ensemble: Ensemble,
        #[arg(long = "a-hat")]
        a_hat: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// L1, W1 and sup distances between two density CSVs.
    Compare {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("SPECFLOW_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Config(format!("SPECFLOW_THREADS must be a count, got {v:?}")))?;
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<(), CliError> {
    configure_threads()?;
    match command {
        Command::Run { scenario, tau, a_hat, grid, seed, out } => {
            let overrides = FlowArgs { scenario: Some(scenario), ensemble: None, init: None, tau, a_hat, grid, seed };
            commands::run(&overrides, &out)
        }
        Command::Density { flow, out } => commands::density(&flow, out.as_deref()),
        Command::Green { flow, z, out } => commands::green(&flow, &z, out.as_deref()),
        Command::Mc { flow, n, m, beta, trials, bins, out } => commands::mc(&flow, n, m, beta, trials, bins, &out),
        Command::Moments { input, k, out } => commands::moments(&input, &k, out.as_deref()),
        Command::Action { trajectory, ensemble, a_hat, out } => commands::action(&trajectory, ensemble, a_hat, out.as_deref()),
        Command::Compare { first, second, out } => commands::compare(&first, &second, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code())
        }
    }
}

/// Grid override helper shared by the subcommands.
pub fn grid_override(text: &Option<String>) -> Result<Option<GridSpec>, CliError> {
    text.as_deref().map(GridSpec::parse).transpose()
}
