//! `abhmm` command-line tool: experiments, fixed points and bound grids.

mod bounds;
mod config;
mod presets;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use abhmm::dynamics::{fixed_point_equation_residual, solve_fixed_point, SolverOptions};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Validation(String),
    /// Failure while computing or writing: exit code 1.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl From<abhmm::Error> for CliError {
    fn from(e: abhmm::Error) -> Self {
        use abhmm::Error as E;
        match e {
            E::Validation(_) | E::DimensionMismatch { .. } | E::StateOutOfRange { .. } | E::AssumptionViolated { .. } => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "abhmm", version, about = "αβ-HMM filter experiments and closed-form bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config or a named preset.
    Simulate(SimulateArgs),
    /// Solve the reference fixed point for one (α, β, d).
    FixedPoint(FixedPointArgs),
    /// Tabulate closed-form rates and bounds over a parameter grid.
    Bounds(BoundsArgs),
    /// List the built-in experiment and bounds presets.
    ListPresets,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML config, JSON config, or a previous run's manifest.json.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the environment horizon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct FixedPointArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    /// Identifiability gaps d_1..d_{M-1}, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
    d: Vec<f64>,
    /// Number of states; a single `--d` value is repeated M − 1 times.
    #[arg(long = "M", short = 'M')]
    states: Option<usize>,
    #[arg(long, default_value_t = SolverOptions::default().tolerance)]
    tolerance: f64,
    #[arg(long, default_value_t = SolverOptions::default().max_iterations)]
    max_iterations: usize,
}

#[derive(Args)]
pub struct BoundsArgs {
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub beta: Vec<f64>,
    #[arg(long = "d-min", value_delimiter = ',')]
    pub d_min: Vec<f64>,
    /// d_max / d_min; the gaps are spaced evenly between the two.
    #[arg(long = "d-ratio", value_delimiter = ',', default_value = "1")]
    pub d_ratio: Vec<f64>,
    #[arg(long = "M", short = 'M', value_delimiter = ',')]
    pub states: Vec<usize>,
    /// Log-likelihood-ratio bound C; enables the stochastic bounds.
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<f64>,
    /// Take the grid from a bounds preset instead of the flags.
    #[arg(long, conflicts_with_all = ["alpha", "beta", "d_min", "states", "c"])]
    pub preset: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::FixedPoint(args) => fixed_point(args),
        Command::Bounds(args) => bounds::run(args),
        Command::ListPresets => {
            list_presets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("abhmm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(args: &SimulateArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            if path.extension().is_some_and(|e| e == "json") {
                ExperimentConfig::from_json(&text)?
            } else {
                ExperimentConfig::from_toml(&text)?
            }
        }
        (None, Some(name)) => {
            let preset = presets::find(name).ok_or_else(|| CliError::Validation(format!("unknown preset '{name}'; see list-presets")))?;
            ExperimentConfig::from_toml(preset.toml)?
        }
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = args.runs {
        cfg.runs = runs;
    }
    if let Some(horizon) = args.horizon {
        match cfg.environment.as_mut() {
            Some(env) => env.horizon = horizon,
            None => return Err(CliError::Validation("--horizon: this experiment has no environment".into())),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args)?;
    let files = run::run_experiment(&cfg, &args.out)?;
    println!("{} ({} files) -> {}", cfg.name, files.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct FixedPointOutput<'a> {
    alpha: f64,
    beta: f64,
    states: usize,
    d: &'a [f64],
    x_inf: &'a [f64],
    mu_inf: &'a [f64],
    x_bar_inf: f64,
    iterations: usize,
    residual: f64,
    equation_residual: f64,
}

fn fixed_point(args: FixedPointArgs) -> Result<(), CliError> {
    let mut d = args.d;
    if let Some(m) = args.states {
        if m < 2 {
            return Err(CliError::Validation(format!("--M must be >= 2, got {m}")));
        }
        if d.len() == 1 {
            d = vec![d[0]; m - 1];
        } else if d.len() != m - 1 {
            return Err(CliError::Validation(format!("--d: expected M - 1 = {} values, got {}", m - 1, d.len())));
        }
    }
    let opts = SolverOptions {
        tolerance: args.tolerance,
        max_iterations: args.max_iterations,
    };
    let fp = solve_fixed_point(args.alpha, args.beta, &d, opts)?;
    let equation_residual = fixed_point_equation_residual(&fp.x_inf, args.alpha, args.beta, &d)?;
    let out = FixedPointOutput {
        alpha: args.alpha,
        beta: args.beta,
        states: d.len() + 1,
        d: &d,
        x_inf: fp.x_inf.as_slice(),
        mu_inf: &fp.mu_inf,
        x_bar_inf: fp.x_bar(),
        iterations: fp.iterations,
        residual: fp.residual,
        equation_residual,
    };
    let json = serde_json::to_string_pretty(&out).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn list_presets() {
    println!("experiments (simulate --preset NAME):");
    for p in presets::PRESETS {
        println!("  {:<18} {}", p.name, p.description);
    }
    println!("bounds grids (bounds --preset NAME):");
    for p in presets::BOUNDS_PRESETS {
        println!("  {:<18} {}", p.name, p.description);
    }
}
