//! `bounds` subcommand: closed-form quantities over a parameter grid.

use std::io::Write;

use abhmm::dynamics::BoundsReport;

use crate::{io_error, presets, BoundsArgs, CliError};

pub const HEADER: [&str; 18] = [
    "alpha",
    "beta",
    "M",
    "d_min",
    "d_max",
    "c",
    "lambda",
    "gamma",
    "gamma1",
    "mu_lower",
    "mu_upper",
    "mu_lower_vacuous",
    "mu_upper_clamped",
    "x_bar_inf",
    "mu_true_inf",
    "lambda1",
    "steady_gap_bound",
    "error_prob_steady",
];

/// `count` gaps spaced evenly from `d_min` to `ratio · d_min`.
pub fn spread_gaps(d_min: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![d_min];
    }
    let d_max = ratio * d_min;
    (0..count)
        .map(|i| d_min + (d_max - d_min) * i as f64 / (count - 1) as f64)
        .collect()
}

struct Grid {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    d_min: Vec<f64>,
    d_ratio: Vec<f64>,
    states: Vec<usize>,
    c: Vec<Option<f64>>,
}

impl Grid {
    fn from_args(args: &BoundsArgs) -> Result<Self, CliError> {
        if let Some(name) = &args.preset {
            let p = presets::find_bounds(name)
                .ok_or_else(|| CliError::Validation(format!("unknown bounds preset '{name}'; see list-presets")))?;
            return Ok(Grid {
                alpha: p.alpha.to_vec(),
                beta: p.beta.to_vec(),
                d_min: p.d_min.to_vec(),
                d_ratio: p.d_ratio.to_vec(),
                states: p.states.to_vec(),
                c: vec![None],
            });
        }
        let c = if args.c.is_empty() {
            vec![None]
        } else {
            args.c.iter().copied().map(Some).collect()
        };
        Ok(Grid {
            alpha: args.alpha.clone(),
            beta: args.beta.clone(),
            d_min: args.d_min.clone(),
            d_ratio: args.d_ratio.clone(),
            states: args.states.clone(),
            c,
        })
    }

    fn is_empty(&self) -> bool {
        self.alpha.is_empty() || self.beta.is_empty() || self.d_min.is_empty() || self.d_ratio.is_empty() || self.states.is_empty()
    }

    fn reports(&self) -> Result<Vec<BoundsReport>, CliError> {
        let mut out = Vec::new();
        for &m in &self.states {
            if m < 2 {
                return Err(CliError::Validation(format!("--M must be >= 2, got {m}")));
            }
            for &d_min in &self.d_min {
                for &ratio in &self.d_ratio {
                    if !(ratio >= 1.0) {
                        return Err(CliError::Validation(format!("--d-ratio must be >= 1, got {ratio}")));
                    }
                    let d = spread_gaps(d_min, ratio, m - 1);
                    for &beta in &self.beta {
                        for &alpha in &self.alpha {
                            for &c in &self.c {
                                out.push(BoundsReport::compute(alpha, beta, &d, c)?);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn record(r: &BoundsReport) -> Vec<String> {
    vec![
        r.alpha.to_string(),
        r.beta.to_string(),
        r.states.to_string(),
        r.d_min.to_string(),
        r.d_max.to_string(),
        opt(r.c),
        r.lambda.to_string(),
        r.gamma.to_string(),
        r.gamma1.to_string(),
        r.mu_lower.to_string(),
        r.mu_upper.to_string(),
        r.mu_lower_vacuous.to_string(),
        r.mu_upper_clamped.to_string(),
        r.x_bar_inf.to_string(),
        r.mu_true_inf.to_string(),
        opt(r.lambda1),
        opt(r.steady_gap_bound),
        opt(r.error_prob_steady),
    ]
}

fn write_csv<W: Write>(writer: W, reports: &[BoundsReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in reports {
        w.write_record(record(r))?;
    }
    w.flush()?;
    Ok(())
}

fn is_broken_pipe(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe)
}

pub fn run(args: BoundsArgs) -> Result<(), CliError> {
    let grid = Grid::from_args(&args)?;
    if grid.is_empty() {
        return Err(CliError::Validation(
            "empty grid: pass --alpha, --beta, --d-min and --M, or --preset".into(),
        ));
    }
    let reports = grid.reports()?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| io_error(path, e))?;
            write_csv(file, &reports).map_err(|e| io_error(path, e))
        }
        None => match write_csv(std::io::stdout().lock(), &reports) {
            Err(e) if is_broken_pipe(&e) => Ok(()),
            other => other.map_err(|e| CliError::Runtime(e.to_string())),
        },
    }
}
