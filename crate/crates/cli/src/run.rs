//! Experiment runners for `simulate`. Every run writes its resolved config and
//! a manifest next to the results; nothing depends on wall-clock time, so the
//! same config reproduces the same bytes.

use std::fs::File;
use std::path::Path;

use abhmm::dynamics::{
    adaptation_times, bayes_adaptation_bound, drifted_step, reference_contraction_rate, solve_fixed_point,
    switch_reference_trajectory, BoundsReport, LogBeliefRatio, SolverOptions,
};
use abhmm::model::{compute_identifiability, kl_gaps, KlMethod};
use abhmm::sim::{measure_adaptation_time, monte_carlo, EnvironmentSpec, MonteCarloConfig, Schedule};
use abhmm::{FilterConfig, InfoProfile, ObservationModel};
use serde::Serialize;

use crate::config::{ExperimentConfig, Kind};
use crate::{io_error, CliError};

pub const SCHEMA_VERSION: u32 = 1;

struct OutputDir<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> OutputDir<'a> {
    fn create(dir: &'a Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn file(&mut self, name: &str) -> Result<File, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        self.files.push(name.to_string());
        Ok(file)
    }

    fn text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| io_error(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_writer(self.file(name)?);
        let err = |e: csv::Error| io_error(&path, e);
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(row).map_err(err)?;
        }
        w.flush().map_err(|e| io_error(&path, e))
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Filter labels made unique by appending the list position on collision.
fn unique_labels(filters: &[FilterConfig]) -> Vec<String> {
    let labels: Vec<String> = filters.iter().map(FilterConfig::label).collect();
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if labels.iter().filter(|o| *o == l).count() > 1 {
                format!("{l}_{i}")
            } else {
                l.clone()
            }
        })
        .collect()
}

fn alpha_beta(f: &FilterConfig) -> (Option<f64>, Option<f64>) {
    match f {
        FilterConfig::Abhmm { alpha, beta } | FilterConfig::LinearizedAbhmm { alpha, beta } => (Some(*alpha), Some(*beta)),
        _ => (None, None),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    name: &'a str,
    kind: Kind,
    seed: u64,
    runs: usize,
    files: &'a [String],
    config: &'a ExperimentConfig,
}

/// Runs `cfg` into `dir` and returns the written file names.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let mut out = OutputDir::create(dir)?;
    out.text("config.toml", &cfg.to_toml())?;
    match cfg.kind {
        Kind::MonteCarlo => run_monte_carlo(cfg, &mut out)?,
        Kind::Reference => run_reference(cfg, &mut out)?,
        Kind::Adaptation => run_adaptation(cfg, &mut out)?,
    }
    let mut files = out.files.clone();
    files.push("manifest.json".to_string());
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: "abhmm",
        version: env!("CARGO_PKG_VERSION"),
        name: &cfg.name,
        kind: cfg.kind,
        seed: cfg.seed,
        runs: cfg.runs,
        files: &files,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.text("manifest.json", &(json + "\n"))?;
    Ok(files)
}

fn run_monte_carlo(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let env = cfg.environment.as_ref().expect("validated");
    let filters = cfg.expanded_filters();
    let labels = unique_labels(&filters);
    let mc = MonteCarloConfig::new(cfg.runs, cfg.seed);
    let tracked_state = match env.schedule {
        Schedule::Constant { state } if cfg.track_fixed_point => Some(state),
        _ => None,
    };
    let mut rows = Vec::new();
    for pair in cfg.model_pairs()? {
        let info = tracked_state
            .map(|s| InfoProfile::compute(&pair.truth, s, &pair.likelihood, s))
            .transpose()?;
        for (f, label) in filters.iter().zip(&labels) {
            let analysis = match (f, &info) {
                (FilterConfig::Abhmm { alpha, beta }, Some(info)) => Some((
                    solve_fixed_point(*alpha, *beta, &info.d, SolverOptions::default())?,
                    BoundsReport::compute(*alpha, *beta, &info.d, info.c)?,
                )),
                _ => None,
            };
            let series = monte_carlo(
                &mc,
                env,
                &pair.truth,
                &pair.likelihood,
                f,
                analysis.as_ref().map(|(fp, _)| &fp.x_inf),
            )?;
            if cfg.write_series {
                let name = format!("series_sigma{}_{label}.csv", pair.sigma);
                series.write_csv(out.file(&name)?)?;
            }
            let summary = series.summary(cfg.seed);
            let (alpha, beta) = alpha_beta(f);
            let report = analysis.as_ref().map(|(_, r)| r);
            rows.push(vec![
                pair.sigma.to_string(),
                label.clone(),
                opt(alpha),
                opt(beta),
                summary.n_runs.to_string(),
                summary.horizon.to_string(),
                summary.overall_accuracy.to_string(),
                summary.final_p_e.to_string(),
                opt(summary.adaptation_time),
                opt(summary.tail_mean_gap),
                opt(report.map(|r| r.x_bar_inf)),
                opt(report.and_then(|r| r.steady_gap_bound)),
                opt(report.and_then(|r| r.error_prob_steady)),
            ]);
        }
    }
    out.csv(
        "summary.csv",
        &header(&[
            "sigma",
            "filter",
            "alpha",
            "beta",
            "runs",
            "horizon",
            "overall_accuracy",
            "final_p_e",
            "adaptation_time",
            "tail_mean_gap",
            "x_bar_inf",
            "steady_gap_bound",
            "error_prob_bound",
        ]),
        &rows,
    )
}

/// True state after `step` observations of a deterministic schedule.
fn scheduled_state(schedule: &Schedule, step: usize) -> usize {
    match schedule {
        Schedule::Constant { state } => *state,
        Schedule::SwitchAt { state_a, state_b, t1 } => {
            if step <= *t1 {
                *state_a
            } else {
                *state_b
            }
        }
        _ => unreachable!("reference schedules are validated"),
    }
}

#[derive(Serialize)]
struct FixedPointEntry<'a> {
    sigma: f64,
    filter: &'a str,
    x_inf: &'a [f64],
    mu_inf: &'a [f64],
    iterations: usize,
    residual: f64,
    bounds: &'a BoundsReport,
}

fn run_reference(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let env: &EnvironmentSpec = cfg.environment.as_ref().expect("validated");
    let filters = cfg.expanded_filters();
    let labels = unique_labels(&filters);
    let mut summary = Vec::new();
    let mut fixed_points = Vec::new();
    for pair in cfg.model_pairs()? {
        let m = pair.likelihood.num_states();
        let info = InfoProfile::compute(&pair.truth, 0, &pair.likelihood, 0)?;
        let steps: Vec<usize> = (0..=env.horizon).map(|i| scheduled_state(&env.schedule, i.max(1))).collect();
        // Expected log-likelihood ratios against state 0, per true state.
        let mut gaps: Vec<Option<Vec<f64>>> = vec![None; m];
        for &s in &steps {
            if gaps[s].is_none() {
                gaps[s] = Some(kl_gaps(&pair.truth, s, &pair.likelihood, 0, KlMethod::Auto)?);
            }
        }
        for (f, label) in filters.iter().zip(&labels) {
            let FilterConfig::Abhmm { alpha, beta } = *f else {
                unreachable!("reference filters are validated")
            };
            let fp = solve_fixed_point(alpha, beta, &info.d, SolverOptions::default())?;
            let report = BoundsReport::compute(alpha, beta, &info.d, info.c)?;
            let lambda = reference_contraction_rate(alpha, beta, info.d_min, 0.0, m)?;
            let mut x = LogBeliefRatio::zeros(m - 1);
            let gap_0 = x.sup_distance(&fp.x_inf);
            let mut rows = Vec::with_capacity(env.horizon + 1);
            let mut settled = true;
            for (step, &state) in steps.iter().enumerate() {
                if step > 0 {
                    let drift: Vec<f64> = gaps[state].as_ref().expect("gaps computed").iter().map(|g| -beta * g).collect();
                    x = drifted_step(&x, alpha, &drift)?;
                }
                settled &= state == 0;
                let mu = x.to_probabilities();
                let mut row = vec![step.to_string(), state.to_string()];
                row.extend(x.iter().map(f64::to_string));
                row.push(mu[0].to_string());
                row.push(mu[state].to_string());
                if settled {
                    row.push(x.sup_distance(&fp.x_inf).to_string());
                    row.push((lambda.powi(step as i32) * gap_0).to_string());
                } else {
                    row.extend([String::new(), String::new()]);
                }
                rows.push(row);
            }
            let mut cols = vec!["step".to_string(), "state".to_string()];
            cols.extend((1..m).map(|k| format!("x_{k}")));
            cols.extend(header(&["mu_0", "mu_state", "gap", "lambda_envelope"]));
            if cfg.write_series {
                out.csv(&format!("reference_sigma{}_{label}.csv", pair.sigma), &cols, &rows)?;
            }
            summary.push(vec![
                pair.sigma.to_string(),
                label.clone(),
                alpha.to_string(),
                beta.to_string(),
                fp.x_bar().to_string(),
                fp.mu_inf[0].to_string(),
                lambda.to_string(),
                report.gamma1.to_string(),
                report.mu_lower.to_string(),
                report.mu_upper.to_string(),
                fp.iterations.to_string(),
            ]);
            fixed_points.push((pair.sigma, label.clone(), fp, report));
        }
    }
    out.csv(
        "summary.csv",
        &header(&[
            "sigma",
            "filter",
            "alpha",
            "beta",
            "x_bar_inf",
            "mu_true_inf",
            "lambda",
            "gamma1",
            "mu_lower",
            "mu_upper",
            "iterations",
        ]),
        &summary,
    )?;
    let entries: Vec<FixedPointEntry> = fixed_points
        .iter()
        .map(|(sigma, label, fp, report)| FixedPointEntry {
            sigma: *sigma,
            filter: label,
            x_inf: fp.x_inf.as_slice(),
            mu_inf: &fp.mu_inf,
            iterations: fp.iterations,
            residual: fp.residual,
            bounds: report,
        })
        .collect();
    let json = serde_json::to_string_pretty(&entries).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.text("fixed_points.json", &(json + "\n"))
}

fn run_adaptation(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let settings = cfg.adaptation.as_ref().expect("validated");
    let filters = cfg.expanded_filters();
    let labels = unique_labels(&filters);
    let mc = MonteCarloConfig::new(cfg.runs, cfg.seed);
    let mut rows = Vec::new();
    for pair in cfg.model_pairs()? {
        let d_s1 = compute_identifiability(&pair.truth, 0, &pair.likelihood, 0)?[0];
        let d_s2 = compute_identifiability(&pair.truth, 1, &pair.likelihood, 1)?[0];
        for (f, label) in filters.iter().zip(&labels) {
            let (alpha, beta) = match *f {
                FilterConfig::Abhmm { alpha, beta } => (alpha, beta),
                _ => (0.0, 1.0),
            };
            for &t1 in &settings.t1 {
                let horizon = t1 + settings.post_switch;
                let x = switch_reference_trajectory(alpha, beta, d_s1, d_s2, settings.x0, t1, horizon)?;
                let bound = if alpha == 0.0 {
                    bayes_adaptation_bound(d_s1, d_s2, settings.x0, t1)?
                } else {
                    adaptation_times(alpha, beta, d_s1, d_s2, settings.x0, t1)?.abhmm
                };
                if cfg.write_series {
                    let series: Vec<Vec<String>> = x
                        .iter()
                        .enumerate()
                        .map(|(step, &v)| {
                            let mu_1 = LogBeliefRatio::new(vec![v]).to_probabilities()[1];
                            vec![step.to_string(), v.to_string(), mu_1.to_string()]
                        })
                        .collect();
                    let name = format!("adaptation_sigma{}_{label}_t1_{t1}.csv", pair.sigma);
                    out.csv(&name, &header(&["step", "x", "mu_1"]), &series)?;
                }
                let stochastic = if settings.stochastic {
                    let env = EnvironmentSpec::new(
                        Schedule::SwitchAt {
                            state_a: 0,
                            state_b: 1,
                            t1,
                        },
                        horizon,
                    );
                    monte_carlo(&mc, &env, &pair.truth, &pair.likelihood, f, None)?.adaptation_time
                } else {
                    None
                };
                rows.push(vec![
                    pair.sigma.to_string(),
                    label.clone(),
                    alpha.to_string(),
                    beta.to_string(),
                    t1.to_string(),
                    d_s1.to_string(),
                    d_s2.to_string(),
                    opt(measure_adaptation_time(&x, t1)),
                    bound.to_string(),
                    opt(stochastic),
                ]);
            }
        }
    }
    out.csv(
        "adaptation.csv",
        &header(&[
            "sigma",
            "filter",
            "alpha",
            "beta",
            "t1",
            "d_s1",
            "d_s2",
            "reference_time",
            "closed_form_time",
            "median_time",
        ]),
        &rows,
    )
}
