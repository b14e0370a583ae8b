//! Environments, filter runs over sampled trajectories, and Monte Carlo
//! estimates of per-step learning metrics.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::LogBeliefRatio;
use crate::error::{invalid, Error, Result};
use crate::filter::{equal_exit_matrix, evaluate, Belief, FilterConfig, TransitionMatrix};
use crate::model::{non_reference_states, ObservationModel};
use crate::numeric::pairwise_sum;

/// How the true state evolves over steps `1..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant { state: usize },
    /// `state_a` for steps `i ≤ t1`, `state_b` afterwards.
    SwitchAt { state_a: usize, state_b: usize, t1: usize },
    /// Uniform initial state, redrawn uniformly (repeats allowed) whenever
    /// `i % period == 0`.
    PeriodicRedraw { period: usize },
    Markov { transition: TransitionMatrix, initial: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub schedule: Schedule,
    pub horizon: usize,
}

fn check_state(state: usize, states: usize) -> Result<()> {
    if state >= states {
        return Err(Error::StateOutOfRange { state, states });
    }
    Ok(())
}

impl EnvironmentSpec {
    pub fn new(schedule: Schedule, horizon: usize) -> Self {
        Self { schedule, horizon }
    }

    pub fn validate(&self, states: usize) -> Result<()> {
        if self.horizon < 1 {
            return Err(invalid("horizon: must be >= 1"));
        }
        match &self.schedule {
            Schedule::Constant { state } => check_state(*state, states),
            Schedule::SwitchAt { state_a, state_b, t1 } => {
                check_state(*state_a, states)?;
                check_state(*state_b, states)?;
                if *t1 >= self.horizon {
                    return Err(invalid(format!("t1: must be < horizon ({}), got {t1}", self.horizon)));
                }
                Ok(())
            }
            Schedule::PeriodicRedraw { period } if *period < 1 => Err(invalid("period: must be >= 1")),
            Schedule::PeriodicRedraw { .. } => Ok(()),
            Schedule::Markov { transition, initial } => {
                if transition.num_states() != states || initial.len() != states {
                    return Err(Error::DimensionMismatch {
                        expected: states,
                        actual: if transition.num_states() != states {
                            transition.num_states()
                        } else {
                            initial.len()
                        },
                    });
                }
                if initial.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(invalid("initial: entries must be finite and non-negative"));
                }
                let total: f64 = initial.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("initial: must sum to 1, sums to {total}")));
                }
                Ok(())
            }
        }
    }

    /// Scheduled state sequence for steps `1..=horizon`.
    pub fn draw_states(&self, states: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        self.validate(states)?;
        let h = self.horizon;
        Ok(match &self.schedule {
            Schedule::Constant { state } => vec![*state; h],
            Schedule::SwitchAt { state_a, state_b, t1 } => {
                (1..=h).map(|i| if i <= *t1 { *state_a } else { *state_b }).collect()
            }
            Schedule::PeriodicRedraw { period } => {
                let mut current = rng.random_range(0..states);
                (1..=h)
                    .map(|i| {
                        if i % period == 0 {
                            current = rng.random_range(0..states);
                        }
                        current
                    })
                    .collect()
            }
            Schedule::Markov { transition, initial } => {
                let start = WeightedIndex::new(initial).map_err(|e| invalid(format!("initial: {e}")))?;
                let rows = (0..states)
                    .map(|n| WeightedIndex::new(transition.row(n)).map_err(|e| invalid(format!("transition: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                let mut current = start.sample(rng);
                let mut out = Vec::with_capacity(h);
                out.push(current);
                for _ in 1..h {
                    current = rows[current].sample(rng);
                    out.push(current);
                }
                out
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub observations: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Draws the state sequence, then one observation per step from `truth`.
pub fn generate_trajectory(env: &EnvironmentSpec, truth: &dyn ObservationModel, rng: &mut dyn RngCore) -> Result<Trajectory> {
    let states = env.draw_states(truth.num_states(), rng)?;
    let observations = states.iter().map(|&s| truth.sample(s, rng)).collect();
    Ok(Trajectory { states, observations })
}

fn prepare(filter: &FilterConfig, states: usize) -> Result<FilterConfig> {
    filter.validate(states)?;
    Ok(match filter {
        FilterConfig::EqualExitHmm { h } => FilterConfig::FullHmm {
            transition: equal_exit_matrix(states, *h)?,
        },
        other => other.clone(),
    })
}

/// Belief history `[initial, after step 1, …, after step T]`.
pub fn run_filter(
    filter: &FilterConfig,
    model: &dyn ObservationModel,
    trajectory: &Trajectory,
    initial: &Belief,
) -> Result<Vec<Belief>> {
    if initial.num_states() != model.num_states() {
        return Err(Error::DimensionMismatch {
            expected: model.num_states(),
            actual: initial.num_states(),
        });
    }
    let filter = prepare(filter, model.num_states())?;
    let mut history = Vec::with_capacity(trajectory.len() + 1);
    history.push(initial.clone());
    for &obs in &trajectory.observations {
        let next = filter.step(history.last().expect("non-empty"), obs, model)?;
        history.push(next);
    }
    Ok(history)
}

/// True when the belief in `true_state` strictly exceeds every other state.
pub fn correct_learning_indicator(belief: &Belief, true_state: usize) -> bool {
    let w = belief.log_weights();
    let target = w[true_state];
    w.iter().enumerate().all(|(m, &v)| m == true_state || target > v)
}

/// First `T ≥ 1` with `x[t1 + T] > 0`, where `x` is a log-ratio series
/// indexed by step (`x[0]` is the prior). `None` if it never happens.
pub fn measure_adaptation_time(log_ratios: &[f64], t1: usize) -> Option<usize> {
    log_ratios
        .iter()
        .enumerate()
        .skip(t1 + 1)
        .find(|(_, &x)| x > 0.0)
        .map(|(i, _)| i - t1)
}

/// [`measure_adaptation_time`] on a binary belief history, with the ratio
/// `ln μ(state_b)/μ(state_a)`.
pub fn belief_adaptation_time(history: &[Belief], state_a: usize, state_b: usize, t1: usize) -> Result<Option<usize>> {
    if let Some(b) = history.first() {
        if b.num_states() != 2 {
            return Err(invalid(format!("adaptation time needs 2 states, got {}", b.num_states())));
        }
    }
    check_state(state_a, 2)?;
    check_state(state_b, 2)?;
    let x: Vec<f64> = history
        .iter()
        .map(|b| b.log_weights()[state_b] - b.log_weights()[state_a])
        .collect();
    Ok(measure_adaptation_time(&x, t1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_runs: usize,
    pub master_seed: u64,
    /// Index of the first run; runs `offset..offset + n_runs` are simulated.
    #[serde(default)]
    pub run_offset: u64,
}

impl MonteCarloConfig {
    pub fn new(n_runs: usize, master_seed: u64) -> Self {
        Self {
            n_runs,
            master_seed,
            run_offset: 0,
        }
    }
}

/// Seed of run `run_index`: a SplitMix64 finalizer over the master seed and
/// a golden-ratio multiple of the index.
pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    let mut z = master_seed ^ run_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-step averages over Monte Carlo runs; index `i` holds step `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub filter: String,
    pub n_runs: usize,
    pub correct_counts: Vec<u64>,
    pub accuracy: Vec<f64>,
    pub p_e: Vec<f64>,
    pub mean_belief_true: Vec<f64>,
    pub mean_gap: Option<Vec<f64>>,
    pub overall_accuracy: f64,
    /// Median post-switch adaptation time over runs, for binary switch
    /// environments. Runs that never adapt rank last.
    pub adaptation_time: Option<usize>,
}

impl MetricsSeries {
    pub fn horizon(&self) -> usize {
        self.accuracy.len()
    }

    /// `p̂_e` after `step` observations (`1..=horizon`).
    pub fn p_e_at(&self, step: usize) -> f64 {
        self.p_e[step - 1]
    }

    /// Mean of `mean_gap` over the last `window` steps.
    pub fn tail_mean_gap(&self, window: usize) -> Option<f64> {
        let gap = self.mean_gap.as_ref()?;
        let tail = &gap[gap.len().saturating_sub(window)..];
        Some(pairwise_sum(tail) / tail.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Numeric(format!("csv: {e}"));
        w.write_record(["step", "accuracy", "p_e", "mean_belief_true", "mean_gap"])
            .map_err(io)?;
        for i in 0..self.horizon() {
            let gap = self.mean_gap.as_ref().map(|g| g[i].to_string()).unwrap_or_default();
            w.write_record([
                (i + 1).to_string(),
                self.accuracy[i].to_string(),
                self.p_e[i].to_string(),
                self.mean_belief_true[i].to_string(),
                gap,
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Numeric(format!("csv: {e}")))
    }

    pub fn summary(&self, master_seed: u64) -> MetricsSummary {
        MetricsSummary {
            filter: self.filter.clone(),
            n_runs: self.n_runs,
            horizon: self.horizon(),
            master_seed,
            overall_accuracy: self.overall_accuracy,
            final_p_e: self.p_e.last().copied().unwrap_or(f64::NAN),
            adaptation_time: self.adaptation_time,
            tail_mean_gap: self.tail_mean_gap((self.horizon() / 4).max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub filter: String,
    pub n_runs: usize,
    pub horizon: usize,
    pub master_seed: u64,
    pub overall_accuracy: f64,
    pub final_p_e: f64,
    pub adaptation_time: Option<usize>,
    /// Mean gap to the fixed point over the final quarter of the horizon.
    pub tail_mean_gap: Option<f64>,
}

struct RunRecord {
    correct: Vec<bool>,
    belief_true: Vec<f64>,
    gap: Option<Vec<f64>>,
    adaptation: Option<usize>,
}

fn gap_to(belief: &Belief, true_state: usize, target: &LogBeliefRatio) -> f64 {
    let w = belief.log_weights();
    let base = w[true_state];
    non_reference_states(w.len(), true_state)
        .zip(target.iter())
        .map(|(k, t)| (w[k] - base - t).abs())
        .fold(0.0, f64::max)
}

fn simulate_run(
    trajectory: &Trajectory,
    env: &EnvironmentSpec,
    likelihood: &dyn ObservationModel,
    filter: &FilterConfig,
    fixed_point: Option<&LogBeliefRatio>,
) -> Result<RunRecord> {
    let m = likelihood.num_states();
    let h = trajectory.len();
    let switch = match env.schedule {
        Schedule::SwitchAt { state_a, state_b, t1 } if m == 2 => Some((state_a, state_b, t1)),
        _ => None,
    };
    let mut belief = Belief::uniform(m);
    let mut record = RunRecord {
        correct: Vec::with_capacity(h),
        belief_true: Vec::with_capacity(h),
        gap: fixed_point.map(|_| Vec::with_capacity(h)),
        adaptation: None,
    };
    for (i, (&obs, &truth)) in trajectory.observations.iter().zip(&trajectory.states).enumerate() {
        belief = filter.update(&belief, &evaluate(likelihood, obs)?)?;
        record.correct.push(correct_learning_indicator(&belief, truth));
        record.belief_true.push(belief.probability(truth));
        if let (Some(gap), Some(fp)) = (record.gap.as_mut(), fixed_point) {
            gap.push(gap_to(&belief, truth, fp));
        }
        if let Some((a, b, t1)) = switch {
            let step = i + 1;
            let w = belief.log_weights();
            if record.adaptation.is_none() && step > t1 && w[b] - w[a] > 0.0 {
                record.adaptation = Some(step - t1);
            }
        }
    }
    Ok(record)
}

fn aggregate(filter: &FilterConfig, runs: &[RunRecord], horizon: usize) -> MetricsSeries {
    let n = runs.len();
    let mut correct_counts = vec![0u64; horizon];
    for r in runs {
        for (c, &ok) in correct_counts.iter_mut().zip(&r.correct) {
            *c += ok as u64;
        }
    }
    let accuracy: Vec<f64> = correct_counts.iter().map(|&c| c as f64 / n as f64).collect();
    let p_e = accuracy.iter().map(|a| 1.0 - a).collect();
    let column_mean = |get: &dyn Fn(&RunRecord) -> &[f64]| -> Vec<f64> {
        let mut column = vec![0.0; n];
        (0..horizon)
            .map(|i| {
                for (slot, r) in column.iter_mut().zip(runs) {
                    *slot = get(r)[i];
                }
                pairwise_sum(&column) / n as f64
            })
            .collect()
    };
    let mean_belief_true = column_mean(&|r| &r.belief_true);
    let mean_gap = runs
        .first()
        .and_then(|r| r.gap.as_ref())
        .map(|_| column_mean(&|r| r.gap.as_deref().expect("gap recorded for every run")));
    let total: u64 = correct_counts.iter().sum();
    let mut adapt: Vec<Option<usize>> = runs.iter().map(|r| r.adaptation).collect();
    // None sorts before Some; rank non-adapting runs last instead.
    adapt.sort_by_key(|a| a.map_or((1, 0), |t| (0, t)));
    MetricsSeries {
        filter: filter.label(),
        n_runs: n,
        correct_counts,
        accuracy,
        p_e,
        mean_belief_true,
        mean_gap,
        overall_accuracy: total as f64 / (n * horizon) as f64,
        adaptation_time: adapt.get((n - 1) / 2).copied().flatten(),
    }
}

/// Runs every filter on the same `n_runs` trajectories (common random
/// numbers). Results do not depend on the number of threads.
pub fn monte_carlo_paired(
    mc: &MonteCarloConfig,
    env: &EnvironmentSpec,
    truth: &dyn ObservationModel,
    likelihood: &dyn ObservationModel,
    filters: &[FilterConfig],
    fixed_point: Option<&LogBeliefRatio>,
) -> Result<Vec<MetricsSeries>> {
    if mc.n_runs < 1 {
        return Err(invalid("n_runs: must be >= 1"));
    }
    let m = likelihood.num_states();
    if truth.num_states() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: truth.num_states(),
        });
    }
    env.validate(m)?;
    if let Some(fp) = fixed_point {
        if fp.len() != m - 1 {
            return Err(Error::DimensionMismatch {
                expected: m - 1,
                actual: fp.len(),
            });
        }
    }
    let prepared = filters.iter().map(|f| prepare(f, m)).collect::<Result<Vec<_>>>()?;
    let per_run: Vec<Vec<RunRecord>> = (0..mc.n_runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed(mc.master_seed, mc.run_offset + r));
            let trajectory = generate_trajectory(env, truth, &mut rng)?;
            prepared
                .iter()
                .map(|f| simulate_run(&trajectory, env, likelihood, f, fixed_point))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut by_filter: Vec<Vec<RunRecord>> = filters.iter().map(|_| Vec::with_capacity(mc.n_runs)).collect();
    for records in per_run {
        for (slot, record) in by_filter.iter_mut().zip(records) {
            slot.push(record);
        }
    }
    Ok(filters
        .iter()
        .zip(&by_filter)
        .map(|(f, runs)| aggregate(f, runs, env.horizon))
        .collect())
}

pub fn monte_carlo(
    mc: &MonteCarloConfig,
    env: &EnvironmentSpec,
    truth: &dyn ObservationModel,
    likelihood: &dyn ObservationModel,
    filter: &FilterConfig,
    fixed_point: Option<&LogBeliefRatio>,
) -> Result<MetricsSeries> {
    let mut out = monte_carlo_paired(mc, env, truth, likelihood, std::slice::from_ref(filter), fixed_point)?;
    Ok(out.remove(0))
}
