//! Deterministic reference system for log-belief ratios and its closed-form
//! rates and bounds.
//!
//! With `x_m = ln μ(θ_m)/μ(θ_0)` (state 0 is the true state), one expected
//! αβ-HMM step is
//!
//! ```text
//! x̂_i = F(x̂_{i−1}) − β·d
//! F_m(x) = ln[((1 − αM)e^{x_m} + α + αS) / (1 − αM + α + αS)],  S = Σ_n e^{x_n}
//! ```
//!
//! where `d` holds the identifiability gaps of the non-reference states.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

/// Log-belief ratios `x_1..x_{M−1}` against the reference state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogBeliefRatio(Vec<f64>);

impl LogBeliefRatio {
    pub fn new(x: Vec<f64>) -> Self {
        Self(x)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Largest component.
    pub fn max_component(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `x̄_0 = max(max_m x_m, 0)`.
    pub fn positive_extent(&self) -> f64 {
        self.max_component().max(0.0)
    }

    /// `U = max(1, max_m e^{x_m})`.
    pub fn exp_extent(&self) -> f64 {
        self.positive_extent().exp()
    }

    /// Largest absolute componentwise difference.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `‖e^x − e^y‖₁`.
    pub fn exp_l1_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a.exp() - b.exp()).abs())
            .sum()
    }

    /// Beliefs `(μ_0, …, μ_{M−1})` with `μ_0 = 1/(1 + Σ e^{x_m})`.
    pub fn to_probabilities(&self) -> Vec<f64> {
        let top = self.positive_extent();
        let mut p = Vec::with_capacity(self.len() + 1);
        p.push((-top).exp());
        p.extend(self.0.iter().map(|x| (x - top).exp()));
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }
}

impl Index<usize> for LogBeliefRatio {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for LogBeliefRatio {
    fn from(x: Vec<f64>) -> Self {
        Self(x)
    }
}

fn check_states(states: usize) -> Result<()> {
    if states < 2 {
        return Err(invalid("M: must be at least 2"));
    }
    Ok(())
}

/// α for the map itself: `[0, 1/M)`, where 0 gives the identity.
fn check_map_alpha(alpha: f64, states: usize) -> Result<()> {
    if !(alpha >= 0.0 && alpha * (states as f64) < 1.0) {
        return Err(invalid(format!("alpha must be in [0, 1/M), got {alpha} with M = {states}")));
    }
    Ok(())
}

/// α for rates and fixed points: `(0, 1/M)`.
fn check_theory_alpha(alpha: f64, states: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha * (states as f64) < 1.0) {
        return Err(invalid(format!("alpha must be in (0, 1/M), got {alpha} with M = {states}")));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be > 0, got {beta}")));
    }
    Ok(())
}

fn check_gap(name: &str, d: f64) -> Result<()> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(invalid(format!("{name} must be > 0, got {d}")));
    }
    Ok(())
}

fn check_gaps(d: &[f64]) -> Result<()> {
    if d.is_empty() {
        return Err(invalid("d must have at least one component"));
    }
    d.iter().try_for_each(|&v| check_gap("d", v))
}

/// The nonlinear map `F` on `M − 1` log-ratios.
pub fn map_f(x: &LogBeliefRatio, alpha: f64, states: usize) -> Result<LogBeliefRatio> {
    check_states(states)?;
    if x.len() != states - 1 {
        return Err(Error::DimensionMismatch {
            expected: states - 1,
            actual: x.len(),
        });
    }
    check_map_alpha(alpha, states)?;
    if x.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(invalid("x must be finite or -inf"));
    }
    Ok(LogBeliefRatio(apply_f(x.as_slice(), alpha)))
}

fn apply_f(x: &[f64], alpha: f64) -> Vec<f64> {
    if alpha == 0.0 {
        return x.to_vec();
    }
    let keep = 1.0 - alpha * (x.len() + 1) as f64;
    // Everything is scaled by e^{−s} so no exponential exceeds 1.
    let s = x.iter().copied().fold(0.0, f64::max);
    let scaled: Vec<f64> = x.iter().map(|v| (v - s).exp()).collect();
    let base = (-s).exp();
    let spread = alpha * scaled.iter().sum::<f64>();
    let den = (keep + alpha) * base + spread;
    scaled
        .iter()
        .map(|e| ((keep * e + alpha * base) + spread) / den)
        .map(f64::ln)
        .collect()
}

/// `F(x) + drift`, the reference step with an arbitrary signed drift.
pub fn drifted_step(x: &LogBeliefRatio, alpha: f64, drift: &[f64]) -> Result<LogBeliefRatio> {
    if drift.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: drift.len(),
        });
    }
    let mut next = map_f(x, alpha, x.len() + 1)?;
    next.0.iter_mut().zip(drift).for_each(|(v, g)| *v += g);
    Ok(next)
}

/// One step of the reference system, `F(x) − β·d`.
pub fn reference_step(x: &LogBeliefRatio, alpha: f64, beta: f64, d: &[f64]) -> Result<LogBeliefRatio> {
    check_beta(beta)?;
    check_gaps(d)?;
    let drift: Vec<f64> = d.iter().map(|v| -beta * v).collect();
    drifted_step(x, alpha, &drift)
}

/// Reference trajectory `x̂_0..x̂_steps` from `start`.
pub fn reference_trajectory(
    start: &LogBeliefRatio,
    alpha: f64,
    beta: f64,
    d: &[f64],
    steps: usize,
) -> Result<Vec<LogBeliefRatio>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start.clone());
    for _ in 0..steps {
        let next = reference_step(out.last().expect("non-empty"), alpha, beta, d)?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub x_inf: LogBeliefRatio,
    pub mu_inf: Vec<f64>,
    pub iterations: usize,
    /// `‖x − (F(x) − βd)‖∞` at the returned point.
    pub residual: f64,
}

impl FixedPointResult {
    /// `x̄^∞ = max_m x̂_m^∞`.
    pub fn x_bar(&self) -> f64 {
        self.x_inf.max_component()
    }
}

/// Iterates the reference system from `x = 0` until successive iterates
/// differ by less than the tolerance.
pub fn solve_fixed_point(alpha: f64, beta: f64, d: &[f64], options: SolverOptions) -> Result<FixedPointResult> {
    check_gaps(d)?;
    let states = d.len() + 1;
    check_theory_alpha(alpha, states)?;
    check_beta(beta)?;
    if !(options.tolerance > 0.0) {
        return Err(invalid("tolerance must be > 0"));
    }
    let drift: Vec<f64> = d.iter().map(|v| -beta * v).collect();
    let mut x = vec![0.0; d.len()];
    let mut change = f64::INFINITY;
    for iteration in 1..=options.max_iterations {
        let mut next = apply_f(&x, alpha);
        next.iter_mut().zip(&drift).for_each(|(v, g)| *v += g);
        change = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        if change < options.tolerance {
            let x_inf = LogBeliefRatio(x);
            let residual = step_residual(&x_inf, alpha, &drift);
            return Ok(FixedPointResult {
                mu_inf: x_inf.to_probabilities(),
                x_inf,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        iterations: options.max_iterations,
        residual: change,
    })
}

fn step_residual(x: &LogBeliefRatio, alpha: f64, drift: &[f64]) -> f64 {
    apply_f(x.as_slice(), alpha)
        .iter()
        .zip(drift)
        .zip(x.iter())
        .map(|((f, g), v)| (v - (f + g)).abs())
        .fold(0.0, f64::max)
}

/// Largest violation of the closed-form fixed-point condition
/// `x_m = ln[α / (α e^{βd_m} + (1 − αM)(e^{βd_m} − 1) μ_0)]`.
pub fn fixed_point_equation_residual(x: &LogBeliefRatio, alpha: f64, beta: f64, d: &[f64]) -> Result<f64> {
    if x.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            actual: x.len(),
        });
    }
    let states = d.len() + 1;
    check_theory_alpha(alpha, states)?;
    check_beta(beta)?;
    let keep = 1.0 - alpha * states as f64;
    let mu0 = x.to_probabilities()[0];
    Ok(x
        .iter()
        .zip(d)
        .map(|(v, dm)| {
            let b = beta * dm;
            // ln α − b − ln(α + (1 − αM)(1 − e^{−b})μ_0)
            let rhs = alpha.ln() - b - (alpha - keep * (-b).exp_m1() * mu0).ln();
            (v - rhs).abs()
        })
        .fold(0.0, f64::max))
}

/// Trajectory contraction rate `λ` of the reference system started from a
/// point with positive extent `x_bar_0`.
pub fn reference_contraction_rate(alpha: f64, beta: f64, d_min: f64, x_bar_0: f64, states: usize) -> Result<f64> {
    check_states(states)?;
    check_theory_alpha(alpha, states)?;
    check_beta(beta)?;
    check_gap("d_min", d_min)?;
    if !(x_bar_0 >= 0.0 && x_bar_0.is_finite()) {
        return Err(invalid(format!("x_bar_0 must be >= 0, got {x_bar_0}")));
    }
    let keep = 1.0 - alpha * states as f64;
    let mixing = 2.0 * alpha / (keep + 2.0 * alpha);
    let bd = beta * d_min;
    let drift = bd / (x_bar_0 - (alpha / (keep + alpha)).ln() + bd);
    Ok(1.0 - mixing.min(drift))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpContractionRates {
    pub gamma: f64,
    pub gamma1: f64,
}

/// Contraction rates of `e^x`: the general `γ` (needs `U ≥ 1`) and the
/// sharper `γ₁` for trajectories that start above the fixed point.
pub fn exp_contraction_rates(alpha: f64, beta: f64, d_min: f64, u: f64, states: usize) -> Result<ExpContractionRates> {
    check_states(states)?;
    check_theory_alpha(alpha, states)?;
    check_beta(beta)?;
    check_gap("d_min", d_min)?;
    if !(u >= 1.0 && u.is_finite()) {
        return Err(invalid(format!("U must be >= 1, got {u}")));
    }
    let keep = 1.0 - alpha * states as f64;
    let gamma1 = (-beta * d_min).exp() * keep / (keep + alpha).powi(2);
    let gamma = gamma1 * (1.0 + 2.0 * alpha * u * (states - 1) as f64);
    Ok(ExpContractionRates { gamma, gamma1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyBeliefBounds {
    /// Lower bound on the steady belief in the true state, clamped to `[0, 1]`.
    pub lower: f64,
    pub upper: f64,
    /// Unclamped lower formula; non-positive means the bound carries no information.
    pub lower_raw: f64,
    pub lower_vacuous: bool,
    pub upper_clamped: bool,
}

/// Bounds `μ̲ ≤ μ̂_0^∞ ≤ μ̄` on the steady belief in the true state.
pub fn steady_belief_bounds(alpha: f64, beta: f64, d_min: f64, d_max: f64, states: usize) -> Result<SteadyBeliefBounds> {
    check_states(states)?;
    check_theory_alpha(alpha, states)?;
    check_beta(beta)?;
    check_gap("d_min", d_min)?;
    check_gap("d_max", d_max)?;
    if d_max < d_min {
        return Err(invalid(format!("d_max ({d_max}) must be >= d_min ({d_min})")));
    }
    let keep = 1.0 - alpha * states as f64;
    // Divided through by e^{βd} so large gaps do not overflow.
    let lo = beta * d_min;
    let lower_raw = (keep - (1.0 - alpha) * (-lo).exp()) / (-keep * (-lo).exp_m1());
    if lower_raw <= 0.0 {
        return Ok(SteadyBeliefBounds {
            lower: 0.0,
            upper: 1.0,
            lower_raw,
            lower_vacuous: true,
            upper_clamped: true,
        });
    }
    let hi = beta * d_max;
    let upper_raw = ((keep - alpha + alpha / lower_raw) - (1.0 - alpha) * (-hi).exp()) / (-keep * (-hi).exp_m1());
    Ok(SteadyBeliefBounds {
        lower: lower_raw.min(1.0),
        upper: upper_raw.min(1.0),
        lower_raw,
        lower_vacuous: false,
        upper_clamped: upper_raw > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticRate {
    pub lambda1: f64,
    /// `βC / (1 − λ₁)`; infinite when vacuous.
    pub steady_gap_bound: f64,
    pub vacuous: bool,
}

/// Rate `λ₁` at which the expected gap to the fixed point contracts, and the
/// resulting steady gap bound. `c` bounds the centred log-likelihood ratios.
pub fn stochastic_contraction_rate(alpha: f64, beta: f64, d_min: f64, c: f64, states: usize) -> Result<StochasticRate> {
    check_states(states)?;
    check_theory_alpha(alpha, states)?;
    check_beta(beta)?;
    if c.is_infinite() {
        return Err(Error::BoundUnavailable("C is infinite (unbounded support)".into()));
    }
    if !(c >= 0.0) {
        return Err(invalid(format!("C must be >= 0, got {c}")));
    }
    if !(d_min >= 0.0 && d_min.is_finite()) {
        return Err(invalid(format!("d_min must be >= 0, got {d_min}")));
    }
    let keep = 1.0 - alpha * states as f64;
    let mixing = 2.0 * alpha / (keep + 2.0 * alpha);
    let bd = beta * d_min;
    let noise = bd / (2.0 * ((keep + alpha) / alpha).ln() + beta * c);
    let lambda1 = 1.0 - mixing.min(noise);
    let vacuous = lambda1 >= 1.0;
    Ok(StochasticRate {
        lambda1,
        steady_gap_bound: if vacuous { f64::INFINITY } else { beta * c / (1.0 - lambda1) },
        vacuous,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbabilityBound {
    /// `min(1, βC / (−(1 − λ₁) x̄^∞))`, the bound once the `λ₁^i` transient has died out.
    pub steady_bound: f64,
    /// Unclamped `βC / (−(1 − λ₁) x̄^∞)`; infinite when `λ₁ = 1`.
    pub steady_raw: f64,
    /// `λ₁`, the rate of the transient term whose constant is left open.
    pub decay_rate: f64,
    /// `β ≤ α`: the regime where the steady bound vanishes as α → 0.
    pub proportional_regime: bool,
    pub beta_over_alpha: f64,
}

pub fn error_probability_bound(
    alpha: f64,
    beta: f64,
    d_min: f64,
    c: f64,
    x_inf: &LogBeliefRatio,
) -> Result<ErrorProbabilityBound> {
    let x_bar = x_inf.max_component();
    if !(x_bar < 0.0) {
        return Err(Error::NotCorrectLearning(x_bar));
    }
    let rate = stochastic_contraction_rate(alpha, beta, d_min, c, x_inf.len() + 1)?;
    let steady_raw = if rate.vacuous {
        f64::INFINITY
    } else {
        beta * c / (-(1.0 - rate.lambda1) * x_bar)
    };
    Ok(ErrorProbabilityBound {
        steady_bound: steady_raw.min(1.0),
        steady_raw,
        decay_rate: rate.lambda1,
        proportional_regime: beta <= alpha,
        beta_over_alpha: beta / alpha,
    })
}

/// Everything the closed-form analysis says about one parameter tuple,
/// assuming a uniform initial belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub alpha: f64,
    pub beta: f64,
    pub states: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub c: Option<f64>,
    pub lambda: f64,
    pub gamma: f64,
    pub gamma1: f64,
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub mu_lower_vacuous: bool,
    pub mu_upper_clamped: bool,
    pub x_bar_inf: f64,
    pub mu_true_inf: f64,
    pub lambda1: Option<f64>,
    pub steady_gap_bound: Option<f64>,
    pub error_prob_steady: Option<f64>,
}

impl BoundsReport {
    /// `d` is the full gap vector (used for the fixed point); `c` is optional
    /// because it only exists for bounded supports.
    pub fn compute(alpha: f64, beta: f64, d: &[f64], c: Option<f64>) -> Result<Self> {
        check_gaps(d)?;
        let states = d.len() + 1;
        let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
        let d_max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lambda = reference_contraction_rate(alpha, beta, d_min, 0.0, states)?;
        let ExpContractionRates { gamma, gamma1 } = exp_contraction_rates(alpha, beta, d_min, 1.0, states)?;
        let mu = steady_belief_bounds(alpha, beta, d_min, d_max, states)?;
        let fp = solve_fixed_point(alpha, beta, d, SolverOptions::default())?;
        let (lambda1, steady_gap_bound, error_prob_steady) = match c {
            Some(c) => {
                let rate = stochastic_contraction_rate(alpha, beta, d_min, c, states)?;
                let err = error_probability_bound(alpha, beta, d_min, c, &fp.x_inf)?;
                (Some(rate.lambda1), Some(rate.steady_gap_bound), Some(err.steady_bound))
            }
            None => (None, None, None),
        };
        Ok(Self {
            alpha,
            beta,
            states,
            d_min,
            d_max,
            c,
            lambda,
            gamma,
            gamma1,
            mu_lower: mu.lower,
            mu_upper: mu.upper,
            mu_lower_vacuous: mu.lower_vacuous,
            mu_upper_clamped: mu.upper_clamped,
            x_bar_inf: fp.x_bar(),
            mu_true_inf: fp.mu_inf[0],
            lambda1,
            steady_gap_bound,
            error_prob_steady,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationBounds {
    pub bayes: f64,
    pub abhmm: f64,
}

/// Bayes lower bound `(d_s1·t1 − x_0)/d_s2`: the accumulated evidence must
/// be cancelled at the post-switch rate.
pub fn bayes_adaptation_bound(d_s1: f64, d_s2: f64, x_0: f64, t1: usize) -> Result<f64> {
    check_gap("d_s1", d_s1)?;
    check_gap("d_s2", d_s2)?;
    if !x_0.is_finite() {
        return Err(invalid("x_0 must be finite"));
    }
    Ok((d_s1 * t1 as f64 - x_0) / d_s2)
}

/// Closed-form adaptation times for a binary belief after a switch at `t1`.
///
/// `bayes` is a lower bound on the Bayes adaptation time. `abhmm` is a
/// sufficient time: any `T` above it satisfies the contraction estimate, so
/// the reference trajectory has flipped by then.
///
/// Before the switch the truth is state 0 (gap `d_s1`), afterwards state 1
/// (gap `d_s2`); `x_0` is the initial `ln μ_1/μ_0`. The post-switch system is
/// the pre-switch one mirrored, since `F` is odd for two states.
pub fn adaptation_times(alpha: f64, beta: f64, d_s1: f64, d_s2: f64, x_0: f64, t1: usize) -> Result<AdaptationBounds> {
    check_gap("d_s1", d_s1)?;
    check_gap("d_s2", d_s2)?;
    let bayes = bayes_adaptation_bound(d_s1, d_s2, x_0, t1)?;

    let opts = SolverOptions::default();
    let x_s1 = solve_fixed_point(alpha, beta, &[d_s1], opts)?.x_inf[0];
    let x_s2 = -solve_fixed_point(alpha, beta, &[d_s2], opts)?.x_inf[0];
    let lambda_s1 = reference_contraction_rate(alpha, beta, d_s1, x_0.max(0.0), 2)?;
    let residue = lambda_s1.powi(t1.min(i32::MAX as usize) as i32) * (x_0 - x_s1).abs();
    let x_bar_switch = x_s1.abs() + residue;
    let lambda_s2 = reference_contraction_rate(alpha, beta, d_s2, x_bar_switch, 2)?;
    if lambda_s2 >= 1.0 || lambda_s2 <= 0.0 {
        return Err(Error::BoundUnavailable(format!("post-switch rate {lambda_s2} is degenerate")));
    }
    let abhmm = (x_s2.abs() / (residue + (x_s2 - x_s1).abs())).ln() / lambda_s2.ln();
    Ok(AdaptationBounds { bayes, abhmm })
}

/// Binary reference trajectory `x̂_0..x̂_horizon` with drift `−βd_s1` for
/// steps `1..=t1` and `+βd_s2` afterwards. `alpha = 0` gives the Bayes line.
pub fn switch_reference_trajectory(
    alpha: f64,
    beta: f64,
    d_s1: f64,
    d_s2: f64,
    x_0: f64,
    t1: usize,
    horizon: usize,
) -> Result<Vec<f64>> {
    check_beta(beta)?;
    check_gap("d_s1", d_s1)?;
    check_gap("d_s2", d_s2)?;
    check_map_alpha(alpha, 2)?;
    let mut out = Vec::with_capacity(horizon + 1);
    let mut x = LogBeliefRatio::new(vec![x_0]);
    out.push(x_0);
    for i in 1..=horizon {
        let drift = if i <= t1 { -beta * d_s1 } else { beta * d_s2 };
        x = drifted_step(&x, alpha, &[drift])?;
        out.push(x[0]);
    }
    Ok(out)
}
