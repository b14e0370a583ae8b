//! Belief-update rules over a finite state space.
//!
//! Beliefs are stored as normalized log-weights. Each rule has two entry
//! points: an `*_update` that takes the vector of log-likelihoods
//! `ln L(ξ|θ_m)` for the current observation, and a `*_step` that evaluates
//! an [`ObservationModel`] at the observation first.
//!
//! | rule        | unnormalized posterior                         |
//! |-------------|------------------------------------------------|
//! | αβ-HMM      | `[(1 − αM)·μ(θ_m) + α] · L^β`                  |
//! | Bayes       | `μ(θ_m) · L`                                   |
//! | full HMM    | `L · Σ_n p_nm μ(θ_n)`                          |
//! | linearized  | `μ(θ_m)^(1 − αM) · L^β`                        |
//! | ASL         | `μ(θ_m)^(1 − δ) · L^δ`                         |

use serde::{Deserialize, Serialize};

use crate::dynamics::LogBeliefRatio;
use crate::error::{invalid, Error, Result};
use crate::model::ObservationModel;
use crate::numeric::{log_sum_exp, normalize_log};

/// Normalized probability vector, held in the log domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    log_weights: Vec<f64>,
}

impl Belief {
    pub fn uniform(states: usize) -> Self {
        let w = -(states as f64).ln();
        Self {
            log_weights: vec![w; states],
        }
    }

    /// Normalizes arbitrary log-weights (`-inf` allowed, `NaN`/`+inf` not).
    pub fn from_log_weights(mut log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.len() < 2 {
            return Err(invalid("a belief needs at least 2 states"));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(invalid("log-weights must be finite or -inf"));
        }
        normalize_log(&mut log_weights)?;
        Ok(Self { log_weights })
    }

    /// Normalizes a non-negative weight vector with positive total.
    pub fn from_probabilities(probabilities: &[f64]) -> Result<Self> {
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("probabilities must be finite and non-negative"));
        }
        Self::from_log_weights(probabilities.iter().map(|p| p.ln()).collect())
    }

    pub fn num_states(&self) -> usize {
        self.log_weights.len()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn probability(&self, state: usize) -> f64 {
        self.log_weights[state].exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }
}

/// Row-stochastic transition matrix, `p[n][m] = P(θ_m at i | θ_n at i−1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(invalid("transition matrix needs at least 2 states"));
        }
        for (n, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(invalid(format!("transition row {n} has {} entries, expected {m}", row.len())));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(invalid(format!("transition row {n} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("transition row {n} sums to {total}, not 1")));
            }
        }
        Ok(Self { rows })
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.rows[from]
    }
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(t: TransitionMatrix) -> Self {
        t.rows
    }
}

/// Equal-exit chain: stay with probability `1 − h`, otherwise jump to one of
/// the other `M − 1` states uniformly.
pub fn equal_exit_matrix(states: usize, h: f64) -> Result<TransitionMatrix> {
    if states < 2 {
        return Err(invalid("M: must be at least 2"));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(invalid(format!("h: must be in (0, 1), got {h}")));
    }
    let off = h / (states - 1) as f64;
    let rows = (0..states)
        .map(|n| (0..states).map(|m| if n == m { 1.0 - h } else { off }).collect())
        .collect();
    // Rows sum to 1 up to rounding; skip the strict check in `new`.
    Ok(TransitionMatrix { rows })
}

fn check_inputs(prior: &Belief, log_likelihoods: &[f64]) -> Result<()> {
    if prior.num_states() != log_likelihoods.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.num_states(),
            actual: log_likelihoods.len(),
        });
    }
    if let Some(state) = log_likelihoods
        .iter()
        .position(|l| l.is_nan() || *l == f64::INFINITY)
    {
        return Err(Error::NonFiniteLikelihood {
            state,
            observation: None,
        });
    }
    Ok(())
}

fn check_alpha(alpha: f64, states: usize) -> Result<()> {
    let upper = 1.0 / states as f64;
    if !(0.0..=upper).contains(&alpha) {
        return Err(invalid(format!("alpha: must be in [0, 1/M] = [0, {upper}], got {alpha}")));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta: must be > 0, got {beta}")));
    }
    Ok(())
}

fn finish(mut log_post: Vec<f64>) -> Result<Belief> {
    normalize_log(&mut log_post)?;
    Ok(Belief {
        log_weights: log_post,
    })
}

/// `β · ln L`, keeping `ln L = -inf` as `-inf`.
fn scaled(beta: f64, log_likelihood: f64) -> f64 {
    if log_likelihood == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        beta * log_likelihood
    }
}

/// αβ-HMM update. `alpha = 0, beta = 1` is Bayes; `alpha = 1/M` forgets the
/// prior entirely.
pub fn abhmm_update(prior: &Belief, log_likelihoods: &[f64], alpha: f64, beta: f64) -> Result<Belief> {
    check_inputs(prior, log_likelihoods)?;
    let m = prior.num_states();
    check_alpha(alpha, m)?;
    check_beta(beta)?;
    let keep = 1.0 - alpha * m as f64;
    let post = prior
        .log_weights
        .iter()
        .zip(log_likelihoods)
        .map(|(&w, &l)| {
            // Mixing in probability space is safe: exp(w) ∈ [0, 1].
            let mixed = if alpha == 0.0 { w } else { (keep * w.exp() + alpha).ln() };
            mixed + scaled(beta, l)
        })
        .collect();
    finish(post)
}

pub fn bayes_update(prior: &Belief, log_likelihoods: &[f64]) -> Result<Belief> {
    check_inputs(prior, log_likelihoods)?;
    finish(
        prior
            .log_weights
            .iter()
            .zip(log_likelihoods)
            .map(|(w, l)| w + l)
            .collect(),
    )
}

/// Forward-filter step: predict through `transition`, then correct.
pub fn full_hmm_update(
    prior: &Belief,
    log_likelihoods: &[f64],
    transition: &TransitionMatrix,
) -> Result<Belief> {
    check_inputs(prior, log_likelihoods)?;
    let m = prior.num_states();
    if transition.num_states() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: transition.num_states(),
        });
    }
    let mut terms = vec![0.0; m];
    let post = (0..m)
        .map(|to| {
            for (from, t) in terms.iter_mut().enumerate() {
                *t = transition.get(from, to).ln() + prior.log_weights[from];
            }
            log_sum_exp(&terms) + log_likelihoods[to]
        })
        .collect();
    finish(post)
}

fn check_strictly_positive(prior: &Belief) -> Result<()> {
    match prior.log_weights.iter().position(|w| *w == f64::NEG_INFINITY) {
        Some(state) => Err(Error::ZeroPrior(state)),
        None => Ok(()),
    }
}

/// Log-linear discount: `(1 − αM)·ln μ + β·ln L`, normalized.
pub fn linearized_update(prior: &Belief, log_likelihoods: &[f64], alpha: f64, beta: f64) -> Result<Belief> {
    check_inputs(prior, log_likelihoods)?;
    check_alpha(alpha, prior.num_states())?;
    check_beta(beta)?;
    check_strictly_positive(prior)?;
    let keep = 1.0 - alpha * prior.num_states() as f64;
    finish(
        prior
            .log_weights
            .iter()
            .zip(log_likelihoods)
            .map(|(&w, &l)| keep * w + scaled(beta, l))
            .collect(),
    )
}

/// Single-agent adaptive social learning: `(1 − δ)·ln μ + δ·ln L`.
pub fn asl_update(prior: &Belief, log_likelihoods: &[f64], delta: f64) -> Result<Belief> {
    check_inputs(prior, log_likelihoods)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta: must be in (0, 1), got {delta}")));
    }
    check_strictly_positive(prior)?;
    finish(
        prior
            .log_weights
            .iter()
            .zip(log_likelihoods)
            .map(|(&w, &l)| (1.0 - delta) * w + scaled(delta, l))
            .collect(),
    )
}

/// Evaluate the model at `observation`, attaching the observation to any
/// non-finite log-likelihood error.
pub fn evaluate(model: &dyn ObservationModel, observation: f64) -> Result<Vec<f64>> {
    let ll = model.log_likelihoods(observation);
    if let Some(state) = ll.iter().position(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::NonFiniteLikelihood {
            state,
            observation: Some(observation),
        });
    }
    Ok(ll)
}

pub fn abhmm_step(
    prior: &Belief,
    observation: f64,
    model: &dyn ObservationModel,
    alpha: f64,
    beta: f64,
) -> Result<Belief> {
    abhmm_update(prior, &evaluate(model, observation)?, alpha, beta)
}

pub fn bayes_step(prior: &Belief, observation: f64, model: &dyn ObservationModel) -> Result<Belief> {
    bayes_update(prior, &evaluate(model, observation)?)
}

pub fn full_hmm_step(
    prior: &Belief,
    observation: f64,
    model: &dyn ObservationModel,
    transition: &TransitionMatrix,
) -> Result<Belief> {
    full_hmm_update(prior, &evaluate(model, observation)?, transition)
}

pub fn linearized_abhmm_step(
    prior: &Belief,
    observation: f64,
    model: &dyn ObservationModel,
    alpha: f64,
    beta: f64,
) -> Result<Belief> {
    linearized_update(prior, &evaluate(model, observation)?, alpha, beta)
}

pub fn asl_step(prior: &Belief, observation: f64, model: &dyn ObservationModel, delta: f64) -> Result<Belief> {
    asl_update(prior, &evaluate(model, observation)?, delta)
}

/// `x_m = ln μ(θ_m) / μ(θ_0)` for `m = 1..M`.
pub fn belief_to_log_ratios(belief: &Belief) -> Result<LogBeliefRatio> {
    belief_to_log_ratios_against(belief, 0)
}

/// Log-ratios against an arbitrary reference state, other states in index order.
pub fn belief_to_log_ratios_against(belief: &Belief, reference: usize) -> Result<LogBeliefRatio> {
    let w = &belief.log_weights;
    if reference >= w.len() {
        return Err(Error::StateOutOfRange {
            state: reference,
            states: w.len(),
        });
    }
    let base = w[reference];
    if base == f64::NEG_INFINITY {
        return Err(Error::ReferenceZeroMass);
    }
    Ok(LogBeliefRatio::new(
        crate::model::non_reference_states(w.len(), reference)
            .map(|k| w[k] - base)
            .collect(),
    ))
}

/// Softmax with an implicit `x_0 = 0`.
pub fn log_ratios_to_belief(x: &LogBeliefRatio) -> Result<Belief> {
    let mut w = Vec::with_capacity(x.len() + 1);
    w.push(0.0);
    w.extend_from_slice(x.as_slice());
    Belief::from_log_weights(w)
}

/// Which update rule to run, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterConfig {
    Abhmm { alpha: f64, beta: f64 },
    Bayes,
    EqualExitHmm { h: f64 },
    FullHmm { transition: TransitionMatrix },
    LinearizedAbhmm { alpha: f64, beta: f64 },
    Asl { delta: f64 },
}

impl FilterConfig {
    pub fn name(&self) -> &'static str {
        match self {
            FilterConfig::Abhmm { .. } => "abhmm",
            FilterConfig::Bayes => "bayes",
            FilterConfig::EqualExitHmm { .. } => "equal_exit_hmm",
            FilterConfig::FullHmm { .. } => "full_hmm",
            FilterConfig::LinearizedAbhmm { .. } => "linearized_abhmm",
            FilterConfig::Asl { .. } => "asl",
        }
    }

    /// Short identifier including parameters, suitable for file names.
    pub fn label(&self) -> String {
        match self {
            FilterConfig::Abhmm { alpha, beta } | FilterConfig::LinearizedAbhmm { alpha, beta } => {
                format!("{}_alpha{alpha}_beta{beta}", self.name())
            }
            FilterConfig::EqualExitHmm { h } => format!("{}_h{h}", self.name()),
            FilterConfig::Asl { delta } => format!("{}_delta{delta}", self.name()),
            _ => self.name().to_string(),
        }
    }

    pub fn validate(&self, states: usize) -> Result<()> {
        match self {
            FilterConfig::Abhmm { alpha, beta } | FilterConfig::LinearizedAbhmm { alpha, beta } => {
                check_alpha(*alpha, states)?;
                check_beta(*beta)
            }
            FilterConfig::Bayes => Ok(()),
            FilterConfig::EqualExitHmm { h } => equal_exit_matrix(states, *h).map(|_| ()),
            FilterConfig::FullHmm { transition } if transition.num_states() != states => {
                Err(Error::DimensionMismatch {
                    expected: states,
                    actual: transition.num_states(),
                })
            }
            FilterConfig::FullHmm { .. } => Ok(()),
            FilterConfig::Asl { delta } if !(*delta > 0.0 && *delta < 1.0) => {
                Err(invalid(format!("delta: must be in (0, 1), got {delta}")))
            }
            FilterConfig::Asl { .. } => Ok(()),
        }
    }

    pub fn update(&self, prior: &Belief, log_likelihoods: &[f64]) -> Result<Belief> {
        match self {
            FilterConfig::Abhmm { alpha, beta } => abhmm_update(prior, log_likelihoods, *alpha, *beta),
            FilterConfig::Bayes => bayes_update(prior, log_likelihoods),
            FilterConfig::EqualExitHmm { h } => {
                full_hmm_update(prior, log_likelihoods, &equal_exit_matrix(prior.num_states(), *h)?)
            }
            FilterConfig::FullHmm { transition } => full_hmm_update(prior, log_likelihoods, transition),
            FilterConfig::LinearizedAbhmm { alpha, beta } => {
                linearized_update(prior, log_likelihoods, *alpha, *beta)
            }
            FilterConfig::Asl { delta } => asl_update(prior, log_likelihoods, *delta),
        }
    }

    pub fn step(&self, prior: &Belief, observation: f64, model: &dyn ObservationModel) -> Result<Belief> {
        self.update(prior, &evaluate(model, observation)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ll(p: &[f64]) -> Vec<f64> {
        p.iter().map(|v| v.ln()).collect()
    }

    fn assert_probs(b: &Belief, expected: &[f64], tol: f64) {
        for (p, e) in b.probabilities().iter().zip(expected) {
            assert!((p - e).abs() <= tol, "{:?} vs {expected:?}", b.probabilities());
        }
    }

    #[test]
    fn abhmm_examples() {
        let u = Belief::uniform(2);
        assert_probs(&abhmm_update(&u, &ll(&[0.8, 0.2]), 0.1, 1.0).unwrap(), &[0.8, 0.2], 1e-12);
        let sure = Belief::from_probabilities(&[1.0, 0.0]).unwrap();
        assert_probs(&abhmm_update(&sure, &ll(&[0.5, 0.5]), 0.1, 1.0).unwrap(), &[0.9, 0.1], 1e-12);
        let skewed = Belief::from_probabilities(&[0.97, 0.03]).unwrap();
        assert_probs(&abhmm_update(&skewed, &ll(&[0.8, 0.2]), 0.5, 1.0).unwrap(), &[0.8, 0.2], 1e-12);
        assert!(abhmm_update(&u, &ll(&[0.8, 0.2]), 0.6, 1.0).is_err());
        assert!(abhmm_update(&u, &ll(&[0.8, 0.2]), 0.1, 0.0).is_err());
        assert!(matches!(
            abhmm_update(&u, &[0.0, f64::NAN], 0.1, 1.0),
            Err(Error::NonFiniteLikelihood { state: 1, .. })
        ));
    }

    #[test]
    fn non_finite_likelihood_names_observation() {
        struct Broken;
        impl ObservationModel for Broken {
            fn num_states(&self) -> usize {
                2
            }
            fn log_likelihood(&self, o: f64, s: usize) -> f64 {
                if s == 1 { f64::NAN } else { -o * o }
            }
            fn sample(&self, _: usize, _: &mut dyn rand::RngCore) -> f64 {
                0.0
            }
            fn support(&self) -> crate::model::Support {
                crate::model::Support::RealLine
            }
            fn mean(&self, _: usize) -> f64 {
                0.0
            }
            fn integration_range(&self, _: usize) -> (f64, f64) {
                (-1.0, 1.0)
            }
        }
        let err = abhmm_step(&Belief::uniform(2), 2.5, &Broken, 0.1, 1.0).unwrap_err();
        assert!(err.to_string().contains("2.5"), "{err}");
    }

    #[test]
    fn bayes_examples() {
        let u = Belief::uniform(2);
        assert_probs(&bayes_update(&u, &ll(&[0.8, 0.2])).unwrap(), &[0.8, 0.2], 1e-12);
        let p = Belief::from_probabilities(&[0.9, 0.1]).unwrap();
        assert_probs(&bayes_update(&p, &ll(&[0.3, 0.3])).unwrap(), &[0.9, 0.1], 1e-12);
        let p = Belief::from_probabilities(&[0.8, 0.2]).unwrap();
        assert_probs(&bayes_update(&p, &ll(&[0.2, 0.8])).unwrap(), &[0.5, 0.5], 1e-12);
        let z = Belief::from_probabilities(&[1.0, 0.0]).unwrap();
        assert_eq!(bayes_update(&z, &ll(&[0.1, 0.9])).unwrap().probability(1), 0.0);
        assert_eq!(bayes_update(&z, &ll(&[0.0, 0.9])), Err(Error::ZeroPosterior));
    }

    #[test]
    fn zero_likelihood_rescued_by_mixing() {
        let z = Belief::from_probabilities(&[1.0, 0.0]).unwrap();
        let b = abhmm_update(&z, &ll(&[0.0, 0.9]), 0.1, 1.0).unwrap();
        assert_probs(&b, &[0.0, 1.0], 0.0);
    }

    #[test]
    fn full_hmm_examples() {
        let p = Belief::from_probabilities(&[0.7, 0.2, 0.1]).unwrap();
        let l = ll(&[0.1, 0.5, 0.4]);
        let id = TransitionMatrix::new(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(full_hmm_update(&p, &l, &id).unwrap(), bayes_update(&p, &l).unwrap());
        let uni = TransitionMatrix::new(vec![vec![1.0 / 3.0; 3]; 3]);
        // 3 × (1/3) does not sum to exactly 1 in binary; the equal-exit constructor covers this case.
        let uni = uni.unwrap_or_else(|_| equal_exit_matrix(3, 2.0 / 3.0).unwrap());
        let out = full_hmm_update(&p, &l, &uni).unwrap();
        assert_probs(&out, &[0.1, 0.5, 0.4], 1e-12);
        let eq = equal_exit_matrix(3, 0.3).unwrap();
        let a = abhmm_update(&p, &l, 0.15, 1.0).unwrap();
        let h = full_hmm_update(&p, &l, &eq).unwrap();
        for (x, y) in a.log_weights().iter().zip(h.log_weights()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_exit_matrix_shape() {
        let t = equal_exit_matrix(3, 0.2).unwrap();
        assert!((t.get(0, 0) - 0.8).abs() < 1e-15);
        assert!((t.get(0, 2) - 0.1).abs() < 1e-15);
        let t = equal_exit_matrix(2, 0.5).unwrap();
        assert!(t.row(0).iter().chain(t.row(1)).all(|&p| p == 0.5));
        for m in [2usize, 3, 7] {
            let t = equal_exit_matrix(m, 0.37).unwrap();
            for n in 0..m {
                assert!((t.row(n).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for k in 0..m {
                    assert_eq!(t.get(n, k), t.get(k, n));
                }
            }
        }
        assert!(equal_exit_matrix(3, 0.0).is_err());
        assert!(equal_exit_matrix(3, 1.0).is_err());
    }

    #[test]
    fn linearized_examples() {
        let p = Belief::from_probabilities(&[0.6, 0.3, 0.1]).unwrap();
        let l = ll(&[0.2, 0.5, 0.3]);
        let a = linearized_update(&p, &l, 0.0, 1.0).unwrap();
        let b = bayes_update(&p, &l).unwrap();
        for (x, y) in a.log_weights().iter().zip(b.log_weights()) {
            assert!((x - y).abs() < 1e-15);
        }
        let u = Belief::uniform(3);
        let out = linearized_update(&u, &l, 0.2, 2.0).unwrap();
        let norm: f64 = [0.04, 0.25, 0.09].iter().sum();
        assert_probs(&out, &[0.04 / norm, 0.25 / norm, 0.09 / norm], 1e-12);

        // x_next = (1 − αM)x + β·LLR with M = 2, x = −1, α = 0.1, LLR = 0.5
        let prior = log_ratios_to_belief(&LogBeliefRatio::new(vec![-1.0])).unwrap();
        let out = linearized_update(&prior, &[0.0, 0.5], 0.1, 1.0).unwrap();
        let x = belief_to_log_ratios(&out).unwrap();
        assert!((x[0] - (-0.3)).abs() < 1e-12, "{}", x[0]);

        let z = Belief::from_probabilities(&[1.0, 0.0]).unwrap();
        assert_eq!(linearized_update(&z, &[0.0, 0.0], 0.1, 1.0), Err(Error::ZeroPrior(1)));
    }

    #[test]
    fn asl_examples() {
        let u = Belief::uniform(2);
        let out = asl_update(&u, &ll(&[0.8, 0.2]), 0.5).unwrap();
        // oracle: probability-domain sqrt(L) normalized
        let (a, b) = (0.8f64.sqrt(), 0.2f64.sqrt());
        assert_probs(&out, &[a / (a + b), b / (a + b)], 1e-12);
        assert!((belief_to_log_ratios(&out).unwrap()[0] - 0.5 * 0.25f64.ln()).abs() < 1e-12);
        assert!(asl_update(&u, &ll(&[0.8, 0.2]), 1.0).is_err());
        assert!(asl_update(&u, &ll(&[0.8, 0.2]), 0.0).is_err());
    }

    #[test]
    fn log_ratio_conversions() {
        let u = Belief::uniform(4);
        assert!(belief_to_log_ratios(&u).unwrap().iter().all(|v| v.abs() < 1e-15));
        let b = Belief::from_probabilities(&[0.5, 0.3, 0.2]).unwrap();
        let x = belief_to_log_ratios(&b).unwrap();
        assert!((x[0] - 0.6f64.ln()).abs() < 1e-12 && (x[1] - 0.4f64.ln()).abs() < 1e-12);
        let back = log_ratios_to_belief(&x).unwrap();
        assert_probs(&back, &[0.5, 0.3, 0.2], 1e-12);
        let far = log_ratios_to_belief(&LogBeliefRatio::new(vec![-800.0, -900.0])).unwrap();
        assert_eq!(far.probability(0), 1.0);
        let uni = log_ratios_to_belief(&LogBeliefRatio::new(vec![0.0; 2])).unwrap();
        assert_probs(&uni, &[1.0 / 3.0; 3], 1e-15);
        let z = Belief::from_probabilities(&[0.0, 1.0]).unwrap();
        assert_eq!(belief_to_log_ratios(&z), Err(Error::ReferenceZeroMass));
    }

    #[test]
    fn filter_config_serde_rejects_unknown_keys() {
        let f: FilterConfig = serde_json::from_str(r#"{"variant":"abhmm","alpha":0.1,"beta":1.0}"#).unwrap();
        assert_eq!(f, FilterConfig::Abhmm { alpha: 0.1, beta: 1.0 });
        assert!(serde_json::from_str::<FilterConfig>(r#"{"variant":"abhmm","alpha":0.1,"beta":1.0,"gamma":2}"#).is_err());
        assert!(serde_json::from_str::<FilterConfig>(r#"{"variant":"full_hmm","transition":[[0.5,0.4],[0.5,0.5]]}"#).is_err());
        assert!(FilterConfig::Asl { delta: 1.0 }.validate(2).is_err());
        assert!(FilterConfig::Abhmm { alpha: 0.3, beta: 1.0 }.validate(5).is_err());
    }

    fn belief_and_ll(max_m: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2..=max_m).prop_flat_map(|m| {
            (
                prop::collection::vec(0.001f64..1.0, m),
                prop::collection::vec(-300.0f64..300.0, m),
            )
        })
    }

    fn all_variants(m: usize) -> Vec<FilterConfig> {
        let amax = 1.0 / m as f64;
        vec![
            FilterConfig::Abhmm { alpha: 0.3 * amax, beta: 1.7 },
            FilterConfig::Abhmm { alpha: 0.0, beta: 0.4 },
            FilterConfig::Bayes,
            FilterConfig::EqualExitHmm { h: 0.2 },
            FilterConfig::LinearizedAbhmm { alpha: 0.5 * amax, beta: 0.8 },
            FilterConfig::Asl { delta: 0.3 },
        ]
    }

    proptest! {
        #[test]
        fn outputs_are_normalized((p, l) in belief_and_ll(8)) {
            let prior = Belief::from_probabilities(&p).unwrap();
            for f in all_variants(p.len()) {
                let out = f.update(&prior, &l).unwrap();
                let s: f64 = out.probabilities().iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12, "{} sum {}", f.name(), s);
                prop_assert!(out.log_weights().iter().all(|w| !w.is_nan() && *w != f64::INFINITY));
            }
        }

        #[test]
        fn likelihood_scale_invariance((p, l) in belief_and_ll(6), shift in -50.0f64..50.0) {
            let prior = Belief::from_probabilities(&p).unwrap();
            let shifted: Vec<f64> = l.iter().map(|v| v + shift).collect();
            for f in all_variants(p.len()) {
                let a = f.update(&prior, &l).unwrap();
                let b = f.update(&prior, &shifted).unwrap();
                for (x, y) in a.probabilities().iter().zip(b.probabilities()) {
                    prop_assert!((x - y).abs() < 1e-9, "{}", f.name());
                }
            }
        }

        #[test]
        fn positivity_floor((p, l) in belief_and_ll(6), frac in 0.01f64..1.0) {
            let prior = Belief::from_probabilities(&p).unwrap();
            let alpha = frac / p.len() as f64;
            let out = abhmm_update(&prior, &l, alpha, 1.0).unwrap();
            prop_assert!(out.log_weights().iter().all(|w| w.is_finite()));
        }

        #[test]
        fn asl_matches_linearized((p, l) in belief_and_ll(6), delta in 0.01f64..0.99) {
            let prior = Belief::from_probabilities(&p).unwrap();
            let m = p.len() as f64;
            let a = asl_update(&prior, &l, delta).unwrap();
            let b = linearized_update(&prior, &l, delta / m, delta).unwrap();
            for (x, y) in a.log_weights().iter().zip(b.log_weights()) {
                prop_assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn log_ratio_round_trip((p, _l) in belief_and_ll(8)) {
            let b = Belief::from_probabilities(&p).unwrap();
            let back = log_ratios_to_belief(&belief_to_log_ratios(&b).unwrap()).unwrap();
            for (x, y) in b.probabilities().iter().zip(back.probabilities()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nonlinear_update_is_first_order_linear_at_origin() {
        // One αβ-HMM step and one linearized step from the same near-uniform
        // prior differ in log-ratio by O(‖x‖²).
        let (alpha, beta) = (0.05, 1.0);
        let l = ll(&[0.3, 0.5, 0.2]);
        let mut worst: f64 = 0.0;
        for scale in [1e-3, 5e-4, 2.5e-4, 1e-4] {
            let x = LogBeliefRatio::new(vec![-scale, 0.7 * scale]);
            let prior = log_ratios_to_belief(&x).unwrap();
            let a = belief_to_log_ratios(&abhmm_update(&prior, &l, alpha, beta).unwrap()).unwrap();
            let b = belief_to_log_ratios(&linearized_update(&prior, &l, alpha, beta).unwrap()).unwrap();
            let diff = a.iter().zip(b.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            worst = worst.max(diff / (scale * scale));
        }
        // K fitted from the largest radius; the ratio stays bounded as ‖x‖ shrinks.
        assert!(worst < 10.0, "K = {worst}");
    }
}
