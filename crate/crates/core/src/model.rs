//! Observation models and the information quantities derived from them.
//!
//! A model assigns a density `L(ξ | θ_m)` to every state. The same trait is
//! used for the likelihood family the filter believes in and for the density
//! that actually generates observations; the two are kept as separate
//! objects because they are allowed to disagree.
//!
//! All log-ratio quantities are taken relative to a *reference* state (the
//! state the truth is closest to). For a truth density `f`:
//!
//! ```text
//! d_m = E_f[ln L(ξ|θ_ref) − ln L(ξ|θ_m)]          (m ≠ ref)
//! C   = max_m sup_ξ | ln L(ξ|θ_m) − ln L(ξ|θ_ref) + d_m |
//! ```

use std::f64::consts::FRAC_1_SQRT_2;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::{erf, erfc};

use crate::error::{invalid, Error, Result};
use crate::numeric::adaptive_simpson;

/// Below this value a KL gap is treated as zero (non-identifiable).
pub const IDENTIFIABILITY_FLOOR: f64 = 1e-8;
/// Absolute tolerance of the KL quadrature.
pub const KL_TOLERANCE: f64 = 1e-10;
/// Half-width, in standard deviations, of the window used to integrate
/// against an untruncated Gaussian.
const GAUSSIAN_WINDOW: f64 = 20.0;
/// Default grid resolution for the log-likelihood-ratio bound search.
pub const LLR_GRID_POINTS: usize = 10_000;

/// Ordered, distinct state labels. Index 0 is the default reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(invalid("a state space needs at least 2 states"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(invalid(format!("duplicate state label `{l}`")));
            }
        }
        Ok(Self { labels })
    }

    /// `theta_0 … theta_{m-1}`.
    pub fn indexed(m: usize) -> Result<Self> {
        Self::new((0..m).map(|i| format!("theta_{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    RealLine,
    Interval { lo: f64, hi: f64 },
}

impl Support {
    pub fn is_bounded(&self) -> bool {
        matches!(self, Support::Interval { .. })
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::RealLine => x.is_finite(),
            Support::Interval { lo, hi } => (lo..=hi).contains(&x),
        }
    }
}

/// A family of observation densities indexed by state.
pub trait ObservationModel: Send + Sync {
    fn num_states(&self) -> usize;

    /// Natural log of `L(observation | θ_state)`; `-inf` outside the support.
    fn log_likelihood(&self, observation: f64, state: usize) -> f64;

    fn sample(&self, state: usize, rng: &mut dyn RngCore) -> f64;

    fn support(&self) -> Support;

    /// Mean of the state's density.
    fn mean(&self, state: usize) -> f64;

    /// `(mean, sd)` when the state's density is an untruncated Gaussian.
    fn gaussian(&self, _state: usize) -> Option<(f64, f64)> {
        None
    }

    /// Whether KL divergences between states have a closed form.
    fn closed_form_kl(&self) -> bool {
        (0..self.num_states()).all(|m| self.gaussian(m).is_some())
    }

    /// Whether every pairwise log-likelihood ratio is monotone in the
    /// observation, so its extremes over an interval sit at the endpoints.
    fn llr_monotone(&self) -> bool {
        false
    }

    /// Finite interval carrying all but a negligible part of the state's mass.
    fn integration_range(&self, state: usize) -> (f64, f64);

    fn log_likelihoods(&self, observation: f64) -> Vec<f64> {
        (0..self.num_states())
            .map(|m| self.log_likelihood(observation, m))
            .collect()
    }
}

fn validate_family(means: &[f64], sigma: f64) -> Result<()> {
    if means.len() < 2 {
        return Err(invalid("means: need at least 2 states"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma: must be > 0, got {sigma}")));
    }
    if means.iter().any(|m| !m.is_finite()) {
        return Err(invalid("means: must be finite"));
    }
    Ok(())
}

fn check_state(state: usize, states: usize) -> Result<()> {
    if state >= states {
        return Err(Error::StateOutOfRange { state, states });
    }
    Ok(())
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Gaussian likelihoods with a shared standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGridModel {
    means: Vec<f64>,
    sigma: f64,
}

impl GaussianGridModel {
    pub fn new(means: Vec<f64>, sigma: f64) -> Result<Self> {
        validate_family(&means, sigma)?;
        Ok(Self { means, sigma })
    }

    /// Means `1, 2, …, m`.
    pub fn unit_grid(m: usize, sigma: f64) -> Result<Self> {
        Self::new((1..=m).map(|k| k as f64).collect(), sigma)
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl ObservationModel for GaussianGridModel {
    fn num_states(&self) -> usize {
        self.means.len()
    }

    fn log_likelihood(&self, observation: f64, state: usize) -> f64 {
        let z = (observation - self.means[state]) / self.sigma;
        -HALF_LN_2PI - self.sigma.ln() - 0.5 * z * z
    }

    fn sample(&self, state: usize, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.means[state] + self.sigma * z
    }

    fn support(&self) -> Support {
        Support::RealLine
    }

    fn mean(&self, state: usize) -> f64 {
        self.means[state]
    }

    fn gaussian(&self, state: usize) -> Option<(f64, f64)> {
        Some((self.means[state], self.sigma))
    }

    fn llr_monotone(&self) -> bool {
        true
    }

    fn integration_range(&self, state: usize) -> (f64, f64) {
        let mu = self.means[state];
        (mu - GAUSSIAN_WINDOW * self.sigma, mu + GAUSSIAN_WINDOW * self.sigma)
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - HALF_LN_2PI).exp()
}

/// `Φ(b) − Φ(a)` without cancellation in either tail.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        0.5 * (erfc(a * FRAC_1_SQRT_2) - erfc(b * FRAC_1_SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * FRAC_1_SQRT_2) - erfc(-a * FRAC_1_SQRT_2))
    } else {
        0.5 * (erf(b * FRAC_1_SQRT_2) - erf(a * FRAC_1_SQRT_2))
    }
}

/// Gaussian likelihoods with shared standard deviation, renormalized over a
/// closed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGaussianModel {
    means: Vec<f64>,
    sigma: f64,
    lo: f64,
    hi: f64,
    log_mass: Vec<f64>,
}

impl TruncatedGaussianModel {
    pub fn new(means: Vec<f64>, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        validate_family(&means, sigma)?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("support: need a < b, got [{lo}, {hi}]")));
        }
        let mut log_mass = Vec::with_capacity(means.len());
        for &mu in &means {
            let mass = normal_mass((lo - mu) / sigma, (hi - mu) / sigma);
            if !(mass > 0.0) {
                return Err(Error::Numeric(format!(
                    "truncated Gaussian with mean {mu} has no mass on [{lo}, {hi}]"
                )));
            }
            log_mass.push(mass.ln());
        }
        Ok(Self {
            means,
            sigma,
            lo,
            hi,
            log_mass,
        })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn standardized(&self, state: usize) -> (f64, f64) {
        let mu = self.means[state];
        ((self.lo - mu) / self.sigma, (self.hi - mu) / self.sigma)
    }
}

impl ObservationModel for TruncatedGaussianModel {
    fn num_states(&self) -> usize {
        self.means.len()
    }

    fn log_likelihood(&self, observation: f64, state: usize) -> f64 {
        if !(self.lo..=self.hi).contains(&observation) {
            return f64::NEG_INFINITY;
        }
        let z = (observation - self.means[state]) / self.sigma;
        -HALF_LN_2PI - self.sigma.ln() - 0.5 * z * z - self.log_mass[state]
    }

    fn sample(&self, state: usize, rng: &mut dyn RngCore) -> f64 {
        let mu = self.means[state];
        let (za, zb) = self.standardized(state);
        if self.log_mass[state] > 0.25f64.ln() {
            loop {
                let z: f64 = StandardNormal.sample(rng);
                if (za..=zb).contains(&z) {
                    return mu + self.sigma * z;
                }
            }
        }
        // Low acceptance: invert the CDF on the truncated range.
        let std = Normal::standard();
        let (pa, pb) = (std.cdf(za), std.cdf(zb));
        let u: f64 = rand::Rng::random(rng);
        let z = std.inverse_cdf(pa + u * (pb - pa));
        (mu + self.sigma * z).clamp(self.lo, self.hi)
    }

    fn support(&self) -> Support {
        Support::Interval {
            lo: self.lo,
            hi: self.hi,
        }
    }

    fn mean(&self, state: usize) -> f64 {
        let (za, zb) = self.standardized(state);
        self.means[state]
            + self.sigma * (std_normal_pdf(za) - std_normal_pdf(zb)) / self.log_mass[state].exp()
    }

    fn llr_monotone(&self) -> bool {
        true
    }

    fn integration_range(&self, _state: usize) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    TruncatedGaussian,
}

/// Serializable model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub means: Vec<f64>,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 2]>,
}

/// A concrete model built from a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gaussian(GaussianGridModel),
    Truncated(TruncatedGaussianModel),
}

impl Model {
    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        match cfg.family {
            Family::Gaussian => {
                if cfg.support.is_some() {
                    return Err(invalid("support: only valid for family `truncated_gaussian`"));
                }
                Ok(Model::Gaussian(GaussianGridModel::new(cfg.means.clone(), cfg.sigma)?))
            }
            Family::TruncatedGaussian => {
                let [lo, hi] = cfg
                    .support
                    .ok_or_else(|| invalid("support: required for family `truncated_gaussian`"))?;
                Ok(Model::Truncated(TruncatedGaussianModel::new(
                    cfg.means.clone(),
                    cfg.sigma,
                    lo,
                    hi,
                )?))
            }
        }
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Gaussian(g) => ModelConfig {
                family: Family::Gaussian,
                means: g.means.clone(),
                sigma: g.sigma,
                support: None,
            },
            Model::Truncated(t) => ModelConfig {
                family: Family::TruncatedGaussian,
                means: t.means.clone(),
                sigma: t.sigma,
                support: Some([t.lo, t.hi]),
            },
        }
    }

    fn inner(&self) -> &dyn ObservationModel {
        match self {
            Model::Gaussian(g) => g,
            Model::Truncated(t) => t,
        }
    }
}

impl ObservationModel for Model {
    fn num_states(&self) -> usize {
        self.inner().num_states()
    }
    fn log_likelihood(&self, observation: f64, state: usize) -> f64 {
        self.inner().log_likelihood(observation, state)
    }
    fn sample(&self, state: usize, rng: &mut dyn RngCore) -> f64 {
        self.inner().sample(state, rng)
    }
    fn support(&self) -> Support {
        self.inner().support()
    }
    fn mean(&self, state: usize) -> f64 {
        self.inner().mean(state)
    }
    fn gaussian(&self, state: usize) -> Option<(f64, f64)> {
        self.inner().gaussian(state)
    }
    fn llr_monotone(&self) -> bool {
        self.inner().llr_monotone()
    }
    fn integration_range(&self, state: usize) -> (f64, f64) {
        self.inner().integration_range(state)
    }
}

/// Draw one observation from `model` in state `state`.
pub fn sample_observation(
    model: &dyn ObservationModel,
    state: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    check_state(state, model.num_states())?;
    Ok(model.sample(state, rng))
}

/// States other than `reference`, in increasing index order. This is the
/// component order of every `d`, `C` and log-belief-ratio vector.
pub fn non_reference_states(m: usize, reference: usize) -> impl Iterator<Item = usize> {
    (0..m).filter(move |&k| k != reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlMethod {
    /// Closed form when both models are untruncated Gaussians, else quadrature.
    Auto,
    Quadrature,
}

/// Raw KL gaps `d_m` (no identifiability check).
pub fn kl_gaps(
    truth: &dyn ObservationModel,
    true_state: usize,
    likelihood: &dyn ObservationModel,
    reference: usize,
    method: KlMethod,
) -> Result<Vec<f64>> {
    let m = likelihood.num_states();
    if m < 2 {
        return Err(invalid("likelihood model needs at least 2 states"));
    }
    check_state(true_state, truth.num_states())?;
    check_state(reference, m)?;
    if truth.support() != likelihood.support() {
        return Err(invalid("truth and likelihood models must share the same support"));
    }

    let closed = match (method, truth.gaussian(true_state)) {
        (KlMethod::Auto, Some(f)) if likelihood.closed_form_kl() => Some(f),
        _ => None,
    };
    if let Some((mu_f, sd_f)) = closed {
        // E_f[ln N(ξ; μ, σ)] = −ln σ − ½ln 2π − (σ_f² + (μ_f − μ)²) / (2σ²)
        let expected_log = |k: usize| {
            let (mu, sd) = likelihood.gaussian(k).expect("closed form checked");
            -sd.ln() - HALF_LN_2PI - (sd_f * sd_f + (mu_f - mu).powi(2)) / (2.0 * sd * sd)
        };
        let base = expected_log(reference);
        return Ok(non_reference_states(m, reference)
            .map(|k| base - expected_log(k))
            .collect());
    }

    let (lo, hi) = truth.integration_range(true_state);
    non_reference_states(m, reference)
        .map(|k| {
            let integrand = |x: f64| {
                let lf = truth.log_likelihood(x, true_state);
                if lf == f64::NEG_INFINITY {
                    return 0.0;
                }
                lf.exp() * (likelihood.log_likelihood(x, reference) - likelihood.log_likelihood(x, k))
            };
            adaptive_simpson(integrand, lo, hi, KL_TOLERANCE, 64)
        })
        .collect()
}

/// Identifiability vector `d` (length `M − 1`, reference state skipped).
///
/// Errors with [`Error::AssumptionViolated`] when some `d_m` does not exceed
/// [`IDENTIFIABILITY_FLOOR`].
pub fn compute_identifiability(
    truth: &dyn ObservationModel,
    true_state: usize,
    likelihood: &dyn ObservationModel,
    reference: usize,
) -> Result<Vec<f64>> {
    let d = kl_gaps(truth, true_state, likelihood, reference, KlMethod::Auto)?;
    check_identifiable(&d, likelihood.num_states(), reference)?;
    Ok(d)
}

fn check_identifiable(d: &[f64], m: usize, reference: usize) -> Result<()> {
    for (state, &gap) in non_reference_states(m, reference).zip(d) {
        if !(gap > IDENTIFIABILITY_FLOOR) {
            return Err(Error::AssumptionViolated { state, gap });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlrSearch {
    /// Endpoints for monotone families, dense grid otherwise.
    Auto,
    Endpoints,
    DenseGrid { points: usize },
}

/// `C = max_m sup_ξ |ln L(ξ|θ_m) − ln L(ξ|θ_ref) + d_m|` over the bounded
/// support of `likelihood`, for a given `d`.
pub fn llr_bound(
    likelihood: &dyn ObservationModel,
    reference: usize,
    d: &[f64],
    search: LlrSearch,
) -> Result<f64> {
    let m = likelihood.num_states();
    check_state(reference, m)?;
    if d.len() + 1 != m {
        return Err(Error::DimensionMismatch {
            expected: m - 1,
            actual: d.len(),
        });
    }
    let (lo, hi) = match likelihood.support() {
        Support::Interval { lo, hi } => (lo, hi),
        Support::RealLine => return Err(Error::UnboundedSupport),
    };
    let centered = |x: f64| {
        let base = likelihood.log_likelihood(x, reference);
        non_reference_states(m, reference)
            .zip(d)
            .map(|(k, &dk)| (likelihood.log_likelihood(x, k) - base + dk).abs())
            .fold(0.0, f64::max)
    };
    let search = match search {
        LlrSearch::Auto if likelihood.llr_monotone() => LlrSearch::Endpoints,
        LlrSearch::Auto => LlrSearch::DenseGrid {
            points: LLR_GRID_POINTS,
        },
        s => s,
    };
    let c = match search {
        LlrSearch::Endpoints => centered(lo).max(centered(hi)),
        LlrSearch::DenseGrid { points } => {
            let points = points.max(2);
            let step = (hi - lo) / (points - 1) as f64;
            let grid = |i: usize| if i + 1 == points { hi } else { lo + i as f64 * step };
            let (best_i, best) = (0..points)
                .map(|i| (i, centered(grid(i))))
                .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
            let a = grid(best_i.saturating_sub(1));
            let b = grid((best_i + 1).min(points - 1));
            best.max(golden_max(&centered, a, b))
        }
        LlrSearch::Auto => unreachable!(),
    };
    if !c.is_finite() {
        return Err(Error::Numeric("log-likelihood ratio unbounded on the support".into()));
    }
    Ok(c)
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    if b <= a {
        return f(a);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut e = a + INV_PHI * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    for _ in 0..100 {
        if fc > fe {
            b = e;
            e = c;
            fe = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + INV_PHI * (b - a);
            fe = f(e);
        }
        if (b - a).abs() < 1e-13 {
            break;
        }
    }
    fc.max(fe)
}

/// Log-likelihood-ratio bound `C` for a truth/likelihood pair. Errors with
/// [`Error::UnboundedSupport`] on the real line.
pub fn compute_llr_bound(
    truth: &dyn ObservationModel,
    true_state: usize,
    likelihood: &dyn ObservationModel,
    reference: usize,
) -> Result<f64> {
    if !likelihood.support().is_bounded() {
        return Err(Error::UnboundedSupport);
    }
    let d = kl_gaps(truth, true_state, likelihood, reference, KlMethod::Auto)?;
    llr_bound(likelihood, reference, &d, LlrSearch::Auto)
}

/// Identifiability vector, its extremes, and the LLR bound when defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoProfile {
    pub d: Vec<f64>,
    pub d_min: f64,
    pub d_max: f64,
    /// `None` for unbounded supports.
    pub c: Option<f64>,
}

impl InfoProfile {
    pub fn compute(
        truth: &dyn ObservationModel,
        true_state: usize,
        likelihood: &dyn ObservationModel,
        reference: usize,
    ) -> Result<Self> {
        let d = compute_identifiability(truth, true_state, likelihood, reference)?;
        let c = if likelihood.support().is_bounded() {
            Some(llr_bound(likelihood, reference, &d, LlrSearch::Auto)?)
        } else {
            None
        };
        Ok(Self::from_parts(d, c))
    }

    pub fn from_parts(d: Vec<f64>, c: Option<f64>) -> Self {
        let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
        let d_max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { d, d_min, d_max, c }
    }
}
