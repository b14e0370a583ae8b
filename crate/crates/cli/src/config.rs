//! Experiment configuration files.

use abhmm::model::{Model, ModelConfig};
use abhmm::sim::{EnvironmentSpec, Schedule};
use abhmm::FilterConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Monte Carlo metrics for every filter on sampled trajectories.
    MonteCarlo,
    /// Deterministic reference trajectories, fixed points and bounds.
    Reference,
    /// Binary switch: measured and closed-form adaptation times.
    Adaptation,
}

/// Parameter lists expanded into a cartesian product. Empty lists leave the
/// base value unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma: Vec<f64>,
    /// Tie β to α for every αβ filter (ignores `beta`).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub beta_equals_alpha: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationSettings {
    pub t1: Vec<usize>,
    pub post_switch: usize,
    #[serde(default)]
    pub x0: f64,
    /// Also run the filters on noisy switch trajectories.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub stochastic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Write per-step CSVs; summaries are always written.
    #[serde(default = "default_true")]
    pub write_series: bool,
    /// Record the mean distance to the reference fixed point (constant schedules).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub track_fixed_point: bool,
    pub model: ModelConfig,
    /// Observation model; defaults to `model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptationSettings>,
    #[serde(default)]
    pub filters: Vec<FilterConfig>,
    #[serde(default)]
    pub sweep: Sweep,
}

fn default_runs() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// One model pair of a sigma sweep.
pub struct ModelPair {
    pub sigma: f64,
    pub likelihood: Model,
    pub truth: Model,
}

fn validation(key: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{key}: {err}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {}", e.message())))
    }

    /// Reads a JSON config, or the config echoed inside a run manifest.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let invalid = |e: serde_json::Error| CliError::Validation(format!("config: {e}"));
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(invalid)?;
        if value.get("schema_version").is_some() {
            value = value
                .get_mut("config")
                .map(serde_json::Value::take)
                .ok_or_else(|| CliError::Validation("config: manifest has no config echo".into()))?;
        }
        serde_json::from_value(value).map_err(invalid)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn truth_config(&self) -> &ModelConfig {
        self.truth.as_ref().unwrap_or(&self.model)
    }

    fn sigmas(&self) -> Vec<f64> {
        if self.sweep.sigma.is_empty() {
            vec![self.model.sigma]
        } else {
            self.sweep.sigma.clone()
        }
    }

    /// Likelihood and truth models for every swept σ.
    pub fn model_pairs(&self) -> Result<Vec<ModelPair>, CliError> {
        self.sigmas()
            .into_iter()
            .map(|sigma| {
                let swept = !self.sweep.sigma.is_empty();
                let with_sigma = |cfg: &ModelConfig| ModelConfig {
                    sigma: if swept { sigma } else { cfg.sigma },
                    ..cfg.clone()
                };
                let likelihood = Model::from_config(&with_sigma(&self.model)).map_err(|e| validation("model", e))?;
                let truth = Model::from_config(&with_sigma(self.truth_config())).map_err(|e| validation("truth", e))?;
                Ok(ModelPair {
                    sigma,
                    likelihood,
                    truth,
                })
            })
            .collect()
    }

    /// The filter list with α/β sweeps applied to the αβ variants.
    pub fn expanded_filters(&self) -> Vec<FilterConfig> {
        let mut out = Vec::new();
        for f in &self.filters {
            match f {
                FilterConfig::Abhmm { alpha, beta } | FilterConfig::LinearizedAbhmm { alpha, beta } => {
                    let alphas = if self.sweep.alpha.is_empty() { vec![*alpha] } else { self.sweep.alpha.clone() };
                    for &a in &alphas {
                        let betas = if self.sweep.beta_equals_alpha {
                            vec![a]
                        } else if self.sweep.beta.is_empty() {
                            vec![*beta]
                        } else {
                            self.sweep.beta.clone()
                        };
                        for b in betas {
                            out.push(match f {
                                FilterConfig::Abhmm { .. } => FilterConfig::Abhmm { alpha: a, beta: b },
                                _ => FilterConfig::LinearizedAbhmm { alpha: a, beta: b },
                            });
                        }
                    }
                }
                other => out.push(other.clone()),
            }
        }
        out
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.runs < 1 {
            return Err(validation("runs", "must be >= 1"));
        }
        if self.sweep.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(validation("sweep.sigma", "entries must be > 0"));
        }
        let pairs = self.model_pairs()?;
        let m = pairs[0].likelihood_states();
        if pairs[0].truth_states() != m {
            return Err(validation("truth.means", format!("must have {m} entries like model.means")));
        }
        let filters = self.expanded_filters();
        if filters.is_empty() {
            return Err(validation("filters", "at least one filter is required"));
        }
        for f in &filters {
            f.validate(m).map_err(|e| validation(&format!("filters.{}", f.name()), e))?;
        }
        match self.kind {
            Kind::MonteCarlo => {
                let env = self.environment.as_ref().ok_or_else(|| validation("environment", "required for kind = monte_carlo"))?;
                env.validate(m).map_err(|e| validation("environment", e))?;
                if self.track_fixed_point && !matches!(env.schedule, Schedule::Constant { .. }) {
                    return Err(validation("track_fixed_point", "needs a constant schedule"));
                }
            }
            Kind::Reference => {
                let env = self.environment.as_ref().ok_or_else(|| validation("environment", "required for kind = reference"))?;
                env.validate(m).map_err(|e| validation("environment", e))?;
                match env.schedule {
                    Schedule::Constant { state: 0 } | Schedule::SwitchAt { state_a: 0, .. } => {}
                    _ => {
                        return Err(validation(
                            "environment.schedule",
                            "reference runs need a constant or switch_at schedule starting in state 0",
                        ))
                    }
                }
                if filters.iter().any(|f| !matches!(f, FilterConfig::Abhmm { .. })) {
                    return Err(validation("filters", "reference runs take abhmm filters only"));
                }
            }
            Kind::Adaptation => {
                let a = self.adaptation.as_ref().ok_or_else(|| validation("adaptation", "required for kind = adaptation"))?;
                if m != 2 {
                    return Err(validation("model.means", "adaptation runs need exactly 2 states"));
                }
                if a.t1.is_empty() {
                    return Err(validation("adaptation.t1", "must not be empty"));
                }
                if a.post_switch < 1 {
                    return Err(validation("adaptation.post_switch", "must be >= 1"));
                }
                if !a.x0.is_finite() {
                    return Err(validation("adaptation.x0", "must be finite"));
                }
                if filters.iter().any(|f| !matches!(f, FilterConfig::Abhmm { .. } | FilterConfig::Bayes)) {
                    return Err(validation("filters", "adaptation runs take abhmm and bayes filters only"));
                }
            }
        }
        Ok(())
    }
}

impl ModelPair {
    fn likelihood_states(&self) -> usize {
        abhmm::ObservationModel::num_states(&self.likelihood)
    }

    fn truth_states(&self) -> usize {
        abhmm::ObservationModel::num_states(&self.truth)
    }
}
