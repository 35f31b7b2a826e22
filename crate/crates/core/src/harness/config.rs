use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contextual::ContextualConfig;
use crate::dynamics::{DynamicsConfig, DEFAULT_GRAD_TOL};
use crate::error::{Error, Result};
use crate::harness::instance::{BanditSpec, LogitLaw, RewardLaw};
use crate::policy::DEFAULT_SUPPORT_EPS;

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Run,
    Limit,
    Improve,
    Sweep,
    Basin,
    Contextual,
}

impl ExperimentKind {
    pub fn is_stochastic(self) -> bool {
        matches!(self, ExperimentKind::Contextual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardLawName {
    Uniform,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_arms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_law: Option<RewardLawName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logit_slope: Option<f64>,
    /// Instance written by `gen`; excludes every other field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl InstanceConfig {
    /// 100 arms, uniform rewards, logits `y / 10`.
    pub fn default_bandit() -> Self {
        Self {
            n_arms: Some(100),
            reward_law: Some(RewardLawName::Uniform),
            logit_slope: Some(0.1),
            ..Self::default()
        }
    }

    pub fn explicit(rewards: Vec<f64>, logits: Option<Vec<f64>>) -> Self {
        Self { n_arms: Some(rewards.len()), rewards: Some(rewards), logits, ..Self::default() }
    }

    /// Generator spec, or `None` when the instance comes from a file.
    pub fn spec(&self) -> Result<Option<BanditSpec>> {
        if self.file.is_some() {
            if self.n_arms.is_some()
                || self.rewards.is_some()
                || self.reward_law.is_some()
                || self.logits.is_some()
                || self.logit_slope.is_some()
            {
                return Err(Error::Config("instance.file excludes every other instance field".into()));
            }
            return Ok(None);
        }
        let rewards = match (&self.rewards, self.reward_law) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either instance.rewards or instance.reward_law".into()))
            }
            (Some(r), None) => RewardLaw::Explicit(r.clone()),
            (None, _) => RewardLaw::Uniform,
        };
        let logits = match (&self.logits, self.logit_slope) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either instance.logits or instance.logit_slope".into()))
            }
            (Some(l), None) => LogitLaw::Explicit(l.clone()),
            (None, Some(s)) => LogitLaw::Linear(s),
            (None, None) => LogitLaw::Uniform,
        };
        let n_arms = match (self.n_arms, &rewards) {
            (Some(n), _) => n,
            (None, RewardLaw::Explicit(r)) => r.len(),
            (None, RewardLaw::Uniform) => {
                return Err(Error::Config("instance.n_arms is required for generated rewards".into()))
            }
        };
        let spec = BanditSpec { n_arms, rewards, logits };
        spec.validate()?;
        Ok(Some(spec))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    /// `None` selects `0.9 / b` below the critical baseline and 1 otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub steps: usize,
    pub grad_tol: f64,
    pub record_every: usize,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { eta: None, steps: 20_000, grad_tol: DEFAULT_GRAD_TOL, record_every: 100 }
    }
}

impl DynamicsSection {
    pub fn to_config(&self, eta: f64, eps: f64) -> DynamicsConfig {
        DynamicsConfig::new(self.eta.unwrap_or(eta), self.steps)
            .with_grad_tol(self.grad_tol)
            .with_record_every(self.record_every)
            .with_support_eps(eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImproveSection {
    pub iters: usize,
    pub steps_per_iter: usize,
}

impl Default for ImproveSection {
    fn default() -> Self {
        Self { iters: 40, steps_per_iter: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextualSection {
    #[serde(rename = "G")]
    pub group_size: usize,
    pub delta_v: f64,
    pub update_interval: usize,
    pub total_steps: usize,
    pub n_contexts: usize,
    pub n_arms: usize,
    pub eta: f64,
    pub record_every: usize,
}

impl Default for ContextualSection {
    fn default() -> Self {
        Self {
            group_size: 8,
            delta_v: -0.1,
            update_interval: 250,
            total_steps: 20_000,
            n_contexts: 20,
            n_arms: 10,
            eta: 1.0,
            record_every: 250,
        }
    }
}

impl ContextualSection {
    pub fn to_config(&self, delta_v: f64) -> ContextualConfig {
        ContextualConfig {
            group_size: self.group_size,
            delta_v,
            eta: self.eta,
            total_steps: self.total_steps,
            update_interval: self.update_interval,
            record_every: self.record_every,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_values: Option<Vec<f64>>,
    /// Offsets from the behavior value `V^mu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_v_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasinSection {
    pub resolution: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    pub max_steps: usize,
}

impl Default for BasinSection {
    fn default() -> Self {
        Self { resolution: 60, v: None, max_steps: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "InstanceConfig::default_bandit")]
    pub instance: InstanceConfig,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub improve: ImproveSection,
    #[serde(default)]
    pub contextual: ContextualSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub basin: BasinSection,
    /// Baseline for `run` and `limit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_eps() -> f64 {
    DEFAULT_SUPPORT_EPS
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            instance: InstanceConfig::default_bandit(),
            dynamics: DynamicsSection::default(),
            improve: ImproveSection::default(),
            contextual: ContextualSection::default(),
            sweep: SweepSection::default(),
            basin: BasinSection::default(),
            v: None,
            seed: Some(DEFAULT_SEED),
            eps: DEFAULT_SUPPORT_EPS,
            out: default_out(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_stochastic() && self.seed.is_none() {
            return Err(Error::Config("a seed is required for stochastic experiments".into()));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be a nonnegative number, got {}", self.eps)));
        }
        if let Some(eta) = self.dynamics.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Config(format!("dynamics.eta must be positive, got {eta}")));
            }
        }
        if self.dynamics.steps == 0 || self.dynamics.record_every == 0 {
            return Err(Error::Config("dynamics.steps and dynamics.record_every must be positive".into()));
        }
        if self.sweep.v_values.is_some() && self.sweep.delta_v_values.is_some() {
            return Err(Error::Config("give either sweep.v_values or sweep.delta_v_values".into()));
        }
        if self.improve.iters == 0 || self.improve.steps_per_iter == 0 {
            return Err(Error::Config("improve.iters and improve.steps_per_iter must be positive".into()));
        }
        if self.basin.resolution == 0 || self.basin.max_steps == 0 {
            return Err(Error::Config("basin.resolution and basin.max_steps must be positive".into()));
        }
        if self.kind == ExperimentKind::Contextual {
            self.contextual.to_config(self.contextual.delta_v).validate()?;
        }
        self.instance.spec()?;
        Ok(())
    }
}
