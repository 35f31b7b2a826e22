use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{expected_reward, softmax, LogitPolicy, RewardModel, SimplexPolicy};
use crate::rng::stream_rng;

/// Random stream reserved for instance generation.
pub const INSTANCE_STREAM: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardLaw {
    /// Independent draws from `U[0, 1]`.
    Uniform,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogitLaw {
    /// `l(y) = slope * y`.
    Linear(f64),
    Explicit(Vec<f64>),
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSpec {
    pub n_arms: usize,
    pub rewards: RewardLaw,
    pub logits: LogitLaw,
}

impl BanditSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_arms == 0 {
            return Err(Error::Config("n_arms must be at least 1".into()));
        }
        if let RewardLaw::Explicit(r) = &self.rewards {
            if r.len() != self.n_arms {
                return Err(Error::Config(format!("{} rewards given for {} arms", r.len(), self.n_arms)));
            }
        }
        match &self.logits {
            LogitLaw::Explicit(l) if l.len() != self.n_arms => {
                Err(Error::Config(format!("{} logits given for {} arms", l.len(), self.n_arms)))
            }
            LogitLaw::Linear(s) if !s.is_finite() => Err(Error::Config("logit slope must be finite".into())),
            _ => Ok(()),
        }
    }
}

/// Rewards, behavior policy and initial logits; the behavior policy is the
/// softmax of the initial logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub rewards: RewardModel,
    pub logits: LogitPolicy,
    #[serde(skip_deserializing, default = "placeholder")]
    pub behavior: SimplexPolicy,
}

fn placeholder() -> SimplexPolicy {
    SimplexPolicy::uniform(1)
}

impl Instance {
    pub fn new(rewards: RewardModel, logits: LogitPolicy) -> Result<Self> {
        if rewards.len() != logits.len() {
            return Err(Error::Config("rewards and logits differ in length".into()));
        }
        let behavior = softmax(&logits);
        Ok(Self { rewards, logits, behavior })
    }

    pub fn n_arms(&self) -> usize {
        self.rewards.len()
    }

    /// Expected reward of the behavior policy.
    pub fn behavior_value(&self) -> f64 {
        expected_reward(&self.behavior, &self.rewards).expect("lengths checked on construction")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: Instance = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Instance::new(raw.rewards, raw.logits)
    }
}

pub fn generate_instance(spec: &BanditSpec, seed: u64) -> Result<Instance> {
    spec.validate()?;
    let n = spec.n_arms;
    let rewards = match &spec.rewards {
        RewardLaw::Explicit(r) => r.clone(),
        RewardLaw::Uniform => {
            let mut rng = stream_rng(seed, INSTANCE_STREAM);
            (0..n).map(|_| rng.random::<f64>()).collect()
        }
    };
    let logits = match &spec.logits {
        LogitLaw::Explicit(l) => l.clone(),
        LogitLaw::Linear(s) => (0..n).map(|y| s * y as f64).collect(),
        LogitLaw::Uniform => vec![0.0; n],
    };
    let rewards = RewardModel::new(rewards).map_err(|e| Error::Config(e.to_string()))?;
    let logits = LogitPolicy::new(logits).map_err(|e| Error::Config(e.to_string()))?;
    Instance::new(rewards, logits)
}
