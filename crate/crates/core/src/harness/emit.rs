//! CSV and JSON writers. Floats use the shortest representation that
//! parses back to the same value; lines end in `\n`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryLog;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiments::{BasinMap, ContextualOutcome, ImprovementCurve, SweepRow};

pub const TRAJECTORY_HEADER: &str = "step,expected_reward,entropy,support_size,phi,tau_t,grad_maxnorm";
pub const BASIN_HEADER: &str = "x,y,limit_arm";
pub const SWEEP_SUMMARY_HEADER: &str = "v,final_reward,final_entropy,final_support_size,tau_star,regime";
pub const IMPROVEMENT_HEADER: &str = "v,iteration,expected_reward,entropy,support_size";
pub const CONTEXTUAL_HEADER: &str = "delta_v,step,mean_reward,mean_entropy";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let mut s = format!("{TRAJECTORY_HEADER}\n");
    for r in log.records() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.step,
            fmt_f64(r.expected_reward),
            fmt_f64(r.entropy),
            r.support_size,
            fmt_f64(r.phi),
            fmt_f64(r.tau_t),
            fmt_f64(r.grad_maxnorm)
        );
    }
    s
}

pub fn basin_csv(map: &BasinMap) -> String {
    let mut s = format!("{BASIN_HEADER}\n");
    for c in &map.cells {
        let _ = writeln!(s, "{},{},{}", fmt_f64(c.x), fmt_f64(c.y), c.limit_arm);
    }
    s
}

pub fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt_f64(r.v),
            fmt_f64(r.final_reward),
            fmt_f64(r.final_entropy),
            r.final_support.len(),
            fmt_f64(r.tau_star.unwrap_or(f64::NAN)),
            r.regime.tag
        );
    }
    s
}

pub fn improvement_csv(curves: &[ImprovementCurve]) -> String {
    let mut s = format!("{IMPROVEMENT_HEADER}\n");
    for c in curves {
        for (k, ((reward, ent), size)) in c.rewards.iter().zip(&c.entropies).zip(&c.support_sizes).enumerate() {
            let _ = writeln!(s, "{},{},{},{},{}", fmt_f64(c.v), k, fmt_f64(*reward), fmt_f64(*ent), size);
        }
    }
    s
}

pub fn contextual_csv(outcomes: &[ContextualOutcome]) -> String {
    let mut s = format!("{CONTEXTUAL_HEADER}\n");
    for o in outcomes {
        for a in &o.run.aggregate {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                fmt_f64(o.delta_v),
                a.step,
                fmt_f64(a.mean_reward),
                fmt_f64(a.mean_entropy)
            );
        }
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub results: serde_json::Value,
}

impl Summary {
    pub fn new(config: &ExperimentConfig, results: serde_json::Value) -> Self {
        Self { config: config.clone(), config_hash: config.hash(), seed: config.seed(), results }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("summary: {e}")))
    }

    /// Whether the echoed config still hashes to the recorded value.
    pub fn hash_matches(&self) -> bool {
        self.config.hash() == self.config_hash
    }
}

/// Writes `text` to `dir/name` and returns the path.
pub fn emit(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    write_text(&path, text)?;
    Ok(path)
}
