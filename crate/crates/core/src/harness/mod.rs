//! Experiment layer: configs, instances, sweeps and writers.

pub mod config;
pub mod emit;
pub mod experiments;
pub mod instance;

use std::path::PathBuf;

use serde_json::json;

use crate::error::{Error, Result};
use crate::limit::limit_policy;
use crate::policy::{classify_regime, DEFAULT_CRITICAL_TOL};

use config::{ExperimentConfig, ExperimentKind};
use emit::{emit, Summary};
use experiments::{
    basin_map, contextual_experiment, default_v_grid, improvement_experiment, single_run, sweep_baseline,
};
use instance::{generate_instance, Instance};

pub fn load_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    match cfg.instance.spec()? {
        Some(spec) => generate_instance(&spec, cfg.seed()),
        None => Instance::load(cfg.instance.file.as_ref().expect("spec() checked the file")),
    }
}

fn require_v(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.v.ok_or_else(|| Error::Config(format!("`v` is required for {:?} experiments", cfg.kind)))
}

/// Baselines of a sweep: explicit values, offsets from `V^mu`, or the
/// default grid.
pub fn sweep_values(cfg: &ExperimentConfig, inst: &Instance) -> Vec<f64> {
    let v_mu = inst.behavior_value();
    match (&cfg.sweep.v_values, &cfg.sweep.delta_v_values) {
        (Some(v), _) => v.clone(),
        (None, Some(d)) => d.iter().map(|dv| v_mu + dv).collect(),
        (None, None) => default_v_grid(inst),
    }
}

/// Writes the instance to `out/instance.json`.
pub fn generate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let inst = load_instance(cfg)?;
    Ok(vec![emit(&cfg.out, "instance.json", &inst.to_json())?])
}

/// Runs the configured experiment and writes its outputs under `cfg.out`.
pub fn execute(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let inst = load_instance(cfg)?;
    let v_mu = inst.behavior_value();
    let out = &cfg.out;
    let mut files = Vec::new();
    let results = match cfg.kind {
        ExperimentKind::Run => {
            let row = single_run(&inst, require_v(cfg)?, &cfg.dynamics, cfg.eps)?;
            files.push(emit(out, "trajectory.csv", &emit::trajectory_csv(&row.log))?);
            json!({
                "v": row.v,
                "v_mu": v_mu,
                "regime": row.regime.tag,
                "final_reward": row.final_reward,
                "final_entropy": row.final_entropy,
                "final_support": row.final_support,
                "final_policy": row.final_policy,
                "tau_star": row.tau_star,
                "limit_support": row.limit_support,
                "limit_l1": row.limit_l1,
            })
        }
        ExperimentKind::Limit => {
            let v = require_v(cfg)?;
            let regime = classify_regime(&inst.behavior, &inst.rewards, v, DEFAULT_CRITICAL_TOL)?;
            let res = limit_policy(&inst.behavior, &inst.rewards, v, Some(&inst.behavior), DEFAULT_CRITICAL_TOL)?;
            json!({
                "v": v,
                "v_mu": v_mu,
                "regime": regime.tag,
                "tau_star": res.tau_star,
                "support": res.support,
                "policy": res.policy,
                "depends_on_initial": res.depends_on_initial,
            })
        }
        ExperimentKind::Sweep => {
            let vs = sweep_values(cfg, &inst);
            let rows = sweep_baseline(&inst, &vs, &cfg.dynamics, cfg.eps, threads)?;
            for (k, row) in rows.iter().enumerate() {
                files.push(emit(out, &format!("trajectory_{k:03}.csv"), &emit::trajectory_csv(&row.log))?);
            }
            files.push(emit(out, "summary.csv", &emit::sweep_summary_csv(&rows))?);
            json!({
                "v_mu": v_mu,
                "rows": rows.iter().map(|r| json!({
                    "v": r.v,
                    "regime": r.regime.tag,
                    "final_reward": r.final_reward,
                    "final_support": r.final_support,
                    "tau_star": r.tau_star,
                    "limit_support": r.limit_support,
                    "limit_l1": r.limit_l1,
                })).collect::<Vec<_>>(),
            })
        }
        ExperimentKind::Improve => {
            let vs = sweep_values(cfg, &inst);
            let curves = improvement_experiment(
                &inst,
                &vs,
                cfg.improve.iters,
                cfg.improve.steps_per_iter,
                &cfg.dynamics,
                cfg.eps,
                threads,
            )?;
            files.push(emit(out, "improve.csv", &emit::improvement_csv(&curves))?);
            json!({
                "v_mu": v_mu,
                "max_reward": inst.rewards.max(),
                "curves": curves.iter().map(|c| json!({
                    "v": c.v,
                    "final_reward": c.rewards.last(),
                    "final_support_size": c.support_sizes.last(),
                })).collect::<Vec<_>>(),
            })
        }
        ExperimentKind::Basin => {
            let v = cfg.basin.v.or(cfg.v).ok_or_else(|| Error::Config("basin.v is required".into()))?;
            let eta = cfg.dynamics.eta.unwrap_or(1.0);
            let map = basin_map(&inst, v, cfg.basin.resolution, eta, cfg.basin.max_steps, threads)?;
            files.push(emit(out, "basin.csv", &emit::basin_csv(&map))?);
            json!({
                "v": v,
                "v_mu": v_mu,
                "candidates": map.candidates,
                "observed": map.observed(),
                "unresolved": map.unresolved(),
            })
        }
        ExperimentKind::Contextual => {
            let c = &cfg.contextual;
            let dvs = cfg.sweep.delta_v_values.clone().unwrap_or_else(|| vec![c.delta_v]);
            let outcomes = contextual_experiment(c.n_contexts, c.n_arms, &c.to_config(c.delta_v), &dvs, cfg.seed(), threads)?;
            files.push(emit(out, "contextual.csv", &emit::contextual_csv(&outcomes))?);
            json!({
                "runs": outcomes.iter().map(|o| json!({
                    "delta_v": o.delta_v,
                    "initial_entropy": o.initial_entropy,
                    "final": o.run.aggregate.last(),
                    "baseline_error": o.run.baseline_error,
                })).collect::<Vec<_>>(),
            })
        }
    };
    files.push(emit(out, "summary.json", &Summary::new(cfg, results).to_json())?);
    Ok(files)
}
