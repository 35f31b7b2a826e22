//! Browser bindings: a trajectory explorer, a support-versus-baseline sweep
//! and a 3-arm basin map. Every export returns a JSON string.

use asymre::harness::config::DynamicsSection;
use asymre::harness::experiments::{basin_map, single_run};
use asymre::harness::instance::Instance;
use asymre::limit::limit_policy;
use asymre::policy::{DEFAULT_CRITICAL_TOL, DEFAULT_SUPPORT_EPS};
use asymre::{Error, LogitPolicy, RegimeTag, Result, RewardModel};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest step budget a single call accepts.
pub const MAX_STEPS: usize = 200_000;

fn instance(rewards: &[f64], logits: &[f64]) -> Result<Instance> {
    let logits = if logits.is_empty() { vec![0.0; rewards.len()] } else { logits.to_vec() };
    Instance::new(RewardModel::new(rewards.to_vec())?, LogitPolicy::new(logits)?)
}

fn section(steps: usize, record_every: usize) -> Result<DynamicsSection> {
    if steps == 0 || steps > MAX_STEPS {
        return Err(Error::Config(format!("steps must lie in 1..={MAX_STEPS}")));
    }
    Ok(DynamicsSection { steps, record_every: record_every.max(1), ..DynamicsSection::default() })
}

/// Expected dynamics at baseline `v` with the closed-form limit alongside.
pub fn trajectory(rewards: &[f64], logits: &[f64], v: f64, steps: usize, record_every: usize) -> Result<Value> {
    let inst = instance(rewards, logits)?;
    let row = single_run(&inst, v, &section(steps, record_every)?, DEFAULT_SUPPORT_EPS)?;
    let limit = match row.regime.tag {
        RegimeTag::AboveCritical => None,
        _ => limit_policy(&inst.behavior, &inst.rewards, v, Some(&inst.behavior), DEFAULT_CRITICAL_TOL)?.policy,
    };
    Ok(json!({
        "v": v,
        "v_mu": inst.behavior_value(),
        "regime": row.regime.tag.as_str(),
        "records": row.log.records(),
        "behavior": inst.behavior,
        "final_policy": row.final_policy,
        "limit_policy": limit,
        "tau_star": row.tau_star,
        "candidates": row.limit_support,
    }))
}

/// Final support size and reward at `points` baselines spread over
/// `[min r - 0.5, V^mu + 0.3]`.
pub fn support_sweep(rewards: &[f64], logits: &[f64], points: usize, steps: usize) -> Result<Value> {
    let inst = instance(rewards, logits)?;
    if !(2..=200).contains(&points) {
        return Err(Error::Config("points must lie in 2..=200".into()));
    }
    let sec = section(steps, steps)?;
    let (lo, hi) = (inst.rewards.min() - 0.5, inst.behavior_value() + 0.3);
    let rows = (0..points)
        .map(|k| {
            let v = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let row = single_run(&inst, v, &sec, DEFAULT_SUPPORT_EPS)?;
            Ok(json!({
                "v": v,
                "regime": row.regime.tag.as_str(),
                "support_size": row.final_support.len(),
                "limit_support_size": row.limit_support.len(),
                "final_reward": row.final_reward,
                "final_entropy": row.final_entropy,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({ "v_mu": inst.behavior_value(), "rows": rows }))
}

/// Limit vertex for each initial policy on a grid over the 3-arm simplex.
pub fn basin(rewards: &[f64], logits: &[f64], v: f64, resolution: usize) -> Result<Value> {
    let inst = instance(rewards, logits)?;
    if resolution > 120 {
        return Err(Error::Config("resolution must be at most 120".into()));
    }
    let map = basin_map(&inst, v, resolution, 1.0, MAX_STEPS, None)?;
    Ok(json!({
        "v_mu": inst.behavior_value(),
        "candidates": map.candidates,
        "observed": map.observed(),
        "unresolved": map.unresolved(),
        "cells": map.cells,
    }))
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = trajectory)]
pub fn trajectory_js(
    rewards: &[f64],
    logits: &[f64],
    v: f64,
    steps: usize,
    record_every: usize,
) -> std::result::Result<String, JsError> {
    to_js(trajectory(rewards, logits, v, steps, record_every))
}

#[wasm_bindgen(js_name = supportSweep)]
pub fn support_sweep_js(rewards: &[f64], logits: &[f64], points: usize, steps: usize) -> std::result::Result<String, JsError> {
    to_js(support_sweep(rewards, logits, points, steps))
}

#[wasm_bindgen(js_name = basin)]
pub fn basin_js(rewards: &[f64], logits: &[f64], v: f64, resolution: usize) -> std::result::Result<String, JsError> {
    to_js(basin(rewards, logits, v, resolution))
}
