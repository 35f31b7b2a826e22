use serde::{Deserialize, Serialize};

use crate::contextual::{binary_contexts, run_contextual, ContextualConfig, ContextualRun};
use crate::dynamics::{default_step_size, gradient_into, integrate, TrajectoryLog};
use crate::error::{Error, Result};
use crate::harness::config::DynamicsSection;
use crate::harness::instance::{Instance, INSTANCE_STREAM};
use crate::limit::{candidate_support_above, limit_policy, LimitResult};
use crate::policy::{
    argmax, entropy, entropy_of, expected_reward, softmax, softmax_into, support, AdvantageProfile,
    LogitPolicy, Regime, RegimeTag, SimplexPolicy, DEFAULT_CRITICAL_TOL,
};
use crate::rng::stream_rng;

/// Evaluates `f(0..n)` on a worker pool of `threads` workers (the global
/// pool when `None`) and returns results in index order.
pub fn map_indexed<T, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || (0..n).into_par_iter().map(&f).collect::<Vec<_>>();
        let out = match threads {
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?
                .install(run),
            None => run(),
        };
        out.into_iter().collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        (0..n).map(f).collect()
    }
}

/// Twelve baselines evenly spaced over `[min r - 0.5, V^mu + 0.3]`.
pub fn default_v_grid(inst: &Instance) -> Vec<f64> {
    let lo = inst.rewards.min() - 0.5;
    let hi = inst.behavior_value() + 0.3;
    (0..12).map(|k| lo + (hi - lo) * k as f64 / 11.0).collect()
}

fn regime_at(inst: &Instance, v: f64) -> Regime {
    Regime::from_values(v, inst.behavior_value(), DEFAULT_CRITICAL_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub v: f64,
    pub regime: Regime,
    pub log: TrajectoryLog,
    pub final_policy: SimplexPolicy,
    pub final_reward: f64,
    pub final_entropy: f64,
    pub final_support: Vec<usize>,
    pub tau_star: Option<f64>,
    /// Closed-form limit support; the candidate set above the critical value.
    pub limit_support: Vec<usize>,
    pub limit_l1: Option<f64>,
}

/// Expected AsymRE from the instance's initial logits at one baseline.
pub fn single_run(inst: &Instance, v: f64, section: &DynamicsSection, eps: f64) -> Result<SweepRow> {
    let adv = AdvantageProfile::from_behavior(inst.behavior.probs(), inst.rewards.as_slice(), v);
    let cfg = section.to_config(default_step_size(&adv), eps);
    let run = integrate(&inst.logits, &adv, inst.rewards.as_slice(), &cfg)?;
    let p = run.policy();
    let limit: Option<LimitResult> = match regime_at(inst, v).tag {
        RegimeTag::AboveCritical => None,
        _ => Some(limit_policy(&inst.behavior, &inst.rewards, v, Some(&inst.behavior), DEFAULT_CRITICAL_TOL)?),
    };
    let (tau_star, limit_support, limit_l1) = match &limit {
        Some(l) => (l.tau_star, l.support.clone(), l.policy.as_ref().map(|q| q.l1_distance(&p))),
        None => (None, candidate_support_above(&adv)?, None),
    };
    Ok(SweepRow {
        v,
        regime: regime_at(inst, v),
        final_reward: expected_reward(&p, &inst.rewards)?,
        final_entropy: entropy(&p),
        final_support: support(&p, eps),
        final_policy: p,
        log: run.log,
        tau_star,
        limit_support,
        limit_l1,
    })
}

pub fn sweep_baseline(
    inst: &Instance,
    vs: &[f64],
    section: &DynamicsSection,
    eps: f64,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    map_indexed(vs.len(), threads, |k| single_run(inst, vs[k], section, eps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementCurve {
    pub v: f64,
    /// Entry `k` describes the policy after `k` refreshes; entry 0 is the
    /// initial policy.
    pub rewards: Vec<f64>,
    pub entropies: Vec<f64>,
    pub support_sizes: Vec<usize>,
    pub final_policy: SimplexPolicy,
}

/// `iters` rounds of `steps_per_iter` expected steps, each round using the
/// policy reached so far as its behavior policy.
pub fn improvement_curve(
    inst: &Instance,
    v: f64,
    iters: usize,
    steps_per_iter: usize,
    section: &DynamicsSection,
    eps: f64,
) -> Result<ImprovementCurve> {
    let r = inst.rewards.as_slice();
    let mut l = inst.logits.clone();
    let mut p = softmax(&l);
    let mut curve = ImprovementCurve {
        v,
        rewards: vec![expected_reward(&p, &inst.rewards)?],
        entropies: vec![entropy(&p)],
        support_sizes: vec![support(&p, eps).len()],
        final_policy: p.clone(),
    };
    let inner = DynamicsSection { steps: steps_per_iter, record_every: steps_per_iter, ..*section };
    for _ in 0..iters {
        let adv = AdvantageProfile::from_behavior(p.probs(), r, v);
        let cfg = inner.to_config(default_step_size(&adv), eps);
        l = integrate(&l, &adv, r, &cfg)?.logits;
        p = softmax(&l);
        curve.rewards.push(expected_reward(&p, &inst.rewards)?);
        curve.entropies.push(entropy(&p));
        curve.support_sizes.push(support(&p, eps).len());
    }
    curve.final_policy = p;
    Ok(curve)
}

pub fn improvement_experiment(
    inst: &Instance,
    vs: &[f64],
    iters: usize,
    steps_per_iter: usize,
    section: &DynamicsSection,
    eps: f64,
    threads: Option<usize>,
) -> Result<Vec<ImprovementCurve>> {
    map_indexed(vs.len(), threads, |k| improvement_curve(inst, vs[k], iters, steps_per_iter, section, eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinCell {
    pub x: f64,
    pub y: f64,
    /// Vertex reached, or -1 when no vertex was reached within the budget.
    pub limit_arm: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinMap {
    pub v: f64,
    pub resolution: usize,
    pub candidates: Vec<usize>,
    pub cells: Vec<BasinCell>,
}

impl BasinMap {
    /// Distinct vertices reached, ascending.
    pub fn observed(&self) -> Vec<usize> {
        let mut seen: Vec<usize> = self.cells.iter().filter(|c| c.limit_arm >= 0).map(|c| c.limit_arm as usize).collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }

    pub fn unresolved(&self) -> usize {
        self.cells.iter().filter(|c| c.limit_arm < 0).count()
    }
}

/// Mass a vertex needs before a basin run counts as converged.
pub const VERTEX_MASS: f64 = 1.0 - 1e-9;

/// Runs expected dynamics from `pi0` until one arm holds `VERTEX_MASS`.
pub fn limit_vertex(pi0: &[f64], adv: &AdvantageProfile, eta: f64, max_steps: usize) -> Option<usize> {
    let mut l: Vec<f64> = pi0.iter().map(|q| q.ln()).collect();
    let mut p = vec![0.0; l.len()];
    let mut g = vec![0.0; l.len()];
    for _ in 0..=max_steps {
        softmax_into(&l, &mut p);
        let best = argmax(&p);
        if p[best] >= VERTEX_MASS {
            return Some(best);
        }
        gradient_into(&p, adv, &mut g);
        for (x, d) in l.iter_mut().zip(&g) {
            *x += eta * d;
        }
    }
    None
}

/// Barycentric grid `x = (i + 1/3) / res`, `y = (j + 1/3) / res` for
/// `i + j < res`, with `pi0 = (x, y, 1 - x - y)`.
pub fn basin_grid(resolution: usize) -> Vec<(f64, f64)> {
    let res = resolution as f64;
    let mut pts = Vec::new();
    for i in 0..resolution {
        for j in 0..resolution - i {
            pts.push(((i as f64 + 1.0 / 3.0) / res, (j as f64 + 1.0 / 3.0) / res));
        }
    }
    pts
}

pub fn basin_map(
    inst: &Instance,
    v: f64,
    resolution: usize,
    eta: f64,
    max_steps: usize,
    threads: Option<usize>,
) -> Result<BasinMap> {
    if inst.n_arms() != 3 {
        return Err(Error::Config(format!("basin maps need 3 arms, got {}", inst.n_arms())));
    }
    if resolution == 0 {
        return Err(Error::Config("basin resolution must be positive".into()));
    }
    if regime_at(inst, v).tag != RegimeTag::AboveCritical {
        return Err(Error::Regime(format!(
            "basin maps need V > V^mu (V = {v}, V^mu = {})",
            inst.behavior_value()
        )));
    }
    let adv = AdvantageProfile::from_behavior(inst.behavior.probs(), inst.rewards.as_slice(), v);
    let candidates = candidate_support_above(&adv)?;
    let pts = basin_grid(resolution);
    let cells = map_indexed(pts.len(), threads, |k| {
        let (x, y) = pts[k];
        let arm = limit_vertex(&[x, y, 1.0 - x - y], &adv, eta, max_steps);
        Ok(BasinCell { x, y, limit_arm: arm.map_or(-1, |a| a as i64) })
    })?;
    Ok(BasinMap { v, resolution, candidates, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualOutcome {
    pub delta_v: f64,
    pub run: ContextualRun,
    pub initial_entropy: f64,
}

/// Runs every offset on the same contexts and the same random stream.
pub fn contextual_experiment(
    n_contexts: usize,
    n_arms: usize,
    cfg: &ContextualConfig,
    delta_vs: &[f64],
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<ContextualOutcome>> {
    let ctxs = binary_contexts(n_contexts, n_arms, &mut stream_rng(seed, INSTANCE_STREAM))?;
    let initial_entropy: f64 = ctxs
        .contexts()
        .iter()
        .zip(ctxs.weights())
        .map(|(c, w)| {
            let mut p = vec![0.0; c.logits.len()];
            softmax_into(c.logits.as_slice(), &mut p);
            w * entropy_of(&p)
        })
        .sum();
    map_indexed(delta_vs.len(), threads, |k| {
        let cfg = ContextualConfig { delta_v: delta_vs[k], ..*cfg };
        let run = run_contextual(&ctxs, &cfg, &mut stream_rng(seed, 1))?;
        Ok(ContextualOutcome { delta_v: delta_vs[k], run, initial_entropy })
    })
}

/// Logits of a full-support policy.
pub fn logits_of(p: &SimplexPolicy) -> Result<LogitPolicy> {
    LogitPolicy::from_policy(p)
}
