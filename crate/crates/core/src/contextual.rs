//! Context-averaged AsymRE over independent tabular contexts, with a
//! per-visit empirical baseline `V_hat` from `G` samples plus an offset.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_arm, TrajectoryLog, TrajectoryRecord, DIVERGENCE_LIMIT};
use crate::error::{Error, Result};
use crate::policy::{
    dot, entropy_of, softmax_into, AdvantageProfile, LogitPolicy, RewardModel, DEFAULT_SUPPORT_EPS,
    SIMPLEX_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub rewards: RewardModel,
    pub logits: LogitPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSet {
    contexts: Vec<Context>,
    weights: Vec<f64>,
}

impl ContextSet {
    pub fn new(contexts: Vec<Context>, weights: Vec<f64>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::invalid("context set is empty"));
        }
        if weights.len() != contexts.len() {
            return Err(Error::invalid("one weight per context is required"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || (weights.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL
        {
            return Err(Error::invalid("context weights must form a probability vector"));
        }
        for (i, c) in contexts.iter().enumerate() {
            if c.rewards.len() < 2 {
                return Err(Error::invalid(format!("context {i} has fewer than 2 arms")));
            }
            if c.logits.len() != c.rewards.len() {
                return Err(Error::invalid(format!("context {i}: logits and rewards differ in length")));
            }
        }
        Ok(Self { contexts, weights })
    }

    pub fn uniform(contexts: Vec<Context>) -> Result<Self> {
        let w = 1.0 / contexts.len().max(1) as f64;
        let weights = vec![w; contexts.len()];
        Self::new(contexts, weights)
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }
}

/// Contexts with `n_arms` arms and rewards in `{-1, +1}`, between 2 and
/// `n_arms / 2` of them correct, uniform weights and zero logits.
pub fn binary_contexts<R: Rng + ?Sized>(n_contexts: usize, n_arms: usize, rng: &mut R) -> Result<ContextSet> {
    if n_contexts == 0 || n_arms < 4 {
        return Err(Error::Config("binary contexts need at least 1 context and 4 arms".into()));
    }
    let contexts = (0..n_contexts)
        .map(|_| {
            let correct = rng.random_range(2..=n_arms / 2);
            let mut rewards: Vec<f64> = (0..n_arms).map(|y| if y < correct { 1.0 } else { -1.0 }).collect();
            rewards.shuffle(rng);
            Ok(Context { rewards: RewardModel::new(rewards)?, logits: LogitPolicy::zeros(n_arms) })
        })
        .collect::<Result<Vec<_>>>()?;
    ContextSet::uniform(contexts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextualConfig {
    pub group_size: usize,
    pub delta_v: f64,
    pub eta: f64,
    pub total_steps: usize,
    pub update_interval: usize,
    pub record_every: usize,
}

impl ContextualConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 {
            return Err(Error::Config("G must be at least 1".into()));
        }
        if !self.delta_v.is_finite() {
            return Err(Error::Config("delta_v must be finite".into()));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if self.total_steps == 0 || self.update_interval == 0 || self.record_every == 0 {
            return Err(Error::Config(
                "total_steps, update_interval and record_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Plain mean of the sampled rewards.
pub fn empirical_baseline(samples: &[(usize, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("empirical baseline needs at least one sample"));
    }
    Ok(samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64)
}

/// Current and behavior policies of every context.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualState {
    pub logits: Vec<Vec<f64>>,
    pub behavior: Vec<Vec<f64>>,
    pub step: usize,
}

impl ContextualState {
    pub fn new(ctxs: &ContextSet) -> Self {
        let logits: Vec<Vec<f64>> = ctxs.contexts.iter().map(|c| c.logits.as_slice().to_vec()).collect();
        let behavior = logits.iter().map(|l| probs_of(l)).collect();
        Self { logits, behavior, step: 0 }
    }

    pub fn policy(&self, context: usize) -> Vec<f64> {
        probs_of(&self.logits[context])
    }

    /// `mu <- pi` for every context.
    pub fn refresh_behavior(&mut self) {
        for (mu, l) in self.behavior.iter_mut().zip(&self.logits) {
            softmax_into(l, mu);
        }
    }
}

fn probs_of(l: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; l.len()];
    softmax_into(l, &mut p);
    p
}

/// What one step sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSample {
    pub context: usize,
    pub v_hat: f64,
    /// Expected reward of the context's behavior policy.
    pub v_mu: f64,
}

/// Samples a context, draws `G` arms from its behavior policy and applies
/// `l += (eta / G) sum_i (r(y_i) - V_hat - delta_v)(e_{y_i} - pi)`.
pub fn contextual_step<R: Rng + ?Sized>(
    state: &mut ContextualState,
    ctxs: &ContextSet,
    cfg: &ContextualConfig,
    rng: &mut R,
) -> Result<StepSample> {
    let x = sample_arm(&ctxs.weights, rng);
    let rewards = ctxs.contexts[x].rewards.as_slice();
    let mu = &state.behavior[x];
    let samples: Vec<(usize, f64)> = (0..cfg.group_size)
        .map(|_| {
            let y = sample_arm(mu, rng);
            (y, rewards[y])
        })
        .collect();
    let v_hat = empirical_baseline(&samples)?;
    let v_mu = dot(mu, rewards);
    let pi = state.policy(x);
    let l = &mut state.logits[x];
    let scale = cfg.eta / cfg.group_size as f64;
    for &(y, r) in &samples {
        let coef = scale * (r - v_hat - cfg.delta_v);
        if coef == 0.0 {
            continue;
        }
        for (i, (li, &q)) in l.iter_mut().zip(&pi).enumerate() {
            *li += coef * (if i == y { 1.0 } else { 0.0 } - q);
        }
    }
    state.step += 1;
    if l.iter().any(|v| !(v.abs() <= DIVERGENCE_LIMIT)) {
        return Err(Error::Divergence { step: state.step, limit: DIVERGENCE_LIMIT });
    }
    Ok(StepSample { context: x, v_hat, v_mu })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_entropy: f64,
}

/// Running moments of `V_hat - V^mu`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineErrorStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    #[serde(skip)]
    m2: f64,
}

impl BaselineErrorStats {
    fn push(&mut self, e: f64) {
        if self.count == 0 {
            self.min = e;
            self.max = e;
        }
        self.count += 1;
        let delta = e - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (e - self.mean);
        self.std = (self.m2 / self.count as f64).sqrt();
        self.min = self.min.min(e);
        self.max = self.max.max(e);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualRun {
    pub per_context: Vec<TrajectoryLog>,
    pub aggregate: Vec<AggregateRecord>,
    pub baseline_error: BaselineErrorStats,
    pub final_logits: Vec<Vec<f64>>,
}

impl ContextualRun {
    /// First logged step at which the mean entropy is below `level`.
    pub fn first_step_below(&self, level: f64) -> Option<usize> {
        self.aggregate.iter().find(|a| a.mean_entropy < level).map(|a| a.step)
    }
}

fn record(
    state: &ContextualState,
    ctxs: &ContextSet,
    delta_v: f64,
    logs: &mut [TrajectoryLog],
    aggregate: &mut Vec<AggregateRecord>,
) {
    let (mut reward, mut ent) = (0.0, 0.0);
    for (x, (c, w)) in ctxs.contexts.iter().zip(&ctxs.weights).enumerate() {
        let r = c.rewards.as_slice();
        let p = state.policy(x);
        let mu = &state.behavior[x];
        let adv = AdvantageProfile::from_behavior(mu, r, dot(mu, r) + delta_v);
        let grad: f64 = adv
            .a
            .iter()
            .zip(&p)
            .map(|(a, q)| (a - adv.b * q).abs())
            .fold(0.0, f64::max);
        let rec = TrajectoryRecord::measure(state.step, &p, &adv, r, grad, DEFAULT_SUPPORT_EPS);
        reward += w * rec.expected_reward;
        ent += w * entropy_of(&p);
        logs[x].push(rec);
    }
    aggregate.push(AggregateRecord { step: state.step, mean_reward: reward, mean_entropy: ent });
}

/// Runs `total_steps` contextual steps, resetting every behavior policy to
/// its current policy each `update_interval` steps. Per-context logs measure
/// the advantage profile at `V = V^mu + delta_v`.
pub fn run_contextual<R: Rng + ?Sized>(
    ctxs: &ContextSet,
    cfg: &ContextualConfig,
    rng: &mut R,
) -> Result<ContextualRun> {
    cfg.validate()?;
    let mut state = ContextualState::new(ctxs);
    let mut logs = vec![TrajectoryLog::default(); ctxs.len()];
    let mut aggregate = Vec::new();
    let mut errors = BaselineErrorStats::default();
    record(&state, ctxs, cfg.delta_v, &mut logs, &mut aggregate);
    while state.step < cfg.total_steps {
        if state.step > 0 && state.step.is_multiple_of(cfg.update_interval) {
            state.refresh_behavior();
        }
        let s = contextual_step(&mut state, ctxs, cfg, rng)?;
        errors.push(s.v_hat - s.v_mu);
        if state.step.is_multiple_of(cfg.record_every) || state.step == cfg.total_steps {
            record(&state, ctxs, cfg.delta_v, &mut logs, &mut aggregate);
        }
    }
    Ok(ContextualRun { per_context: logs, aggregate, baseline_error: errors, final_logits: state.logits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::expected_gradient;
    use crate::policy::{advantage_profile, SimplexPolicy};
    use crate::rng::stream_rng;

    fn cfg(delta_v: f64) -> ContextualConfig {
        ContextualConfig {
            group_size: 8,
            delta_v,
            eta: 0.5,
            total_steps: 400,
            update_interval: 50,
            record_every: 10,
        }
    }

    #[test]
    fn baseline_examples() {
        let s = [(0, 1.0), (1, -1.0), (2, 1.0), (0, 1.0)];
        assert_eq!(empirical_baseline(&s).unwrap(), 0.5);
        assert_eq!(empirical_baseline(&[(3, 0.25); 5]).unwrap(), 0.25);
        assert!(empirical_baseline(&[]).is_err());
    }

    fn tuples(n: usize, g: usize) -> Vec<Vec<usize>> {
        (0..n.pow(g as u32))
            .map(|mut k| {
                (0..g)
                    .map(|_| {
                        let y = k % n;
                        k /= n;
                        y
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn baseline_is_unbiased_by_enumeration() {
        let mu = [0.5, 0.3, 0.2];
        let r = [1.0, -1.0, 0.25];
        for g in 1..=3 {
            let mut expectation = 0.0;
            for t in tuples(3, g) {
                let w: f64 = t.iter().map(|&y| mu[y]).product();
                let s: Vec<(usize, f64)> = t.iter().map(|&y| (y, r[y])).collect();
                expectation += w * empirical_baseline(&s).unwrap();
            }
            assert!((expectation - dot(&mu, &r)).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_update_approaches_gradient_at_behavior_value() {
        // E over G-tuples of (1/G) sum (r_i - V_hat)(e_i - pi)
        //   = (1 - 1/G) * expected_gradient at V = V^mu
        let mu = SimplexPolicy::new(vec![0.5, 0.3, 0.2]).unwrap();
        let r = RewardModel::new(vec![1.0, -1.0, 0.25]).unwrap();
        let l = LogitPolicy::new(vec![0.3, -0.2, 0.1]).unwrap();
        let pi = probs_of(l.as_slice());
        let v_mu = dot(mu.probs(), r.as_slice());
        let grad = expected_gradient(&l, &advantage_profile(&mu, &r, v_mu).unwrap()).unwrap();
        for g in 1..=3usize {
            let mut e = [0.0; 3];
            for t in tuples(3, g) {
                let w: f64 = t.iter().map(|&y| mu.probs()[y]).product();
                let s: Vec<(usize, f64)> = t.iter().map(|&y| (y, r.as_slice()[y])).collect();
                let vh = empirical_baseline(&s).unwrap();
                for &(y, ry) in &s {
                    for i in 0..3 {
                        e[i] += w * (ry - vh) * (if i == y { 1.0 } else { 0.0 } - pi[i]) / g as f64;
                    }
                }
            }
            let shrink = 1.0 - 1.0 / g as f64;
            for i in 0..3 {
                assert!((e[i] - shrink * grad[i]).abs() < 1e-12, "G={g} arm {i}");
            }
        }
    }

    #[test]
    fn identical_rewards_leave_logits_unchanged() {
        let ctx = Context {
            rewards: RewardModel::new(vec![1.0; 4]).unwrap(),
            logits: LogitPolicy::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        };
        let set = ContextSet::uniform(vec![ctx.clone()]).unwrap();
        let mut state = ContextualState::new(&set);
        let mut rng = stream_rng(1, 0);
        for _ in 0..20 {
            contextual_step(&mut state, &set, &cfg(0.0), &mut rng).unwrap();
        }
        assert_eq!(state.logits[0], ctx.logits.as_slice());
    }

    #[test]
    fn validation() {
        let ctx = Context {
            rewards: RewardModel::new(vec![1.0]).unwrap(),
            logits: LogitPolicy::zeros(1),
        };
        assert!(ContextSet::uniform(vec![ctx]).is_err());
        let ok = Context { rewards: RewardModel::new(vec![1.0, 0.0]).unwrap(), logits: LogitPolicy::zeros(2) };
        assert!(ContextSet::new(vec![ok.clone(), ok], vec![0.7, 0.7]).is_err());
        let mut c = cfg(0.0);
        c.group_size = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn aggregate_is_weighted_mean_of_contexts() {
        let mut rng = stream_rng(3, 0);
        let set = binary_contexts(5, 6, &mut rng).unwrap();
        let run = run_contextual(&set, &cfg(-0.1), &mut rng).unwrap();
        for (k, agg) in run.aggregate.iter().enumerate() {
            let mean: f64 = run
                .per_context
                .iter()
                .zip(set.weights())
                .map(|(log, w)| w * log.records()[k].expected_reward)
                .sum();
            assert_eq!(run.per_context[0].records()[k].step, agg.step);
            assert!((mean - agg.mean_reward).abs() < 1e-12);
        }
        assert_eq!(run.baseline_error.count, 400);
    }

    #[test]
    fn shared_seed_runs_agree_until_advantages_differ() {
        let ctx = Context {
            rewards: RewardModel::new(vec![1.0, 1.0, 1.0]).unwrap(),
            logits: LogitPolicy::zeros(3),
        };
        let set = ContextSet::uniform(vec![ctx]).unwrap();
        // flat rewards: delta_v = 0 never moves, delta_v != 0 does
        let a = run_contextual(&set, &cfg(0.0), &mut stream_rng(5, 0)).unwrap();
        let b = run_contextual(&set, &cfg(0.0), &mut stream_rng(5, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.final_logits[0], vec![0.0; 3]);
    }

    #[test]
    fn single_sample_groups_never_move() {
        // with G = 1 the empirical baseline equals the sampled reward
        let r = RewardModel::new(vec![1.0, -1.0, -1.0]).unwrap();
        let set = ContextSet::uniform(vec![Context { rewards: r, logits: LogitPolicy::zeros(3) }]).unwrap();
        let mut c = cfg(0.0);
        c.group_size = 1;
        let run = run_contextual(&set, &c, &mut stream_rng(9, 0)).unwrap();
        assert_eq!(run.final_logits[0], vec![0.0; 3]);
    }

    #[test]
    fn near_on_policy_improves() {
        let r = RewardModel::new(vec![1.0, -1.0, -1.0, 1.0, -1.0]).unwrap();
        let set = ContextSet::uniform(vec![Context { rewards: r, logits: LogitPolicy::zeros(5) }]).unwrap();
        let c = ContextualConfig { group_size: 64, delta_v: 0.0, eta: 0.5, total_steps: 300, update_interval: 1, record_every: 50 };
        let run = run_contextual(&set, &c, &mut stream_rng(11, 0)).unwrap();
        let first = run.aggregate.first().unwrap().mean_reward;
        let last = run.aggregate.last().unwrap().mean_reward;
        assert!(first < -0.1 && last > 0.99, "{first} -> {last}");
    }
}
