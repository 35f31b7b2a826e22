//! Integrators for expected and stochastic AsymRE on softmax logits.
//!
//! The expected update ascends
//! `F(l) = sum_y a_y l(y) - b ln sum_z exp(l(z))`, whose gradient is
//! `a_y - b softmax(l)(y)`. Discrete ascent in logit space is the primary
//! integrator; [`simplex_flow_step`] integrates the equivalent replicator
//! ODE on probabilities and exists for cross-checking.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{
    advantage_profile, dot, entropy_of, softmax, softmax_into, support_count, AdvantageProfile,
    LogitPolicy, RewardModel, SimplexPolicy, DEFAULT_CRITICAL_TOL, DEFAULT_SUPPORT_EPS,
};

/// Logit magnitude treated as numerical divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
pub const DEFAULT_GRAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub eta: f64,
    pub steps: usize,
    /// Stop once the gradient max-norm drops below this.
    pub grad_tol: f64,
    pub record_every: usize,
    /// Mass threshold used for the logged support size.
    pub support_eps: f64,
}

impl DynamicsConfig {
    pub fn new(eta: f64, steps: usize) -> Self {
        Self {
            eta,
            steps,
            grad_tol: DEFAULT_GRAD_TOL,
            record_every: 1,
            support_eps: DEFAULT_SUPPORT_EPS,
        }
    }

    pub fn with_grad_tol(mut self, grad_tol: f64) -> Self {
        self.grad_tol = grad_tol;
        self
    }

    pub fn with_record_every(mut self, record_every: usize) -> Self {
        self.record_every = record_every;
        self
    }

    pub fn with_support_eps(mut self, eps: f64) -> Self {
        self.support_eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.eta)));
        }
        if self.steps == 0 {
            return Err(Error::Config("step budget must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Config("grad_tol must be nonnegative".into()));
        }
        if !(self.support_eps > 0.0) {
            return Err(Error::Config("support eps must be positive".into()));
        }
        Ok(())
    }
}

/// `0.9 / b` below critical (inside the `eta < 1/b` stability bound), `1`
/// otherwise.
pub fn default_step_size(adv: &AdvantageProfile) -> f64 {
    if adv.b > DEFAULT_CRITICAL_TOL {
        0.9 / adv.b
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayedConfig {
    /// Steps between refreshes of the behavior policy.
    pub update_interval: usize,
    pub total_steps: usize,
}

impl DelayedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.update_interval == 0 {
            return Err(Error::Config("update_interval must be at least 1".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub expected_reward: f64,
    pub entropy: f64,
    pub support_size: usize,
    pub phi: f64,
    pub tau_t: f64,
    pub grad_maxnorm: f64,
}

impl TrajectoryRecord {
    pub(crate) fn measure(
        step: usize,
        p: &[f64],
        adv: &AdvantageProfile,
        r: &[f64],
        grad_maxnorm: f64,
        eps: f64,
    ) -> Self {
        Self {
            step,
            expected_reward: dot(p, r),
            entropy: entropy_of(p),
            support_size: support_count(p, eps),
            phi: phi_of(p, adv),
            tau_t: tau_of(p, adv),
            grad_maxnorm,
        }
    }
}

/// Per-step time series of a run; step indices strictly increase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    records: Vec<TrajectoryRecord>,
}

impl TrajectoryLog {
    pub fn push(&mut self, record: TrajectoryRecord) {
        if let Some(last) = self.records.last() {
            assert!(record.step > last.step, "trajectory steps must strictly increase");
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&TrajectoryRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Outcome of an integrator run.
#[derive(Debug, Clone)]
pub struct Run {
    pub logits: LogitPolicy,
    pub log: TrajectoryLog,
    pub steps_taken: usize,
    /// Whether the run stopped on the gradient criterion rather than the budget.
    pub converged: bool,
}

impl Run {
    pub fn policy(&self) -> SimplexPolicy {
        softmax(&self.logits)
    }
}

fn check_arms(adv: &AdvantageProfile, n: usize) -> Result<()> {
    if adv.len() != n {
        return Err(Error::invalid(format!(
            "advantage profile has {} arms, policy has {n}",
            adv.len()
        )));
    }
    Ok(())
}

/// Writes `a_y - b p(y)` into `out` and returns its max-norm.
pub(crate) fn gradient_into(p: &[f64], adv: &AdvantageProfile, out: &mut [f64]) -> f64 {
    let mut max = 0.0_f64;
    for ((g, &a), &q) in out.iter_mut().zip(&adv.a).zip(p) {
        *g = a - adv.b * q;
        max = max.max(g.abs());
    }
    max
}

pub fn expected_gradient(l: &LogitPolicy, adv: &AdvantageProfile) -> Result<Vec<f64>> {
    check_arms(adv, l.len())?;
    let p = softmax(l);
    let mut g = vec![0.0; l.len()];
    gradient_into(p.probs(), adv, &mut g);
    Ok(g)
}

/// One fixed-step ascent update `l + eta * grad F(l)`.
pub fn ascent_step(l: &LogitPolicy, adv: &AdvantageProfile, eta: f64) -> Result<LogitPolicy> {
    if !(eta > 0.0) {
        return Err(Error::invalid("step size must be positive"));
    }
    let g = expected_gradient(l, adv)?;
    let next: Vec<f64> = l.as_slice().iter().zip(&g).map(|(x, g)| x + eta * g).collect();
    LogitPolicy::new(next)
}

fn check_divergence(l: &[f64], step: usize) -> Result<()> {
    if l.iter().any(|x| !(x.abs() <= DIVERGENCE_LIMIT)) {
        return Err(Error::Divergence { step, limit: DIVERGENCE_LIMIT });
    }
    Ok(())
}

/// Expected AsymRE from `l0` for a fixed advantage profile. Does not check
/// the behavior policy's support.
pub(crate) fn integrate(
    l0: &LogitPolicy,
    adv: &AdvantageProfile,
    r: &[f64],
    cfg: &DynamicsConfig,
) -> Result<Run> {
    cfg.validate()?;
    check_arms(adv, l0.len())?;
    let n = l0.len();
    let mut l = l0.as_slice().to_vec();
    let mut p = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut log = TrajectoryLog::default();
    let mut step = 0;
    let converged = loop {
        softmax_into(&l, &mut p);
        let gmax = gradient_into(&p, adv, &mut g);
        let converged = gmax < cfg.grad_tol;
        let done = converged || step == cfg.steps;
        if done || step % cfg.record_every == 0 {
            log.push(TrajectoryRecord::measure(step, &p, adv, r, gmax, cfg.support_eps));
        }
        if done {
            break converged;
        }
        for (x, d) in l.iter_mut().zip(&g) {
            *x += cfg.eta * d;
        }
        step += 1;
        check_divergence(&l, step)?;
    };
    Ok(Run { logits: LogitPolicy::from_finite(l), log, steps_taken: step, converged })
}

/// Expected AsymRE with behavior policy `mu` and baseline `v`.
pub fn run_expected(
    l0: &LogitPolicy,
    mu: &SimplexPolicy,
    r: &RewardModel,
    v: f64,
    cfg: &DynamicsConfig,
) -> Result<Run> {
    let adv = advantage_profile(mu, r, v)?;
    integrate(l0, &adv, r.as_slice(), cfg)
}

/// One explicit Euler step of
/// `d/dt p(y) = p(y) (a_y - b p(y) - tau_t)`, clipped at zero and
/// renormalized.
pub fn simplex_flow_step(p: &SimplexPolicy, adv: &AdvantageProfile, dt: f64) -> Result<SimplexPolicy> {
    check_arms(adv, p.len())?;
    if !(dt > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    let tau = tau_of(p.probs(), adv);
    let next: Vec<f64> = p
        .probs()
        .iter()
        .zip(&adv.a)
        .map(|(&q, &a)| (q + dt * q * (a - adv.b * q - tau)).max(0.0))
        .collect();
    SimplexPolicy::from_weights(next)
}

fn phi_of(p: &[f64], adv: &AdvantageProfile) -> f64 {
    dot(p, &adv.a) - 0.5 * adv.b * dot(p, p)
}

fn tau_of(p: &[f64], adv: &AdvantageProfile) -> f64 {
    dot(p, &adv.a) - adv.b * dot(p, p)
}

/// `Phi = sum a_y p(y) - (b/2) sum p(y)^2`; nondecreasing along the flow.
pub fn lyapunov_phi(p: &SimplexPolicy, adv: &AdvantageProfile) -> Result<f64> {
    check_arms(adv, p.len())?;
    Ok(phi_of(p.probs(), adv))
}

/// Instantaneous threshold `tau_t = sum a_z p(z) - b sum p(z)^2`.
pub fn threshold_tau_t(p: &SimplexPolicy, adv: &AdvantageProfile) -> Result<f64> {
    check_arms(adv, p.len())?;
    Ok(tau_of(p.probs(), adv))
}

/// Inverse-CDF draw from `probs`.
pub fn sample_arm<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// The logit increment `eta (r(y) - V)(e_y - softmax(l))` produced by a
/// single sampled arm `y`.
pub fn stochastic_increment(l: &LogitPolicy, arm: usize, r: &RewardModel, v: f64, eta: f64) -> Vec<f64> {
    let p = softmax(l);
    let scale = eta * (r.as_slice()[arm] - v);
    p.probs()
        .iter()
        .enumerate()
        .map(|(i, &q)| scale * (if i == arm { 1.0 } else { 0.0 } - q))
        .collect()
}

/// Stochastic AsymRE: one arm drawn from `mu`.
pub fn stochastic_step<R: Rng + ?Sized>(
    l: &LogitPolicy,
    mu: &SimplexPolicy,
    r: &RewardModel,
    v: f64,
    eta: f64,
    rng: &mut R,
) -> Result<LogitPolicy> {
    if mu.len() != l.len() || r.len() != l.len() {
        return Err(Error::invalid("stochastic_step: length mismatch"));
    }
    if !mu.has_full_support() {
        return Err(Error::Precondition(
            "behavior policy must give positive mass to every arm".into(),
        ));
    }
    let arm = sample_arm(mu.probs(), rng);
    let inc = stochastic_increment(l, arm, r, v, eta);
    LogitPolicy::new(l.as_slice().iter().zip(&inc).map(|(x, d)| x + d).collect())
}

/// How the baseline is chosen at each behavior-policy refresh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Absolute(f64),
    /// Offset added to the current behavior policy's value.
    Relative(f64),
}

impl Baseline {
    pub(crate) fn resolve(self, mu: &[f64], r: &[f64]) -> f64 {
        match self {
            Baseline::Absolute(v) => v,
            Baseline::Relative(dv) => dot(mu, r) + dv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Expected,
    Stochastic,
}

/// AsymRE with delayed updates: the behavior policy is reset to the current
/// policy every `dcfg.update_interval` steps. Uses `cfg.eta`,
/// `cfg.record_every` and `cfg.support_eps`; the step budget comes from
/// `dcfg` and there is no gradient-based early stop.
pub fn run_delayed<R: Rng + ?Sized>(
    l0: &LogitPolicy,
    r: &RewardModel,
    baseline: Baseline,
    cfg: &DynamicsConfig,
    dcfg: &DelayedConfig,
    mode: UpdateMode,
    rng: &mut R,
) -> Result<Run> {
    cfg.validate()?;
    dcfg.validate()?;
    if r.len() != l0.len() {
        return Err(Error::invalid("run_delayed: length mismatch"));
    }
    let n = l0.len();
    let rewards = r.as_slice();
    let mut l = l0.as_slice().to_vec();
    let mut p = vec![0.0; n];
    let mut g = vec![0.0; n];
    softmax_into(&l, &mut p);
    let mut mu = p.clone();
    let mut v = baseline.resolve(&mu, rewards);
    let mut adv = AdvantageProfile::from_behavior(&mu, rewards, v);
    let mut log = TrajectoryLog::default();

    for step in 0..=dcfg.total_steps {
        softmax_into(&l, &mut p);
        if step > 0 && step < dcfg.total_steps && step % dcfg.update_interval == 0 {
            mu.copy_from_slice(&p);
            v = baseline.resolve(&mu, rewards);
            adv = AdvantageProfile::from_behavior(&mu, rewards, v);
        }
        let gmax = gradient_into(&p, &adv, &mut g);
        if step == dcfg.total_steps || step % cfg.record_every == 0 {
            log.push(TrajectoryRecord::measure(step, &p, &adv, rewards, gmax, cfg.support_eps));
        }
        if step == dcfg.total_steps {
            break;
        }
        match mode {
            UpdateMode::Expected => {
                for (x, d) in l.iter_mut().zip(&g) {
                    *x += cfg.eta * d;
                }
            }
            UpdateMode::Stochastic => {
                let arm = sample_arm(&mu, rng);
                let scale = cfg.eta * (rewards[arm] - v);
                for (i, (x, &q)) in l.iter_mut().zip(&p).enumerate() {
                    *x += scale * (if i == arm { 1.0 } else { 0.0 } - q);
                }
            }
        }
        check_divergence(&l, step + 1)?;
    }
    Ok(Run {
        logits: LogitPolicy::from_finite(l),
        log,
        steps_taken: dcfg.total_steps,
        converged: false,
    })
}
