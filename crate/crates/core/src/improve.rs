//! The policy-improvement operator `T_V`, which maps a behavior policy to
//! its below-critical AsymRE limit, and its iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit::{water_filling, LimitResult};
use crate::policy::{
    argmax_set, expected_reward, AdvantageProfile, Regime, RegimeTag, RewardModel, SimplexPolicy,
    DEFAULT_CRITICAL_TOL,
};

/// Tolerance on `V^{T mu} >= V^mu` used for internal consistency checks.
pub const IMPROVEMENT_TOL: f64 = 1e-10;

/// `T_V mu`, computed on the support of `mu` and embedded back into the
/// full arm set. Requires `V < V^mu`.
pub fn improve_once(mu: &SimplexPolicy, r: &RewardModel, v: f64) -> Result<LimitResult> {
    if mu.len() != r.len() {
        return Err(Error::invalid("improve_once: length mismatch"));
    }
    let v_mu = expected_reward(mu, r)?;
    let regime = Regime::from_values(v, v_mu, DEFAULT_CRITICAL_TOL);
    if regime.tag != RegimeTag::BelowCritical {
        return Err(Error::Regime(format!(
            "policy improvement needs V < V^mu (V = {v}, V^mu = {v_mu})"
        )));
    }
    let active = mu.exact_support();
    let mu_active: Vec<f64> = active.iter().map(|&y| mu.probs()[y]).collect();
    let r_active = r.restrict(&active);
    let adv = AdvantageProfile::from_behavior(&mu_active, r_active.as_slice(), v);
    let (sub, tau) = water_filling(&adv)?;
    let mut probs = vec![0.0; mu.len()];
    for (&y, &p) in active.iter().zip(sub.probs()) {
        probs[y] = p;
    }
    let policy = SimplexPolicy::from_normalized(probs);
    Ok(LimitResult {
        support: policy.exact_support(),
        policy: Some(policy),
        tau_star: Some(tau),
        regime,
        depends_on_initial: false,
    })
}

fn applied(mu: &SimplexPolicy, r: &RewardModel, v: f64) -> Result<(SimplexPolicy, f64)> {
    let res = improve_once(mu, r, v)?;
    let tau = res.tau_star.unwrap_or(0.0);
    Ok((res.policy.expect("below-critical limits carry a policy"), tau))
}

/// `V^inf` and `Y^inf = argmax_{y in supp(T_V mu0)} r(y)`.
pub fn limit_reward(mu0: &SimplexPolicy, r: &RewardModel, v: f64) -> Result<(f64, Vec<usize>)> {
    let res = improve_once(mu0, r, v)?;
    let support_rewards: Vec<f64> = res.support.iter().map(|&y| r.as_slice()[y]).collect();
    let best = argmax_set(&support_rewards);
    let limit_arms: Vec<usize> = best.into_iter().map(|i| res.support[i]).collect();
    Ok((r.as_slice()[limit_arms[0]], limit_arms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementStep {
    pub iteration: usize,
    pub policy: SimplexPolicy,
    pub expected_reward: f64,
    /// Threshold of the application that produced this iterate.
    pub tau: Option<f64>,
    pub support_size: usize,
    /// Mass outside `Y^inf`.
    pub off_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementTrace {
    pub baseline: f64,
    pub rewards: RewardModel,
    pub limit_value: f64,
    pub limit_arms: Vec<usize>,
    /// Iteration 0 is the initial behavior policy.
    pub steps: Vec<ImprovementStep>,
}

impl ImprovementTrace {
    pub fn last(&self) -> &ImprovementStep {
        self.steps.last().expect("trace always holds the initial policy")
    }
}

fn off_mass(p: &SimplexPolicy, limit_arms: &[usize]) -> f64 {
    p.probs()
        .iter()
        .enumerate()
        .filter(|(y, _)| limit_arms.binary_search(y).is_err())
        .map(|(_, &q)| q)
        .sum()
}

/// Applies `T_V` `n_iters` times starting from `mu0`.
pub fn iterate_improvement(mu0: &SimplexPolicy, r: &RewardModel, v: f64, n_iters: usize) -> Result<ImprovementTrace> {
    if n_iters == 0 {
        return Err(Error::invalid("iteration count must be positive"));
    }
    let (limit_value, limit_arms) = limit_reward(mu0, r, v)?;
    let step = |iteration, policy: SimplexPolicy, tau| -> Result<ImprovementStep> {
        Ok(ImprovementStep {
            iteration,
            expected_reward: expected_reward(&policy, r)?,
            tau,
            support_size: policy.exact_support().len(),
            off_mass: off_mass(&policy, &limit_arms),
            policy,
        })
    };
    let mut steps = vec![step(0, mu0.clone(), None)?];
    for n in 1..=n_iters {
        let prev = &steps[n - 1];
        let (next, tau) = applied(&prev.policy, r, v)?;
        let entry = step(n, next, Some(tau))?;
        debug_assert!(entry.expected_reward >= prev.expected_reward - IMPROVEMENT_TOL);
        steps.push(entry);
    }
    Ok(ImprovementTrace { baseline: v, rewards: r.clone(), limit_value, limit_arms, steps })
}

/// Both sides of `V^pi = V + (V^mu - V) sum pi^2/mu + tau sum pi/mu` for
/// `pi = T_V mu`, and the Cauchy-Schwarz lower bound
/// `V^pi >= V^mu + tau sum pi/mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueIdentity {
    pub value: f64,
    pub formula: f64,
    pub defect: f64,
    pub improvement_bound: f64,
    pub v_mu: f64,
}

pub fn value_identity_check(mu: &SimplexPolicy, r: &RewardModel, v: f64) -> Result<ValueIdentity> {
    let (pi, tau) = applied(mu, r, v)?;
    let v_mu = expected_reward(mu, r)?;
    let value = expected_reward(&pi, r)?;
    let (mut chi, mut ratio) = (0.0, 0.0);
    for (&p, &m) in pi.probs().iter().zip(mu.probs()) {
        if p > 0.0 {
            chi += p * p / m;
            ratio += p / m;
        }
    }
    let formula = v + (v_mu - v) * chi + tau * ratio;
    Ok(ValueIdentity {
        value,
        formula,
        defect: (value - formula).abs(),
        improvement_bound: v_mu + tau * ratio,
        v_mu,
    })
}

/// Bracket `[lo, hi]` around the optimality threshold `V_{0,mu}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBracket {
    pub lo: f64,
    pub hi: f64,
}

impl ThresholdBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Whether some best arm survives one application of `T_V` (at `V = V^mu`,
/// whether it lies in `argmax_y a_y`).
pub fn keeps_optimal_arm(mu: &SimplexPolicy, r: &RewardModel, v: f64) -> Result<bool> {
    let best = argmax_set(r.as_slice());
    let support = crate::limit::limit_support_at_or_below(mu, r, v)?;
    Ok(best.iter().any(|y| support.binary_search(y).is_ok()))
}

const MONOTONICITY_PROBES: usize = 10;

/// Bisects for the largest baseline below which iterated improvement from
/// `mu0` reaches the maximal reward.
pub fn optimality_threshold(mu0: &SimplexPolicy, r: &RewardModel, tol: f64) -> Result<ThresholdBracket> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if !mu0.has_full_support() {
        return Err(Error::Precondition("behavior policy must have full support".into()));
    }
    let v_mu = expected_reward(mu0, r)?;
    let mut lo = r.min() - 1.0;
    let mut hi = v_mu;
    let pred = |v: f64| keeps_optimal_arm(mu0, r, v);

    let mut seen_false = false;
    for k in 0..=MONOTONICITY_PROBES {
        let v = lo + (hi - lo) * k as f64 / MONOTONICITY_PROBES as f64;
        let ok = pred(v)?;
        if ok && seen_false {
            return Err(Error::Precondition(format!(
                "optimality predicate is not monotone in V (true again at V = {v})"
            )));
        }
        seen_false |= !ok;
    }

    if pred(hi)? {
        return Ok(ThresholdBracket { lo: hi, hi });
    }
    debug_assert!(pred(lo)?);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdBracket { lo, hi })
}

/// Fitted and predicted decay rates of the mass outside `Y^inf`.
///
/// `predicted_rate = max_{y in supp(T_V mu0) \ Y^inf} (r(y) - V) / (V^inf - V)`
/// is read off the ratio recursion of the iterates. It is a heuristic
/// prediction, not a bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    pub fitted_rate: f64,
    pub predicted_rate: f64,
    /// Smallest `C` with `off_mass_n <= C max(fitted_rate, predicted_rate)^n` on the trace.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConcentrationFit {
    Fit(ConcentrationEstimate),
    NoFit(String),
}

pub fn concentration_fit(trace: &ImprovementTrace) -> ConcentrationFit {
    let masses: Vec<(usize, f64)> = trace
        .steps
        .iter()
        .skip(1)
        .filter(|s| s.off_mass > 0.0)
        .map(|s| (s.iteration, s.off_mass))
        .collect();
    if masses.len() < 5 {
        return ConcentrationFit::NoFit(format!(
            "only {} iterations with mass outside Y^inf",
            masses.len()
        ));
    }
    let first = trace.steps.get(1).expect("at least one application");
    let v = trace.baseline;
    let predicted_rate = first
        .policy
        .exact_support()
        .into_iter()
        .filter(|y| trace.limit_arms.binary_search(y).is_err())
        .map(|y| (trace.rewards.as_slice()[y] - v) / (trace.limit_value - v))
        .fold(f64::NEG_INFINITY, f64::max);

    let (n0, m0) = masses[masses.len() / 2];
    let (n1, m1) = masses[masses.len() - 1];
    let fitted_rate = (m1 / m0).powf(1.0 / (n1 - n0) as f64);

    let c = fitted_rate.max(predicted_rate);
    let constant = masses
        .iter()
        .map(|&(n, m)| m / c.powi(n as i32))
        .fold(0.0, f64::max);
    ConcentrationFit::Fit(ConcentrationEstimate { fitted_rate, predicted_rate, constant })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn three_arm() -> (SimplexPolicy, RewardModel) {
        (
            SimplexPolicy::new(vec![0.9, 0.09, 0.01]).unwrap(),
            RewardModel::new(vec![0.6, 0.0, 1.0]).unwrap(),
        )
    }

    #[test]
    fn apply_examples() {
        let mu = SimplexPolicy::uniform(3);
        let r = RewardModel::new(vec![9.0, 3.0, -6.0]).unwrap();
        let res = improve_once(&mu, &r, 0.0).unwrap();
        assert_eq!(res.policy.unwrap().probs(), &[1.0, 0.0, 0.0]);

        let r = RewardModel::new(vec![2.0, 1.0]).unwrap();
        let res = improve_once(&SimplexPolicy::uniform(2), &r, 0.0).unwrap();
        let p = res.policy.unwrap();
        assert!(close(p.probs()[0], 2.0 / 3.0, 1e-15) && close(p.probs()[1], 1.0 / 3.0, 1e-15));

        let mu = SimplexPolicy::new(vec![0.25, 0.75]).unwrap();
        let r = RewardModel::new(vec![0.4, 0.4]).unwrap();
        let res = improve_once(&mu, &r, 0.1).unwrap();
        assert!(res.policy.unwrap().l1_distance(&mu) < 1e-15);
    }

    #[test]
    fn apply_rejects_high_baseline() {
        let (mu, r) = three_arm();
        assert!(matches!(improve_once(&mu, &r, 0.7), Err(Error::Regime(_))));
        let v_mu = expected_reward(&mu, &r).unwrap();
        assert!(matches!(improve_once(&mu, &r, v_mu), Err(Error::Regime(_))));
    }

    #[test]
    fn two_arm_iteration_follows_ratio_recursion() {
        let r = RewardModel::new(vec![2.0, 1.0]).unwrap();
        let trace = iterate_improvement(&SimplexPolicy::uniform(2), &r, 0.0, 3).unwrap();
        let p = &trace.last().policy;
        assert!(close(p.probs()[0], 8.0 / 9.0, 1e-15));
        assert!(close(p.probs()[1], 1.0 / 9.0, 1e-15));
        for s in &trace.steps[1..] {
            let expected = 2f64.powi(s.iteration as i32);
            assert!(close(s.policy.probs()[0] / s.policy.probs()[1], expected, 1e-12));
            assert!(close(s.off_mass, 1.0 / (expected + 1.0), 1e-15));
        }
    }

    #[test]
    fn low_baseline_reaches_the_optimum() {
        let (mu, r) = three_arm();
        let trace = iterate_improvement(&mu, &r, 0.0, 40).unwrap();
        assert_eq!(trace.limit_arms, vec![2]);
        assert_eq!(trace.limit_value, 1.0);
        // ratio recursion oracle: mass ratios scale like r(y)^n from the first iterate
        let first = &trace.steps[1].policy;
        let last = &trace.last().policy;
        let w: Vec<f64> = (0..3).map(|y| first.probs()[y] * r.as_slice()[y].powi(39)).collect();
        let total: f64 = w.iter().sum();
        for y in 0..3 {
            assert!(close(last.probs()[y], w[y] / total, 1e-12));
        }
        assert!(last.probs()[2] > 0.999_99);
        for pair in trace.steps.windows(2) {
            assert!(pair[1].expected_reward >= pair[0].expected_reward - IMPROVEMENT_TOL);
        }
    }

    #[test]
    fn high_baseline_gets_stuck_on_a_suboptimal_arm() {
        let (mu, r) = three_arm();
        let trace = iterate_improvement(&mu, &r, 0.5, 40).unwrap();
        assert!(close(trace.steps[1].tau.unwrap(), 0.04, 1e-12));
        for s in &trace.steps[1..] {
            assert_eq!(s.policy.probs(), &[1.0, 0.0, 0.0]);
        }
        assert_eq!(limit_reward(&mu, &r, 0.5).unwrap(), (0.6, vec![0]));
        assert_eq!(limit_reward(&mu, &r, 0.0).unwrap(), (1.0, vec![2]));
        let golden = limit_reward(
            &SimplexPolicy::uniform(3),
            &RewardModel::new(vec![9.0, 3.0, -6.0]).unwrap(),
            0.0,
        )
        .unwrap();
        assert_eq!(golden, (9.0, vec![0]));
    }

    #[test]
    fn tau_vanishes_after_first_application() {
        let mu = SimplexPolicy::new(vec![0.1, 0.2, 0.3, 0.15, 0.25]).unwrap();
        let r = RewardModel::new(vec![0.9, 0.1, 0.5, 0.7, 0.3]).unwrap();
        let trace = iterate_improvement(&mu, &r, 0.35, 10).unwrap();
        assert!(trace.steps[1].tau.unwrap() > 0.0);
        for s in &trace.steps[2..] {
            assert_eq!(s.tau, Some(0.0));
        }
    }

    #[test]
    fn value_identity_examples() {
        let mu = SimplexPolicy::uniform(3);
        let r = RewardModel::new(vec![9.0, 3.0, -6.0]).unwrap();
        let id = value_identity_check(&mu, &r, 0.0).unwrap();
        // 0 + 2 * 3 + 1 * 3 = 9 = r(arm 0)
        assert!(close(id.formula, 9.0, 1e-13));
        assert!(close(id.value, 9.0, 1e-13));
        assert!(id.improvement_bound >= id.v_mu);

        let flat = RewardModel::new(vec![0.5; 4]).unwrap();
        let mu = SimplexPolicy::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let id = value_identity_check(&mu, &flat, 0.0).unwrap();
        assert!(id.defect < 1e-15);
        assert!(close(id.value, 0.5, 1e-15));
    }

    #[test]
    fn threshold_examples() {
        let (mu, r) = three_arm();
        let b = optimality_threshold(&mu, &r, 1e-9).unwrap();
        assert!(b.width() <= 1e-9);
        assert!(b.lo > 0.0 && b.hi < 0.5);
        assert!(keeps_optimal_arm(&mu, &r, 0.0).unwrap());
        assert!(!keeps_optimal_arm(&mu, &r, 0.5).unwrap());
        assert!(keeps_optimal_arm(&mu, &r, b.midpoint() - 1e-8).unwrap());
        assert!(!keeps_optimal_arm(&mu, &r, b.midpoint() + 1e-8).unwrap());

        // arm 0 maximizes both r and a for every V < 2
        let golden = optimality_threshold(
            &SimplexPolicy::uniform(3),
            &RewardModel::new(vec![9.0, 3.0, -6.0]).unwrap(),
            1e-9,
        )
        .unwrap();
        assert!(close(golden.lo, 2.0, 1e-15) && close(golden.hi, 2.0, 1e-15));
    }

    #[test]
    fn concentration_examples() {
        let r = RewardModel::new(vec![2.0, 1.0]).unwrap();
        let trace = iterate_improvement(&SimplexPolicy::uniform(2), &r, 0.0, 40).unwrap();
        match concentration_fit(&trace) {
            ConcentrationFit::Fit(est) => {
                assert!(close(est.fitted_rate, 0.5, 1e-5), "{}", est.fitted_rate);
                assert!(close(est.predicted_rate, 0.5, 1e-15));
                assert!(est.constant.is_finite() && est.constant > 0.0);
            }
            ConcentrationFit::NoFit(why) => panic!("{why}"),
        }

        let (mu, r) = three_arm();
        let trace = iterate_improvement(&mu, &r, 0.0, 60).unwrap();
        match concentration_fit(&trace) {
            ConcentrationFit::Fit(est) => {
                assert!(close(est.predicted_rate, 0.6, 1e-15));
                assert!(close(est.fitted_rate, 0.6, 1e-3), "{}", est.fitted_rate);
            }
            ConcentrationFit::NoFit(why) => panic!("{why}"),
        }

        let trace = iterate_improvement(&mu, &r, 0.5, 10).unwrap();
        assert!(matches!(concentration_fit(&trace), ConcentrationFit::NoFit(_)));
    }
}
