//! Closed-form limit policies of expected AsymRE.
//!
//! Below the critical baseline the limit is a water-filling profile
//! `pi*(y) = (a_y - tau*)^+ / b`, where `tau*` solves
//! `sum_y (a_y - tau)^+ = b`. At the critical baseline the limit keeps the
//! initial policy's ratios on `argmax_y a_y`. Above it the limit depends on
//! the initial condition; only the set of reachable vertices is closed form.

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, DynamicsConfig};
use crate::error::{Error, Result};
use crate::policy::{
    advantage_profile, argmax_set, classify_regime, AdvantageProfile, LogitPolicy, Regime,
    RegimeTag, RewardModel, SimplexPolicy, DEFAULT_CRITICAL_TOL,
};

/// Budget used when an above-critical limit is delegated to the dynamics.
const ABOVE_CRITICAL_STEPS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitResult {
    /// The limit policy; `None` above critical when no initial policy was
    /// supplied.
    pub policy: Option<SimplexPolicy>,
    /// Water-filling threshold, defined below critical only.
    pub tau_star: Option<f64>,
    /// Support of the limit below/at critical; the candidate vertex set
    /// above critical.
    pub support: Vec<usize>,
    pub regime: Regime,
    /// Set above critical, where the limit depends on the initial policy.
    pub depends_on_initial: bool,
}

fn require_below(adv: &AdvantageProfile) -> Result<()> {
    if !(adv.b > 0.0) {
        return Err(Error::Regime(format!(
            "water-filling threshold needs V < V^mu (b = {} is not positive)",
            adv.b
        )));
    }
    Ok(())
}

/// Exact `tau*` by sorting `a` in decreasing order and scanning prefix sums.
pub fn solve_tau(adv: &AdvantageProfile) -> Result<f64> {
    require_below(adv)?;
    if adv.a.iter().all(|&a| a >= 0.0) {
        return Ok(0.0);
    }
    let mut sorted = adv.a.clone();
    sorted.sort_by(|x, y| y.total_cmp(x));
    // Largest k with sorted[k-1] > (prefix_k - b) / k.
    let mut prefix = 0.0;
    let mut tau = f64::NAN;
    for (k, &a) in sorted.iter().enumerate() {
        prefix += a;
        let candidate = (prefix - adv.b) / (k + 1) as f64;
        if a > candidate {
            tau = candidate;
        } else {
            break;
        }
    }
    debug_assert!(tau.is_finite());
    Ok(tau.max(0.0))
}

/// `tau*` by bisection on the decreasing map `tau -> sum (a - tau)^+`,
/// run until the bracket stops shrinking or is narrower than `tol`.
pub fn solve_tau_bisection(adv: &AdvantageProfile, tol: f64) -> Result<f64> {
    require_below(adv)?;
    let mass = |tau: f64| adv.a.iter().map(|&a| (a - tau).max(0.0)).sum::<f64>();
    if mass(0.0) <= adv.b {
        return Ok(0.0);
    }
    let mut lo = 0.0_f64;
    let mut hi = adv.a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            break;
        }
        if mass(mid) > adv.b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Below-critical limit from a profile with `b > 0`.
pub(crate) fn water_filling(adv: &AdvantageProfile) -> Result<(SimplexPolicy, f64)> {
    let tau = solve_tau(adv)?;
    let weights: Vec<f64> = adv.a.iter().map(|&a| (a - tau).max(0.0) / adv.b).collect();
    Ok((SimplexPolicy::from_weights(weights)?, tau))
}

/// Arms `y` with `a_y - max_z a_z - b > 0`: the vertices some initial
/// condition converges to when `V > V^mu`.
pub fn candidate_support_above(adv: &AdvantageProfile) -> Result<Vec<usize>> {
    if !(adv.b < 0.0) {
        return Err(Error::Regime(format!(
            "candidate vertices are defined for V > V^mu only (b = {})",
            adv.b
        )));
    }
    let max = adv.a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((0..adv.len()).filter(|&y| adv.a[y] - max - adv.b > 0.0).collect())
}

/// Limit of expected AsymRE for behavior `mu`, baseline `v`, started from
/// `pi0`. `pi0` is required at critical; above critical it is optional and,
/// when given, the limit is obtained by running the dynamics from it.
pub fn limit_policy(
    mu: &SimplexPolicy,
    r: &RewardModel,
    v: f64,
    pi0: Option<&SimplexPolicy>,
    tol: f64,
) -> Result<LimitResult> {
    let adv = advantage_profile(mu, r, v)?;
    let regime = classify_regime(mu, r, v, tol)?;
    if let Some(p) = pi0 {
        if p.len() != mu.len() {
            return Err(Error::invalid("initial policy has the wrong number of arms"));
        }
    }
    match regime.tag {
        RegimeTag::BelowCritical => {
            let (policy, tau) = water_filling(&adv)?;
            Ok(LimitResult {
                support: policy.exact_support(),
                policy: Some(policy),
                tau_star: Some(tau),
                regime,
                depends_on_initial: false,
            })
        }
        RegimeTag::AtCritical => {
            let pi0 = pi0.ok_or_else(|| {
                Error::Precondition("the critical-baseline limit needs an initial policy".into())
            })?;
            if !pi0.has_full_support() {
                return Err(Error::Precondition("initial policy must have full support".into()));
            }
            let support = argmax_set(&adv.a);
            let mut weights = vec![0.0; mu.len()];
            for &y in &support {
                weights[y] = pi0.probs()[y];
            }
            Ok(LimitResult {
                policy: Some(SimplexPolicy::from_weights(weights)?),
                tau_star: None,
                support,
                regime,
                depends_on_initial: false,
            })
        }
        RegimeTag::AboveCritical => {
            let support = candidate_support_above(&adv)?;
            let policy = match pi0 {
                Some(p0) => {
                    let l0 = LogitPolicy::from_policy(p0)?;
                    let cfg = DynamicsConfig::new(1.0, ABOVE_CRITICAL_STEPS)
                        .with_record_every(ABOVE_CRITICAL_STEPS);
                    Some(integrate(&l0, &adv, r.as_slice(), &cfg)?.policy())
                }
                None => None,
            };
            Ok(LimitResult { policy, tau_star: None, support, regime, depends_on_initial: true })
        }
    }
}

/// Support of the limit at a baseline `v <= V^mu`, which does not depend on
/// the initial policy.
pub(crate) fn limit_support_at_or_below(mu: &SimplexPolicy, r: &RewardModel, v: f64) -> Result<Vec<usize>> {
    let adv = advantage_profile(mu, r, v)?;
    match Regime::from_values(v, adv.b + v, DEFAULT_CRITICAL_TOL).tag {
        RegimeTag::BelowCritical => Ok(water_filling(&adv)?.0.exact_support()),
        RegimeTag::AtCritical => Ok(argmax_set(&adv.a)),
        RegimeTag::AboveCritical => Err(Error::Regime(format!("baseline {v} exceeds V^mu"))),
    }
}

/// Whether `supp(pi*_{mu,v1}) ⊆ supp(pi*_{mu,v2})` for `v2 <= v1 <= V^mu`.
pub fn support_monotonicity_check(mu: &SimplexPolicy, r: &RewardModel, v1: f64, v2: f64) -> Result<bool> {
    let v_mu = crate::policy::expected_reward(mu, r)?;
    if !(v2 <= v1 && v1 <= v_mu + DEFAULT_CRITICAL_TOL) {
        return Err(Error::Precondition(format!(
            "need V2 <= V1 <= V^mu, got V2 = {v2}, V1 = {v1}, V^mu = {v_mu}"
        )));
    }
    let s1 = limit_support_at_or_below(mu, r, v1)?;
    let s2 = limit_support_at_or_below(mu, r, v2)?;
    Ok(s1.iter().all(|y| s2.binary_search(y).is_ok()))
}
