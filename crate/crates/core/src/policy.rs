//! Domain types for tabular policies over a finite arm set, and the exact
//! evaluations every other module is built on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default threshold below which an arm's mass is treated as zero.
pub const DEFAULT_SUPPORT_EPS: f64 = 1e-9;
/// Default half-width of the band around `V^mu` classified as critical.
pub const DEFAULT_CRITICAL_TOL: f64 = 1e-12;
/// Absolute tolerance on `sum(p) == 1` for a valid simplex point.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Compensated (Neumaier) summation.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// All indices attaining the maximum, in increasing order.
pub fn argmax_set(values: &[f64]) -> Vec<usize> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v == max)
        .map(|(i, _)| i)
        .collect()
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(Error::invalid(format!(
            "{what}: length mismatch ({expected} arms vs {got})"
        )));
    }
    Ok(())
}

/// Per-arm rewards `r(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RewardModel {
    rewards: Vec<f64>,
}

impl RewardModel {
    pub fn new(rewards: Vec<f64>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::invalid("reward model must have at least one arm"));
        }
        if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::invalid(format!("reward of arm {i} is not finite")));
        }
        Ok(Self { rewards })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rewards
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.rewards.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Best arm, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.rewards)
    }

    /// Restriction to the given arms, in the given order.
    pub fn restrict(&self, arms: &[usize]) -> RewardModel {
        RewardModel { rewards: arms.iter().map(|&i| self.rewards[i]).collect() }
    }
}

impl TryFrom<Vec<f64>> for RewardModel {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        RewardModel::new(v)
    }
}

impl From<RewardModel> for Vec<f64> {
    fn from(r: RewardModel) -> Self {
        r.rewards
    }
}

/// A probability distribution over the arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPolicy {
    probs: Vec<f64>,
}

impl SimplexPolicy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("policy must have at least one arm"));
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(format!(
                "probability of arm {i} is negative or not finite ({})",
                probs[i]
            )));
        }
        let total = stable_sum(probs.iter().copied());
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights onto the simplex.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!("weight of arm {i} is negative or not finite")));
        }
        let total = stable_sum(weights.iter().copied());
        if !(total > 0.0) {
            return Err(Error::invalid("weights have zero total mass"));
        }
        Ok(Self { probs: weights.into_iter().map(|w| w / total).collect() })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform policy needs at least one arm");
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn dirac(n: usize, arm: usize) -> Self {
        assert!(arm < n, "arm {arm} out of range for {n} arms");
        let mut probs = vec![0.0; n];
        probs[arm] = 1.0;
        Self { probs }
    }

    /// Wraps probabilities produced by a normalizing computation (softmax,
    /// renormalization) without re-validating them.
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!(!probs.is_empty());
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn has_full_support(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// Arms with strictly positive mass.
    pub fn exact_support(&self) -> Vec<usize> {
        support(self, 0.0)
    }

    pub fn l1_distance(&self, other: &SimplexPolicy) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(p, q)| (p - q).abs()).sum()
    }
}

impl TryFrom<Vec<f64>> for SimplexPolicy {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        SimplexPolicy::new(v)
    }
}

impl From<SimplexPolicy> for Vec<f64> {
    fn from(p: SimplexPolicy) -> Self {
        p.probs
    }
}

/// Unnormalized log-probabilities; the trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogitPolicy {
    logits: Vec<f64>,
}

impl LogitPolicy {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::invalid("logit policy must have at least one arm"));
        }
        if let Some(i) = logits.iter().position(|l| !l.is_finite()) {
            return Err(Error::invalid(format!("logit of arm {i} is not finite")));
        }
        Ok(Self { logits })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "logit policy needs at least one arm");
        Self { logits: vec![0.0; n] }
    }

    /// `ln p`, so that `softmax` returns `p` again. Requires full support.
    pub fn from_policy(p: &SimplexPolicy) -> Result<Self> {
        if !p.has_full_support() {
            return Err(Error::Precondition(
                "logits of a policy exist only when every arm has positive mass".into(),
            ));
        }
        Ok(Self { logits: p.probs.iter().map(|q| q.ln()).collect() })
    }

    pub(crate) fn from_finite(logits: Vec<f64>) -> Self {
        Self { logits }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.logits
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.logits
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn sum(&self) -> f64 {
        stable_sum(self.logits.iter().copied())
    }
}

impl TryFrom<Vec<f64>> for LogitPolicy {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        LogitPolicy::new(v)
    }
}

impl From<LogitPolicy> for Vec<f64> {
    fn from(l: LogitPolicy) -> Self {
        l.logits
    }
}

/// Softmax of `logits` written into `out`, shifted by the maximum logit.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax(l: &LogitPolicy) -> SimplexPolicy {
    let mut out = vec![0.0; l.len()];
    softmax_into(&l.logits, &mut out);
    SimplexPolicy::from_normalized(out)
}

pub(crate) fn dot(p: &[f64], r: &[f64]) -> f64 {
    stable_sum(p.iter().zip(r).map(|(p, r)| p * r))
}

/// `V^p = sum_y p(y) r(y)`.
pub fn expected_reward(p: &SimplexPolicy, r: &RewardModel) -> Result<f64> {
    check_len(r.len(), p.len(), "expected_reward")?;
    Ok(dot(&p.probs, &r.rewards))
}

pub(crate) fn entropy_of(p: &[f64]) -> f64 {
    0.0 - p.iter().filter(|&&q| q > 0.0).map(|&q| q * q.ln()).sum::<f64>()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &SimplexPolicy) -> f64 {
    entropy_of(&p.probs)
}

pub(crate) fn support_count(p: &[f64], eps: f64) -> usize {
    p.iter().filter(|&&q| q > eps).count()
}

/// Arms whose mass exceeds `eps`, in increasing order.
pub fn support(p: &SimplexPolicy, eps: f64) -> Vec<usize> {
    p.probs
        .iter()
        .enumerate()
        .filter(|&(_, &q)| q > eps)
        .map(|(i, _)| i)
        .collect()
}

/// Sufficient statistics of the expected dynamics for a fixed behavior
/// policy and baseline: `a_y = mu(y)(r(y) - V)` and `b = sum_y a_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageProfile {
    pub a: Vec<f64>,
    pub b: f64,
}

impl AdvantageProfile {
    /// Builds a profile directly from per-arm coefficients.
    pub fn from_coefficients(a: Vec<f64>) -> Self {
        let b = stable_sum(a.iter().copied());
        Self { a, b }
    }

    /// No support check; arms with zero behavior mass get `a_y = 0`.
    pub(crate) fn from_behavior(mu: &[f64], r: &[f64], v: f64) -> Self {
        Self::from_coefficients(mu.iter().zip(r).map(|(m, r)| m * (r - v)).collect())
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

pub fn advantage_profile(mu: &SimplexPolicy, r: &RewardModel, v: f64) -> Result<AdvantageProfile> {
    check_len(r.len(), mu.len(), "advantage_profile")?;
    if !v.is_finite() {
        return Err(Error::invalid("baseline must be finite"));
    }
    if !mu.has_full_support() {
        return Err(Error::Precondition(
            "behavior policy must give positive mass to every arm".into(),
        ));
    }
    Ok(AdvantageProfile::from_behavior(&mu.probs, &r.rewards, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeTag {
    BelowCritical,
    AtCritical,
    AboveCritical,
}

impl RegimeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeTag::BelowCritical => "below",
            RegimeTag::AtCritical => "critical",
            RegimeTag::AboveCritical => "above",
        }
    }
}

impl std::fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Position of the baseline relative to the behavior policy's value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub tag: RegimeTag,
    pub v_mu: f64,
}

impl Regime {
    pub fn from_values(v: f64, v_mu: f64, tol: f64) -> Self {
        let tag = if v < v_mu - tol {
            RegimeTag::BelowCritical
        } else if v > v_mu + tol {
            RegimeTag::AboveCritical
        } else {
            RegimeTag::AtCritical
        };
        Regime { tag, v_mu }
    }
}

pub fn classify_regime(mu: &SimplexPolicy, r: &RewardModel, v: f64, tol: f64) -> Result<Regime> {
    if !(tol >= 0.0) {
        return Err(Error::invalid("critical tolerance must be nonnegative"));
    }
    let v_mu = expected_reward(mu, r)?;
    Ok(Regime::from_values(v, v_mu, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&LogitPolicy::zeros(3));
        assert!(p.probs().iter().all(|&q| close(q, 1.0 / 3.0, 1e-15)));

        let p = softmax(&LogitPolicy::new(vec![2f64.ln(), 0.0]).unwrap());
        assert!(close(p.probs()[0], 2.0 / 3.0, 1e-15));
        assert!(close(p.probs()[1], 1.0 / 3.0, 1e-15));

        let l = LogitPolicy::new(vec![1000.0, 0.0]).unwrap();
        let p = softmax(&l);
        assert!(p.probs().iter().all(|q| q.is_finite()));
        assert!(close(p.probs()[0], 1.0, 1e-15));
        assert!(p.probs()[1] < 1e-300);
        // stored logits are untouched
        assert_eq!(l.as_slice(), &[1000.0, 0.0]);
    }

    #[test]
    fn non_finite_logits_rejected() {
        assert!(matches!(LogitPolicy::new(vec![0.0, f64::NAN]), Err(Error::InvalidInput(_))));
        assert!(matches!(LogitPolicy::new(vec![f64::INFINITY]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn simplex_validation() {
        assert!(SimplexPolicy::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexPolicy::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPolicy::new(vec![1.5, -0.5]).is_err());
        assert!(SimplexPolicy::new(vec![]).is_err());
    }

    #[test]
    fn expected_reward_examples() {
        let r = RewardModel::new(vec![2.0, 0.0]).unwrap();
        assert_eq!(expected_reward(&SimplexPolicy::dirac(2, 0), &r).unwrap(), 2.0);
        assert_eq!(expected_reward(&SimplexPolicy::uniform(2), &r).unwrap(), 1.0);

        let r3 = RewardModel::new(vec![9.0, 3.0, -6.0]).unwrap();
        assert!(close(expected_reward(&SimplexPolicy::uniform(3), &r3).unwrap(), 2.0, 1e-15));

        assert!(matches!(
            expected_reward(&SimplexPolicy::uniform(3), &r),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&SimplexPolicy::dirac(3, 0)), 0.0);
        for n in [1, 2, 7, 100] {
            assert!(close(entropy(&SimplexPolicy::uniform(n)), (n as f64).ln(), 1e-13));
        }
        assert!(close(entropy(&SimplexPolicy::new(vec![0.5, 0.5]).unwrap()), 2f64.ln(), 1e-15));
    }

    #[test]
    fn support_examples() {
        let p = SimplexPolicy::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert_eq!(support(&p, 1e-9), vec![0, 1]);
        let p = SimplexPolicy::new(vec![1.0 - 1e-12, 1e-12]).unwrap();
        assert_eq!(support(&p, 1e-9), vec![0]);
        let p = SimplexPolicy::new(vec![0.4, 0.3, 0.3]).unwrap();
        assert_eq!(support(&p, 1e-9), vec![0, 1, 2]);
    }

    #[test]
    fn advantage_profile_examples() {
        let mu = SimplexPolicy::uniform(3);
        let r = RewardModel::new(vec![9.0, 3.0, -6.0]).unwrap();
        let adv = advantage_profile(&mu, &r, 0.0).unwrap();
        for (a, e) in adv.a.iter().zip([3.0, 1.0, -2.0]) {
            assert!(close(*a, e, 1e-15));
        }
        assert!(close(adv.b, 2.0, 1e-15));

        let adv = advantage_profile(
            &SimplexPolicy::uniform(2),
            &RewardModel::new(vec![2.0, 0.0]).unwrap(),
            0.0,
        )
        .unwrap();
        assert_eq!(adv.a, vec![1.0, 0.0]);
        assert_eq!(adv.b, 1.0);

        let flat = RewardModel::new(vec![0.3; 4]).unwrap();
        let mu = SimplexPolicy::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let adv = advantage_profile(&mu, &flat, 0.3).unwrap();
        assert!(adv.a.iter().all(|&a| a == 0.0));
        assert_eq!(adv.b, 0.0);
    }

    #[test]
    fn advantage_profile_requires_full_support() {
        let mu = SimplexPolicy::new(vec![1.0, 0.0]).unwrap();
        let r = RewardModel::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(advantage_profile(&mu, &r, 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn regime_examples() {
        let mu = SimplexPolicy::uniform(3);
        let r = RewardModel::new(vec![9.0, 3.0, -6.0]).unwrap();
        let reg = classify_regime(&mu, &r, 0.0, DEFAULT_CRITICAL_TOL).unwrap();
        assert_eq!(reg.tag, RegimeTag::BelowCritical);
        assert!(close(reg.v_mu, 2.0, 1e-15));
        let reg = classify_regime(&mu, &r, reg.v_mu, DEFAULT_CRITICAL_TOL).unwrap();
        assert_eq!(reg.tag, RegimeTag::AtCritical);

        // V^mu = (1 + 0.9 + 0) / 3 = 19/30 < 0.7
        let r = RewardModel::new(vec![1.0, 0.9, 0.0]).unwrap();
        let reg = classify_regime(&mu, &r, 0.7, DEFAULT_CRITICAL_TOL).unwrap();
        assert_eq!(reg.tag, RegimeTag::AboveCritical);
        assert!(close(reg.v_mu, 19.0 / 30.0, 1e-15));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_set(&[1.0, 3.0, 3.0, 2.0]), vec![1, 2]);
    }

    fn simplex(n: usize) -> impl Strategy<Value = SimplexPolicy> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |w| {
            SimplexPolicy::from_weights(w).ok()
        })
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant_for_exact_shifts(
            steps in prop::collection::vec(-(30i64 << 20)..(30i64 << 20), 1..40),
            c in -100i64..100,
        ) {
            // logits on a 2^-20 grid shifted by an integer add without rounding
            let logits: Vec<f64> = steps.iter().map(|&k| k as f64 / (1u64 << 20) as f64).collect();
            let p = softmax(&LogitPolicy::new(logits.clone()).unwrap());
            let q = softmax(&LogitPolicy::new(logits.iter().map(|l| l + c as f64).collect()).unwrap());
            for (x, y) in p.probs().iter().zip(q.probs()) {
                prop_assert!((x - y).abs() <= 1e-15, "{x} vs {y}");
            }
        }

        #[test]
        fn softmax_shift_invariant_up_to_rounding_of_the_shift(
            logits in prop::collection::vec(-30.0f64..30.0, 1..40),
            c in -100.0f64..100.0,
        ) {
            let p = softmax(&LogitPolicy::new(logits.clone()).unwrap());
            let q = softmax(&LogitPolicy::new(logits.iter().map(|l| l + c).collect()).unwrap());
            for (x, y) in p.probs().iter().zip(q.probs()) {
                prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }

        #[test]
        fn expected_reward_is_linear(
            (p, q, rewards) in (1usize..30).prop_flat_map(|n| {
                (simplex(n), simplex(n), prop::collection::vec(-10.0f64..10.0, n))
            }),
            alpha in 0.0f64..=1.0,
        ) {
            let r = RewardModel::new(rewards).unwrap();
            let mix = SimplexPolicy::from_normalized(
                p.probs().iter().zip(q.probs()).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect(),
            );
            let lhs = expected_reward(&mix, &r).unwrap();
            let rhs = alpha * expected_reward(&p, &r).unwrap()
                + (1.0 - alpha) * expected_reward(&q, &r).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn entropy_within_bounds(p in (1usize..60).prop_flat_map(simplex)) {
            let h = entropy(&p);
            prop_assert!(h >= -1e-15);
            prop_assert!(h <= (p.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn advantage_mass_is_sum_of_coefficients(
            (mu, rewards) in (1usize..50).prop_flat_map(|n| {
                (simplex(n), prop::collection::vec(-5.0f64..5.0, n))
            }),
            v in -5.0f64..5.0,
        ) {
            prop_assume!(mu.has_full_support());
            let r = RewardModel::new(rewards).unwrap();
            let adv = advantage_profile(&mu, &r, v).unwrap();
            prop_assert!((adv.a.iter().sum::<f64>() - adv.b).abs() <= 1e-12);
            let v_mu = expected_reward(&mu, &r).unwrap();
            prop_assert!((adv.b - (v_mu - v)).abs() <= 1e-12);
        }
    }
}
