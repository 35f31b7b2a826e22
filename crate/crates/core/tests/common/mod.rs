#![allow(dead_code)]

use asymre::{expected_reward, RewardModel, SimplexPolicy};
use proptest::prelude::*;

/// Behavior policy with full support and rewards on `n` arms.
pub fn bandit(n: std::ops::Range<usize>) -> impl Strategy<Value = (SimplexPolicy, RewardModel)> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(0.05f64..1.0, n),
            prop::collection::vec(-1.0f64..1.0, n),
        )
    })
    .prop_map(|(w, r)| (SimplexPolicy::from_weights(w).unwrap(), RewardModel::new(r).unwrap()))
}

/// A bandit together with a baseline strictly below the behavior value.
pub fn below_critical(
    n: std::ops::Range<usize>,
) -> impl Strategy<Value = (SimplexPolicy, RewardModel, f64)> {
    (bandit(n), 0.02f64..1.0, 0.0f64..1.0).prop_map(|((mu, r), gap, u)| {
        let v_mu = expected_reward(&mu, &r).unwrap();
        // spread the baseline down to a bit below the smallest reward
        let lo = r.min() - 0.5;
        let v = v_mu - gap.min(v_mu - lo) * (0.02 + 0.98 * u);
        (mu, r, v)
    })
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
