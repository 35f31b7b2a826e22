//! Asymmetric REINFORCE for tabular softmax policies.
//!
//! Expected and stochastic dynamics, closed-form limit policies for every
//! baseline regime, the policy-improvement operator, a contextual variant
//! with empirical baselines, and an experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod contextual;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod improve;
pub mod limit;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
pub use policy::{
    advantage_profile, classify_regime, entropy, expected_reward, softmax, support, AdvantageProfile,
    LogitPolicy, Regime, RegimeTag, RewardModel, SimplexPolicy,
};
