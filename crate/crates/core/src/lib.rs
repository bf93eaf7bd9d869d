//! Batch imitation-learning laboratory: tabular MDPs, dataset generation,
//! phased Q-learning with a sample-complexity planner, indicator-reward
//! imitation, closed-form bounds with Monte-Carlo verifiers, offline
//! hyperparameter tuning, soft support rewards, and robust statistics.

pub mod bounds;
pub mod chain;
pub mod data;
pub mod error;
pub mod ilbrl;
pub mod mdp;
pub mod ope;
pub mod phased_q;
pub mod sampler;
pub mod seeds;
pub mod stats;
pub mod support;

pub use error::{Error, Result};
pub use mdp::{
    argmax, greedy_policy, value_iteration, DeterministicPolicy, PolicyLike, StochasticPolicy,
    TabularMdp, ValueTable,
};
