//! Multi-agent open-loop planning enhanced with an online-learned value
//! function, together with the stochastic smart-factory benchmark it is
//! evaluated on.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the clock or the command line lives in the `evade` crate.
//!
//! - [`mmdp`]: returns, TD error, the generative-model contract.
//! - [`tabular`]: small tabular MDPs and value iteration, used as test oracles.
//! - [`factory`]: the smart-factory MMDP and its feature-plane encoding.
//! - [`bandit`]: sliding-window Thompson sampling bandits and MAB stacks.
//! - [`planner`]: centralized (DICE) and decentralized (DOOLP) planners.
//! - [`learner`]: value network, ADAM, replay memory and TD training.
//! - [`episode`]: the interleaved plan/act/learn loop and seed derivation.
#![no_std]

extern crate alloc;

pub mod bandit;
pub mod episode;
pub mod error;
pub mod factory;
pub mod learner;
pub mod mmdp;
pub mod planner;
pub mod seed;
pub mod tabular;

pub use error::{Error, Result};
