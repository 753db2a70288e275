//! Domain-neutral MMDP pieces: discounted returns, the bootstrapped planning
//! return, the one-step TD error and the generative-model contract that the
//! planners simulate against.

use alloc::vec::Vec;

use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract, Result};

/// Discount factor and planning horizon of a return computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountSpec {
    gamma: f64,
    horizon: usize,
}

impl DiscountSpec {
    pub fn new(gamma: f64, horizon: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(config_err!("discount factor {gamma} outside [0, 1]"));
        }
        if horizon == 0 {
            return Err(config_err!("horizon must be at least 1"));
        }
        Ok(Self { gamma, horizon })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// `Σ_k γ^k · r_k` over a reward sequence no longer than the horizon.
pub fn discounted_return(rewards: &[f64], spec: &DiscountSpec) -> Result<f64> {
    if rewards.len() > spec.horizon {
        return Err(contract!(
            "{} rewards exceed horizon {}",
            rewards.len(),
            spec.horizon
        ));
    }
    let mut total = 0.0;
    let mut discount = 1.0;
    for &r in rewards {
        total += discount * r;
        discount *= spec.gamma;
    }
    Ok(total)
}

/// Planning return with a value bootstrap: `G + γ^h · V(s_{t+h})`.
///
/// When the simulated episode ended before the plan ran out
/// (`truncated_early`), the bootstrap term is dropped.
pub fn evade_return(
    rewards: &[f64],
    spec: &DiscountSpec,
    terminal_value: f64,
    truncated_early: bool,
) -> Result<f64> {
    let g = discounted_return(rewards, spec)?;
    if truncated_early {
        return Ok(g);
    }
    Ok(g + libm::pow(spec.gamma, spec.horizon as f64) * terminal_value)
}

/// One-step TD error `V(s) − (r + γ·V(s'))`, with `V(s') = 0` at terminals.
pub fn td_error(v_s: f64, reward: f64, gamma: f64, v_next: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { gamma * v_next };
    v_s - (reward + bootstrap)
}

/// Number of joint open-loop plans, `|A_i|^(h·n)`, computed exactly.
pub fn joint_plan_count(action_count: u32, horizon: u32, agent_count: u32) -> BigUint {
    let exponent = horizon
        .checked_mul(agent_count)
        .expect("plan count exponent overflows u32");
    BigUint::from(action_count).pow(exponent)
}

/// One stored transition `(s_t, a_t, s_{t+1}, r_t)`.
///
/// States are kept in their encoded (feature) form, in single precision to keep
/// a full replay memory small. Rewards stay in double precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceSample {
    pub state_features: Vec<f32>,
    pub joint_action: Vec<u8>,
    pub next_state_features: Vec<f32>,
    pub reward: f64,
    pub terminal: bool,
}

/// Outcome of advancing a generative model by one joint action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub terminal: bool,
}

/// A simulator whose clones serve as independent simulation sandboxes.
///
/// Cloning must produce a deep copy: stepping a clone never changes the
/// original, and a clone stepped with the same randomness and actions follows
/// the same trajectory as the original would.
pub trait GenerativeModel: Clone {
    fn agent_count(&self) -> usize;

    /// Size of every agent's individual action set.
    fn action_count(&self) -> usize;

    fn is_terminal(&self) -> bool;

    /// Advances the state by one joint action (one action index per agent).
    fn step_joint(&mut self, joint_action: &[usize], rng: &mut dyn RngCore) -> Result<Transition>;
}
