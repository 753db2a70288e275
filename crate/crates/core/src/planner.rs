//! Joint-policy search for one decision step.
//!
//! Both planners keep one [`MabStack`] per agent and spend the budget on
//! `⌊n_budget / h⌋` simulated rollouts of sampled joint plans.
//!
//! - [`dice_decide`] is centralized: every rollout's global return updates all
//!   stacks.
//! - [`doolp_decide`] is decentralized: each agent owns its stack and its model
//!   copy, the sampled plans are broadcast in lockstep rounds, and every agent
//!   learns only from its own simulation of the assembled joint plan.

use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bandit::{MabStack, UpdateMode};
use crate::error::{config_err, contract, Result};
use crate::mmdp::{evade_return, DiscountSpec, GenerativeModel};

/// Simulation budget of one decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerBudget {
    n_budget: usize,
    horizon: usize,
}

impl PlannerBudget {
    pub fn new(n_budget: usize, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(config_err!("horizon must be at least 1"));
        }
        if n_budget / horizon == 0 {
            return Err(config_err!(
                "budget {n_budget} allows no rollout of horizon {horizon}"
            ));
        }
        Ok(Self { n_budget, horizon })
    }

    pub fn n_budget(&self) -> usize {
        self.n_budget
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of rollouts per decision.
    pub fn iterations(&self) -> usize {
        self.n_budget / self.horizon
    }
}

/// Which joint-policy search to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Dice,
    Doolp,
}

/// Everything a planner needs besides the state and the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub budget: PlannerBudget,
    pub gamma: f64,
    pub update_mode: UpdateMode,
}

impl PlannerConfig {
    pub fn new(n_budget: usize, horizon: usize, gamma: f64) -> Result<Self> {
        let budget = PlannerBudget::new(n_budget, horizon)?;
        DiscountSpec::new(gamma, horizon)?;
        Ok(Self {
            budget,
            gamma,
            update_mode: UpdateMode::FullReturn,
        })
    }
}

/// Estimate of the value beyond the planning horizon.
///
/// Implementations must be pure: evaluating never changes planner state.
pub trait ValueOracle<S> {
    fn evaluate(&self, state: &S) -> f64;
}

/// Baseline oracle: plans maximize the plain discounted return.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroOracle;

impl<S> ValueOracle<S> for ZeroOracle {
    fn evaluate(&self, _state: &S) -> f64 {
        0.0
    }
}

impl<S, F: Fn(&S) -> f64> ValueOracle<S> for F {
    fn evaluate(&self, state: &S) -> f64 {
        self(state)
    }
}

/// One plan of `h` individual actions per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointPlan {
    plans: Vec<Vec<usize>>,
}

impl JointPlan {
    pub fn new(plans: Vec<Vec<usize>>) -> Result<Self> {
        let horizon = plans.first().map_or(0, Vec::len);
        if horizon == 0 || plans.iter().any(|p| p.len() != horizon) {
            return Err(contract!("joint plan rows must share a positive length"));
        }
        Ok(Self { plans })
    }

    pub fn agent_count(&self) -> usize {
        self.plans.len()
    }

    pub fn horizon(&self) -> usize {
        self.plans[0].len()
    }

    pub fn agent_plan(&self, agent: usize) -> &[usize] {
        &self.plans[agent]
    }

    /// Joint action at plan depth `depth`.
    pub fn joint_action(&self, depth: usize) -> Vec<usize> {
        self.plans.iter().map(|p| p[depth]).collect()
    }
}

/// Result of simulating one joint plan.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    pub rewards: Vec<f64>,
    /// The episode ended before the plan was exhausted (or exactly at its
    /// end), so no bootstrap was added.
    pub truncated: bool,
    pub terminal_value: f64,
    /// `G + γ^h · V(s_{t+h})`, or `G` when truncated.
    pub value: f64,
}

impl RolloutOutcome {
    /// Discounted return from each depth onward, bootstrap included.
    pub fn returns_to_go(&self, gamma: f64, horizon: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(horizon);
        for d in 0..horizon {
            let mut g = 0.0;
            let mut discount = 1.0;
            for &r in self.rewards.iter().skip(d) {
                g += discount * r;
                discount *= gamma;
            }
            if !self.truncated {
                g += libm::pow(gamma, (horizon - d) as f64) * self.terminal_value;
            }
            out.push(g);
        }
        out
    }
}

/// Simulates `plan` in `sandbox` and scores it with the bootstrapped return.
///
/// Stops at the first terminal state. A terminal state reached at any depth,
/// including the last one, suppresses the bootstrap.
pub fn rollout<M, O>(
    mut sandbox: M,
    plan: &JointPlan,
    gamma: f64,
    oracle: &O,
    rng: &mut dyn RngCore,
) -> Result<RolloutOutcome>
where
    M: GenerativeModel,
    O: ValueOracle<M> + ?Sized,
{
    if plan.agent_count() != sandbox.agent_count() {
        return Err(contract!(
            "plan for {} agents, model has {}",
            plan.agent_count(),
            sandbox.agent_count()
        ));
    }
    let spec = DiscountSpec::new(gamma, plan.horizon())?;
    let mut rewards = Vec::with_capacity(plan.horizon());
    let mut truncated = sandbox.is_terminal();
    for depth in 0..plan.horizon() {
        if truncated {
            break;
        }
        let transition = sandbox.step_joint(&plan.joint_action(depth), rng)?;
        rewards.push(transition.reward);
        truncated = transition.terminal;
    }
    let terminal_value = if truncated { 0.0 } else { oracle.evaluate(&sandbox) };
    let value = evade_return(&rewards, &spec, terminal_value, truncated)?;
    Ok(RolloutOutcome {
        rewards,
        truncated,
        terminal_value,
        value,
    })
}

/// Independent random streams of one decision.
///
/// `sampling[i]` drives agent `i`'s plan sampling. DICE simulates with
/// `simulation[0]`; DOOLP agent `i` simulates with `simulation[i]`.
#[derive(Debug, Clone)]
pub struct PlannerStreams<R> {
    pub sampling: Vec<R>,
    pub simulation: Vec<R>,
}

/// Chosen joint action plus the planner's internal statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub joint_action: Vec<usize>,
    pub stacks: Vec<MabStack>,
    pub rollouts: usize,
    pub simulated_steps: usize,
}

fn check_streams<R>(streams: &PlannerStreams<R>, agents: usize, simulators: usize) -> Result<()> {
    if streams.sampling.len() != agents {
        return Err(contract!(
            "{} sampling streams for {agents} agents",
            streams.sampling.len()
        ));
    }
    if streams.simulation.len() < simulators {
        return Err(contract!(
            "{} simulation streams, need {simulators}",
            streams.simulation.len()
        ));
    }
    Ok(())
}

fn apply_update(stack: &mut MabStack, plan: &[usize], outcome: &RolloutOutcome, cfg: &PlannerConfig) -> Result<()> {
    match cfg.update_mode {
        UpdateMode::FullReturn => stack.update(plan, outcome.value),
        UpdateMode::ReturnToGo => {
            let returns = outcome.returns_to_go(cfg.gamma, cfg.budget.horizon());
            stack.update_per_depth(plan, &returns)
        }
    }
}

fn greedy_joint_action(stacks: &[MabStack]) -> Result<Vec<usize>> {
    stacks.iter().map(MabStack::greedy_action).collect()
}

/// Centralized joint-policy search.
pub fn dice_decide<M, O, R>(
    state: &M,
    cfg: &PlannerConfig,
    oracle: &O,
    streams: &mut PlannerStreams<R>,
) -> Result<Decision>
where
    M: GenerativeModel,
    O: ValueOracle<M> + ?Sized,
    R: RngCore,
{
    let n = state.agent_count();
    check_streams(streams, n, 1)?;
    let h = cfg.budget.horizon();
    let mut stacks: Vec<MabStack> = (0..n).map(|_| MabStack::new(h, state.action_count())).collect();
    let mut simulated_steps = 0;
    for _ in 0..cfg.budget.iterations() {
        let plans = stacks
            .iter()
            .zip(streams.sampling.iter_mut())
            .map(|(stack, rng)| stack.sample_plan(rng))
            .collect();
        let joint = JointPlan::new(plans)?;
        let outcome = rollout(state.clone(), &joint, cfg.gamma, oracle, &mut streams.simulation[0])?;
        simulated_steps += outcome.rewards.len();
        for (agent, stack) in stacks.iter_mut().enumerate() {
            apply_update(stack, joint.agent_plan(agent), &outcome, cfg)?;
        }
    }
    Ok(Decision {
        joint_action: greedy_joint_action(&stacks)?,
        stacks,
        rollouts: cfg.budget.iterations(),
        simulated_steps,
    })
}

/// Decentralized joint-policy search with plan broadcast.
///
/// Rounds run in lockstep: all agents sample, the plans are exchanged, then
/// every agent simulates the same joint plan in its own model copy with its
/// own randomness and updates only its own stack.
pub fn doolp_decide<M, O, R>(
    state: &M,
    cfg: &PlannerConfig,
    oracle: &O,
    streams: &mut PlannerStreams<R>,
) -> Result<Decision>
where
    M: GenerativeModel,
    O: ValueOracle<M> + ?Sized,
    R: RngCore,
{
    let n = state.agent_count();
    check_streams(streams, n, n)?;
    let h = cfg.budget.horizon();
    let mut stacks: Vec<MabStack> = (0..n).map(|_| MabStack::new(h, state.action_count())).collect();
    let mut simulated_steps = 0;
    for _ in 0..cfg.budget.iterations() {
        // sample phase, then broadcast
        let plans = stacks
            .iter()
            .zip(streams.sampling.iter_mut())
            .map(|(stack, rng)| stack.sample_plan(rng))
            .collect();
        let joint = JointPlan::new(plans)?;
        // private simulate/update phase
        for (agent, stack) in stacks.iter_mut().enumerate() {
            let outcome = rollout(state.clone(), &joint, cfg.gamma, oracle, &mut streams.simulation[agent])?;
            simulated_steps += outcome.rewards.len();
            apply_update(stack, joint.agent_plan(agent), &outcome, cfg)?;
        }
    }
    Ok(Decision {
        joint_action: greedy_joint_action(&stacks)?,
        stacks,
        rollouts: cfg.budget.iterations(),
        simulated_steps,
    })
}

/// Dispatches to the configured planner.
pub fn decide<M, O, R>(
    algorithm: Algorithm,
    state: &M,
    cfg: &PlannerConfig,
    oracle: &O,
    streams: &mut PlannerStreams<R>,
) -> Result<Decision>
where
    M: GenerativeModel,
    O: ValueOracle<M> + ?Sized,
    R: RngCore,
{
    match algorithm {
        Algorithm::Dice => dice_decide(state, cfg, oracle, streams),
        Algorithm::Doolp => doolp_decide(state, cfg, oracle, streams),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmdp::Transition;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Counter that terminates after `limit` steps and pays the action index.
    #[derive(Clone)]
    struct Countdown {
        left: usize,
    }

    impl GenerativeModel for Countdown {
        fn agent_count(&self) -> usize {
            1
        }
        fn action_count(&self) -> usize {
            3
        }
        fn is_terminal(&self) -> bool {
            self.left == 0
        }
        fn step_joint(&mut self, a: &[usize], _rng: &mut dyn RngCore) -> Result<Transition> {
            self.left -= 1;
            Ok(Transition {
                reward: a[0] as f64,
                terminal: self.left == 0,
            })
        }
    }

    #[test]
    fn budget_validation() {
        assert!(PlannerBudget::new(3, 4).is_err());
        assert!(PlannerBudget::new(10, 0).is_err());
        assert_eq!(PlannerBudget::new(192, 4).unwrap().iterations(), 48);
        assert_eq!(PlannerBudget::new(10, 4).unwrap().iterations(), 2);
    }

    #[test]
    fn rollout_zero_oracle_is_discounted_return() {
        let plan = JointPlan::new(vec![vec![2, 1, 0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = rollout(Countdown { left: 10 }, &plan, 0.5, &ZeroOracle, &mut rng).unwrap();
        assert_eq!(out.value, 2.0 + 0.5);
        assert!(!out.truncated);
        let with_oracle = rollout(Countdown { left: 10 }, &plan, 0.5, &|_: &Countdown| 8.0, &mut rng).unwrap();
        assert_eq!(with_oracle.value, 2.5 + 0.125 * 8.0);
    }

    #[test]
    fn rollout_terminal_suppresses_bootstrap() {
        let plan = JointPlan::new(vec![vec![1, 1, 1, 1]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = rollout(Countdown { left: 1 }, &plan, 0.95, &|_: &Countdown| 100.0, &mut rng).unwrap();
        assert!(out.truncated);
        assert_eq!(out.rewards.len(), 1);
        assert_eq!(out.value, 1.0);
    }

    #[test]
    fn returns_to_go_recomputed_from_rewards() {
        let outcome = RolloutOutcome {
            rewards: vec![1.0, 2.0, 3.0],
            truncated: false,
            terminal_value: 4.0,
            value: 0.0,
        };
        let g = outcome.returns_to_go(0.5, 3);
        assert_eq!(g, vec![1.0 + 1.0 + 0.75 + 0.5, 2.0 + 1.5 + 1.0, 3.0 + 2.0]);
        let cut = RolloutOutcome {
            rewards: vec![1.0],
            truncated: true,
            terminal_value: 0.0,
            value: 1.0,
        };
        assert_eq!(cut.returns_to_go(0.5, 3), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn budget_accounting() {
        let cfg = PlannerConfig::new(10, 3, 0.9).unwrap();
        let mut streams = PlannerStreams {
            sampling: vec![ChaCha8Rng::seed_from_u64(1)],
            simulation: vec![ChaCha8Rng::seed_from_u64(2)],
        };
        let d = dice_decide(&Countdown { left: 100 }, &cfg, &ZeroOracle, &mut streams).unwrap();
        assert_eq!(d.rollouts, 3);
        assert_eq!(d.simulated_steps, 9);
        let total: usize = (0..3).map(|a| d.stacks[0].bandit(0).arm(a).len()).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn streams_must_match_agents() {
        let cfg = PlannerConfig::new(10, 2, 0.9).unwrap();
        let mut streams: PlannerStreams<ChaCha8Rng> = PlannerStreams {
            sampling: vec![],
            simulation: vec![],
        };
        assert!(dice_decide(&Countdown { left: 5 }, &cfg, &ZeroOracle, &mut streams).is_err());
    }
}
