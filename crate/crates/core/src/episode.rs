//! The interleaved plan → act → store → learn loop over one episode, and the
//! warmup procedure that seeds the replay memory with baseline experience.

use alloc::vec::Vec;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::factory::{FactoryAction, FactoryConfig, FactoryState};
use crate::learner::{Learner, NetOracle, ReplayBuffer};
use crate::mmdp::ExperienceSample;
use crate::planner::{decide, Algorithm, Decision, PlannerConfig, PlannerStreams, ZeroOracle};
use crate::seed::{derive_seed, stream, Role, StreamId};

/// Where an episode's random streams come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Episodes that are recorded as experiment results.
    Main,
    /// Baseline episodes that only seed the replay memory.
    Warmup,
}

/// Identifies an episode within a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeId {
    pub master_seed: u64,
    pub phase: Phase,
    pub run: u64,
    pub episode: u64,
}

impl EpisodeId {
    pub fn main(master_seed: u64, run: u64, episode: u64) -> Self {
        Self {
            master_seed,
            phase: Phase::Main,
            run,
            episode,
        }
    }

    pub fn warmup(master_seed: u64, run: u64, episode: u64) -> Self {
        Self {
            phase: Phase::Warmup,
            ..Self::main(master_seed, run, episode)
        }
    }

    /// Stream for `role` at `step`, further split by `index` (agent id).
    pub fn rng(&self, role: Role, step: u64, index: u64) -> ChaCha8Rng {
        let id = StreamId::step(self.run, self.episode, step).with_index(index);
        match self.phase {
            Phase::Main => stream(self.master_seed, role, id),
            // warmup streams live in their own namespace keyed by the role
            Phase::Warmup => stream(
                derive_seed(self.master_seed, Role::Warmup, StreamId::default()),
                role,
                id,
            ),
        }
    }

    pub fn planner_streams(&self, step: u64, agents: usize) -> PlannerStreams<ChaCha8Rng> {
        PlannerStreams {
            sampling: (0..agents as u64).map(|i| self.rng(Role::PlanSample, step, i)).collect(),
            simulation: (0..agents as u64).map(|i| self.rng(Role::PlanSim, step, i)).collect(),
        }
    }

    pub fn initial_state(&self, factory: &FactoryConfig) -> Result<FactoryState> {
        FactoryState::new(factory, &mut self.rng(Role::EnvInit, 0, 0))
    }
}

/// Settings of the planning side of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub algorithm: Algorithm,
    pub planner: PlannerConfig,
    pub factory: FactoryConfig,
    /// Plan against the learned value function instead of the zero oracle.
    pub evade: bool,
}

/// One step of an executed episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub t: u32,
    pub joint_action: Vec<FactoryAction>,
    pub reward: f64,
    pub score: f64,
    pub open_tasks: usize,
    pub complete: usize,
    pub cost_total: f64,
    pub tpen_total: f64,
    pub td_loss: Option<f64>,
}

/// Per-episode result metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub run: u64,
    pub episode: u64,
    pub initial_score: f64,
    /// Score at episode end.
    pub final_score: f64,
    pub completion_rate: f64,
    pub length: u32,
    pub reward_sum: f64,
    /// Mean TD loss of the gradient steps taken during the episode.
    pub mean_td_loss: Option<f64>,
    pub gradient_steps: u64,
}

/// Full result of [`run_episode`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub record: EpisodeRecord,
    pub trace: Vec<StepTrace>,
    pub samples: Vec<ExperienceSample>,
}

/// Runs one episode until time runs out or every item is complete.
///
/// Each step plans with the configured algorithm (against the learner's
/// network when `cfg.evade` is set and a learner is given, otherwise the zero
/// oracle), executes the joint action, stores the transition in `replay` and
/// lets the learner refine its parameters.
pub fn run_episode(
    id: EpisodeId,
    cfg: &EpisodeConfig,
    mut learner: Option<&mut Learner>,
    replay: &mut ReplayBuffer,
    replay_rng: &mut dyn RngCore,
) -> Result<EpisodeOutcome> {
    if cfg.evade && learner.is_none() {
        return Err(contract!("value-enhanced planning needs a learner"));
    }
    let mut state = id.initial_state(&cfg.factory)?;
    let mut env_rng = id.rng(Role::EnvStep, 0, 0);
    let agents = cfg.factory.agent_count;
    let initial_score = state.score();
    let mut trace = Vec::with_capacity(state.episode_length() as usize);
    let mut samples = Vec::with_capacity(state.episode_length() as usize);
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let steps_before = learner.as_ref().map_or(0, |l| l.gradient_steps());

    while !state.is_terminal() {
        let step = state.time() as u64;
        let mut streams = id.planner_streams(step, agents);
        let decision: Decision = match learner.as_deref() {
            Some(l) if cfg.evade => {
                let oracle = NetOracle::new(l.net())?;
                decide(cfg.algorithm, &state, &cfg.planner, &oracle, &mut streams)?
            }
            _ => decide(cfg.algorithm, &state, &cfg.planner, &ZeroOracle, &mut streams)?,
        };
        let actions: Vec<FactoryAction> = decision
            .joint_action
            .iter()
            .map(|&a| FactoryAction::from_index(a).expect("planner returns valid arms"))
            .collect();

        let state_features = state.encode_features().to_f32();
        let outcome = state.step(&actions, &mut env_rng)?;
        let sample = ExperienceSample {
            state_features,
            joint_action: actions.iter().map(|a| a.index() as u8).collect(),
            next_state_features: state.encode_features().to_f32(),
            reward: outcome.reward,
            terminal: outcome.terminal,
        };
        replay.push(sample.clone());
        samples.push(sample);

        let td_loss = match learner.as_deref_mut() {
            Some(l) if cfg.evade => l.refine(replay, replay_rng)?,
            _ => None,
        };
        if let Some(loss) = td_loss {
            loss_sum += loss;
            loss_count += 1;
        }
        trace.push(StepTrace {
            t: state.time(),
            joint_action: actions,
            reward: outcome.reward,
            score: state.score(),
            open_tasks: state.open_tasks(),
            complete: state.complete_count(),
            cost_total: state.cost_total(),
            tpen_total: state.tpen_total(),
            td_loss,
        });
    }

    let reward_sum = trace.iter().map(|s| s.reward).sum();
    let record = EpisodeRecord {
        run: id.run,
        episode: id.episode,
        initial_score,
        final_score: state.score(),
        completion_rate: state.completion_rate(),
        length: state.time(),
        reward_sum,
        mean_td_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
        gradient_steps: learner.as_ref().map_or(0, |l| l.gradient_steps()) - steps_before,
    };
    Ok(EpisodeOutcome {
        record,
        trace,
        samples,
    })
}

/// Fills `replay` with `sample_count` transitions from baseline episodes.
///
/// Episodes run in the warmup stream namespace of `run`; the final episode is
/// cut once the requested count is reached. Returns the number of episodes
/// played.
pub fn warmup_replay(
    master_seed: u64,
    run: u64,
    cfg: &EpisodeConfig,
    replay: &mut ReplayBuffer,
    sample_count: usize,
) -> Result<u64> {
    if sample_count > replay.capacity() {
        return Err(contract!(
            "warmup of {sample_count} samples exceeds replay capacity {}",
            replay.capacity()
        ));
    }
    let baseline = EpisodeConfig {
        evade: false,
        ..cfg.clone()
    };
    let mut stored = 0;
    let mut episodes = 0;
    // baseline episodes never train, so the replay rng is never consumed
    let mut unused = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut scratch = ReplayBuffer::new(1);
    while stored < sample_count {
        let id = EpisodeId::warmup(master_seed, run, episodes);
        let outcome = run_episode(id, &baseline, None, &mut scratch, &mut unused)?;
        for sample in outcome.samples.into_iter().take(sample_count - stored) {
            replay.push(sample);
            stored += 1;
        }
        episodes += 1;
    }
    Ok(episodes)
}
