//! The stochastic smart-factory MMDP.
//!
//! A 5×5 grid of machines of 15 types. Every agent carries one item whose
//! processing tasks are grouped into ordered buckets; tasks inside a bucket
//! may be done in any order. Machines process the head of their queue with a
//! fixed cost and fail with a fixed probability. The reward is the change of
//! the score `|complete| − tasks − cost − time penalty`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract, validation, Result};
use crate::mmdp::{GenerativeModel, Transition};

pub const GRID_SIDE: usize = 5;
pub const CELLS: usize = GRID_SIDE * GRID_SIDE;
pub const MACHINE_TYPES: usize = 15;
pub const FEATURE_PLANES: usize = 35;
pub const FEATURE_LEN: usize = FEATURE_PLANES * CELLS;

/// Seed of the default machine layout.
pub const DEFAULT_LAYOUT_SEED: u64 = 2019;

const PLANE_MACHINE: usize = 0;
const PLANE_AGENT_STATE: usize = 1;
const PLANE_FIRST_BUCKET: usize = 5;
const PLANE_SECOND_BUCKET: usize = 20;

/// Individual agent action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactoryAction {
    North,
    South,
    West,
    East,
    Enqueue,
    NoOp,
}

impl FactoryAction {
    pub const ALL: [FactoryAction; 6] = [
        FactoryAction::North,
        FactoryAction::South,
        FactoryAction::West,
        FactoryAction::East,
        FactoryAction::Enqueue,
        FactoryAction::NoOp,
    ];

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Machine type of every cell, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineGrid {
    types: [u8; CELLS],
}

impl MachineGrid {
    /// Validates an explicit row-major layout of 25 machine types.
    pub fn new(types: &[u8]) -> Result<Self> {
        if types.len() != CELLS {
            return Err(validation!("layout has {} cells, expected {CELLS}", types.len()));
        }
        let mut seen = [false; MACHINE_TYPES];
        for &t in types {
            if t as usize >= MACHINE_TYPES {
                return Err(validation!("machine type {t} outside 0..{MACHINE_TYPES}"));
            }
            seen[t as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(validation!("layout is missing machine type {missing}"));
        }
        let mut cells = [0u8; CELLS];
        cells.copy_from_slice(types);
        Ok(Self { types: cells })
    }

    /// Shuffles every type once plus types `0..10` a second time.
    pub fn generate(seed: u64) -> Self {
        let mut types: Vec<u8> = (0..MACHINE_TYPES as u8).collect();
        types.extend((0..(CELLS - MACHINE_TYPES) as u8).map(|k| k % MACHINE_TYPES as u8));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        types.shuffle(&mut rng);
        Self::new(&types).expect("generated layout covers every type")
    }

    pub fn machine_type(&self, row: usize, col: usize) -> u8 {
        self.types[row * GRID_SIDE + col]
    }

    pub fn cells(&self) -> &[u8; CELLS] {
        &self.types
    }

    /// Cells hosting a machine of the given type.
    pub fn cells_of_type(&self, machine_type: u8) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.types
            .iter()
            .enumerate()
            .filter(move |(_, t)| **t == machine_type)
            .map(|(i, _)| (i / GRID_SIDE, i % GRID_SIDE))
    }
}

impl Default for MachineGrid {
    fn default() -> Self {
        Self::generate(DEFAULT_LAYOUT_SEED)
    }
}

/// A set of machine types, stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Bucket(u16);

impl Bucket {
    pub fn from_types(types: &[u8]) -> Self {
        let mut mask = 0u16;
        for &t in types {
            debug_assert!((t as usize) < MACHINE_TYPES);
            mask |= 1 << t;
        }
        Bucket(mask)
    }

    pub fn contains(self, machine_type: u8) -> bool {
        self.0 & (1 << machine_type) != 0
    }

    pub fn remove(&mut self, machine_type: u8) {
        self.0 &= !(1 << machine_type);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn types(self) -> impl Iterator<Item = u8> {
        (0..MACHINE_TYPES as u8).filter(move |t| self.contains(*t))
    }
}

/// Position, remaining tasks and queue status of one agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub row: usize,
    pub col: usize,
    /// Ordered buckets; only the first one can be worked on.
    pub tasks: Vec<Bucket>,
    pub enqueued: bool,
}

impl AgentState {
    pub fn is_complete(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn remaining_tasks(&self) -> usize {
        self.tasks.iter().map(|b| b.len()).sum()
    }

    fn cell(&self) -> usize {
        self.row * GRID_SIDE + self.col
    }
}

/// All knobs of the factory environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactoryConfig {
    pub agent_count: usize,
    pub episode_length: u32,
    pub machine_failure_prob: f64,
    pub processing_cost: f64,
    pub step_penalty: f64,
    pub buckets_per_item: usize,
    pub tasks_per_bucket: usize,
    /// Explicit 25-entry row-major layout; overrides `layout_seed`.
    pub grid_layout: Option<Vec<u8>>,
    pub layout_seed: u64,
}

impl Default for FactoryConfig {
    fn default() -> Self {
        Self {
            agent_count: 4,
            episode_length: 50,
            machine_failure_prob: 0.1,
            processing_cost: 0.25,
            step_penalty: 0.1,
            buckets_per_item: 2,
            tasks_per_bucket: 2,
            grid_layout: None,
            layout_seed: DEFAULT_LAYOUT_SEED,
        }
    }
}

impl FactoryConfig {
    pub fn with_agents(agent_count: usize) -> Self {
        Self {
            agent_count,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.agent_count == 0 {
            return Err(config_err!("agent_count must be at least 1"));
        }
        if self.agent_count > u16::MAX as usize {
            return Err(config_err!("agent_count {} too large", self.agent_count));
        }
        if self.episode_length == 0 {
            return Err(config_err!("episode_length must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.machine_failure_prob) {
            return Err(config_err!(
                "machine_failure_prob {} outside [0, 1]",
                self.machine_failure_prob
            ));
        }
        if !self.processing_cost.is_finite() || !self.step_penalty.is_finite() {
            return Err(config_err!("costs must be finite"));
        }
        if self.tasks_per_bucket == 0 || self.tasks_per_bucket > MACHINE_TYPES {
            return Err(config_err!(
                "tasks_per_bucket must lie in 1..={MACHINE_TYPES}"
            ));
        }
        if self.buckets_per_item == 0 {
            return Err(config_err!("buckets_per_item must be at least 1"));
        }
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<MachineGrid> {
        match &self.grid_layout {
            Some(types) => MachineGrid::new(types),
            None => Ok(MachineGrid::generate(self.layout_seed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dynamics {
    episode_length: u32,
    failure_prob: f64,
    processing_cost: f64,
    step_penalty: f64,
}

/// One queue slot: cell index and agent id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct QueueEntry {
    cell: u8,
    agent: u16,
}

/// Full factory configuration at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoryState {
    grid: MachineGrid,
    agents: Vec<AgentState>,
    // all machine queues in global arrival order; a cell's FIFO is the
    // subsequence with that cell
    queue: Vec<QueueEntry>,
    t: u32,
    cost_total: f64,
    tpen_total: f64,
    dynamics: Dynamics,
}

/// Per-step statistics of the machine phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MachineReport {
    pub attempts: usize,
    pub failures: usize,
    pub tasks_removed: usize,
}

/// Result of one real or simulated factory step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminal: bool,
    pub machines: MachineReport,
}

impl FactoryState {
    /// Random initial state: uniform positions, uniformly drawn task buckets.
    pub fn new<R: Rng + ?Sized>(config: &FactoryConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let mut agents = Vec::with_capacity(config.agent_count);
        let mut pool: [u8; MACHINE_TYPES] = core::array::from_fn(|i| i as u8);
        for id in 0..config.agent_count {
            let row = rng.random_range(0..GRID_SIDE);
            let col = rng.random_range(0..GRID_SIDE);
            let tasks = (0..config.buckets_per_item)
                .map(|_| {
                    let (chosen, _) = pool.partial_shuffle(rng, config.tasks_per_bucket);
                    Bucket::from_types(chosen)
                })
                .collect();
            agents.push(AgentState {
                id,
                row,
                col,
                tasks,
                enqueued: false,
            });
        }
        Ok(Self::assemble(config, grid, agents))
    }

    /// Builds a state from explicit agents; positions and tasks are taken
    /// verbatim and every agent starts outside any queue.
    pub fn with_agents(config: &FactoryConfig, agents: Vec<(usize, usize, Vec<Vec<u8>>)>) -> Result<Self> {
        let mut config = config.clone();
        config.agent_count = agents.len();
        config.validate()?;
        let grid = config.grid()?;
        let mut built = Vec::with_capacity(agents.len());
        for (id, (row, col, buckets)) in agents.into_iter().enumerate() {
            if row >= GRID_SIDE || col >= GRID_SIDE {
                return Err(validation!("agent {id} placed outside the grid"));
            }
            if buckets.iter().flatten().any(|t| *t as usize >= MACHINE_TYPES) {
                return Err(validation!("agent {id} has an unknown machine type"));
            }
            let tasks = buckets
                .iter()
                .map(|b| Bucket::from_types(b))
                .filter(|b| !b.is_empty())
                .collect();
            built.push(AgentState {
                id,
                row,
                col,
                tasks,
                enqueued: false,
            });
        }
        Ok(Self::assemble(&config, grid, built))
    }

    fn assemble(config: &FactoryConfig, grid: MachineGrid, agents: Vec<AgentState>) -> Self {
        Self {
            grid,
            agents,
            queue: Vec::new(),
            t: 0,
            cost_total: 0.0,
            tpen_total: 0.0,
            dynamics: Dynamics {
                episode_length: config.episode_length,
                failure_prob: config.machine_failure_prob,
                processing_cost: config.processing_cost,
                step_penalty: config.step_penalty,
            },
        }
    }

    pub fn grid(&self) -> &MachineGrid {
        &self.grid
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn time(&self) -> u32 {
        self.t
    }

    pub fn episode_length(&self) -> u32 {
        self.dynamics.episode_length
    }

    pub fn cost_total(&self) -> f64 {
        self.cost_total
    }

    pub fn tpen_total(&self) -> f64 {
        self.tpen_total
    }

    /// Agent ids waiting at the machine in `(row, col)`, head first.
    pub fn queue_at(&self, row: usize, col: usize) -> impl Iterator<Item = usize> + '_ {
        let cell = (row * GRID_SIDE + col) as u8;
        self.queue
            .iter()
            .filter(move |e| e.cell == cell)
            .map(|e| e.agent as usize)
    }

    pub fn complete_count(&self) -> usize {
        self.agents.iter().filter(|a| a.is_complete()).count()
    }

    pub fn active_count(&self) -> usize {
        self.agents.len() - self.complete_count()
    }

    /// Ids of agents whose items are fully processed.
    pub fn complete_set(&self) -> impl Iterator<Item = usize> + '_ {
        self.agents.iter().filter(|a| a.is_complete()).map(|a| a.id)
    }

    /// Unprocessed tasks summed over all active agents.
    pub fn open_tasks(&self) -> usize {
        self.agents.iter().map(AgentState::remaining_tasks).sum()
    }

    /// `|complete| − tasks − cost − time penalty`
    pub fn score(&self) -> f64 {
        self.complete_count() as f64 - self.open_tasks() as f64 - self.cost_total - self.tpen_total
    }

    /// Fraction of items that are complete.
    pub fn completion_rate(&self) -> f64 {
        self.complete_count() as f64 / self.agents.len() as f64
    }

    pub fn is_terminal(&self) -> bool {
        self.t >= self.dynamics.episode_length || self.active_count() == 0
    }

    /// Deep copy used as a simulation sandbox.
    pub fn clone_for_simulation(&self) -> Self {
        self.clone()
    }

    /// Overrides the machine failure probability, e.g. to obtain a
    /// deterministic instance.
    pub fn set_failure_prob(&mut self, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(config_err!("failure probability {p} outside [0, 1]"));
        }
        self.dynamics.failure_prob = p;
        Ok(())
    }

    /// Advances the factory by one joint action.
    ///
    /// Phases run in a fixed order: agent actions (ascending id), machine
    /// processing (ascending cell), then the time penalty for every item still
    /// incomplete.
    pub fn step<R: RngCore + ?Sized>(&mut self, joint_action: &[FactoryAction], rng: &mut R) -> Result<StepOutcome> {
        if joint_action.len() != self.agents.len() {
            return Err(contract!(
                "joint action has {} entries for {} agents",
                joint_action.len(),
                self.agents.len()
            ));
        }
        if self.is_terminal() {
            return Err(contract!("step called on a terminal state"));
        }
        let before = self.score();

        for (agent, &action) in self.agents.iter_mut().zip(joint_action) {
            if agent.is_complete() || agent.enqueued {
                continue;
            }
            match action {
                FactoryAction::North => agent.row = agent.row.saturating_sub(1),
                FactoryAction::South => agent.row = (agent.row + 1).min(GRID_SIDE - 1),
                FactoryAction::West => agent.col = agent.col.saturating_sub(1),
                FactoryAction::East => agent.col = (agent.col + 1).min(GRID_SIDE - 1),
                FactoryAction::Enqueue => {
                    agent.enqueued = true;
                    self.queue.push(QueueEntry {
                        cell: agent.cell() as u8,
                        agent: agent.id as u16,
                    });
                }
                FactoryAction::NoOp => {}
            }
        }

        let machines = self.machine_phase(rng);

        let active = self.active_count();
        self.tpen_total += self.dynamics.step_penalty * active as f64;
        self.t += 1;

        Ok(StepOutcome {
            reward: self.score() - before,
            terminal: self.is_terminal(),
            machines,
        })
    }

    fn machine_phase<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> MachineReport {
        let mut report = MachineReport::default();
        if self.queue.is_empty() {
            return report;
        }
        let mut heads = [None::<usize>; CELLS];
        for (pos, entry) in self.queue.iter().enumerate() {
            let slot = &mut heads[entry.cell as usize];
            if slot.is_none() {
                *slot = Some(pos);
            }
        }
        let mut served = Vec::new();
        for (cell, head) in heads.iter().enumerate() {
            let Some(pos) = *head else { continue };
            report.attempts += 1;
            let failed = rng.random::<f64>() < self.dynamics.failure_prob;
            if failed {
                report.failures += 1;
                continue;
            }
            self.cost_total += self.dynamics.processing_cost;
            served.push(pos);
            let agent = &mut self.agents[self.queue[pos].agent as usize];
            agent.enqueued = false;
            let machine_type = self.grid.types[cell];
            if let Some(first) = agent.tasks.first_mut() {
                if first.contains(machine_type) {
                    first.remove(machine_type);
                    report.tasks_removed += 1;
                    if first.is_empty() {
                        agent.tasks.remove(0);
                    }
                }
            }
        }
        served.sort_unstable();
        for pos in served.into_iter().rev() {
            self.queue.remove(pos);
        }
        report
    }

    /// Encodes the state as 35 row-major 5×5 planes (plane-major layout).
    ///
    /// Plane 0 holds the machine type scaled by 1/14. Planes 1–4 count active
    /// agents per cell by (machine needed by first bucket?, enqueued?):
    /// needed & waiting, needed & enqueued, not needed & waiting, not needed &
    /// enqueued. Planes 5–19 and 20–34 count active agents whose first
    /// (second) bucket contains machine type `m`.
    pub fn encode_features(&self) -> FeaturePlanes {
        let mut planes = FeaturePlanes::zeros();
        self.encode_into(planes.as_mut_slice());
        planes
    }

    pub fn encode_into(&self, out: &mut [f64]) {
        assert_eq!(out.len(), FEATURE_LEN, "feature buffer has wrong length");
        out.fill(0.0);
        let scale = 1.0 / (MACHINE_TYPES - 1) as f64;
        for (cell, &t) in self.grid.types.iter().enumerate() {
            out[PLANE_MACHINE * CELLS + cell] = t as f64 * scale;
        }
        for agent in self.agents.iter().filter(|a| !a.is_complete()) {
            let cell = agent.cell();
            let machine_type = self.grid.types[cell];
            let needed = agent.tasks[0].contains(machine_type);
            let category = match (needed, agent.enqueued) {
                (true, false) => 0,
                (true, true) => 1,
                (false, false) => 2,
                (false, true) => 3,
            };
            out[(PLANE_AGENT_STATE + category) * CELLS + cell] += 1.0;
            for t in agent.tasks[0].types() {
                out[(PLANE_FIRST_BUCKET + t as usize) * CELLS + cell] += 1.0;
            }
            if let Some(second) = agent.tasks.get(1) {
                for t in second.types() {
                    out[(PLANE_SECOND_BUCKET + t as usize) * CELLS + cell] += 1.0;
                }
            }
        }
    }

    /// Checks the structural invariants; used by tests.
    pub fn check_invariants(&self) -> Result<()> {
        for agent in &self.agents {
            let slots = self.queue.iter().filter(|e| e.agent as usize == agent.id).count();
            let expected = usize::from(agent.enqueued);
            if slots != expected {
                return Err(validation!(
                    "agent {} enqueued={} but occupies {slots} queue slots",
                    agent.id,
                    agent.enqueued
                ));
            }
            if agent.enqueued {
                let entry = self.queue.iter().find(|e| e.agent as usize == agent.id).unwrap();
                if entry.cell as usize != agent.cell() {
                    return Err(validation!("agent {} queued away from its cell", agent.id));
                }
            }
            if agent.is_complete() && agent.enqueued {
                return Err(validation!("complete agent {} is enqueued", agent.id));
            }
            if agent.tasks.iter().any(|b| b.is_empty()) {
                return Err(validation!("agent {} holds an empty bucket", agent.id));
            }
            if agent.row >= GRID_SIDE || agent.col >= GRID_SIDE {
                return Err(validation!("agent {} off grid", agent.id));
            }
        }
        if self.t > self.dynamics.episode_length {
            return Err(validation!(
                "time {} beyond episode length {}",
                self.t,
                self.dynamics.episode_length
            ));
        }
        Ok(())
    }
}

impl GenerativeModel for FactoryState {
    fn agent_count(&self) -> usize {
        self.agents.len()
    }

    fn action_count(&self) -> usize {
        FactoryAction::ALL.len()
    }

    fn is_terminal(&self) -> bool {
        FactoryState::is_terminal(self)
    }

    fn step_joint(&mut self, joint_action: &[usize], rng: &mut dyn RngCore) -> Result<Transition> {
        let mut actions = Vec::with_capacity(joint_action.len());
        for &a in joint_action {
            actions.push(
                FactoryAction::from_index(a).ok_or_else(|| contract!("action index {a} out of range"))?,
            );
        }
        let outcome = self.step(&actions, rng)?;
        Ok(Transition {
            reward: outcome.reward,
            terminal: outcome.terminal,
        })
    }
}

/// The 5×5×35 feature stack, stored plane-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlanes(Vec<f64>);

impl FeaturePlanes {
    pub fn zeros() -> Self {
        Self(vec![0.0; FEATURE_LEN])
    }

    pub fn get(&self, plane: usize, row: usize, col: usize) -> f64 {
        self.0[plane * CELLS + row * GRID_SIDE + col]
    }

    pub fn plane(&self, plane: usize) -> &[f64] {
        &self.0[plane * CELLS..(plane + 1) * CELLS]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|v| *v as f32).collect()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Renders the layout as five lines of five integers.
pub fn format_layout(grid: &MachineGrid) -> alloc::string::String {
    let mut out = alloc::string::String::new();
    for row in 0..GRID_SIDE {
        let line: Vec<alloc::string::String> = (0..GRID_SIDE)
            .map(|col| format!("{:>2}", grid.machine_type(row, col)))
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
