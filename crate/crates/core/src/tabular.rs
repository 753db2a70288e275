//! Small explicit MDPs with exact solvers.
//!
//! Nothing here runs inside the planning loop. These are the reference
//! solutions the learner and planners are checked against, and what the CLI's
//! `oracle` subcommand exposes.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, validation, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-9;
const MAX_SWEEPS: usize = 1_000_000;

/// Explicit `⟨S, A, P, R⟩` with dense tables.
///
/// `transitions[(s * actions + a) * states + s']` is `P(s' | s, a)` and
/// `rewards[s * actions + a]` is `R(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub states: usize,
    pub actions: usize,
    pub transitions: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl TabularMdp {
    pub fn new(states: usize, actions: usize, transitions: Vec<f64>, rewards: Vec<f64>) -> Result<Self> {
        let mdp = Self {
            states,
            actions,
            transitions,
            rewards,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Random dense MDP with rewards uniform in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, rng: &mut R) -> Self {
        let mut transitions = Vec::with_capacity(states * actions * states);
        for _ in 0..states * actions {
            let row: Vec<f64> = (0..states).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = row.iter().sum();
            transitions.extend(row.into_iter().map(|p| p / total));
        }
        let rewards = (0..states * actions)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        Self {
            states,
            actions,
            transitions,
            rewards,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.actions == 0 {
            return Err(validation!("MDP needs at least one state and one action"));
        }
        if self.transitions.len() != self.states * self.actions * self.states {
            return Err(validation!(
                "transition table has {} entries, expected {}",
                self.transitions.len(),
                self.states * self.actions * self.states
            ));
        }
        if self.rewards.len() != self.states * self.actions {
            return Err(validation!(
                "reward table has {} entries, expected {}",
                self.rewards.len(),
                self.states * self.actions
            ));
        }
        for s in 0..self.states {
            for a in 0..self.actions {
                let row = self.row(s, a);
                if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                    return Err(validation!("P(.|{s},{a}) has invalid entry {p}"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(validation!("P(.|{s},{a}) sums to {sum}"));
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.transitions[start..start + self.states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.actions + a]
    }

    /// `R(s,a) + γ Σ_s' P(s'|s,a) V(s')`
    pub fn q_value(&self, values: &[f64], gamma: f64, s: usize, a: usize) -> f64 {
        let expected: f64 = self
            .row(s, a)
            .iter()
            .zip(values)
            .map(|(p, v)| p * v)
            .sum();
        self.reward(s, a) + gamma * expected
    }

    /// One application of the Bellman optimality operator.
    pub fn bellman_backup(&self, values: &[f64], gamma: f64) -> Vec<f64> {
        (0..self.states)
            .map(|s| {
                (0..self.actions)
                    .map(|a| self.q_value(values, gamma, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Max-norm distance between `values` and its Bellman backup.
    pub fn bellman_residual(&self, values: &[f64], gamma: f64) -> f64 {
        self.bellman_backup(values, gamma)
            .iter()
            .zip(values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Greedy deterministic policy with respect to `values` (lowest action on ties).
    pub fn greedy_policy(&self, values: &[f64], gamma: f64) -> Vec<usize> {
        (0..self.states)
            .map(|s| {
                let mut best = 0;
                let mut best_q = f64::NEG_INFINITY;
                for a in 0..self.actions {
                    let q = self.q_value(values, gamma, s, a);
                    if q > best_q {
                        best_q = q;
                        best = a;
                    }
                }
                best
            })
            .collect()
    }

    /// Exact value of a stochastic policy, `policy[s * actions + a] = π(a|s)`,
    /// by solving `(I − γ P_π) V = R_π`.
    pub fn evaluate_policy(&self, policy: &[f64], gamma: f64) -> Result<Vec<f64>> {
        if policy.len() != self.states * self.actions {
            return Err(validation!("policy table has wrong size"));
        }
        let n = self.states;
        let mut matrix = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for s in 0..n {
            matrix[s * n + s] += 1.0;
            for a in 0..self.actions {
                let pi = policy[s * self.actions + a];
                if pi == 0.0 {
                    continue;
                }
                rhs[s] += pi * self.reward(s, a);
                for (next, p) in self.row(s, a).iter().enumerate() {
                    matrix[s * n + next] -= gamma * pi * p;
                }
            }
        }
        solve_linear(matrix, rhs, n)
    }

    /// Exact value of a deterministic policy.
    pub fn evaluate_deterministic(&self, policy: &[usize], gamma: f64) -> Result<Vec<f64>> {
        let mut table = vec![0.0; self.states * self.actions];
        for (s, &a) in policy.iter().enumerate() {
            table[s * self.actions + a] = 1.0;
        }
        self.evaluate_policy(&table, gamma)
    }
}

/// Optimal state values by repeated Bellman backups.
///
/// The returned table has a Bellman residual no larger than `tolerance`.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tolerance: f64) -> Result<Vec<f64>> {
    mdp.validate()?;
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(config_err!("tolerance must be positive"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(config_err!("discount factor {gamma} outside [0, 1]"));
    }
    let mut values = vec![0.0; mdp.states];
    for _ in 0..MAX_SWEEPS {
        let next = mdp.bellman_backup(&values, gamma);
        let delta = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if delta <= tolerance {
            // with γ < 1 the residual of the new table is at most γ·delta
            if mdp.bellman_residual(&values, gamma) <= tolerance {
                return Ok(values);
            }
        }
    }
    Err(validation!("value iteration did not converge in {MAX_SWEEPS} sweeps"))
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap_or(col);
        if a[pivot * n + col].abs() < 1e-14 {
            return Err(validation!("singular policy-evaluation system"));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * n + row];
    }
    Ok(x)
}
