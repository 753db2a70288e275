//! Open-loop plan distributions: stacks of multi-armed bandits.
//!
//! Each bandit keeps, per arm, a sliding window of the most recent returns
//! observed after pulling that arm. Arms are chosen by Gaussian Thompson
//! sampling: the mean of each arm is drawn from its posterior under a normal
//! model with unknown mean and variance and a Jeffreys prior, which is a
//! location-scale Student-t with `k − 1` degrees of freedom.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Window size of every arm's return buffer.
pub const WINDOW: usize = 10;

/// FIFO of the most recent local returns of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingWindowBuffer {
    capacity: usize,
    values: VecDeque<f64>,
}

impl SlidingWindowBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            capacity,
            values: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn mean(&self) -> Option<f64> {
        if self.values.is_empty() {
            return None;
        }
        Some(self.values.iter().sum::<f64>() / self.values.len() as f64)
    }

    /// Sample standard deviation (`k − 1` denominator).
    pub fn std_dev(&self) -> Option<f64> {
        let k = self.values.len();
        if k < 2 {
            return None;
        }
        let mean = self.mean()?;
        let ss: f64 = self.values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Some(libm::sqrt(ss / (k - 1) as f64))
    }
}

/// One bandit: a return window per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mab {
    arms: Vec<SlidingWindowBuffer>,
}

impl Mab {
    pub fn new(arm_count: usize) -> Self {
        Self::with_window(arm_count, WINDOW)
    }

    pub fn with_window(arm_count: usize, window: usize) -> Self {
        assert!(arm_count > 0, "bandit needs at least one arm");
        Self {
            arms: (0..arm_count).map(|_| SlidingWindowBuffer::new(window)).collect(),
        }
    }

    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }

    pub fn arm(&self, index: usize) -> &SlidingWindowBuffer {
        &self.arms[index]
    }

    pub fn push(&mut self, arm: usize, value: f64) {
        self.arms[arm].push(value);
    }

    /// Thompson sampling over the arms.
    ///
    /// While some arm has fewer than two observations, one of the least
    /// observed arms is chosen uniformly at random. Otherwise every arm draws
    /// `mean + t_{k−1} · sd / √k` and the largest draw wins (lowest index on
    /// ties).
    pub fn thompson_select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.arms.len() == 1 {
            return 0;
        }
        let fewest = self.arms.iter().map(SlidingWindowBuffer::len).min().unwrap_or(0);
        if fewest < 2 {
            let candidates = self.arms.iter().filter(|a| a.len() == fewest).count();
            let pick = rng.random_range(0..candidates);
            return self
                .arms
                .iter()
                .enumerate()
                .filter(|(_, a)| a.len() == fewest)
                .nth(pick)
                .map(|(i, _)| i)
                .expect("pick is within candidate count");
        }
        let mut best = 0;
        let mut best_draw = f64::NEG_INFINITY;
        for (i, arm) in self.arms.iter().enumerate() {
            let k = arm.len();
            let mean = arm.mean().expect("arm has observations");
            let sd = arm.std_dev().expect("arm has two observations");
            let t = StudentT::new((k - 1) as f64)
                .expect("degrees of freedom are positive")
                .sample(rng);
            let draw = mean + t * sd / libm::sqrt(k as f64);
            if draw > best_draw {
                best_draw = draw;
                best = i;
            }
        }
        best
    }

    /// Arm with the highest window mean; unobserved arms rank last, ties go to
    /// the lowest index.
    pub fn greedy_arm(&self) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, arm) in self.arms.iter().enumerate() {
            if let Some(mean) = arm.mean() {
                if best.is_none_or(|(_, m)| mean > m) {
                    best = Some((i, mean));
                }
            }
        }
        best.map(|(i, _)| i)
            .ok_or_else(|| contract!("greedy action requested from a bandit without observations"))
    }
}

/// How rollout returns are written back into a stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// The whole plan's return goes into every depth.
    #[default]
    FullReturn,
    /// Depth `d` receives the discounted return from step `d` onward.
    ReturnToGo,
}

/// Sequence of `h` bandits; sampling one arm per depth yields a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabStack {
    bandits: Vec<Mab>,
}

impl MabStack {
    pub fn new(depth: usize, arm_count: usize) -> Self {
        assert!(depth > 0, "stack depth must be positive");
        Self {
            bandits: (0..depth).map(|_| Mab::new(arm_count)).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.bandits.len()
    }

    pub fn bandit(&self, depth: usize) -> &Mab {
        &self.bandits[depth]
    }

    pub fn sample_plan<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.bandits.iter().map(|b| b.thompson_select(rng)).collect()
    }

    /// Pushes `local_return` into the window of the chosen arm at every depth.
    pub fn update(&mut self, plan: &[usize], local_return: f64) -> Result<()> {
        self.check_plan(plan)?;
        for (bandit, &arm) in self.bandits.iter_mut().zip(plan) {
            bandit.push(arm, local_return);
        }
        Ok(())
    }

    /// Pushes `returns[d]` into depth `d`'s window for arm `plan[d]`.
    pub fn update_per_depth(&mut self, plan: &[usize], returns: &[f64]) -> Result<()> {
        self.check_plan(plan)?;
        if returns.len() != self.depth() {
            return Err(contract!(
                "{} per-depth returns for depth {}",
                returns.len(),
                self.depth()
            ));
        }
        for ((bandit, &arm), &g) in self.bandits.iter_mut().zip(plan).zip(returns) {
            bandit.push(arm, g);
        }
        Ok(())
    }

    pub fn greedy_action(&self) -> Result<usize> {
        self.bandits[0].greedy_arm()
    }

    fn check_plan(&self, plan: &[usize]) -> Result<()> {
        if plan.len() != self.depth() {
            return Err(contract!(
                "plan of length {} for stack of depth {}",
                plan.len(),
                self.depth()
            ));
        }
        if let Some(&bad) = plan.iter().find(|&&a| a >= self.bandits[0].arm_count()) {
            return Err(Error::Contract(alloc::format!("arm {bad} out of range")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn filled(values: &[&[f64]]) -> Mab {
        let mut mab = Mab::new(values.len());
        for (arm, vs) in values.iter().enumerate() {
            for &v in *vs {
                mab.push(arm, v);
            }
        }
        mab
    }

    #[test]
    fn single_arm_always_zero() {
        let mab = Mab::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..100).all(|_| mab.thompson_select(&mut rng) == 0));
    }

    #[test]
    fn empty_arm_selected_first() {
        let mab = filled(&[&[], &[1.0, 2.0, 3.0, 4.0, 5.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..100).all(|_| mab.thompson_select(&mut rng) == 0));
    }

    #[test]
    fn clearly_better_arm_dominates() {
        let mab = filled(&[&[10.0; 5], &[0.0; 5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let wins = (0..10_000).filter(|_| mab.thompson_select(&mut rng) == 0).count();
        assert!(wins >= 9_900, "{wins}");
    }

    #[test]
    fn window_keeps_last_ten() {
        let mut stack = MabStack::new(2, 6);
        for k in 0..11 {
            stack.update(&[3, 1], k as f64).unwrap();
        }
        let arm = stack.bandit(0).arm(3);
        assert_eq!(arm.len(), 10);
        assert_eq!(arm.values().collect::<Vec<_>>(), (1..11).map(|k| k as f64).collect::<Vec<_>>());
    }

    #[test]
    fn update_touches_one_arm_per_depth() {
        let mut stack = MabStack::new(3, 6);
        stack.update(&[0, 5, 2], 1.5).unwrap();
        for d in 0..3 {
            for a in 0..6 {
                let expected = usize::from([0, 5, 2][d] == a);
                assert_eq!(stack.bandit(d).arm(a).len(), expected);
            }
        }
        assert!(stack.update(&[0, 1], 1.0).is_err());
        assert!(stack.update(&[0, 1, 6], 1.0).is_err());
    }

    #[test]
    fn greedy_action_rules() {
        let mab = filled(&[&[0.1], &[0.9], &[0.3], &[], &[], &[]]);
        assert_eq!(mab.greedy_arm().unwrap(), 1);
        let tie = filled(&[&[0.0], &[], &[2.0], &[1.0], &[2.0], &[]]);
        assert_eq!(tie.greedy_arm().unwrap(), 2);
        let empty = Mab::new(6);
        assert!(matches!(empty.greedy_arm(), Err(Error::Contract(_))));
        let negative = filled(&[&[], &[-5.0]]);
        assert_eq!(negative.greedy_arm().unwrap(), 1);
    }

    #[test]
    fn degenerate_variance_draw_equals_mean() {
        let mab = filled(&[&[1.0, 1.0], &[0.5, 0.5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..200).all(|_| mab.thompson_select(&mut rng) == 0));
    }

    #[test]
    fn per_depth_update() {
        let mut stack = MabStack::new(2, 6);
        stack.update_per_depth(&[1, 2], &[3.0, 2.0]).unwrap();
        assert_eq!(stack.bandit(0).arm(1).mean(), Some(3.0));
        assert_eq!(stack.bandit(1).arm(2).mean(), Some(2.0));
        assert!(stack.update_per_depth(&[1, 2], &[3.0]).is_err());
    }

    #[test]
    fn stationary_two_arm_bandit() {
        let mut mab = Mab::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut good = 0;
        for _ in 0..200 {
            let arm = mab.thompson_select(&mut rng);
            good += usize::from(arm == 0);
            mab.push(arm, if arm == 0 { 1.0 } else { 0.0 });
        }
        assert!(good >= 160);
    }
}
