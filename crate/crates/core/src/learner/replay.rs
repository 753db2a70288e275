use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;

use crate::mmdp::ExperienceSample;

/// Default replay memory size.
pub const REPLAY_CAPACITY: usize = 10_000;

/// FIFO experience memory with uniform minibatch sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    samples: VecDeque<ExperienceSample>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            samples: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends a sample, evicting the oldest one when full.
    pub fn push(&mut self, sample: ExperienceSample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }

    pub fn iter(&self) -> impl Iterator<Item = &ExperienceSample> {
        self.samples.iter()
    }

    /// `count` samples drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<&ExperienceSample> {
        if self.samples.is_empty() {
            return Vec::new();
        }
        (0..count)
            .map(|_| &self.samples[rng.random_range(0..self.samples.len())])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(tag: f64) -> ExperienceSample {
        ExperienceSample {
            state_features: vec![tag as f32],
            joint_action: vec![0],
            next_state_features: vec![0.0],
            reward: tag,
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut replay = ReplayBuffer::new(REPLAY_CAPACITY);
        for k in 0..=REPLAY_CAPACITY {
            replay.push(sample(k as f64));
        }
        assert_eq!(replay.len(), REPLAY_CAPACITY);
        assert!(replay.iter().all(|s| s.reward != 0.0));
        assert_eq!(replay.iter().next().unwrap().reward, 1.0);
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let mut replay = ReplayBuffer::new(4);
        for k in 0..4 {
            replay.push(sample(k as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 4];
        for s in replay.sample(40_000, &mut rng) {
            counts[s.reward as usize] += 1;
        }
        assert!(counts.iter().all(|&c| (9_400..=10_600).contains(&c)), "{counts:?}");
    }
}
