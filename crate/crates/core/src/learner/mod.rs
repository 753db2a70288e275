//! Online value-function approximation.
//!
//! TD(0) regression with a periodically synchronized target network, minibatch
//! ADAM updates and a FIFO replay memory.

mod adam;
mod net;
mod replay;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_update, AdamConfig, AdamState};
pub use net::{Activation, ArchitectureDescriptor, ForwardCache, InputShape, LayerSpec, NetPreset, ValueNet};
pub use replay::{ReplayBuffer, REPLAY_CAPACITY};

use crate::error::{config_err, contract, Error, Result};
use crate::factory::{FactoryState, FEATURE_LEN};
use crate::mmdp::ExperienceSample;
use crate::planner::ValueOracle;

/// Hyperparameters of value learning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub minibatch_size: usize,
    pub replay_capacity: usize,
    /// Gradient steps between target synchronizations.
    pub target_sync_period: u64,
    /// Replay size required before any training happens.
    pub warmup_samples: usize,
    pub gradient_steps_per_env_step: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            gamma: 0.95,
            minibatch_size: 64,
            replay_capacity: REPLAY_CAPACITY,
            target_sync_period: 5000,
            warmup_samples: 5000,
            gradient_steps_per_env_step: 1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(config_err!("{name} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(config_err!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(config_err!("moment decay rates must lie in [0, 1)"));
        }
        if self.minibatch_size == 0 || self.replay_capacity == 0 || self.target_sync_period == 0 {
            return Err(config_err!(
                "minibatch_size, replay_capacity and target_sync_period must be positive"
            ));
        }
        if self.minibatch_size > self.replay_capacity {
            return Err(config_err!("minibatch_size exceeds replay capacity"));
        }
        if self.warmup_samples > self.replay_capacity {
            return Err(config_err!("warmup_samples exceeds replay capacity"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Value network plus its optimizer state and training schedule.
#[derive(Debug, Clone)]
pub struct Learner {
    net: ValueNet,
    adam: AdamState,
    cfg: TrainerConfig,
    gradient_steps: u64,
    syncs: u64,
    cache: ForwardCache,
    grads: Vec<f64>,
    input: Vec<f64>,
}

impl Learner {
    pub fn new(net: ValueNet, cfg: TrainerConfig) -> Result<Self> {
        cfg.validate()?;
        let count = net.parameter_count();
        let input = vec![0.0; net.input_len()];
        Ok(Self {
            net,
            adam: AdamState::new(count),
            cfg,
            gradient_steps: 0,
            syncs: 0,
            cache: ForwardCache::default(),
            grads: vec![0.0; count],
            input,
        })
    }

    /// Restores a learner with explicit optimizer state and counters.
    pub fn from_parts(net: ValueNet, adam: AdamState, cfg: TrainerConfig, gradient_steps: u64) -> Result<Self> {
        if adam.m.len() != net.parameter_count() || adam.v.len() != net.parameter_count() {
            return Err(contract!("optimizer moments do not match the network"));
        }
        let mut learner = Self::new(net, cfg)?;
        learner.adam = adam;
        learner.gradient_steps = gradient_steps;
        learner.syncs = gradient_steps / cfg.target_sync_period;
        Ok(learner)
    }

    pub fn net(&self) -> &ValueNet {
        &self.net
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    /// Number of target synchronizations performed so far.
    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    pub fn predict(&self, features: &[f64], use_target: bool) -> Result<f64> {
        self.net.predict(features, use_target)
    }

    pub fn sync_target(&mut self) {
        self.net.sync_target();
        self.syncs += 1;
    }

    /// One ADAM step on the mean squared TD error of `batch`.
    ///
    /// Targets are `r + γ·V_θ⁻(s')` (just `r` for terminal samples) and are
    /// held fixed. Returns the loss before the update. The target network is
    /// synchronized after every `target_sync_period`-th step.
    pub fn train_minibatch(&mut self, batch: &[&ExperienceSample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(contract!("empty minibatch"));
        }
        let input_len = self.net.input_len();
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        let scale = 2.0 / batch.len() as f64;
        let mut loss = 0.0;
        for sample in batch {
            if sample.state_features.len() != input_len || sample.next_state_features.len() != input_len {
                return Err(contract!("sample features do not match the network input"));
            }
            let target = if sample.terminal {
                sample.reward
            } else {
                widen(&sample.next_state_features, &mut self.input);
                sample.reward + self.cfg.gamma * self.net.forward_with(self.net.target_params(), &self.input)
            };
            widen(&sample.state_features, &mut self.input);
            let prediction = self.net.forward_cached(&self.input, &mut self.cache);
            let err = prediction - target;
            loss += err * err;
            self.net.backward(&mut self.cache, scale * err, &mut self.grads);
        }
        loss /= batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Training(alloc::format!("loss became {loss}")));
        }
        adam_update(self.net.params_mut(), &self.grads, &mut self.adam, &self.cfg.adam())?;
        self.gradient_steps += 1;
        if self.gradient_steps.is_multiple_of(self.cfg.target_sync_period) {
            self.sync_target();
        }
        Ok(loss)
    }

    /// Trains on uniformly drawn minibatches once the replay holds at least
    /// `warmup_samples`; returns the mean loss of the steps taken.
    pub fn refine<R: Rng + ?Sized>(&mut self, replay: &ReplayBuffer, rng: &mut R) -> Result<Option<f64>> {
        if replay.len() < self.cfg.warmup_samples.max(1) {
            return Ok(None);
        }
        let steps = self.cfg.gradient_steps_per_env_step;
        if steps == 0 {
            return Ok(None);
        }
        let mut total = 0.0;
        for _ in 0..steps {
            let batch = replay.sample(self.cfg.minibatch_size, rng);
            total += self.train_minibatch(&batch)?;
        }
        Ok(Some(total / steps as f64))
    }
}

fn widen(src: &[f32], dst: &mut Vec<f64>) {
    dst.clear();
    dst.extend(src.iter().map(|&v| v as f64));
}

/// Plans against the online network's estimate of a factory state.
#[derive(Debug, Clone, Copy)]
pub struct NetOracle<'a> {
    net: &'a ValueNet,
}

impl<'a> NetOracle<'a> {
    pub fn new(net: &'a ValueNet) -> Result<Self> {
        if net.input_len() != FEATURE_LEN {
            return Err(contract!(
                "network input {} does not match factory features {FEATURE_LEN}",
                net.input_len()
            ));
        }
        Ok(Self { net })
    }
}

impl ValueOracle<FactoryState> for NetOracle<'_> {
    fn evaluate(&self, state: &FactoryState) -> f64 {
        let features = state.encode_features();
        self.net.forward_with(self.net.params(), features.as_slice())
    }
}

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters skipped because the perturbation crossed an ELU kink.
    pub skipped: usize,
}

/// Denominator floor of the relative error.
const GRADCHECK_FLOOR: f64 = 1e-6;

/// Compares `∂V/∂θ` from backpropagation with central differences
/// `(V(θ + ε) − V(θ − ε)) / 2ε` for every parameter.
///
/// The relative error is `|a − n| / max(|a|, |n|, 1e-6)`. Parameters whose
/// perturbation flips the sign of any ELU pre-activation are excluded.
pub fn gradient_check(net: &ValueNet, input: &[f64], perturbation: f64) -> Result<GradCheckReport> {
    net.check_input(input)?;
    if perturbation.is_nan() || perturbation <= 0.0 {
        return Err(config_err!("perturbation must be positive"));
    }
    let mut cache = ForwardCache::default();
    let mut analytic = vec![0.0; net.parameter_count()];
    net.forward_cached(input, &mut cache);
    net.backward(&mut cache, 1.0, &mut analytic);

    let base_signs: Vec<bool> = net
        .elu_pre_activations(net.params(), input, &mut cache)
        .iter()
        .map(|z| *z > 0.0)
        .collect();
    let mut params = net.params().to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for i in 0..params.len() {
        let original = params[i];
        params[i] = original + perturbation;
        let plus = net.forward_with(&params, input);
        let crosses_plus = kink_crossed(net, &params, input, &base_signs, &mut cache);
        params[i] = original - perturbation;
        let minus = net.forward_with(&params, input);
        let crosses_minus = kink_crossed(net, &params, input, &base_signs, &mut cache);
        params[i] = original;
        if crosses_plus || crosses_minus {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * perturbation);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        report.max_relative_error = report.max_relative_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}

fn kink_crossed(net: &ValueNet, params: &[f64], input: &[f64], base: &[bool], cache: &mut ForwardCache) -> bool {
    net.elu_pre_activations(params, input, cache)
        .iter()
        .zip(base)
        .any(|(z, positive)| (*z > 0.0) != *positive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn features(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
        (0..len)
            .map(|i| if i % 4 == 0 { rng.random::<f32>() } else { 0.0 })
            .collect()
    }

    #[test]
    fn linear_gradient_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = ValueNet::new(ArchitectureDescriptor::linear(6), &mut rng).unwrap();
        let input: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let report = gradient_check(&net, &input, 1e-5).unwrap();
        assert!(report.max_relative_error <= 1e-8, "{report:?}");
        assert_eq!(report.checked, 7);
    }

    #[test]
    fn empty_batch_rejected() {
        let net = ValueNet::zeros(ArchitectureDescriptor::linear(2)).unwrap();
        let mut learner = Learner::new(net, TrainerConfig::default()).unwrap();
        assert!(matches!(learner.train_minibatch(&[]), Err(Error::Contract(_))));
    }

    #[test]
    fn terminal_targets_do_not_bootstrap() {
        // target net predicts 10 everywhere; terminal sample target stays r
        let net = ValueNet::from_parts(ArchitectureDescriptor::linear(1), vec![0.0, 0.0], vec![0.0, 10.0]).unwrap();
        let mut learner = Learner::new(net, TrainerConfig::default()).unwrap();
        let terminal = ExperienceSample {
            state_features: vec![1.0],
            joint_action: vec![0],
            next_state_features: vec![1.0],
            reward: 2.0,
            terminal: true,
        };
        let loss = learner.train_minibatch(&[&terminal]).unwrap();
        assert_eq!(loss, 4.0);
        let mut open = terminal.clone();
        open.terminal = false;
        let net = ValueNet::from_parts(ArchitectureDescriptor::linear(1), vec![0.0, 0.0], vec![0.0, 10.0]).unwrap();
        let mut learner = Learner::new(net, TrainerConfig::default()).unwrap();
        let loss = learner.train_minibatch(&[&open]).unwrap();
        assert!((loss - (2.0 + 0.95 * 10.0) * (2.0 + 0.95 * 10.0)).abs() < 1e-9);
    }

    #[test]
    fn matching_targets_give_zero_loss() {
        let net = ValueNet::zeros(ArchitectureDescriptor::linear(2)).unwrap();
        let mut learner = Learner::new(net, TrainerConfig::default()).unwrap();
        let sample = ExperienceSample {
            state_features: vec![1.0, 0.0],
            joint_action: vec![0],
            next_state_features: vec![0.0, 1.0],
            reward: 0.0,
            terminal: false,
        };
        assert_eq!(learner.train_minibatch(&[&sample]).unwrap(), 0.0);
        assert!(learner.net().params().iter().all(|p| *p == 0.0));
    }

    #[test]
    fn target_sync_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = ValueNet::new(ArchitectureDescriptor::linear(3), &mut rng).unwrap();
        let cfg = TrainerConfig {
            target_sync_period: 5,
            learning_rate: 0.05,
            ..TrainerConfig::default()
        };
        let mut learner = Learner::new(net, cfg).unwrap();
        let sample = ExperienceSample {
            state_features: vec![1.0, 0.5, 0.0],
            joint_action: vec![0],
            next_state_features: vec![0.0, 1.0, 1.0],
            reward: 1.0,
            terminal: false,
        };
        let frozen = learner.net().target_params().to_vec();
        for step in 1..=12u64 {
            learner.train_minibatch(&[&sample]).unwrap();
            assert_eq!(learner.syncs(), step / 5);
            if step % 5 == 0 {
                assert_eq!(learner.net().target_params(), learner.net().params());
            } else if step < 5 {
                assert_eq!(learner.net().target_params(), &frozen[..]);
                assert_ne!(learner.net().params(), &frozen[..]);
            }
        }
    }

    #[test]
    fn refine_waits_for_warmup() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ValueNet::new(ArchitectureDescriptor::linear(2), &mut rng).unwrap();
        let cfg = TrainerConfig {
            warmup_samples: 3,
            minibatch_size: 2,
            ..TrainerConfig::default()
        };
        let mut learner = Learner::new(net, cfg).unwrap();
        let mut replay = ReplayBuffer::new(10);
        let sample = ExperienceSample {
            state_features: features(&mut rng, 2),
            joint_action: vec![1],
            next_state_features: features(&mut rng, 2),
            reward: 0.5,
            terminal: false,
        };
        for k in 0..3 {
            let out = learner.refine(&replay, &mut rng).unwrap();
            assert_eq!(out.is_some(), k >= 3);
            replay.push(sample.clone());
        }
        assert!(learner.refine(&replay, &mut rng).unwrap().is_some());
        assert_eq!(learner.gradient_steps(), 1);
    }

    #[test]
    fn invalid_trainer_config() {
        let bad = TrainerConfig {
            minibatch_size: 20_000,
            ..TrainerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainerConfig {
            learning_rate: 0.0,
            ..TrainerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
