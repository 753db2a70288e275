use evade_core::episode::{run_episode, warmup_replay, EpisodeConfig, EpisodeId};
use evade_core::factory::{FactoryConfig, FactoryState};
use evade_core::learner::{
    gradient_check, ArchitectureDescriptor, InputShape, LayerSpec, Activation, Learner, ReplayBuffer, TrainerConfig,
    ValueNet,
};
use evade_core::mmdp::ExperienceSample;
use evade_core::planner::{Algorithm, PlannerConfig};
use evade_core::tabular::TabularMdp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn baseline_cfg(agents: usize, budget: usize) -> EpisodeConfig {
    EpisodeConfig {
        algorithm: Algorithm::Dice,
        planner: PlannerConfig::new(budget, 4, 0.95).unwrap(),
        factory: FactoryConfig::with_agents(agents),
        evade: false,
    }
}

#[test]
fn desk_network_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let net = ValueNet::new(ArchitectureDescriptor::desk(), &mut rng).unwrap();
    let state = FactoryState::new(&FactoryConfig::default(), &mut rng).unwrap();
    let report = gradient_check(&net, state.encode_features().as_slice(), 1e-5).unwrap();
    assert!(report.max_relative_error <= 1e-4, "{report:?}");
    assert!(report.checked > report.skipped);
}

#[test]
fn linear_network_gradients_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = ValueNet::new(ArchitectureDescriptor::linear(12), &mut rng).unwrap();
    let input: Vec<f64> = (0..12).map(|i| (i as f64 - 5.5) / 3.0).collect();
    let report = gradient_check(&net, &input, 1e-5).unwrap();
    assert!(report.max_relative_error <= 1e-8, "{report:?}");
    assert_eq!(report.skipped, 0);
}

#[test]
fn repeated_updates_on_one_batch_shrink_the_loss() {
    let cfg = baseline_cfg(4, 48);
    let mut replay = ReplayBuffer::new(200);
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    for e in 0..3 {
        run_episode(EpisodeId::main(4, 0, e), &cfg, None, &mut replay, &mut unused).unwrap();
    }
    let batch: Vec<&ExperienceSample> = replay.iter().take(64).collect();
    assert_eq!(batch.len(), 64);
    let net = ValueNet::new(ArchitectureDescriptor::desk(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let mut learner = Learner::new(net, TrainerConfig::default()).unwrap();
    let losses: Vec<f64> = (0..100).map(|_| learner.train_minibatch(&batch).unwrap()).collect();
    let last = learner.train_minibatch(&batch).unwrap();
    assert!(losses[0] >= 10.0 * last, "{} -> {last}", losses[0]);
}

/// A 5-state, 2-action MDP whose transition probabilities are multiples of
/// 0.1, so a dataset with exactly proportional counts reproduces it.
fn toy_mdp() -> TabularMdp {
    let rows: [[[u32; 5]; 2]; 5] = [
        [[0, 5, 5, 0, 0], [2, 0, 0, 8, 0]],
        [[1, 1, 1, 1, 6], [0, 0, 10, 0, 0]],
        [[3, 0, 0, 3, 4], [0, 7, 0, 0, 3]],
        [[10, 0, 0, 0, 0], [0, 2, 2, 2, 4]],
        [[0, 0, 5, 5, 0], [5, 0, 0, 0, 5]],
    ];
    let transitions = rows.iter().flatten().flatten().map(|&c| c as f64 / 10.0).collect();
    let rewards = vec![1.0, 0.0, -0.5, 2.0, 0.0, 0.3, 1.5, -1.0, 0.0, 0.8];
    TabularMdp::new(5, 2, transitions, rewards).unwrap()
}

#[test]
fn tabular_td_learner_reaches_the_policy_evaluation_fixed_point() {
    let gamma = 0.9;
    let mdp = toy_mdp();
    let uniform = vec![0.5; 10];
    let exact = mdp.evaluate_policy(&uniform, gamma).unwrap();

    let one_hot = |s: usize| (0..5).map(|i| if i == s { 1.0f32 } else { 0.0 }).collect::<Vec<_>>();
    let mut data = Vec::new();
    for s in 0..5 {
        for a in 0..2 {
            for (next, &p) in mdp.row(s, a).iter().enumerate() {
                for _ in 0..(p * 10.0).round() as usize {
                    data.push(ExperienceSample {
                        state_features: one_hot(s),
                        joint_action: vec![a as u8],
                        next_state_features: one_hot(next),
                        reward: mdp.reward(s, a),
                        terminal: false,
                    });
                }
            }
        }
    }
    let batch: Vec<&ExperienceSample> = data.iter().collect();
    let cfg = TrainerConfig {
        gamma,
        learning_rate: 0.01,
        minibatch_size: batch.len(),
        target_sync_period: 100,
        ..TrainerConfig::default()
    };
    let mut learner = Learner::new(ValueNet::zeros(ArchitectureDescriptor::linear(5)).unwrap(), cfg).unwrap();
    for _ in 0..50_000 {
        learner.train_minibatch(&batch).unwrap();
    }
    let learned: Vec<f64> = (0..5)
        .map(|s| {
            let x: Vec<f64> = one_hot(s).iter().map(|&v| v as f64).collect();
            learner.predict(&x, false).unwrap()
        })
        .collect();
    let err = learned.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 0.01, "learned {learned:?} exact {exact:?}");
}

#[test]
fn fixed_targets_give_monotone_loss_for_a_linear_model() {
    let data: Vec<ExperienceSample> = (0..8)
        .map(|i| ExperienceSample {
            state_features: (0..4).map(|j| ((i * 3 + j) % 5) as f32 / 4.0).collect(),
            joint_action: vec![0],
            next_state_features: vec![0.0; 4],
            reward: i as f64 * 0.25 - 1.0,
            terminal: i % 3 == 0,
        })
        .collect();
    let batch: Vec<&ExperienceSample> = data.iter().collect();
    let cfg = TrainerConfig {
        learning_rate: 1e-3,
        minibatch_size: batch.len(),
        target_sync_period: u64::MAX,
        ..TrainerConfig::default()
    };
    let net = ValueNet::new(ArchitectureDescriptor::linear(4), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut learner = Learner::new(net, cfg).unwrap();
    let mut previous = f64::INFINITY;
    for _ in 0..500 {
        let loss = learner.train_minibatch(&batch).unwrap();
        assert!(loss <= previous + 1e-12, "{loss} > {previous}");
        previous = loss;
    }
}

#[test]
fn warmup_fills_exactly_and_telescopes_per_episode() {
    let cfg = baseline_cfg(4, 48);
    let mut replay = ReplayBuffer::new(10_000);
    let episodes = warmup_replay(9, 2, &cfg, &mut replay, 5000).unwrap();
    assert_eq!(replay.len(), 5000);

    let samples: Vec<&ExperienceSample> = replay.iter().collect();
    let mut start = 0;
    for e in 0..episodes {
        let id = EpisodeId::warmup(9, 2, e);
        let mut scratch = ReplayBuffer::new(64);
        let out = run_episode(id, &cfg, None, &mut scratch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let len = (out.record.length as usize).min(samples.len() - start);
        let stored = &samples[start..start + len];
        for (s, t) in stored.iter().zip(&out.trace) {
            assert_eq!(s.reward, t.reward);
        }
        if start + len < samples.len() {
            assert!(stored.last().unwrap().terminal);
            assert!(stored[..len - 1].iter().all(|s| !s.terminal));
            let sum: f64 = stored.iter().map(|s| s.reward).sum();
            assert!((sum - (out.record.final_score - out.record.initial_score)).abs() < 1e-9);
        }
        start += len;
    }
    assert_eq!(start, 5000);
}

#[test]
fn hand_set_linear_layer() {
    let desc = ArchitectureDescriptor {
        input: InputShape {
            channels: 3,
            height: 1,
            width: 1,
        },
        layers: vec![LayerSpec::Dense {
            units: 1,
            activation: Activation::Linear,
        }],
    };
    let net = ValueNet::from_parts(desc, vec![0.5, -2.0, 1.0, 0.25], vec![0.0; 4]).unwrap();
    assert_eq!(net.predict(&[2.0, 1.0, 3.0], false).unwrap(), 0.5 * 2.0 - 2.0 + 3.0 + 0.25);
    assert_eq!(net.predict(&[2.0, 1.0, 3.0], true).unwrap(), 0.0);
}
