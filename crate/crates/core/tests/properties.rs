use evade_core::bandit::{Mab, MabStack, WINDOW};
use evade_core::factory::{FactoryAction, FactoryConfig, FactoryState, CELLS, FEATURE_LEN};
use evade_core::learner::ReplayBuffer;
use evade_core::mmdp::{discounted_return, evade_return, joint_plan_count, DiscountSpec, ExperienceSample};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rewards(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=max_len)
}

proptest! {
    #[test]
    fn discounted_return_is_linear(r1 in rewards(8), scale in -3.0f64..3.0, gamma in 0.0f64..=1.0) {
        let h = r1.len();
        let r2: Vec<f64> = r1.iter().rev().copied().collect();
        let spec = DiscountSpec::new(gamma, h).unwrap();
        let mixed: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| scale * a + b).collect();
        let lhs = discounted_return(&mixed, &spec).unwrap();
        let rhs = scale * discounted_return(&r1, &spec).unwrap() + discounted_return(&r2, &spec).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn undiscounted_return_is_the_sum(r in rewards(10)) {
        let spec = DiscountSpec::new(1.0, r.len()).unwrap();
        let sum: f64 = r.iter().sum();
        prop_assert!((discounted_return(&r, &spec).unwrap() - sum).abs() < 1e-9);
    }

    #[test]
    fn zero_terminal_value_gives_plain_return(r in rewards(6), gamma in 0.0f64..=1.0) {
        let spec = DiscountSpec::new(gamma, r.len()).unwrap();
        prop_assert_eq!(
            evade_return(&r, &spec, 0.0, false).unwrap(),
            discounted_return(&r, &spec).unwrap()
        );
    }

    #[test]
    fn plan_count_is_a_power(actions in 1u32..8, h in 1u32..5, n in 1u32..5) {
        let expected = BigUint::from((actions as u128).pow(h * n));
        prop_assert_eq!(joint_plan_count(actions, h, n), expected);
    }

    #[test]
    fn window_holds_the_latest_values(values in prop::collection::vec(-5.0f64..5.0, 0..40)) {
        let mut stack = MabStack::new(1, 6);
        for &v in &values {
            stack.update(&[4], v).unwrap();
        }
        let kept: Vec<f64> = stack.bandit(0).arm(4).values().collect();
        let start = values.len().saturating_sub(WINDOW);
        prop_assert_eq!(kept, values[start..].to_vec());
    }

    #[test]
    fn greedy_arm_survives_positive_affine_maps(
        values in prop::collection::vec(prop::collection::vec(-20i32..20, 1..12), 2..7),
        power in -3i32..4,
        shift in -50i32..50,
    ) {
        let a = 2f64.powi(power);
        let mut plain = Mab::new(values.len());
        let mut mapped = Mab::new(values.len());
        for (arm, vs) in values.iter().enumerate() {
            for &v in vs {
                plain.push(arm, v as f64);
                mapped.push(arm, a * v as f64 + shift as f64);
            }
        }
        prop_assert_eq!(plain.greedy_arm().unwrap(), mapped.greedy_arm().unwrap());
    }

    #[test]
    fn random_episodes_keep_factory_invariants(seed in any::<u64>(), agents in 1usize..6, p in 0.0f64..=1.0) {
        let cfg = FactoryConfig { machine_failure_prob: p, ..FactoryConfig::with_agents(agents) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = FactoryState::new(&cfg, &mut rng).unwrap();
        let initial = state.score();
        let mut sum = 0.0;
        while !state.is_terminal() {
            let (open, complete, cost, t) = (state.open_tasks(), state.complete_count(), state.cost_total(), state.time());
            let actions: Vec<FactoryAction> =
                (0..agents).map(|_| FactoryAction::ALL[rng.random_range(0..6)]).collect();
            let out = state.step(&actions, &mut rng).unwrap();
            sum += out.reward;
            state.check_invariants().unwrap();
            prop_assert!(state.open_tasks() <= open);
            prop_assert!(state.complete_count() >= complete);
            prop_assert!(state.cost_total() >= cost);
            prop_assert_eq!(state.time(), t + 1);
            prop_assert_eq!(out.terminal, state.is_terminal());
        }
        prop_assert!((sum - (state.score() - initial)).abs() < 1e-9);
        prop_assert!(state.time() <= 50);
    }

    #[test]
    fn feature_planes_count_agents_and_tasks(seed in any::<u64>(), agents in 1usize..8, steps in 0usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = FactoryState::new(&FactoryConfig::with_agents(agents), &mut rng).unwrap();
        for _ in 0..steps {
            if state.is_terminal() {
                break;
            }
            let actions: Vec<FactoryAction> =
                (0..agents).map(|_| FactoryAction::ALL[rng.random_range(0..6)]).collect();
            state.step(&actions, &mut rng).unwrap();
        }
        let f = state.encode_features();
        let v = f.as_slice();
        prop_assert_eq!(v.len(), FEATURE_LEN);
        let plane_sum = |from: usize, to: usize| v[from * CELLS..to * CELLS].iter().sum::<f64>();
        let active: Vec<_> = state.agents().iter().filter(|a| !a.is_complete()).collect();
        prop_assert_eq!(plane_sum(1, 5), active.len() as f64);
        let first: usize = active.iter().map(|a| a.tasks[0].types().count()).sum();
        let second: usize = active.iter().map(|a| a.tasks.get(1).map_or(0, |b| b.types().count())).sum();
        prop_assert_eq!(plane_sum(5, 20), first as f64);
        prop_assert_eq!(plane_sum(20, 35), second as f64);
        prop_assert!(v[..CELLS].iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn replay_is_fifo(capacity in 1usize..50, pushes in 0usize..120) {
        let mut replay = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            replay.push(ExperienceSample {
                state_features: vec![],
                joint_action: vec![],
                next_state_features: vec![],
                reward: i as f64,
                terminal: false,
            });
        }
        let kept: Vec<f64> = replay.iter().map(|s| s.reward).collect();
        let expected: Vec<f64> = (pushes.saturating_sub(capacity)..pushes).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }
}

#[test]
fn replay_drops_the_first_sample_after_ten_thousand_and_one() {
    let mut replay = ReplayBuffer::new(10_000);
    for i in 0..10_001 {
        replay.push(ExperienceSample {
            state_features: vec![],
            joint_action: vec![],
            next_state_features: vec![],
            reward: i as f64,
            terminal: false,
        });
    }
    assert_eq!(replay.len(), 10_000);
    assert!(replay.iter().all(|s| s.reward != 0.0));
}
