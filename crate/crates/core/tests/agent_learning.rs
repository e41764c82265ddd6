mod common;

use common::{
    column_sums, decomposed_optimal_q, first_argmax, random_qmatrix, single_channel_divergence,
};
use dine_core::agent::{epsilon_greedy, AgentHyper, ChannelSpec, DecomposedAgent, QMatrix};
use dine_core::replay::{ReplayMemory, RewardVector, Transition};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn transition(i: usize) -> Transition {
    Transition {
        state: vec![i as f64],
        action: 0,
        reward: RewardVector(vec![0.0]),
        next_state: vec![i as f64],
        illegal: false,
    }
}

#[test]
fn replay_sampling_is_uniform() {
    let mut mem = ReplayMemory::new(10, 1, 1, 1).unwrap();
    for i in 0..10 {
        mem.push(transition(i)).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = [0u64; 10];
    let draws = 100_000;
    for _ in 0..draws / 100 {
        for t in mem.sample(100, &mut rng).unwrap() {
            counts[t.state[0] as usize] += 1;
        }
    }
    let expected = draws as f64 / 10.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}, counts {counts:?}");
}

#[test]
fn full_exploration_is_uniform_over_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = QMatrix::new(vec![
        vec![3.0, 1.0, 0.0, -2.0, 0.5],
        vec![0.0, 2.0, 1.0, 0.0, 0.0],
    ])
    .unwrap();
    let mut counts = [0usize; 5];
    let draws = 100_000;
    for _ in 0..draws {
        counts[epsilon_greedy(&q, 1.0, &mut rng)] += 1;
    }
    for c in counts {
        let f = c as f64 / draws as f64;
        assert!((0.19..=0.21).contains(&f), "frequency {f}");
    }
}

#[test]
fn per_channel_targets_match_brute_force() {
    let hyper = AgentHyper {
        hidden_layers: vec![6],
        ..AgentHyper::default()
    };
    let channels = (0..3)
        .map(|c| ChannelSpec::new(c, format!("c{c}"), 1.0))
        .collect();
    let mut agent = DecomposedAgent::new(2, 4, channels, hyper, 17).unwrap();
    // make target nets differ from online nets
    for (i, s) in agent.sub_agents_mut().iter_mut().enumerate() {
        let p: Vec<f64> = s
            .target
            .params()
            .iter()
            .map(|v| v * 0.5 + i as f64 * 0.01)
            .collect();
        s.target.set_params(&p).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch: Vec<Transition> = (0..8)
        .map(|_| Transition {
            state: vec![rng.random(), rng.random()],
            action: rng.random_range(0..4),
            reward: RewardVector((0..3).map(|_| rng.random_range(-1.0..1.0)).collect()),
            next_state: vec![rng.random(), rng.random()],
            illegal: false,
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    let gamma = 0.9;
    let targets = agent.decomposed_ddqn_targets(&refs, gamma).unwrap();
    for (i, t) in batch.iter().enumerate() {
        // enumerate every action and keep the one with the largest summed
        // online value
        let online: Vec<Vec<f64>> = agent
            .sub_agents()
            .iter()
            .map(|s| s.online.forward(&t.next_state).unwrap())
            .collect();
        let mut best = 0;
        for a in 1..4 {
            let sum_a: f64 = online.iter().map(|r| r[a]).sum();
            let sum_best: f64 = online.iter().map(|r| r[best]).sum();
            if sum_a > sum_best {
                best = a;
            }
        }
        for (c, s) in agent.sub_agents().iter().enumerate() {
            let expect = t.reward.0[c] + gamma * s.target.forward(&t.next_state).unwrap()[best];
            assert!((targets[c][i] - expect).abs() < 1e-12);
        }
    }
}

/// Two states, two actions, two reward channels. Action 1 moves to the other
/// state; action 0 stays. Channel rewards pull in different directions so
/// the decomposition matters.
#[test]
#[allow(clippy::needless_range_loop)]
fn converges_to_value_iteration_on_two_state_mdp() {
    let next = vec![vec![0, 1], vec![1, 0]];
    // reward[s][a][c]
    let reward = vec![
        vec![vec![0.2, -0.1], vec![-0.3, 0.5]],
        vec![vec![0.6, 0.1], vec![0.0, -0.4]],
    ];
    let gamma = 0.5;
    let oracle = decomposed_optimal_q(&reward, &next, gamma);

    let hyper = AgentHyper {
        gamma,
        hidden_layers: vec![16],
        learning_rate: 3e-3,
        target_sync_interval: 50,
        batch_size: 32,
        ..AgentHyper::default()
    };
    let channels = (0..2)
        .map(|c| ChannelSpec::new(c, format!("c{c}"), 1.0))
        .collect();
    let mut agent = DecomposedAgent::new(2, 2, channels, hyper, 21).unwrap();
    let mut mem = ReplayMemory::new(10_000, 2, 2, 2).unwrap();
    let onehot = |s: usize| {
        if s == 0 {
            vec![1.0, 0.0]
        } else {
            vec![0.0, 1.0]
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for s in 0..2 {
        for a in 0..2 {
            for _ in 0..25 {
                mem.push(Transition {
                    state: onehot(s),
                    action: a,
                    reward: RewardVector(reward[s][a].clone()),
                    next_state: onehot(next[s][a]),
                    illegal: false,
                })
                .unwrap();
            }
        }
    }
    for _ in 0..6000 {
        agent.learn_step(&mem, &mut rng).unwrap();
    }
    for s in 0..2 {
        let q = agent.channel_q_values(&onehot(s)).unwrap();
        for c in 0..2 {
            for a in 0..2 {
                let err = (q.get(c, a) - oracle[s][c][a]).abs();
                assert!(
                    err < 0.05,
                    "s{s} c{c} a{a}: {} vs {}",
                    q.get(c, a),
                    oracle[s][c][a]
                );
            }
        }
        let greedy = first_argmax(&column_sums(&q));
        let best = first_argmax(
            &(0..2)
                .map(|a| oracle[s][0][a] + oracle[s][1][a])
                .collect::<Vec<_>>(),
        );
        assert_eq!(greedy, best);
    }
}

/// With one channel carrying the summed reward the decomposed agent is an
/// ordinary double DQN: parameters must follow the reference exactly.
#[test]
fn single_channel_agent_matches_monolithic_reference() {
    let diff = single_channel_divergence(1000).unwrap();
    assert!(diff < 1e-9, "max parameter difference {diff}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_choice_is_argmax_of_channel_sums(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qmatrix(&mut rng, 4, 6);
        prop_assert_eq!(epsilon_greedy(&q, 0.0, &mut rng), first_argmax(&column_sums(&q)));
    }

    #[test]
    fn agent_greedy_action_agrees_with_its_own_q_values(
        seed in any::<u64>(),
        state in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let hyper = AgentHyper { hidden_layers: vec![8], ..AgentHyper::default() };
        let channels = (0..3).map(|c| ChannelSpec::new(c, format!("c{c}"), 1.0)).collect();
        let agent = DecomposedAgent::new(3, 4, channels, hyper, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = agent.channel_q_values(&state).unwrap();
        prop_assert_eq!(agent.select_action(&state, 0.0, &mut rng).unwrap(), first_argmax(&column_sums(&q)));
    }
}
