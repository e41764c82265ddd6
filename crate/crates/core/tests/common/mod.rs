//! Independent reference implementations used as test oracles, plus small
//! adapters that put library output into the oracles' form.
#![allow(dead_code)]

use dine_core::agent::{AgentHyper, ChannelSpec, DecomposedAgent, QMatrix};
use dine_core::nnet::{Adam, Network};
use dine_core::replay::{ReplayMemory, RewardVector, Transition};
use dine_core::swimsim::{Action, SimConfig, Simulator, WorkloadSpec, OBSERVATION_DIM};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random action-value matrix with `1..=max_channels` rows and
/// `2..=max_actions` columns. About a third of the matrices use small
/// integers so that ties are common.
pub fn random_qmatrix<R: Rng>(rng: &mut R, max_channels: usize, max_actions: usize) -> QMatrix {
    let c = rng.random_range(1..=max_channels);
    let a = rng.random_range(2..=max_actions);
    let integer = rng.random_bool(0.3);
    let rows = (0..c)
        .map(|_| {
            (0..a)
                .map(|_| {
                    if integer {
                        rng.random_range(-3i32..=3) as f64
                    } else {
                        rng.random_range(-5.0..5.0)
                    }
                })
                .collect()
        })
        .collect();
    QMatrix::new(rows).unwrap()
}

/// Lowest index among the maxima.
pub fn first_argmax(xs: &[f64]) -> usize {
    let best = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    xs.iter().position(|&x| x == best).unwrap()
}

pub fn column_sums(q: &QMatrix) -> Vec<f64> {
    (0..q.n_actions())
        .map(|a| (0..q.n_channels()).map(|c| q.get(c, a)).sum())
        .collect()
}

/// Mean absolute difference over all ordered pairs, divided by twice the mean.
pub fn gini_pairwise(p: &[f64]) -> f64 {
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let mut diff = 0.0;
    for x in p {
        for y in p {
            diff += (x - y).abs();
        }
    }
    diff / (2.0 * n * n * mean)
}

pub fn shifted_distribution(row: &[f64]) -> Vec<f64> {
    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
    let total: f64 = row.iter().map(|v| v - lo).sum();
    if total == 0.0 {
        return vec![1.0 / row.len() as f64; row.len()];
    }
    row.iter().map(|v| (v - lo) / total).collect()
}

/// `(channel, chosen, contrast, importance)` for every channel whose greedy
/// action differs from `chosen` and whose value inequality reaches `rho`.
pub fn important_interactions_oracle(
    q: &QMatrix,
    chosen: usize,
    rho: f64,
) -> Vec<(usize, usize, usize, f64)> {
    let mut out = Vec::new();
    for c in 0..q.n_channels() {
        let row = q.row(c);
        let contrast = first_argmax(row);
        let importance = gini_pairwise(&shifted_distribution(row));
        if contrast != chosen && importance >= rho {
            out.push((c, chosen, contrast, importance));
        }
    }
    out
}

/// Does `set` justify `chosen` over `alt`: its summed advantage exceeds the
/// summed disadvantages of all other channels?
pub fn msx_sufficient(q: &QMatrix, chosen: usize, alt: usize, set: &[usize]) -> bool {
    let adv = |c: usize| q.get(c, chosen) - q.get(c, alt);
    let gained: f64 = set.iter().map(|&c| adv(c)).sum();
    let against: f64 = (0..q.n_channels())
        .filter(|c| !set.contains(c))
        .map(|c| (-adv(c)).max(0.0))
        .sum();
    gained > against
}

/// Smallest sufficient subset size over all `2^C` subsets, if any.
pub fn msx_min_size(q: &QMatrix, chosen: usize, alt: usize) -> Option<usize> {
    let c = q.n_channels();
    (0u32..(1 << c))
        .map(|mask| (0..c).filter(|i| mask & (1 << i) != 0).collect::<Vec<_>>())
        .filter(|set| msx_sufficient(q, chosen, alt, set))
        .map(|set| set.len())
        .min()
}

/// Best action other than `chosen` by aggregated value, lowest index on ties.
pub fn runner_up(q: &QMatrix, chosen: usize) -> usize {
    let sums = column_sums(q);
    let mut best = None;
    for (a, &v) in sums.iter().enumerate() {
        if a == chosen {
            continue;
        }
        match best {
            Some(b) if sums[b] >= v => {}
            _ => best = Some(a),
        }
    }
    best.unwrap()
}

/// Deterministic finite MDP whose action-values are given as a table:
/// `q[s][c][a]`, successor `next[s][a]`.
pub struct TableMdp {
    pub q: Vec<Vec<Vec<f64>>>,
    pub next: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    Channel(usize),
    Aggregate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Extreme {
    Min,
    Max,
}

impl TableMdp {
    pub fn qmatrix(&self, s: usize) -> QMatrix {
        QMatrix::new(self.q[s].clone()).unwrap()
    }

    fn value(&self, s: usize, scope: Scope) -> f64 {
        let row: Vec<f64> = match scope {
            Scope::Channel(c) => self.q[s][c].clone(),
            Scope::Aggregate => {
                let n_actions = self.q[s][0].len();
                (0..n_actions)
                    .map(|a| self.q[s].iter().map(|r| r[a]).sum())
                    .collect()
            }
        };
        row.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks every successor individually: a minimum needs each successor
    /// value to exceed the current one by a positive amount of at least `phi`.
    pub fn extrema_oracle(&self, s: usize, phi: f64) -> Vec<(Scope, Extreme)> {
        let n_channels = self.q[s].len();
        let scopes = (0..n_channels)
            .map(Scope::Channel)
            .chain([Scope::Aggregate]);
        let mut out = Vec::new();
        for scope in scopes {
            let here = self.value(s, scope);
            let succ: Vec<f64> = self.next[s].iter().map(|&n| self.value(n, scope)).collect();
            if succ.iter().all(|&v| v - here > 0.0 && v - here >= phi) {
                out.push((scope, Extreme::Min));
            }
            if succ.iter().all(|&v| here - v > 0.0 && here - v >= phi) {
                out.push((scope, Extreme::Max));
            }
        }
        out.sort();
        out
    }
}

/// Plain double DQN on the summed reward, written against the network
/// primitives only.
pub struct MonolithicDdqn {
    pub online: Network,
    pub target: Network,
    pub opt: Adam,
    pub gamma: f64,
    pub batch_size: usize,
    pub sync_interval: u64,
    pub updates: u64,
}

impl MonolithicDdqn {
    pub fn new(
        shape: &[usize],
        seed: u64,
        lr: f64,
        gamma: f64,
        batch_size: usize,
        sync_interval: u64,
    ) -> Self {
        let online = Network::new(shape, seed).unwrap();
        MonolithicDdqn {
            target: online.clone(),
            online,
            opt: Adam::new(lr),
            gamma,
            batch_size,
            sync_interval,
            updates: 0,
        }
    }

    pub fn act<R: Rng>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> usize {
        let q = self.online.forward(state).unwrap();
        if rng.random::<f64>() < epsilon {
            rng.random_range(0..q.len())
        } else {
            first_argmax(&q)
        }
    }

    pub fn learn<R: Rng>(&mut self, mem: &ReplayMemory, rng: &mut R) {
        if mem.len() < self.batch_size {
            return;
        }
        let batch = mem.sample(self.batch_size, rng).unwrap();
        let mut inputs = Vec::new();
        let mut fits = Vec::new();
        for t in batch {
            let greedy = first_argmax(&self.online.forward(&t.next_state).unwrap());
            let bootstrap = self.target.forward(&t.next_state).unwrap()[greedy];
            let total: f64 = t.reward.0.iter().sum();
            let mut fit = self.online.forward(&t.state).unwrap();
            fit[t.action] = total + self.gamma * bootstrap;
            inputs.push(t.state.clone());
            fits.push(fit);
        }
        self.online
            .train_batch(&inputs, &fits, &mut self.opt)
            .unwrap();
        self.updates += 1;
        if self.updates.is_multiple_of(self.sync_interval) {
            self.target = self.online.clone();
        }
    }
}

/// Drives a one-channel decomposed agent and [`MonolithicDdqn`] side by side
/// on the simulator for `steps` steps with identical seeds. Returns the
/// largest parameter difference seen, or an error if their actions diverge.
pub fn single_channel_divergence(steps: u64) -> Result<f64, String> {
    let hyper = AgentHyper {
        hidden_layers: vec![32, 32],
        target_sync_interval: 100,
        ..AgentHyper::default()
    };
    let seed = 7;
    let channels = vec![ChannelSpec::new(0, "total", 1.0)];
    let mut agent = DecomposedAgent::new(
        OBSERVATION_DIM,
        Action::COUNT,
        channels,
        hyper.clone(),
        seed,
    )
    .unwrap();
    let shape = [OBSERVATION_DIM, 32, 32, Action::COUNT];
    let mut reference = MonolithicDdqn::new(
        &shape,
        seed,
        hyper.learning_rate,
        hyper.gamma,
        hyper.batch_size,
        hyper.target_sync_interval,
    );

    let trace =
        dine_core::swimsim::generate_workload(&WorkloadSpec::sinusoid(steps as usize + 1, 3))
            .unwrap();
    let mut sim_a = Simulator::new(SimConfig::default(), trace.clone()).unwrap();
    let mut sim_b = Simulator::new(SimConfig::default(), trace).unwrap();
    let mut mem_a = ReplayMemory::new(5000, OBSERVATION_DIM, Action::COUNT, 1).unwrap();
    let mut mem_b = ReplayMemory::new(5000, OBSERVATION_DIM, Action::COUNT, 1).unwrap();
    let mut rng_a = ChaCha8Rng::seed_from_u64(seed);
    let mut rng_b = ChaCha8Rng::seed_from_u64(seed);

    let mut worst: f64 = 0.0;
    for step in 0..steps {
        let eps = hyper.epsilon_at(step);
        let obs_a = sim_a.observe();
        let obs_b = sim_b.observe();
        let a = agent.select_action(&obs_a, eps, &mut rng_a).unwrap();
        let b = reference.act(&obs_b, eps, &mut rng_b);
        if a != b {
            return Err(format!("actions diverged at step {step}: {a} vs {b}"));
        }
        let out_a = sim_a.step(a).unwrap();
        let out_b = sim_b.step(b).unwrap();
        for (mem, obs, out, act) in [(&mut mem_a, obs_a, out_a, a), (&mut mem_b, obs_b, out_b, b)] {
            mem.push(Transition {
                state: obs,
                action: act,
                reward: RewardVector(vec![out.reward.total()]),
                next_state: out.observation,
                illegal: !out.info.legal,
            })
            .unwrap();
        }
        let _ = agent.learn_step(&mem_a, &mut rng_a);
        reference.learn(&mem_b, &mut rng_b);

        let sub = &agent.sub_agents()[0];
        for (x, y) in [
            (&sub.online, &reference.online),
            (&sub.target, &reference.target),
        ] {
            let diff = x
                .params()
                .iter()
                .zip(y.params())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff);
        }
    }
    if agent.learn_steps() != reference.updates {
        return Err(format!(
            "{} vs {} updates",
            agent.learn_steps(),
            reference.updates
        ));
    }
    Ok(worst)
}

/// Optimal action-values of the summed reward by value iteration, then each
/// channel's action-values under the resulting greedy policy.
/// `reward[s][a][c]`, `next[s][a]`.
pub fn decomposed_optimal_q(
    reward: &[Vec<Vec<f64>>],
    next: &[Vec<usize>],
    gamma: f64,
) -> Vec<Vec<Vec<f64>>> {
    let n_s = reward.len();
    let n_a = reward[0].len();
    let n_c = reward[0][0].len();
    let total = |s: usize, a: usize| reward[s][a].iter().sum::<f64>();
    let mut v = vec![0.0; n_s];
    for _ in 0..10_000 {
        v = (0..n_s)
            .map(|s| {
                (0..n_a)
                    .map(|a| total(s, a) + gamma * v[next[s][a]])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    let policy: Vec<usize> = (0..n_s)
        .map(|s| {
            let q: Vec<f64> = (0..n_a)
                .map(|a| total(s, a) + gamma * v[next[s][a]])
                .collect();
            first_argmax(&q)
        })
        .collect();
    // per-channel evaluation of the greedy policy
    let mut vc = vec![vec![0.0; n_c]; n_s];
    for _ in 0..10_000 {
        vc = (0..n_s)
            .map(|s| {
                let a = policy[s];
                (0..n_c)
                    .map(|c| reward[s][a][c] + gamma * vc[next[s][a]][c])
                    .collect()
            })
            .collect();
    }
    (0..n_s)
        .map(|s| {
            (0..n_c)
                .map(|c| {
                    (0..n_a)
                        .map(|a| reward[s][a][c] + gamma * vc[next[s][a]][c])
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Three states, three actions, two channels; all values are dyadic so the
/// margins are exact. No action leads back to its own state.
pub fn three_state_mdp() -> TableMdp {
    TableMdp {
        q: vec![
            vec![vec![0.0, 0.25, -0.5], vec![1.0, 0.5, 0.75]],
            vec![vec![0.5, 0.75, 0.5], vec![0.0, 0.25, 0.125]],
            vec![vec![1.5, 0.0, 0.5], vec![-0.5, 0.0, -0.25]],
        ],
        next: vec![vec![1, 2, 1], vec![0, 2, 2], vec![0, 1, 1]],
    }
}

pub fn to_oracle_form(events: &[dine_core::dine::Extremum]) -> Vec<(Scope, Extreme)> {
    use dine_core::dine::{ExtremumKind, ExtremumScope};
    let mut out: Vec<(Scope, Extreme)> = events
        .iter()
        .map(|e| {
            let scope = match e.scope {
                ExtremumScope::Channel(c) => Scope::Channel(c),
                ExtremumScope::Aggregate => Scope::Aggregate,
            };
            let kind = match e.kind {
                ExtremumKind::Min => Extreme::Min,
                ExtremumKind::Max => Extreme::Max,
            };
            (scope, kind)
        })
        .collect();
    out.sort();
    out
}

/// Extrema the library reports for state `s` of `mdp`, with the table's
/// successors standing in for the learned model.
pub fn detected_extrema(mdp: &TableMdp, s: usize, phi: f64) -> Vec<(Scope, Extreme)> {
    let successors: Vec<QMatrix> = mdp.next[s].iter().map(|&n| mdp.qmatrix(n)).collect();
    let events = dine_core::dine::detect_extrema(&mdp.qmatrix(s), &successors, phi).unwrap();
    for e in &events {
        assert!(e.margin >= phi && e.margin > 0.0);
    }
    to_oracle_form(&events)
}
