//! Reward-decomposed double DQN.
//!
//! Each reward channel is learned by its own sub-agent (an online and a target
//! Q-network). The aggregated agent acts greedily on the sum of the channel
//! action-values. Bootstrapping targets are decomposed but coupled: the
//! successor action is the aggregated greedy action under the online networks,
//! and each channel evaluates it with its own target network.

use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nnet::{clone_weights, rows_to_array, Adam, Network};
use crate::par::Execution;
use crate::replay::{ReplayMemory, Transition};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub id: usize,
    pub name: String,
    /// Weight the simulator applies to this channel's raw reward.
    pub weight: f64,
}

impl ChannelSpec {
    pub fn new(id: usize, name: impl Into<String>, weight: f64) -> Self {
        ChannelSpec {
            id,
            name: name.into(),
            weight,
        }
    }
}

/// Channel x action matrix of action-values for one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QMatrix {
    values: Vec<Vec<f64>>,
}

impl QMatrix {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let width = values.first().map_or(0, Vec::len);
        if values.is_empty() || width == 0 {
            return Err(Error::Data(
                "a QMatrix needs at least one channel and one action".into(),
            ));
        }
        if let Some(bad) = values.iter().find(|r| r.len() != width) {
            return Err(Error::Dimension {
                expected: width,
                got: bad.len(),
            });
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite action-value".into()));
        }
        Ok(QMatrix { values })
    }

    pub fn n_channels(&self) -> usize {
        self.values.len()
    }

    pub fn n_actions(&self) -> usize {
        self.values[0].len()
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.values[channel]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn get(&self, channel: usize, action: usize) -> f64 {
        self.values[channel][action]
    }
}

/// Per-action sum of the channel action-values.
pub fn aggregate_q(q: &QMatrix) -> Vec<f64> {
    let mut out = vec![0.0; q.n_actions()];
    for row in q.rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentHyper {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Control steps over which epsilon decays linearly.
    pub epsilon_decay_steps: u64,
    pub batch_size: usize,
    /// Learning steps between target-network syncs.
    pub target_sync_interval: u64,
    pub learning_rate: f64,
    pub hidden_layers: Vec<usize>,
}

impl Default for AgentHyper {
    fn default() -> Self {
        AgentHyper {
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 10_000,
            batch_size: 32,
            target_sync_interval: 500,
            learning_rate: 1e-4,
            hidden_layers: vec![64, 64],
        }
    }
}

impl AgentHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || self.epsilon_end > self.epsilon_start
        {
            return bad(format!(
                "need 0 <= epsilon_end <= epsilon_start <= 1, got {} -> {}",
                self.epsilon_start, self.epsilon_end
            ));
        }
        if self.batch_size == 0 || self.target_sync_interval == 0 {
            return bad("batch size and target sync interval must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.hidden_layers.contains(&0) {
            return bad(format!(
                "hidden layer sizes must be positive, got {:?}",
                self.hidden_layers
            ));
        }
        Ok(())
    }

    /// Exploration rate at a control step (linear decay, then constant).
    pub fn epsilon_at(&self, step: u64) -> f64 {
        if self.epsilon_decay_steps == 0 || step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Seed used for channel `c`'s networks; channel 0 uses the agent seed as is.
pub fn channel_seed(seed: u64, channel: usize) -> u64 {
    seed.wrapping_add((channel as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Clone, Debug)]
pub struct SubAgent {
    pub channel: ChannelSpec,
    pub online: Network,
    pub target: Network,
    opt: Adam,
}

impl SubAgent {
    fn new(channel: ChannelSpec, shape: &[usize], lr: f64, seed: u64) -> Result<Self> {
        let online = Network::new(shape, seed)?;
        let target = online.clone();
        Ok(SubAgent {
            channel,
            online,
            target,
            opt: Adam::new(lr),
        })
    }
}

#[derive(Clone, Debug)]
pub struct DecomposedAgent {
    sub_agents: Vec<SubAgent>,
    state_dim: usize,
    n_actions: usize,
    hyper: AgentHyper,
    learn_steps: u64,
    exec: Execution,
}

impl DecomposedAgent {
    pub fn new(
        state_dim: usize,
        n_actions: usize,
        channels: Vec<ChannelSpec>,
        hyper: AgentHyper,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        if channels.is_empty() {
            return Err(Error::Config(
                "at least one reward channel is required".into(),
            ));
        }
        for (i, ch) in channels.iter().enumerate() {
            if ch.id != i {
                return Err(Error::Config(format!(
                    "channel ids must be 0..C-1 in order, found id {} at position {i}",
                    ch.id
                )));
            }
        }
        if state_dim == 0 || n_actions == 0 {
            return Err(Error::Config(
                "state and action dimensions must be positive".into(),
            ));
        }
        let mut shape = vec![state_dim];
        shape.extend(&hyper.hidden_layers);
        shape.push(n_actions);
        let sub_agents = channels
            .into_iter()
            .map(|ch| {
                let seed = channel_seed(seed, ch.id);
                SubAgent::new(ch, &shape, hyper.learning_rate, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DecomposedAgent {
            sub_agents,
            state_dim,
            n_actions,
            hyper,
            learn_steps: 0,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_channels(&self) -> usize {
        self.sub_agents.len()
    }

    pub fn hyper(&self) -> &AgentHyper {
        &self.hyper
    }

    pub fn sub_agents(&self) -> &[SubAgent] {
        &self.sub_agents
    }

    pub fn sub_agents_mut(&mut self) -> &mut [SubAgent] {
        &mut self.sub_agents
    }

    pub fn channels(&self) -> Vec<ChannelSpec> {
        self.sub_agents.iter().map(|s| s.channel.clone()).collect()
    }

    /// Number of completed learning steps.
    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    pub fn channel_q_values(&self, state: &[f64]) -> Result<QMatrix> {
        if state.len() != self.state_dim {
            return Err(Error::Dimension {
                expected: self.state_dim,
                got: state.len(),
            });
        }
        let rows = self
            .sub_agents
            .iter()
            .map(|s| s.online.forward(state))
            .collect::<Result<Vec<_>>>()?;
        QMatrix::new(rows).map_err(|e| Error::Numeric(format!("Q-network output: {e}")))
    }

    /// Epsilon-greedy over the aggregated action-values.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<usize> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!(
                "epsilon must be in [0, 1], got {epsilon}"
            )));
        }
        let q = self.channel_q_values(state)?;
        Ok(epsilon_greedy(&q, epsilon, rng))
    }

    /// Per-channel bootstrapping targets, `targets[c][i]` for transition `i`.
    pub fn decomposed_ddqn_targets(
        &self,
        batch: &[&Transition],
        gamma: f64,
    ) -> Result<Vec<Vec<f64>>> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let next: Vec<Vec<f64>> = batch.iter().map(|t| t.next_state.clone()).collect();
        let next = rows_to_array(&next, self.state_dim)?;
        self.targets_for(batch, &next, gamma)
    }

    fn targets_for(
        &self,
        batch: &[&Transition],
        next: &Array2<f64>,
        gamma: f64,
    ) -> Result<Vec<Vec<f64>>> {
        for t in batch {
            if t.reward.len() != self.n_channels() {
                return Err(Error::Dimension {
                    expected: self.n_channels(),
                    got: t.reward.len(),
                });
            }
        }
        // a* = argmax_a sum_c Q_c^online(s', a)
        let mut summed = Array2::<f64>::zeros((batch.len(), self.n_actions));
        for s in &self.sub_agents {
            summed += &s.online.forward_batch(next.view())?;
        }
        let best: Vec<usize> = summed
            .rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("standard layout")))
            .collect();

        let mut targets = Vec::with_capacity(self.n_channels());
        for (c, s) in self.sub_agents.iter().enumerate() {
            let q_next = s.target.forward_batch(next.view())?;
            targets.push(
                batch
                    .iter()
                    .zip(&best)
                    .enumerate()
                    .map(|(i, (t, &a))| t.reward.channels()[c] + gamma * q_next[[i, a]])
                    .collect(),
            );
        }
        Ok(targets)
    }

    /// Samples one minibatch and takes one gradient step per sub-agent.
    /// Returns per-channel losses, or `NotReady` (no parameters touched)
    /// when the memory holds fewer transitions than a batch.
    pub fn learn_step<R: Rng + ?Sized>(
        &mut self,
        mem: &ReplayMemory,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if mem.len() < self.hyper.batch_size {
            return Err(Error::NotReady(format!(
                "replay memory holds {} transitions, batch needs {}",
                mem.len(),
                self.hyper.batch_size
            )));
        }
        if mem.state_dim() != self.state_dim || mem.n_actions() != self.n_actions {
            return Err(Error::Config(
                "replay memory dimensions do not match the agent".into(),
            ));
        }
        let batch = mem.sample(self.hyper.batch_size, rng)?;
        let states: Vec<Vec<f64>> = batch.iter().map(|t| t.state.clone()).collect();
        let states = rows_to_array(&states, self.state_dim)?;
        let next: Vec<Vec<f64>> = batch.iter().map(|t| t.next_state.clone()).collect();
        let next = rows_to_array(&next, self.state_dim)?;
        let targets = self.targets_for(&batch, &next, self.hyper.gamma)?;

        let exec = self.exec;
        let mut losses = Vec::with_capacity(self.n_channels());
        for (s, channel_targets) in self.sub_agents.iter_mut().zip(&targets) {
            // Only the taken action's output is regressed; the others keep
            // their current prediction and contribute no gradient.
            let mut fit = s.online.forward_batch(states.view())?;
            for (i, t) in batch.iter().enumerate() {
                fit[[i, t.action]] = channel_targets[i];
            }
            losses.push(
                s.online
                    .train_batch_array(states.view(), fit.view(), &mut s.opt, exec)?,
            );
        }

        self.learn_steps += 1;
        if self
            .learn_steps
            .is_multiple_of(self.hyper.target_sync_interval)
        {
            self.sync_targets();
        }
        Ok(losses)
    }

    pub fn sync_targets(&mut self) {
        for s in &mut self.sub_agents {
            clone_weights(&s.online, &mut s.target).expect("online and target share a shape");
        }
    }

    /// Writes every sub-agent's online and target network plus the learning
    /// step counter. Optimiser moments are not saved.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dine-agent 1")?;
        writeln!(w, "learn_steps {}", self.learn_steps)?;
        writeln!(w, "channels {}", self.sub_agents.len())?;
        for s in &self.sub_agents {
            writeln!(
                w,
                "channel {} {} {}",
                s.channel.id, s.channel.weight, s.channel.name
            )?;
            s.online.write_text(&mut w)?;
            s.target.write_text(&mut w)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(mut r: R, hyper: AgentHyper) -> Result<Self> {
        let mut line = String::new();
        let mut read = |line: &mut String| -> Result<String> {
            line.clear();
            if r.read_line(line)? == 0 {
                return Err(Error::Parse("unexpected end of agent checkpoint".into()));
            }
            Ok(line.trim_end().to_string())
        };
        if read(&mut line)? != "dine-agent 1" {
            return Err(Error::Parse("bad agent checkpoint header".into()));
        }
        let field = |l: String, key: &str| -> Result<u64> {
            l.strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("expected `{key} <n>`, got `{l}`")))
        };
        let learn_steps = field(read(&mut line)?, "learn_steps")?;
        let n = field(read(&mut line)?, "channels")? as usize;

        let mut sub_agents = Vec::with_capacity(n);
        for _ in 0..n {
            line.clear();
            r.read_line(&mut line)?;
            let mut parts = line.trim_end().splitn(4, ' ');
            let (tag, id, weight, name) = (parts.next(), parts.next(), parts.next(), parts.next());
            let channel = match (
                tag,
                id.and_then(|v| v.parse().ok()),
                weight.and_then(|v| v.parse().ok()),
                name,
            ) {
                (Some("channel"), Some(id), Some(weight), Some(name)) => {
                    ChannelSpec::new(id, name, weight)
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "bad channel line `{}`",
                        line.trim_end()
                    )))
                }
            };
            let online = Network::read_text(&mut r)?;
            let target = Network::read_text(&mut r)?;
            if online.layer_sizes() != target.layer_sizes() {
                return Err(Error::Parse("online and target shapes differ".into()));
            }
            sub_agents.push(SubAgent {
                channel,
                online,
                target,
                opt: Adam::new(hyper.learning_rate),
            });
        }
        let first = sub_agents
            .first()
            .ok_or_else(|| Error::Parse("checkpoint has no channels".into()))?;
        let state_dim = first.online.input_dim();
        let n_actions = first.online.output_dim();
        if sub_agents
            .iter()
            .any(|s| s.online.input_dim() != state_dim || s.online.output_dim() != n_actions)
        {
            return Err(Error::Parse(
                "sub-agent networks disagree on dimensions".into(),
            ));
        }
        Ok(DecomposedAgent {
            sub_agents,
            state_dim,
            n_actions,
            hyper,
            learn_steps,
            exec: Execution::default(),
        })
    }
}

/// With probability `epsilon` a uniformly random action, otherwise the
/// aggregated greedy action. Always consumes exactly one uniform draw for the
/// coin flip (plus one for the random action when exploring).
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &QMatrix, epsilon: f64, rng: &mut R) -> usize {
    let coin: f64 = rng.random();
    if coin < epsilon {
        rng.random_range(0..q.n_actions())
    } else {
        argmax(&aggregate_q(q))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nnet::Activation;
    use crate::replay::RewardVector;

    fn channels(n: usize) -> Vec<ChannelSpec> {
        (0..n)
            .map(|i| ChannelSpec::new(i, format!("c{i}"), 1.0))
            .collect()
    }

    fn hyper() -> AgentHyper {
        AgentHyper {
            hidden_layers: vec![8],
            batch_size: 4,
            ..AgentHyper::default()
        }
    }

    fn zero_all(agent: &mut DecomposedAgent) {
        for s in agent.sub_agents_mut() {
            let n = s.online.param_count();
            s.online.set_params(&vec![0.0; n]).unwrap();
            s.target.set_params(&vec![0.0; n]).unwrap();
        }
    }

    #[test]
    fn aggregate_examples() {
        let q = QMatrix::new(vec![vec![1.0, 2.0, 3.0], vec![0.0, -2.0, 1.0]]).unwrap();
        assert_eq!(aggregate_q(&q), vec![1.0, 0.0, 4.0]);
        let single = QMatrix::new(vec![vec![1.5, -2.0]]).unwrap();
        assert_eq!(aggregate_q(&single), vec![1.5, -2.0]);
        let zeros = QMatrix::new(vec![vec![0.0; 4]; 3]).unwrap();
        assert_eq!(aggregate_q(&zeros), vec![0.0; 4]);
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(argmax(&[1.0, 0.0, 4.0, 2.0, -1.0]), 2);
        assert_eq!(argmax(&[5.0, 5.0, 0.0]), 0);
        assert_eq!(argmax(&[-1.0]), 0);
    }

    #[test]
    fn greedy_selection_follows_aggregate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = QMatrix::new(vec![vec![1.0, 0.0, 4.0, 2.0, -1.0]]).unwrap();
        assert_eq!(epsilon_greedy(&q, 0.0, &mut rng), 2);
        let q = QMatrix::new(vec![vec![2.0, 5.0, 0.0], vec![3.0, 0.0, 0.0]]).unwrap();
        assert_eq!(epsilon_greedy(&q, 0.0, &mut rng), 0);
    }

    #[test]
    fn qmatrix_validation() {
        assert!(QMatrix::new(vec![]).is_err());
        assert!(QMatrix::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(QMatrix::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn zero_networks_give_zero_q() {
        let mut agent = DecomposedAgent::new(3, 4, channels(2), hyper(), 1).unwrap();
        zero_all(&mut agent);
        let q = agent.channel_q_values(&[0.3, 0.1, 0.9]).unwrap();
        assert_eq!(q.rows(), &[vec![0.0; 4], vec![0.0; 4]]);
        assert!(matches!(
            agent.channel_q_values(&[0.0]),
            Err(Error::Dimension {
                expected: 3,
                got: 1
            })
        ));
    }

    #[test]
    fn single_channel_matrix_is_network_output() {
        let agent = DecomposedAgent::new(3, 4, channels(1), hyper(), 5).unwrap();
        let s = [0.2, 0.4, 0.6];
        let q = agent.channel_q_values(&s).unwrap();
        assert_eq!(
            q.row(0),
            agent.sub_agents()[0].online.forward(&s).unwrap().as_slice()
        );
    }

    #[test]
    fn cloned_channels_have_identical_rows() {
        let mut agent = DecomposedAgent::new(3, 4, channels(2), hyper(), 5).unwrap();
        let src = agent.sub_agents()[0].online.clone();
        agent.sub_agents_mut()[1].online.copy_from(&src).unwrap();
        let q = agent.channel_q_values(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(q.row(0), q.row(1));
    }

    #[test]
    fn epsilon_schedule() {
        let h = AgentHyper {
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 100,
            ..AgentHyper::default()
        };
        assert_eq!(h.epsilon_at(0), 1.0);
        assert!((h.epsilon_at(50) - 0.525).abs() < 1e-12);
        assert_eq!(h.epsilon_at(100), 0.05);
        assert_eq!(h.epsilon_at(10_000), 0.05);
    }

    #[test]
    fn hyper_validation() {
        assert!(AgentHyper {
            gamma: 1.0,
            ..AgentHyper::default()
        }
        .validate()
        .is_err());
        assert!(AgentHyper {
            epsilon_end: 0.9,
            epsilon_start: 0.5,
            ..AgentHyper::default()
        }
        .validate()
        .is_err());
        assert!(AgentHyper {
            batch_size: 0,
            ..AgentHyper::default()
        }
        .validate()
        .is_err());
        assert!(
            DecomposedAgent::new(3, 2, vec![ChannelSpec::new(1, "x", 1.0)], hyper(), 0).is_err()
        );
    }

    fn hand_set(q_online: [[f64; 2]; 2], q_target: [[f64; 2]; 2]) -> DecomposedAgent {
        // Single-input linear nets: output = bias when the input is 0.
        let h = AgentHyper {
            hidden_layers: vec![],
            ..AgentHyper::default()
        };
        let mut agent = DecomposedAgent::new(1, 2, channels(2), h, 0).unwrap();
        for (c, s) in agent.sub_agents_mut().iter_mut().enumerate() {
            s.online = Network::from_params(
                &[1, 2],
                Activation::Relu,
                &[0.0, 0.0, q_online[c][0], q_online[c][1]],
            )
            .unwrap();
            s.target = Network::from_params(
                &[1, 2],
                Activation::Relu,
                &[0.0, 0.0, q_target[c][0], q_target[c][1]],
            )
            .unwrap();
        }
        agent
    }

    #[test]
    fn decomposed_targets_hand_example() {
        let agent = hand_set([[1.0, 0.0], [0.0, 2.0]], [[9.0, 3.0], [7.0, 5.0]]);
        let t = Transition {
            state: vec![0.0],
            action: 0,
            reward: RewardVector(vec![0.5, -0.5]),
            next_state: vec![0.0],
            illegal: false,
        };
        let targets = agent.decomposed_ddqn_targets(&[&t], 0.9).unwrap();
        // Aggregated online [1, 2] selects action 1 for both channels.
        assert!((targets[0][0] - 3.2).abs() < 1e-12);
        assert!((targets[1][0] - 4.0).abs() < 1e-12);

        let zero_gamma = agent.decomposed_ddqn_targets(&[&t], 0.0).unwrap();
        assert_eq!(zero_gamma, vec![vec![0.5], vec![-0.5]]);
    }

    fn filled_memory(n: usize) -> ReplayMemory {
        let mut mem = ReplayMemory::new(100, 3, 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..n {
            mem.push(Transition {
                state: (0..3).map(|_| rng.random()).collect(),
                action: rng.random_range(0..4),
                reward: RewardVector(vec![rng.random(), -rng.random::<f64>()]),
                next_state: (0..3).map(|_| rng.random()).collect(),
                illegal: false,
            })
            .unwrap();
        }
        mem
    }

    #[test]
    fn underfull_memory_is_a_no_op() {
        let mut agent = DecomposedAgent::new(3, 4, channels(2), hyper(), 1).unwrap();
        let before: Vec<_> = agent
            .sub_agents()
            .iter()
            .map(|s| s.online.params())
            .collect();
        let mem = filled_memory(3);
        let err = agent
            .learn_step(&mem, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap_err();
        assert!(err.is_not_ready());
        let after: Vec<_> = agent
            .sub_agents()
            .iter()
            .map(|s| s.online.params())
            .collect();
        assert_eq!(before, after);
        assert_eq!(agent.learn_steps(), 0);
    }

    #[test]
    fn sync_makes_targets_track_online() {
        let mut agent = DecomposedAgent::new(3, 4, channels(2), hyper(), 1).unwrap();
        let mem = filled_memory(20);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        agent.learn_step(&mem, &mut rng).unwrap();
        let s = [0.1, 0.2, 0.3];
        let differs = agent
            .sub_agents()
            .iter()
            .any(|a| a.online.forward(&s).unwrap() != a.target.forward(&s).unwrap());
        assert!(differs);
        agent.sync_targets();
        for a in agent.sub_agents() {
            assert_eq!(a.online.forward(&s).unwrap(), a.target.forward(&s).unwrap());
        }
        let snapshot: Vec<_> = agent
            .sub_agents()
            .iter()
            .map(|a| a.target.params())
            .collect();
        agent.sync_targets();
        let again: Vec<_> = agent
            .sub_agents()
            .iter()
            .map(|a| a.target.params())
            .collect();
        assert_eq!(snapshot, again);
    }

    #[test]
    fn periodic_target_sync() {
        let h = AgentHyper {
            target_sync_interval: 3,
            ..hyper()
        };
        let mut agent = DecomposedAgent::new(3, 4, channels(2), h, 1).unwrap();
        let mem = filled_memory(20);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..3 {
            agent.learn_step(&mem, &mut rng).unwrap();
        }
        for a in agent.sub_agents() {
            assert_eq!(a.online.params(), a.target.params());
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut agent = DecomposedAgent::new(3, 4, channels(2), hyper(), 1).unwrap();
        let mem = filled_memory(20);
        agent
            .learn_step(&mem, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let mut buf = Vec::new();
        agent.write_checkpoint(&mut buf).unwrap();
        let back = DecomposedAgent::read_checkpoint(buf.as_slice(), hyper()).unwrap();
        assert_eq!(back.learn_steps(), 1);
        assert_eq!(back.channels(), agent.channels());
        for (a, b) in agent.sub_agents().iter().zip(back.sub_agents()) {
            assert_eq!(a.online, b.online);
            assert_eq!(a.target, b.target);
        }
    }
}
