//! Experience replay memory with vector-valued rewards.
//!
//! Besides feeding minibatches to the Q-learners, the memory is the labelled
//! dataset for the environment model: see [`ReplayMemory::as_dataset`].

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 50_000;

/// One reward per channel, already weighted and penalised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardVector(pub Vec<f64>);

impl RewardVector {
    pub fn channels(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The scalar reward the aggregated agent optimises.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: RewardVector,
    pub next_state: Vec<f64>,
    /// The environment rejected the action.
    pub illegal: bool,
}

/// Supervised pairs `(state ++ one_hot(action)) -> next_state`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// `state` followed by a one-hot encoding of `action`.
pub fn encode_state_action(state: &[f64], action: usize, n_actions: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(state.len() + n_actions);
    v.extend_from_slice(state);
    v.extend((0..n_actions).map(|a| if a == action { 1.0 } else { 0.0 }));
    v
}

/// Inverse of the one-hot part of [`encode_state_action`].
pub fn decode_action(input: &[f64], state_dim: usize) -> Option<usize> {
    let hot = input.get(state_dim..)?;
    let mut found = None;
    for (a, &v) in hot.iter().enumerate() {
        if v == 1.0 {
            if found.is_some() {
                return None;
            }
            found = Some(a);
        } else if v != 0.0 {
            return None;
        }
    }
    found
}

/// FIFO ring buffer of transitions.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    state_dim: usize,
    n_actions: usize,
    n_channels: usize,
    buf: VecDeque<Transition>,
    inserted: u64,
}

impl ReplayMemory {
    pub fn new(
        capacity: usize,
        state_dim: usize,
        n_actions: usize,
        n_channels: usize,
    ) -> Result<Self> {
        if capacity == 0 || state_dim == 0 || n_actions == 0 || n_channels == 0 {
            return Err(Error::Config(format!(
                "replay memory needs positive capacity and dimensions \
                 (capacity {capacity}, state {state_dim}, actions {n_actions}, channels {n_channels})"
            )));
        }
        Ok(ReplayMemory {
            capacity,
            state_dim,
            n_actions,
            n_channels,
            buf: VecDeque::with_capacity(capacity.min(1 << 16)),
            inserted: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    /// Total number of pushes, including evicted entries.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.buf.get(i)
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        let check = |what: &str, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Data(format!(
                    "{what}: expected {expected} entries, got {got}"
                )))
            }
        };
        check("state", self.state_dim, t.state.len())?;
        check("next_state", self.state_dim, t.next_state.len())?;
        check("reward", self.n_channels, t.reward.len())?;
        if t.action >= self.n_actions {
            return Err(Error::Data(format!(
                "action {} out of range for {} actions",
                t.action, self.n_actions
            )));
        }
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
        self.inserted += 1;
        Ok(())
    }

    /// Uniform sampling with replacement. Any non-empty memory can serve a
    /// batch; learners that want distinct-enough data check `len()` first.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.buf.is_empty() {
            return Err(Error::NotReady("replay memory is empty".into()));
        }
        Ok((0..batch_size)
            .map(|_| &self.buf[rng.random_range(0..self.buf.len())])
            .collect())
    }

    /// Environment-model training pairs in storage order.
    pub fn as_dataset(&self) -> Result<Dataset> {
        if self.buf.is_empty() {
            return Err(Error::NotReady("replay memory is empty".into()));
        }
        let (inputs, outputs) = self
            .buf
            .iter()
            .map(|t| {
                (
                    encode_state_action(&t.state, t.action, self.n_actions),
                    t.next_state.clone(),
                )
            })
            .unzip();
        Ok(Dataset { inputs, outputs })
    }

    /// Writes one JSON transition per line, oldest first.
    pub fn dump_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.buf {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}
