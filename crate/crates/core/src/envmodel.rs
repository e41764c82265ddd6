//! Learned one-step dynamics `(s, a) -> s'`, fitted on replay-memory contents.
//!
//! The reward channel extremum analysis needs successor states for every
//! action, which a model-free agent does not have; this model supplies them.

use ndarray::{s, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nnet::{rows_to_array, Adam, Network};
use crate::par::Execution;
use crate::replay::{encode_state_action, Dataset, ReplayMemory};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EnvModelConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub minibatch: usize,
    /// Minimum stored transitions before training is attempted.
    pub min_samples: usize,
}

impl Default for EnvModelConfig {
    fn default() -> Self {
        EnvModelConfig {
            hidden_layers: vec![64, 64],
            learning_rate: 1e-3,
            minibatch: 32,
            min_samples: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnvModel {
    net: Network,
    opt: Adam,
    cfg: EnvModelConfig,
    state_dim: usize,
    n_actions: usize,
    rng: ChaCha8Rng,
    trained: bool,
    samples_seen: u64,
    last_holdout_mse: Option<f64>,
    exec: Execution,
}

impl EnvModel {
    pub fn new(state_dim: usize, n_actions: usize, cfg: EnvModelConfig, seed: u64) -> Result<Self> {
        if cfg.minibatch == 0 {
            return Err(Error::Config(
                "environment model minibatch must be positive".into(),
            ));
        }
        let mut shape = vec![state_dim + n_actions];
        shape.extend(&cfg.hidden_layers);
        shape.push(state_dim);
        Ok(EnvModel {
            net: Network::new(&shape, seed)?,
            opt: Adam::new(cfg.learning_rate),
            cfg,
            state_dim,
            n_actions,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7a1),
            trained: false,
            samples_seen: 0,
            last_holdout_mse: None,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn is_ready(&self) -> bool {
        self.trained
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn last_holdout_mse(&self) -> Option<f64> {
        self.last_holdout_mse
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn config(&self) -> &EnvModelConfig {
        &self.cfg
    }

    /// Trains on the memory's current contents. See [`EnvModel::train_on`].
    pub fn train(
        &mut self,
        mem: &ReplayMemory,
        epochs: usize,
        holdout_fraction: f64,
    ) -> Result<f64> {
        if mem.len() < self.cfg.min_samples.max(1) {
            return Err(Error::NotReady(format!(
                "environment model needs {} transitions, memory holds {}",
                self.cfg.min_samples,
                mem.len()
            )));
        }
        if mem.state_dim() != self.state_dim || mem.n_actions() != self.n_actions {
            return Err(Error::Config(
                "replay memory dimensions do not match the model".into(),
            ));
        }
        self.train_on(&mem.as_dataset()?, epochs, holdout_fraction)
    }

    /// Holds out the newest `holdout_fraction` of `data`, runs `epochs`
    /// shuffled minibatch passes over the rest and returns the holdout MSE
    /// (training MSE if the holdout split is empty).
    pub fn train_on(
        &mut self,
        data: &Dataset,
        epochs: usize,
        holdout_fraction: f64,
    ) -> Result<f64> {
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout fraction must be in [0, 1), got {holdout_fraction}"
            )));
        }
        if data.len() < self.cfg.min_samples.max(1) {
            return Err(Error::NotReady(format!(
                "environment model needs {} samples, got {}",
                self.cfg.min_samples,
                data.len()
            )));
        }
        let x = rows_to_array(&data.inputs, self.state_dim + self.n_actions)?;
        let y = rows_to_array(&data.outputs, self.state_dim)?;
        let n_hold = ((data.len() as f64) * holdout_fraction).floor() as usize;
        let n_train = data.len() - n_hold;
        if n_train == 0 {
            return Err(Error::NotReady(
                "no training samples after holdout split".into(),
            ));
        }

        let mut order: Vec<usize> = (0..n_train).collect();
        for _ in 0..epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.minibatch) {
                let xb = x.select(Axis(0), chunk);
                let yb = y.select(Axis(0), chunk);
                self.net
                    .train_batch_array(xb.view(), yb.view(), &mut self.opt, self.exec)?;
            }
        }
        self.samples_seen += (n_train * epochs) as u64;
        self.trained = true;

        let (ex, ey) = if n_hold > 0 {
            (x.slice(s![n_train.., ..]), y.slice(s![n_train.., ..]))
        } else {
            (x.view(), y.view())
        };
        let pred = self.net.forward_batch(ex)?;
        let mse = (&pred - &ey).mapv(|d| d * d).mean().unwrap_or(0.0);
        self.last_holdout_mse = Some(mse);
        Ok(mse)
    }

    pub fn predict_next(&self, state: &[f64], action: usize) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::NotReady(
                "environment model has not been trained".into(),
            ));
        }
        if state.len() != self.state_dim {
            return Err(Error::Dimension {
                expected: self.state_dim,
                got: state.len(),
            });
        }
        if action >= self.n_actions {
            return Err(Error::Data(format!("action {action} out of range")));
        }
        self.net
            .forward(&encode_state_action(state, action, self.n_actions))
    }

    /// Predicted successor of `state` for every action, in action order.
    pub fn predict_all(&self, state: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.n_actions)
            .map(|a| self.predict_next(state, a))
            .collect()
    }
}
