//! The control loop tying simulator, agent, environment model and DINE
//! analysis together, plus trace persistence and the telemetry service.
//!
//! Each step monitors the simulator, lets the agent analyse and plan (the
//! action-values and an epsilon-greedy choice), derives explanation events
//! from the same action-values, executes the action, and finally updates the
//! knowledge (replay memory, networks, environment model).

pub mod config;
pub mod protocol;
pub mod record;
pub mod sweep;
pub mod telemetry;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{aggregate_q, epsilon_greedy, DecomposedAgent, QMatrix};
use crate::dine::{
    minimal_sufficient_explanation, value_landscape, DineKind, DineThresholds,
    MinimalSufficientExplanation, ThresholdKind,
};
use crate::envmodel::EnvModel;
use crate::par::Execution;
use crate::replay::{ReplayMemory, Transition};
use crate::swimsim::{generate_workload, Action, Simulator, WorkloadSpec, OBSERVATION_DIM};
use crate::{Error, Result};

pub use config::{Policy, RunConfig};
pub use record::{derive_dines, load_trace, read_trace, StepRecord, TraceHeader, TraceWriter};

/// Totals over a finished (or interrupted) run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    /// Cumulative reward per channel.
    pub channel_rewards: Vec<f64>,
    pub total_reward: f64,
    pub important_interactions: u64,
    pub extrema: u64,
    pub dominance: u64,
    pub illegal_actions: u64,
    /// Last holdout MSE of the environment model, if it was ever trained.
    pub env_model_mse: Option<f64>,
}

impl RunSummary {
    fn absorb(&mut self, rec: &StepRecord) {
        if self.channel_rewards.is_empty() {
            self.channel_rewards = vec![0.0; rec.reward.len()];
        }
        for (acc, r) in self.channel_rewards.iter_mut().zip(rec.reward.channels()) {
            *acc += r;
        }
        self.total_reward += rec.reward_total;
        self.steps += 1;
        if !rec.legal {
            self.illegal_actions += 1;
        }
        for e in &rec.dines {
            match e.kind {
                DineKind::ImportantInteraction(_) => self.important_interactions += 1,
                DineKind::RewardChannelExtremum(_) => self.extrema += 1,
                DineKind::RewardChannelDominance(_) => self.dominance += 1,
            }
        }
    }
}

pub struct ControlLoop {
    cfg: RunConfig,
    sim: Simulator,
    agent: DecomposedAgent,
    env_model: EnvModel,
    memory: ReplayMemory,
    rng: ChaCha8Rng,
    thresholds: DineThresholds,
    step: u64,
    finished: bool,
    /// Action-values and chosen action per emitted step, for MSX queries.
    decisions: BTreeMap<u64, (QMatrix, usize)>,
    summary: RunSummary,
    header: TraceHeader,
}

impl ControlLoop {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        Self::with_execution(cfg, Execution::default())
    }

    pub fn with_execution(cfg: RunConfig, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let workload = match &cfg.workload {
            w @ WorkloadSpec::Synthetic { .. } => w.clone().with_len(cfg.total_steps as usize + 1),
            w => w.clone(),
        };
        let trace = generate_workload(&workload)?;
        let sim = Simulator::new(cfg.sim.clone(), trace)?;
        let channels = cfg.sim.channels();
        let n_channels = channels.len();
        let agent = DecomposedAgent::new(
            OBSERVATION_DIM,
            Action::COUNT,
            channels,
            cfg.agent.clone(),
            cfg.seed,
        )?
        .with_execution(exec);
        let env_model = EnvModel::new(
            OBSERVATION_DIM,
            Action::COUNT,
            cfg.env_model.clone(),
            cfg.seed ^ 0xe7e7_0000_0000_0001,
        )?
        .with_execution(exec);
        let memory = ReplayMemory::new(
            cfg.replay_capacity,
            OBSERVATION_DIM,
            Action::COUNT,
            n_channels,
        )?;
        let header = TraceHeader::new(
            agent.channels().into_iter().map(|c| c.name).collect(),
            Action::names(),
        );
        Ok(ControlLoop {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            thresholds: cfg.thresholds,
            sim,
            agent,
            env_model,
            memory,
            step: 0,
            finished: false,
            decisions: BTreeMap::new(),
            summary: RunSummary::default(),
            header,
            cfg,
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn agent(&self) -> &DecomposedAgent {
        &self.agent
    }

    pub fn env_model(&self) -> &EnvModel {
        &self.env_model
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn thresholds(&self) -> DineThresholds {
        self.thresholds
    }

    /// Index of the next step to run.
    pub fn next_step(&self) -> u64 {
        self.step
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }

    /// Changes a threshold from the next step on and returns that step.
    /// Out-of-range values are rejected and leave the thresholds unchanged.
    pub fn set_threshold(&mut self, kind: ThresholdKind, value: f64) -> Result<u64> {
        self.thresholds.set(kind, value)?;
        Ok(self.step)
    }

    /// Minimal sufficient explanation for an already emitted step.
    pub fn msx(&self, step: u64) -> Result<MinimalSufficientExplanation> {
        let (q, action) = self
            .decisions
            .get(&step)
            .ok_or_else(|| Error::Data(format!("no record for step {step}")))?;
        minimal_sufficient_explanation(q, *action)
    }

    /// Runs one control step. Returns `None` once `total_steps` have run or
    /// the workload trace is exhausted.
    pub fn step(&mut self) -> Result<Option<StepRecord>> {
        if self.finished || self.step >= self.cfg.total_steps || self.sim.remaining_steps() == 0 {
            self.finished = true;
            return Ok(None);
        }
        let t = self.step;
        let learning = self.cfg.policy == Policy::Learning;

        // monitor
        let state = self.sim.state().clone();
        let observation = self.sim.observe();

        // analyse and plan
        let q = self.agent.channel_q_values(&observation)?;
        let epsilon = if learning {
            self.cfg.agent.epsilon_at(t)
        } else {
            1.0
        };
        let action = epsilon_greedy(&q, epsilon, &mut self.rng);

        // explanations from the action-values that drove the choice
        let landscape = if self.env_model.is_ready() {
            let successors = self
                .env_model
                .predict_all(&observation)?
                .iter()
                .map(|s| self.agent.channel_q_values(s))
                .collect::<Result<Vec<_>>>()?;
            Some(value_landscape(&q, &successors)?)
        } else {
            None
        };
        let dines = derive_dines(t, &q, action, landscape.as_deref(), self.thresholds);

        // execute
        let outcome = match self.sim.step(action) {
            Ok(o) => o,
            Err(Error::EpisodeEnd) => {
                self.finished = true;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };

        // knowledge
        self.memory.push(Transition {
            state: observation.clone(),
            action,
            reward: outcome.reward.clone(),
            next_state: outcome.observation.clone(),
            illegal: !outcome.info.legal,
        })?;
        if learning {
            match self.agent.learn_step(&self.memory, &mut self.rng) {
                Ok(_) => {}
                Err(e) if e.is_not_ready() => {}
                Err(e) => return Err(e),
            }
            if (t + 1).is_multiple_of(self.cfg.env_retrain_interval) {
                match self
                    .env_model
                    .train(&self.memory, self.cfg.env_epochs, self.cfg.env_holdout)
                {
                    Ok(mse) => self.summary.env_model_mse = Some(mse),
                    Err(e) if e.is_not_ready() => {}
                    Err(e) => return Err(e),
                }
            }
        }

        let record = StepRecord {
            step: t,
            state,
            observation,
            action,
            legal: outcome.info.legal,
            reward_total: outcome.reward.total(),
            reward: outcome.reward,
            aggregated_q: aggregate_q(&q),
            q,
            dines,
            epsilon,
            thresholds: self.thresholds,
            value_landscape: landscape,
        };
        self.decisions.insert(t, (record.q.clone(), action));
        self.summary.absorb(&record);
        self.step += 1;
        Ok(Some(record))
    }
}

/// Runs a headless loop to completion, writing the trace if configured.
pub fn run_loop(cfg: RunConfig) -> Result<RunSummary> {
    let trace_path = cfg.trace_path.clone();
    let mut lp = ControlLoop::new(cfg)?;
    match trace_path {
        Some(path) => {
            let mut writer = TraceWriter::create(&path, lp.header())?;
            let summary = run_with_sink(&mut lp, |r| writer.write(r))?;
            writer.finish()?;
            Ok(summary)
        }
        None => run_with_sink(&mut lp, |_| Ok(())),
    }
}

/// Drives `lp` to completion, handing every record to `sink` in order.
pub fn run_with_sink(
    lp: &mut ControlLoop,
    mut sink: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<RunSummary> {
    while let Some(rec) = lp.step()? {
        sink(&rec)?;
    }
    Ok(lp.summary().clone())
}

/// `(x - mean) / std` with the population standard deviation; all zeros when
/// there are fewer than two samples or no variance.
pub fn zscore_series(xs: &[f64]) -> Vec<f64> {
    if xs.len() < 2 {
        return vec![0.0; xs.len()];
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / std).collect()
}
