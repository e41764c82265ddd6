//! Run configuration and its key-value file format.
//!
//! Config files hold one `key = value` pair per line; `#` starts a comment and
//! blank lines are ignored. Keys are the dotted names accepted by
//! [`RunConfig::set`]; anything not mentioned keeps its default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentHyper;
use crate::dine::DineThresholds;
use crate::envmodel::EnvModelConfig;
use crate::replay::DEFAULT_CAPACITY;
use crate::swimsim::workload::Spike;
use crate::swimsim::{SimConfig, WorkloadSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Decomposed double DQN with epsilon-greedy exploration.
    Learning,
    /// Uniformly random actions; no learning, no environment model.
    UniformRandom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    /// Synthetic traces are regenerated with `total_steps + 1` entries.
    pub workload: WorkloadSpec,
    pub agent: AgentHyper,
    pub env_model: EnvModelConfig,
    pub env_retrain_interval: u64,
    pub env_epochs: usize,
    pub env_holdout: f64,
    pub thresholds: DineThresholds,
    pub replay_capacity: usize,
    pub total_steps: u64,
    pub seed: u64,
    pub policy: Policy,
    pub trace_path: Option<PathBuf>,
    pub port: u16,
    pub backlog: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sim: SimConfig::default(),
            workload: WorkloadSpec::sinusoid(0, 7),
            agent: AgentHyper::default(),
            env_model: EnvModelConfig::default(),
            env_retrain_interval: 1000,
            env_epochs: 20,
            env_holdout: 0.1,
            thresholds: DineThresholds::default(),
            replay_capacity: DEFAULT_CAPACITY,
            total_steps: 20_000,
            seed: 1,
            policy: Policy::Learning,
            trace_path: None,
            port: 7878,
            backlog: 500,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

fn parse_spikes(value: &str) -> Result<Vec<Spike>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| {
            let parts: Vec<&str> = s.trim().split(':').collect();
            match parts.as_slice() {
                [start, duration, extra] => Ok(Spike {
                    start: parse("workload.spikes", start)?,
                    duration: parse("workload.spikes", duration)?,
                    extra: parse("workload.spikes", extra)?,
                }),
                _ => Err(Error::Config(format!(
                    "workload.spikes: expected start:duration:extra, got `{s}`"
                ))),
            }
        })
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_kv(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Sets one configuration key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        let sim = &mut self.sim;
        let agent = &mut self.agent;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "steps" => self.total_steps = parse(key, v)?,
            "trace" => self.trace_path = Some(PathBuf::from(v)),
            "port" => self.port = parse(key, v)?,
            "backlog" => self.backlog = parse(key, v)?,
            "policy" => {
                self.policy = match v {
                    "learning" => Policy::Learning,
                    "random" => Policy::UniformRandom,
                    _ => {
                        return Err(Error::Config(format!(
                            "policy must be `learning` or `random`, got `{v}`"
                        )))
                    }
                }
            }
            "rho" => self.thresholds.rho = parse(key, v)?,
            "phi" => self.thresholds.phi = parse(key, v)?,

            "sim.tau" => sim.tau = parse(key, v)?,
            "sim.max_servers" => sim.max_servers = parse(key, v)?,
            "sim.initial_servers" => sim.initial_servers = parse(key, v)?,
            "sim.initial_dimmer" => sim.initial_dimmer = parse(key, v)?,
            "sim.boot_delay_steps" => sim.boot_delay_steps = parse(key, v)?,
            "sim.dimmer_step" => sim.dimmer_step = parse(key, v)?,
            "sim.service_time_mandatory" => sim.service_time_mandatory = parse(key, v)?,
            "sim.service_time_optional" => sim.service_time_optional = parse(key, v)?,
            "sim.latency_cap" => sim.latency_cap = parse(key, v)?,
            "sim.revenue_optional" => sim.revenue_optional = parse(key, v)?,
            "sim.revenue_mandatory" => sim.revenue_mandatory = parse(key, v)?,
            "sim.server_cost_rate" => sim.server_cost_rate = parse(key, v)?,
            "sim.weight_user" => sim.weight_user = parse(key, v)?,
            "sim.weight_revenue" => sim.weight_revenue = parse(key, v)?,
            "sim.weight_cost" => sim.weight_cost = parse(key, v)?,
            "sim.action_penalty" => sim.action_penalty = parse(key, v)?,
            "sim.illegal_penalty" => sim.illegal_penalty = parse(key, v)?,
            "sim.obs_rate_ref" => sim.obs_rate_ref = parse(key, v)?,
            "sim.obs_latency_scale" => sim.obs_latency_scale = parse(key, v)?,
            "sim.obs_throughput_scale" => sim.obs_throughput_scale = parse(key, v)?,

            "agent.gamma" => agent.gamma = parse(key, v)?,
            "agent.epsilon_start" => agent.epsilon_start = parse(key, v)?,
            "agent.epsilon_end" => agent.epsilon_end = parse(key, v)?,
            "agent.epsilon_decay_steps" => agent.epsilon_decay_steps = parse(key, v)?,
            "agent.batch_size" => agent.batch_size = parse(key, v)?,
            "agent.target_sync_interval" => agent.target_sync_interval = parse(key, v)?,
            "agent.learning_rate" => agent.learning_rate = parse(key, v)?,
            "agent.hidden_layers" => agent.hidden_layers = parse_list(key, v)?,
            "replay.capacity" => self.replay_capacity = parse(key, v)?,

            "envmodel.hidden_layers" => self.env_model.hidden_layers = parse_list(key, v)?,
            "envmodel.learning_rate" => self.env_model.learning_rate = parse(key, v)?,
            "envmodel.minibatch" => self.env_model.minibatch = parse(key, v)?,
            "envmodel.min_samples" => self.env_model.min_samples = parse(key, v)?,
            "envmodel.retrain_interval" => self.env_retrain_interval = parse(key, v)?,
            "envmodel.epochs" => self.env_epochs = parse(key, v)?,
            "envmodel.holdout" => self.env_holdout = parse(key, v)?,

            "workload.kind" => {
                self.workload = match v {
                    "synthetic" => match &self.workload {
                        w @ WorkloadSpec::Synthetic { .. } => w.clone(),
                        WorkloadSpec::Csv { .. } => WorkloadSpec::sinusoid(0, 7),
                    },
                    "csv" => WorkloadSpec::Csv {
                        path: match &self.workload {
                            WorkloadSpec::Csv { path } => path.clone(),
                            _ => PathBuf::new(),
                        },
                    },
                    _ => {
                        return Err(Error::Config(format!(
                            "workload.kind must be `synthetic` or `csv`, got `{v}`"
                        )))
                    }
                }
            }
            "workload.path" => {
                self.workload = WorkloadSpec::Csv {
                    path: PathBuf::from(v),
                }
            }
            k if k.starts_with("workload.") => self.set_synthetic(k, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    fn set_synthetic(&mut self, key: &str, v: &str) -> Result<()> {
        let WorkloadSpec::Synthetic {
            base,
            amplitude,
            period,
            noise_std,
            spikes,
            seed,
            ..
        } = &mut self.workload
        else {
            return Err(Error::Config(format!(
                "{key} only applies to synthetic workloads"
            )));
        };
        match key {
            "workload.base" => *base = parse(key, v)?,
            "workload.amplitude" => *amplitude = parse(key, v)?,
            "workload.period" => *period = parse(key, v)?,
            "workload.noise_std" => *noise_std = parse(key, v)?,
            "workload.seed" => *seed = parse(key, v)?,
            "workload.spikes" => *spikes = parse_spikes(v)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.agent.validate()?;
        self.thresholds.validate()?;
        if self.replay_capacity == 0 {
            return Err(Error::Config("replay.capacity must be positive".into()));
        }
        if self.env_retrain_interval == 0 {
            return Err(Error::Config(
                "envmodel.retrain_interval must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.env_holdout) {
            return Err(Error::Config("envmodel.holdout must be in [0, 1)".into()));
        }
        Ok(())
    }
}
