//! Discrete-time simulator of a self-adaptive multi-tier web application.
//!
//! The application runs a pool of web servers behind a load balancer and a
//! dimmer: the fraction of requests that also get optional, computationally
//! expensive content. Each control step lasts `tau` seconds; the simulator
//! advances the workload trace by one entry, applies the adaptation action,
//! recomputes latency and throughput from a queueing model and returns a
//! three-channel reward vector.

mod reward;
pub mod workload;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use reward::{
    compose_reward, compute_latency, reward_costs, reward_revenue, reward_user_satisfaction,
    RawRewards,
};
pub use workload::{generate as generate_workload, WorkloadSpec};

use crate::agent::ChannelSpec;
use crate::replay::RewardVector;
use crate::{Error, Result};

pub const OBSERVATION_DIM: usize = 5;
pub const CHANNEL_NAMES: [&str; 3] = ["user_satisfaction", "revenue", "costs"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    NoAdaptation = 0,
    AddServer = 1,
    RemoveServer = 2,
    IncreaseDimmer = 3,
    DecreaseDimmer = 4,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::NoAdaptation,
        Action::AddServer,
        Action::RemoveServer,
        Action::IncreaseDimmer,
        Action::DecreaseDimmer,
    ];
    pub const COUNT: usize = 5;

    pub fn from_index(i: usize) -> Result<Self> {
        Action::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Data(format!("unknown action id {i}")))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::NoAdaptation => "NoAdaptation",
            Action::AddServer => "AddServer",
            Action::RemoveServer => "RemoveServer",
            Action::IncreaseDimmer => "IncreaseDimmer",
            Action::DecreaseDimmer => "DecreaseDimmer",
        }
    }

    pub fn names() -> Vec<String> {
        Action::ALL.iter().map(|a| a.name().to_string()).collect()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Seconds per control step.
    pub tau: f64,
    pub max_servers: u32,
    pub initial_servers: u32,
    pub initial_dimmer: f64,
    pub boot_delay_steps: u32,
    pub dimmer_step: f64,
    pub service_time_mandatory: f64,
    pub service_time_optional: f64,
    pub latency_cap: f64,
    /// Revenue per request served with optional content.
    pub revenue_optional: f64,
    /// Revenue per request served without optional content.
    pub revenue_mandatory: f64,
    /// Cost per server-second.
    pub server_cost_rate: f64,
    pub weight_user: f64,
    pub weight_revenue: f64,
    pub weight_cost: f64,
    pub action_penalty: f64,
    pub illegal_penalty: f64,
    /// Arrival rate whose inverse inter-arrival time normalises to 1.
    pub obs_rate_ref: f64,
    pub obs_latency_scale: f64,
    pub obs_throughput_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tau: 60.0,
            max_servers: 12,
            initial_servers: 4,
            initial_dimmer: 1.0,
            boot_delay_steps: 1,
            dimmer_step: 0.05,
            service_time_mandatory: 0.02,
            service_time_optional: 0.05,
            latency_cap: 10.0,
            revenue_optional: 5e-4,
            revenue_mandatory: 2e-4,
            server_cost_rate: 5e-3,
            weight_user: 4.0,
            weight_revenue: 2.0,
            weight_cost: 1.0,
            action_penalty: 0.1,
            illegal_penalty: 1.0,
            obs_rate_ref: 20.0,
            obs_latency_scale: 1.0,
            obs_throughput_scale: 150.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 10] = [
            (self.tau > 0.0, "tau must be positive"),
            (self.max_servers >= 1, "max_servers must be at least 1"),
            (
                (1..=self.max_servers).contains(&self.initial_servers),
                "initial_servers must be in [1, max_servers]",
            ),
            (
                (0.0..=1.0).contains(&self.initial_dimmer),
                "initial_dimmer must be in [0, 1]",
            ),
            (
                self.dimmer_step > 0.0 && self.dimmer_step <= 1.0,
                "dimmer_step must be in (0, 1]",
            ),
            (
                self.service_time_mandatory > 0.0 && self.service_time_optional >= 0.0,
                "service times must be positive",
            ),
            (
                self.latency_cap > self.service_time_mandatory,
                "latency_cap must exceed the mandatory service time",
            ),
            (
                self.revenue_optional > self.revenue_mandatory && self.revenue_mandatory > 0.0,
                "need revenue_optional > revenue_mandatory > 0",
            ),
            (
                self.server_cost_rate >= 0.0
                    && self.action_penalty >= 0.0
                    && self.illegal_penalty >= 0.0,
                "costs and penalties must be non-negative",
            ),
            (
                self.obs_rate_ref > 0.0
                    && self.obs_latency_scale > 0.0
                    && self.obs_throughput_scale > 0.0,
                "observation scales must be positive",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }

    /// Reward channels with their weights, in reward-vector order.
    pub fn channels(&self) -> Vec<ChannelSpec> {
        let weights = [self.weight_user, self.weight_revenue, self.weight_cost];
        CHANNEL_NAMES
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (name, w))| ChannelSpec::new(i, *name, w))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Requests per second during the current step.
    pub arrival_rate: f64,
    pub active_servers: u32,
    pub booting_servers: u32,
    pub dimmer: f64,
    /// Average response time in seconds.
    pub response_time: f64,
    /// Requests per second.
    pub throughput: f64,
    pub step_index: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub legal: bool,
    pub raw: RawRewards,
    pub state: SimState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: RewardVector,
    pub info: StepInfo,
}

#[derive(Clone, Debug)]
pub struct Simulator {
    cfg: SimConfig,
    trace: Vec<f64>,
    state: SimState,
    /// Remaining boot steps of each server that is starting up.
    booting: VecDeque<u32>,
}

// Keeps repeated +/- dimmer_step moves on the grid.
fn snap_dimmer(d: f64) -> f64 {
    ((d * 1e12).round() / 1e12).clamp(0.0, 1.0)
}

impl Simulator {
    pub fn new(cfg: SimConfig, trace: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let first = *trace
            .first()
            .ok_or_else(|| Error::Config("workload trace is empty".into()))?;
        if trace.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config(
                "workload rates must be finite and non-negative".into(),
            ));
        }
        let (response_time, throughput) =
            compute_latency(first, cfg.initial_servers, cfg.initial_dimmer, &cfg);
        let state = SimState {
            arrival_rate: first,
            active_servers: cfg.initial_servers,
            booting_servers: 0,
            dimmer: cfg.initial_dimmer,
            response_time,
            throughput,
            step_index: 0,
        };
        Ok(Simulator {
            cfg,
            trace,
            state,
            booting: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Steps left before the trace is exhausted.
    pub fn remaining_steps(&self) -> usize {
        self.trace.len() - 1 - self.state.step_index as usize
    }

    /// Normalised observation: inverse inter-arrival time, response time,
    /// throughput, server share and dimmer, each scaled into `[0, 1]`.
    pub fn observe(&self) -> Vec<f64> {
        observation_of(&self.state, &self.cfg)
    }

    fn is_legal(&self, action: Action) -> bool {
        let s = &self.state;
        match action {
            Action::NoAdaptation => true,
            Action::AddServer => s.active_servers + s.booting_servers < self.cfg.max_servers,
            Action::RemoveServer => s.active_servers > 1,
            Action::IncreaseDimmer => s.dimmer < 1.0,
            Action::DecreaseDimmer => s.dimmer > 0.0,
        }
    }

    fn tick_boot_queue(&mut self) {
        for remaining in self.booting.iter_mut() {
            *remaining = remaining.saturating_sub(1);
        }
        self.activate_booted();
    }

    fn activate_booted(&mut self) {
        while self.booting.front() == Some(&0) {
            self.booting.pop_front();
            self.state.active_servers += 1;
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let action = Action::from_index(action)?;
        let next_index = self.state.step_index as usize + 1;
        let Some(&arrival_rate) = self.trace.get(next_index) else {
            return Err(Error::EpisodeEnd);
        };

        // Servers that finished booting join before this step's action.
        self.tick_boot_queue();
        let legal = self.is_legal(action);
        if legal {
            match action {
                Action::NoAdaptation => {}
                Action::AddServer => {
                    self.booting.push_back(self.cfg.boot_delay_steps);
                    // zero boot delay activates immediately
                    self.activate_booted();
                }
                Action::RemoveServer => self.state.active_servers -= 1,
                Action::IncreaseDimmer => {
                    self.state.dimmer = snap_dimmer(self.state.dimmer + self.cfg.dimmer_step)
                }
                Action::DecreaseDimmer => {
                    self.state.dimmer = snap_dimmer(self.state.dimmer - self.cfg.dimmer_step)
                }
            }
        }
        self.state.booting_servers = self.booting.len() as u32;

        self.state.arrival_rate = arrival_rate;
        self.state.step_index = next_index as u64;
        let (x, thr) = compute_latency(
            arrival_rate,
            self.state.active_servers,
            self.state.dimmer,
            &self.cfg,
        );
        self.state.response_time = x;
        self.state.throughput = thr;

        let cfg = &self.cfg;
        let raw = RawRewards {
            user_satisfaction: reward_user_satisfaction(x),
            revenue: reward_revenue(cfg.tau, arrival_rate, self.state.dimmer, cfg),
            costs: reward_costs(
                cfg.tau,
                self.state.active_servers + self.state.booting_servers,
                cfg,
            ),
        };
        let reward = compose_reward(raw, action, legal, cfg);
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            info: StepInfo {
                legal,
                raw,
                state: self.state.clone(),
            },
        })
    }
}

pub fn observation_of(s: &SimState, cfg: &SimConfig) -> Vec<f64> {
    let inter_arrival = if s.arrival_rate > 0.0 {
        (cfg.obs_rate_ref / s.arrival_rate).min(1.0)
    } else {
        1.0
    };
    vec![
        inter_arrival,
        (s.response_time / cfg.obs_latency_scale).min(1.0),
        (s.throughput / cfg.obs_throughput_scale).min(1.0),
        s.active_servers as f64 / cfg.max_servers as f64,
        s.dimmer,
    ]
}
