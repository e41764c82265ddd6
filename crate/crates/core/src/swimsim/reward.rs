//! Queueing delay and the three reward channels.

use super::{Action, SimConfig};
use crate::replay::RewardVector;

/// Mean response time and throughput of the server pool.
///
/// Each active server is treated as an M/M/1 queue receiving `1/s` of the
/// load: with mean service time `E[S] = t_m + d * t_o` and utilisation
/// `u = lambda * E[S] / s`, the response time is `E[S] / (1 - u)`, capped at
/// `latency_cap`. Saturated pools (`u >= 1`) report the cap.
pub fn compute_latency(
    arrival_rate: f64,
    active_servers: u32,
    dimmer: f64,
    cfg: &SimConfig,
) -> (f64, f64) {
    let servers = active_servers.max(1) as f64;
    let service = cfg.service_time_mandatory + dimmer * cfg.service_time_optional;
    let utilisation = arrival_rate * service / servers;
    let latency = if utilisation < 1.0 {
        (service / (1.0 - utilisation)).min(cfg.latency_cap)
    } else {
        cfg.latency_cap
    };
    let throughput = arrival_rate.min(servers / service);
    (latency, throughput)
}

/// Piecewise-linear satisfaction in the average latency `x` (seconds):
/// flat 0.5 up to 20 ms, linear down to -0.5 at one second, then a shallow
/// slope of -1/20 per second.
pub fn reward_user_satisfaction(x: f64) -> f64 {
    if x <= 0.02 {
        0.5
    } else if x >= 1.0 {
        -0.5 - (x - 1.0) / 20.0
    } else {
        0.5 - (x - 0.02) / 0.98
    }
}

/// `tau * lambda * (d * R_O + (1 - d) * R_M)`
pub fn reward_revenue(tau: f64, arrival_rate: f64, dimmer: f64, cfg: &SimConfig) -> f64 {
    tau * arrival_rate * (dimmer * cfg.revenue_optional + (1.0 - dimmer) * cfg.revenue_mandatory)
}

/// `-(tau * c * s)`
pub fn reward_costs(tau: f64, servers: u32, cfg: &SimConfig) -> f64 {
    -(tau * cfg.server_cost_rate * servers as f64)
}

/// Raw channel rewards in channel order (user satisfaction, revenue, costs).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawRewards {
    pub user_satisfaction: f64,
    pub revenue: f64,
    pub costs: f64,
}

/// Weights the raw channels and applies the per-channel action and
/// illegal-action penalties.
pub fn compose_reward(
    raw: RawRewards,
    action: Action,
    legal: bool,
    cfg: &SimConfig,
) -> RewardVector {
    let mut penalty = 0.0;
    if action != Action::NoAdaptation {
        penalty += cfg.action_penalty;
    }
    if !legal {
        penalty += cfg.illegal_penalty;
    }
    RewardVector(vec![
        cfg.weight_user * raw.user_satisfaction - penalty,
        cfg.weight_revenue * raw.revenue - penalty,
        cfg.weight_cost * raw.costs - penalty,
    ])
}
