//! Decomposed Interestingness Elements.
//!
//! Pure analysis over action-value snapshots: nothing here touches the agent,
//! the environment model or the replay memory.
//!
//! * Important interaction: some channel's normalised action-values are
//!   unequal (Gini coefficient at least `rho`) and that channel's greedy action
//!   differs from the action the aggregated agent took.
//! * Reward channel extremum: the current state-value sits at least `phi`
//!   below (minimum) or above (maximum) the state-values of every predicted
//!   one-step successor, per channel and for the aggregated agent.
//! * Reward channel dominance: absolute action-values per channel, plus the
//!   relative form with each channel's worst action-value subtracted.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::{aggregate_q, argmax, QMatrix};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DineThresholds {
    /// Minimum inequality for an important interaction, in `[0, 1]`.
    pub rho: f64,
    /// Minimum extremum margin, `>= 0`.
    pub phi: f64,
}

impl Default for DineThresholds {
    fn default() -> Self {
        DineThresholds { rho: 0.3, phi: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    Rho,
    Phi,
}

impl ThresholdKind {
    pub fn validate(self, value: f64) -> Result<()> {
        let ok = match self {
            ThresholdKind::Rho => (0.0..=1.0).contains(&value),
            ThresholdKind::Phi => value >= 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{self} out of range: {value}")))
        }
    }
}

impl fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdKind::Rho => "rho",
            ThresholdKind::Phi => "phi",
        })
    }
}

impl std::str::FromStr for ThresholdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(ThresholdKind::Rho),
            "phi" => Ok(ThresholdKind::Phi),
            other => Err(Error::Parse(format!("unknown threshold `{other}`"))),
        }
    }
}

impl DineThresholds {
    pub fn validate(&self) -> Result<()> {
        ThresholdKind::Rho.validate(self.rho)?;
        ThresholdKind::Phi.validate(self.phi)
    }

    pub fn get(&self, kind: ThresholdKind) -> f64 {
        match kind {
            ThresholdKind::Rho => self.rho,
            ThresholdKind::Phi => self.phi,
        }
    }

    pub fn set(&mut self, kind: ThresholdKind, value: f64) -> Result<()> {
        kind.validate(value)?;
        match kind {
            ThresholdKind::Rho => self.rho = value,
            ThresholdKind::Phi => self.phi = value,
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportantInteraction {
    pub channel_id: usize,
    pub chosen_action: usize,
    pub contrast_action: usize,
    pub importance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumScope {
    Channel(usize),
    Aggregate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub scope: ExtremumScope,
    pub kind: ExtremumKind,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub absolute: QMatrix,
    pub relative: QMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DineKind {
    ImportantInteraction(ImportantInteraction),
    RewardChannelExtremum(Extremum),
    RewardChannelDominance(Dominance),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DineEvent {
    pub step: u64,
    #[serde(flatten)]
    pub kind: DineKind,
}

/// Min-shifted, sum-normalised action-values. A flat row maps to the uniform
/// distribution.
pub fn action_value_distribution(q_row: &[f64]) -> Vec<f64> {
    let n = q_row.len();
    if n == 0 {
        return Vec::new();
    }
    let min = q_row.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = q_row.iter().map(|v| v - min).collect();
    let total: f64 = shifted.iter().sum();
    if total > 0.0 && total.is_finite() {
        shifted.into_iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// Gini coefficient of a non-negative vector,
/// `sum_i sum_j |p_i - p_j| / (2 n sum p)`, evaluated in `O(n log n)` from
/// the sorted values.
pub fn gini(p: &[f64]) -> f64 {
    let n = p.len();
    if n < 2 || p.iter().all(|&v| v == p[0]) {
        return 0.0;
    }
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    // sum_i sum_j |x_i - x_j| = 2 * sum_k (2k - n - 1) x_(k), k 1-based.
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| (2.0 * (k + 1) as f64 - n as f64 - 1.0) * x)
        .sum();
    (weighted / (n as f64 * total)).max(0.0)
}

pub fn detect_important_interactions(
    q: &QMatrix,
    chosen: usize,
    rho: f64,
) -> Vec<ImportantInteraction> {
    if q.n_actions() < 2 {
        return Vec::new();
    }
    q.rows()
        .iter()
        .enumerate()
        .filter_map(|(c, row)| {
            let preferred = argmax(row);
            if preferred == chosen {
                return None;
            }
            let importance = gini(&action_value_distribution(row));
            (importance >= rho).then_some(ImportantInteraction {
                channel_id: c,
                chosen_action: chosen,
                contrast_action: preferred,
                importance,
            })
        })
        .collect()
}

/// Value of the greedy action.
pub fn state_value(q_row: &[f64]) -> f64 {
    q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Current state-value of one scope and the extreme state-values over all
/// predicted successors. Stored per step so extrema can be re-derived for any
/// `phi` without re-running the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopeValues {
    pub scope: ExtremumScope,
    pub current: f64,
    pub next_min: f64,
    pub next_max: f64,
}

/// Per-channel scopes followed by the aggregate scope.
pub fn value_landscape(q_now: &QMatrix, predicted_next: &[QMatrix]) -> Result<Vec<ScopeValues>> {
    if predicted_next.len() != q_now.n_actions() {
        return Err(Error::Dimension {
            expected: q_now.n_actions(),
            got: predicted_next.len(),
        });
    }
    if let Some(bad) = predicted_next
        .iter()
        .find(|q| q.n_channels() != q_now.n_channels() || q.n_actions() != q_now.n_actions())
    {
        return Err(Error::Dimension {
            expected: q_now.n_channels() * q_now.n_actions(),
            got: bad.n_channels() * bad.n_actions(),
        });
    }
    let summarize = |scope, current, next: Vec<f64>| ScopeValues {
        scope,
        current,
        next_min: next.iter().copied().fold(f64::INFINITY, f64::min),
        next_max: next.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let mut out: Vec<ScopeValues> = (0..q_now.n_channels())
        .map(|c| {
            summarize(
                ExtremumScope::Channel(c),
                state_value(q_now.row(c)),
                predicted_next
                    .iter()
                    .map(|q| state_value(q.row(c)))
                    .collect(),
            )
        })
        .collect();
    out.push(summarize(
        ExtremumScope::Aggregate,
        state_value(&aggregate_q(q_now)),
        predicted_next
            .iter()
            .map(|q| state_value(&aggregate_q(q)))
            .collect(),
    ));
    Ok(out)
}

/// Applies the `phi` margin rule to a precomputed landscape. A zero `phi`
/// still requires a strictly positive gap, so flat landscapes emit nothing.
pub fn classify_extrema(landscape: &[ScopeValues], phi: f64) -> Vec<Extremum> {
    let mut out = Vec::new();
    for sv in landscape {
        let below = sv.next_min - sv.current;
        let above = sv.current - sv.next_max;
        if below > 0.0 && below >= phi {
            out.push(Extremum {
                scope: sv.scope,
                kind: ExtremumKind::Min,
                margin: below,
            });
        }
        if above > 0.0 && above >= phi {
            out.push(Extremum {
                scope: sv.scope,
                kind: ExtremumKind::Max,
                margin: above,
            });
        }
    }
    out
}

/// `predicted_next[a]` holds the channel action-values at the model's
/// predicted successor for action `a`.
pub fn detect_extrema(
    q_now: &QMatrix,
    predicted_next: &[QMatrix],
    phi: f64,
) -> Result<Vec<Extremum>> {
    Ok(classify_extrema(
        &value_landscape(q_now, predicted_next)?,
        phi,
    ))
}

pub fn reward_channel_dominance(q: &QMatrix) -> Dominance {
    let relative = q
        .rows()
        .iter()
        .map(|row| {
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            row.iter().map(|v| v - min).collect()
        })
        .collect();
    Dominance {
        absolute: q.clone(),
        relative: QMatrix::new(relative).expect("same shape as a valid QMatrix"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalSufficientExplanation {
    pub chosen: usize,
    /// Aggregated runner-up; `None` when there is only one action.
    pub best_alternative: Option<usize>,
    /// Channels ordered by decreasing advantage of `chosen` over the runner-up.
    pub channels: Vec<usize>,
}

/// Smallest prefix of channels, ranked by advantage of `chosen` over the best
/// alternative, whose combined advantage outweighs every disadvantage among
/// the remaining channels.
pub fn minimal_sufficient_explanation(
    q: &QMatrix,
    chosen: usize,
) -> Result<MinimalSufficientExplanation> {
    if chosen >= q.n_actions() {
        return Err(Error::UndefinedInput(format!(
            "action {chosen} out of range"
        )));
    }
    let agg = aggregate_q(q);
    if agg[chosen] < state_value(&agg) {
        return Err(Error::UndefinedInput(format!(
            "action {chosen} is not the aggregated greedy action"
        )));
    }
    let Some(alt) = (0..q.n_actions())
        .filter(|&a| a != chosen)
        .reduce(|best, a| if agg[a] > agg[best] { a } else { best })
    else {
        return Ok(MinimalSufficientExplanation {
            chosen,
            best_alternative: None,
            channels: Vec::new(),
        });
    };

    let advantage: Vec<f64> = q.rows().iter().map(|r| r[chosen] - r[alt]).collect();
    let mut ranked: Vec<usize> = (0..q.n_channels()).collect();
    ranked.sort_by(|&a, &b| advantage[b].total_cmp(&advantage[a]));

    let mut gained = 0.0;
    for k in 1..=ranked.len() {
        gained += advantage[ranked[k - 1]];
        let opposing: f64 = ranked[k..].iter().map(|&c| (-advantage[c]).max(0.0)).sum();
        if gained > opposing {
            ranked.truncate(k);
            break;
        }
    }
    Ok(MinimalSufficientExplanation {
        chosen,
        best_alternative: Some(alt),
        channels: ranked,
    })
}

fn name<'a>(names: &'a [String], id: usize, what: &str) -> Result<&'a str> {
    names
        .get(id)
        .map(String::as_str)
        .ok_or_else(|| Error::UndefinedInput(format!("no name for {what} {id}")))
}

pub fn render_explanation_text(
    e: &DineEvent,
    action_names: &[String],
    channel_names: &[String],
) -> Result<String> {
    let t = e.step;
    Ok(match &e.kind {
        DineKind::ImportantInteraction(ii) => format!(
            "At step {t}, the {} sub-agent would have chosen {} instead of {} (importance {:.2}).",
            name(channel_names, ii.channel_id, "channel")?,
            name(action_names, ii.contrast_action, "action")?,
            name(action_names, ii.chosen_action, "action")?,
            ii.importance
        ),
        DineKind::RewardChannelExtremum(x) => {
            let who = match x.scope {
                ExtremumScope::Aggregate => "the aggregated agent".to_string(),
                ExtremumScope::Channel(c) => {
                    format!("the {} sub-agent", name(channel_names, c, "channel")?)
                }
            };
            let kind = match x.kind {
                ExtremumKind::Min => "minimum",
                ExtremumKind::Max => "maximum",
            };
            format!(
                "At step {t}, {who} reached a local reward {kind} (margin {:.2}).",
                x.margin
            )
        }
        DineKind::RewardChannelDominance(d) => {
            let parts = d
                .relative
                .rows()
                .iter()
                .enumerate()
                .map(|(c, row)| {
                    let a = argmax(row);
                    Ok(format!(
                        "{} favors {} (+{:.2})",
                        name(channel_names, c, "channel")?,
                        name(action_names, a, "action")?,
                        row[a]
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            format!(
                "At step {t}, reward channel dominance: {}.",
                parts.join("; ")
            )
        }
    })
}
