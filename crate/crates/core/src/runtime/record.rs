//! Per-step telemetry records and the JSONL trace format.
//!
//! A trace file starts with one [`TraceHeader`] line followed by one
//! [`StepRecord`] per line, in step order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{aggregate_q, QMatrix};
use crate::dine::{
    classify_extrema, detect_important_interactions, reward_channel_dominance, DineEvent, DineKind,
    DineThresholds, ScopeValues,
};
use crate::replay::RewardVector;
use crate::swimsim::SimState;
use crate::{Error, Result};

pub const TRACE_SCHEMA: &str = "dine-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub version: u32,
    pub channels: Vec<String>,
    pub actions: Vec<String>,
}

impl TraceHeader {
    pub fn new(channels: Vec<String>, actions: Vec<String>) -> Self {
        TraceHeader {
            schema: TRACE_SCHEMA.into(),
            version: TRACE_VERSION,
            channels,
            actions,
        }
    }
}

/// Everything observed and decided during one control step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// Simulator state at decision time.
    pub state: SimState,
    pub observation: Vec<f64>,
    pub action: usize,
    pub legal: bool,
    /// Reward vector received for the action.
    pub reward: RewardVector,
    pub reward_total: f64,
    /// Online-network action-values used to pick the action.
    pub q: QMatrix,
    pub aggregated_q: Vec<f64>,
    pub dines: Vec<DineEvent>,
    pub epsilon: f64,
    pub thresholds: DineThresholds,
    /// State-values now and over the predicted successors, per channel then
    /// aggregate; absent until the environment model is ready.
    pub value_landscape: Option<Vec<ScopeValues>>,
}

impl StepRecord {
    /// Recomputes the record's DINEs under different thresholds.
    pub fn with_thresholds(&self, thresholds: DineThresholds) -> StepRecord {
        let mut out = self.clone();
        out.dines = derive_dines(
            self.step,
            &self.q,
            self.action,
            self.value_landscape.as_deref(),
            thresholds,
        );
        out.thresholds = thresholds;
        out
    }

    pub fn count(&self, pred: impl Fn(&DineKind) -> bool) -> usize {
        self.dines.iter().filter(|e| pred(&e.kind)).count()
    }

    pub fn aggregated(&self) -> Vec<f64> {
        aggregate_q(&self.q)
    }
}

/// Important interactions, then extrema (when a landscape is available),
/// then the step's dominance element.
pub fn derive_dines(
    step: u64,
    q: &QMatrix,
    action: usize,
    landscape: Option<&[ScopeValues]>,
    thresholds: DineThresholds,
) -> Vec<DineEvent> {
    let mut dines: Vec<DineEvent> = detect_important_interactions(q, action, thresholds.rho)
        .into_iter()
        .map(|ii| DineEvent {
            step,
            kind: DineKind::ImportantInteraction(ii),
        })
        .collect();
    if let Some(landscape) = landscape {
        dines.extend(
            classify_extrema(landscape, thresholds.phi)
                .into_iter()
                .map(|x| DineEvent {
                    step,
                    kind: DineKind::RewardChannelExtremum(x),
                }),
        );
    }
    dines.push(DineEvent {
        step,
        kind: DineKind::RewardChannelDominance(reward_channel_dominance(q)),
    });
    dines
}

pub struct TraceWriter<W: Write> {
    out: W,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &TraceHeader) -> Result<Self> {
        TraceWriter::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader) -> Result<Self> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        Ok(TraceWriter { out })
    }

    pub fn write(&mut self, record: &StepRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn read_trace<R: BufRead>(r: R) -> Result<(TraceHeader, Vec<StepRecord>)> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Parse("trace is empty".into()))??;
    let header: TraceHeader = serde_json::from_str(&header_line)?;
    if header.schema != TRACE_SCHEMA || header.version != TRACE_VERSION {
        return Err(Error::Parse(format!(
            "unsupported trace schema {} v{}",
            header.schema, header.version
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("trace line {}: {e}", i + 2)))?;
        records.push(rec);
    }
    Ok((header, records))
}

pub fn load_trace(path: &Path) -> Result<(TraceHeader, Vec<StepRecord>)> {
    read_trace(BufReader::new(File::open(path)?))
}
