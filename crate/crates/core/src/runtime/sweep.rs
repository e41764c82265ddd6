//! Threshold sweeps over a recorded trace: how many DINEs each `rho` or `phi`
//! value would have produced.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::record::StepRecord;
use crate::dine::{classify_extrema, detect_important_interactions, ThresholdKind};
use crate::par::{self, Execution};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub kind: ThresholdKind,
    pub threshold: f64,
    pub events: u64,
    pub steps_with_events: u64,
    /// `steps_with_events` over the number of swept steps.
    pub step_fraction: f64,
}

/// `n + 1` evenly spaced values from `lo` to `hi` inclusive. The endpoints are
/// exact and interior points are computed as `lo + i * (hi - lo) / n`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 0 {
        return vec![lo];
    }
    (0..=n)
        .map(|i| {
            if i == n {
                hi
            } else {
                lo + i as f64 * (hi - lo) / n as f64
            }
        })
        .collect()
}

fn events_at(rec: &StepRecord, kind: ThresholdKind, threshold: f64) -> usize {
    match kind {
        ThresholdKind::Rho => detect_important_interactions(&rec.q, rec.action, threshold).len(),
        ThresholdKind::Phi => rec
            .value_landscape
            .as_deref()
            .map_or(0, |l| classify_extrema(l, threshold).len()),
    }
}

/// Counts the events each threshold would produce over `records`. Important
/// interactions are counted for `rho`, reward channel extrema for `phi`;
/// the other threshold is irrelevant to each count.
pub fn sweep(
    records: &[StepRecord],
    kind: ThresholdKind,
    thresholds: &[f64],
    exec: Execution,
) -> Result<Vec<SweepPoint>> {
    for &t in thresholds {
        kind.validate(t)?;
    }
    let steps = records.len().max(1) as f64;
    Ok(par::map(exec, thresholds, |&threshold| {
        let (mut events, mut steps_with_events) = (0u64, 0u64);
        for rec in records {
            let n = events_at(rec, kind, threshold);
            events += n as u64;
            steps_with_events += u64::from(n > 0);
        }
        SweepPoint {
            kind,
            threshold,
            events,
            steps_with_events,
            step_fraction: steps_with_events as f64 / steps,
        }
    }))
}

pub fn write_csv<W: Write>(mut w: W, points: &[SweepPoint]) -> Result<()> {
    writeln!(w, "kind,threshold,events,steps_with_events,step_fraction")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.kind, p.threshold, p.events, p.steps_with_events, p.step_fraction
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_exact() {
        let g = grid(0.0, 1.0, 10);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
        assert!((g[3] - 0.3).abs() < 1e-15);
        assert_eq!(grid(0.2, 0.7, 0), vec![0.2]);
    }

    #[test]
    fn empty_trace_and_bad_thresholds() {
        let pts = sweep(&[], ThresholdKind::Rho, &[0.0, 1.0], Execution::Sequential).unwrap();
        assert!(pts.iter().all(|p| p.events == 0 && p.step_fraction == 0.0));
        assert!(sweep(&[], ThresholdKind::Phi, &[-0.5], Execution::Sequential).is_err());
    }

    #[test]
    fn csv_layout() {
        let pts = vec![SweepPoint {
            kind: ThresholdKind::Phi,
            threshold: 0.5,
            events: 3,
            steps_with_events: 2,
            step_fraction: 0.25,
        }];
        let mut out = Vec::new();
        write_csv(&mut out, &pts).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "kind,threshold,events,steps_with_events,step_fraction\nphi,0.5,3,2,0.25\n"
        );
    }
}
