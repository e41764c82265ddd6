//! Arrival-rate traces: synthetic generators and CSV files.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Temporary additive load on top of the base pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub start: usize,
    pub duration: usize,
    pub extra: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSpec {
    /// `base + amplitude * sin(2 pi t / period) + spikes + N(0, noise_std)`,
    /// clamped at zero.
    Synthetic {
        base: f64,
        amplitude: f64,
        period: f64,
        noise_std: f64,
        spikes: Vec<Spike>,
        seed: u64,
        len: usize,
    },
    Csv {
        path: PathBuf,
    },
}

impl WorkloadSpec {
    pub fn constant(rate: f64, len: usize) -> Self {
        WorkloadSpec::Synthetic {
            base: rate,
            amplitude: 0.0,
            period: 1.0,
            noise_std: 0.0,
            spikes: Vec::new(),
            seed: 0,
            len,
        }
    }

    /// The default daily-cycle-like load used by the testbed.
    pub fn sinusoid(len: usize, seed: u64) -> Self {
        WorkloadSpec::Synthetic {
            base: 60.0,
            amplitude: 30.0,
            period: 240.0,
            noise_std: 3.0,
            spikes: Vec::new(),
            seed,
            len,
        }
    }

    /// Same generator with a different length (CSV traces are unaffected).
    pub fn with_len(mut self, new_len: usize) -> Self {
        if let WorkloadSpec::Synthetic { len, .. } = &mut self {
            *len = new_len;
        }
        self
    }
}

pub fn generate(spec: &WorkloadSpec) -> Result<Vec<f64>> {
    match spec {
        WorkloadSpec::Synthetic {
            base,
            amplitude,
            period,
            noise_std,
            spikes,
            seed,
            len,
        } => {
            if !(*period > 0.0) || !(*noise_std >= 0.0) {
                return Err(Error::Config(format!(
                    "workload period must be positive and noise non-negative (period {period}, noise {noise_std})"
                )));
            }
            let noise = Normal::new(0.0, *noise_std).map_err(|e| Error::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..*len)
                .map(|t| {
                    let mut rate =
                        base + amplitude * (std::f64::consts::TAU * t as f64 / period).sin();
                    for s in spikes {
                        if t >= s.start && t < s.start + s.duration {
                            rate += s.extra;
                        }
                    }
                    if *noise_std > 0.0 {
                        rate += noise.sample(&mut rng);
                    }
                    rate.max(0.0)
                })
                .collect())
        }
        WorkloadSpec::Csv { path } => load_csv(path),
    }
}

pub fn load_csv(path: &Path) -> Result<Vec<f64>> {
    parse_csv(&std::fs::read_to_string(path)?)
}

/// One positive decimal per line; blank lines are skipped.
pub fn parse_csv(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|e| Error::Parse(format!("workload line {}: `{t}`: {e}", i + 1)))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Parse(format!(
                "workload line {}: rate must be positive, got {v}",
                i + 1
            )));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Parse("workload file holds no rates".into()));
    }
    Ok(out)
}
