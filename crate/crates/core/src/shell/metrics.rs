//! Metrics CSV and run manifest.
//!
//! One record per episode (training) or window (evaluation). Training
//! records leave the latency field empty so two runs with the same seed
//! produce byte-identical files; evaluation fills it with the measured
//! decision time.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{EpisodeMetrics, WindowRecord};
use crate::util::atomic_write;

use super::{RunConfig, ShellError};

pub const METRICS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub index: u64,
    pub reward: f64,
    pub cost: f64,
    pub penalties: [f64; 5],
    pub violations: u64,
    pub steps: u64,
    pub latency_ms: Option<f64>,
    pub diverged: bool,
}

impl From<&EpisodeMetrics> for MetricsRecord {
    fn from(m: &EpisodeMetrics) -> Self {
        Self {
            index: m.episode as u64,
            reward: m.reward,
            cost: m.cost,
            penalties: m.penalties,
            violations: m.violations,
            steps: m.steps as u64,
            latency_ms: None,
            diverged: m.diverged,
        }
    }
}

impl From<&WindowRecord> for MetricsRecord {
    fn from(w: &WindowRecord) -> Self {
        Self {
            index: w.window as u64,
            reward: w.reward,
            cost: w.first_step_cost,
            penalties: w.penalties,
            violations: w.violations,
            steps: 1,
            latency_ms: Some(w.latency_ms),
            diverged: w.diverged,
        }
    }
}

const HEADER: &str =
    "index,reward,cost,pen_p_bound,pen_q_bound,pen_ramp,pen_flow,pen_voltage,violations,steps,latency_ms,diverged";

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<(), ShellError> {
    let mut body = String::with_capacity(64 * (records.len() + 1));
    body.push_str(HEADER);
    body.push('\n');
    for r in records {
        let latency = r.latency_ms.map(|v| format!("{v}")).unwrap_or_default();
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.index,
            r.reward,
            r.cost,
            r.penalties[0],
            r.penalties[1],
            r.penalties[2],
            r.penalties[3],
            r.penalties[4],
            r.violations,
            r.steps,
            latency,
            r.diverged,
        ));
    }
    atomic_write(path, body.as_bytes())?;
    Ok(())
}

/// Echo of everything needed to reproduce a run bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub metrics_format_version: u32,
    pub case: String,
    pub scenario: String,
    pub config: RunConfig,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), ShellError> {
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| ShellError::Invalid(format!("serialize manifest: {e}")))?;
    atomic_write(path, body.as_bytes())?;
    Ok(())
}
