//! Operational surface: file formats, configuration, synthetic case
//! generation, metrics emission, and the command-line interface.

mod case_io;
mod cli;
mod metrics;
mod plot;
mod scenario;
mod synth;

pub use case_io::{parse_case, write_case};
pub use cli::run_cli;
pub use metrics::{write_manifest, write_metrics, Manifest, MetricsRecord, METRICS_FORMAT_VERSION};
pub use plot::render_line_chart;
pub use scenario::{parse_scenario, write_scenario};
pub use synth::{synth, SynthSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::DdpgConfig;
use crate::env::EnvConfig;
use crate::guard::GuardMode;

#[derive(Debug, Error)]
pub enum ShellError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

impl ShellError {
    pub(crate) fn parse(path: &std::path::Path, msg: impl Into<String>) -> Self {
        ShellError::Parse { path: path.display().to_string(), msg: msg.into() }
    }
}

/// One run's full configuration; stored as JSON and echoed into the
/// manifest. `mode` uses the m1/m2/m3 naming from the training-mode
/// comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: String,
    pub seed: u64,
    pub env: EnvConfig,
    pub ddpg: DdpgConfig,
    /// Write a checkpoint every this many episodes (0 disables periodic
    /// checkpoints; the final one is always written).
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: "m3".to_string(),
            seed: 0,
            env: EnvConfig::default(),
            ddpg: DdpgConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl RunConfig {
    pub fn guard_mode(&self) -> Result<GuardMode, ShellError> {
        parse_mode(&self.mode)
    }
}

pub fn parse_mode(name: &str) -> Result<GuardMode, ShellError> {
    match name {
        "m1" => Ok(GuardMode::None),
        "m2" => Ok(GuardMode::CapacityOnly),
        "m3" => Ok(GuardMode::EqualIncrementalRate),
        other => Err(ShellError::Invalid(format!(
            "unknown mode {other:?}; expected one of m1, m2, m3"
        ))),
    }
}
