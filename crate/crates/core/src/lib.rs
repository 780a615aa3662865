//! Look-ahead AC economic dispatch toolkit.
//!
//! The crate is organized around a receding-horizon dispatch loop:
//!
//! - [`grid`] — static network model, admittance construction, Newton-Raphson
//!   AC power flow, branch loadings and hard-overload tripping.
//! - [`guard`] — the action security modification layer that projects raw
//!   agent actions onto bound-, ramp- and balance-feasible dispatches.
//! - [`env`] — the multi-period dispatch environment: state construction,
//!   reward with penalty families, episode mechanics.
//! - [`agent`] — a from-scratch DDPG implementation (MLPs, Adam, replay
//!   buffer, target networks) with training and evaluation loops.
//! - [`oracle`] — classical baselines: lambda-iteration economic dispatch,
//!   brute-force verification, and a rolling OPF-lite benchmark.
//! - [`shell`] — file formats, synthetic case generation, metrics and CLI.

pub mod agent;
pub mod env;
pub mod grid;
pub mod guard;
pub mod oracle;
pub mod shell;
mod util;

pub use env::{Env, EnvConfig, LoadScenario, StepOutcome};
pub use grid::{Branch, Bus, CostFunction, Generator, GeneratorKind, NetworkCase, PowerFlowSolution};
pub use guard::{GuardContext, GuardMode, GuardedDispatch};
