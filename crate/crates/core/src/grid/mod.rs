//! Static network model and AC power flow.
//!
//! Case data is held in physical units (MW, MVAr); the power-flow solver
//! works in per-unit on `base_mva` and converts at its boundary. All
//! operations here are pure with respect to their inputs and safe to call
//! concurrently on shared read-only case data.

mod pf;
mod ybus;

pub use pf::{
    apply_hard_overload, branch_loadings, solve_power_flow, solve_with_statuses, BusLoads,
    Schedule, PF_MAX_ITERATIONS, PF_TOLERANCE,
};
pub use ybus::{branch_two_port, build_admittance};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("case validation: {0}")]
    Validation(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// A network bus. Voltage limits are in per-unit, shunts in per-unit
/// admittance on the system base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
}

/// A branch (line or transformer) described by the standard two-port model:
/// series impedance `r + jx`, total line charging `b_charging`, off-nominal
/// turns ratio `tap` and phase `shift` on the from side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_charging: f64,
    #[serde(default = "default_tap")]
    pub tap: f64,
    #[serde(default)]
    pub shift: f64,
    /// Thermal current limit in per-unit.
    pub i_max: f64,
    #[serde(default = "default_status")]
    pub status: bool,
}

fn default_tap() -> f64 {
    1.0
}

fn default_status() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Thermal,
    Renewable,
}

/// Quadratic generation cost `c2*P^2 + c1*P + c0` with P in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostFunction {
    pub fn new(c2: f64, c1: f64, c0: f64) -> Self {
        Self { c2, c1, c0 }
    }

    pub fn eval(&self, p: f64) -> f64 {
        (self.c2 * p + self.c1) * p + self.c0
    }

    /// Marginal cost dC/dP at the given output.
    pub fn marginal(&self, p: f64) -> f64 {
        2.0 * self.c2 * p + self.c1
    }
}

/// A generating unit. Ramp limits are already multiplied by the dispatch
/// interval, i.e. they bound the MW change between consecutive steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub cost: CostFunction,
    pub kind: GeneratorKind,
    pub v_setpoint: f64,
}

/// Solved operating point. Generator outputs are realized values: the slack
/// unit's active power absorbs network losses, and reactive outputs are
/// extracted from the solved voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    pub gen_p: Vec<f64>,
    pub gen_q: Vec<f64>,
    pub branch_i: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Static grid description: buses, branches, generators with quadratic
/// costs, and the slack bus id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub slack_bus: usize,
}

impl NetworkCase {
    /// Position of a bus id in the bus list.
    pub fn bus_position(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Index of the slack generator: the first listed unit at the slack bus.
    pub fn slack_generator(&self) -> Option<usize> {
        self.generators.iter().position(|g| g.bus == self.slack_bus)
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Indices of renewable units in generator-list order.
    pub fn renewable_indices(&self) -> Vec<usize> {
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.kind == GeneratorKind::Renewable)
            .map(|(i, _)| i)
            .collect()
    }

    /// In-service flags straight from the case, used to seed episode state.
    pub fn branch_statuses(&self) -> Vec<bool> {
        self.branches.iter().map(|b| b.status).collect()
    }

    /// Checks every structural invariant, naming the offending entity.
    pub fn validate(&self) -> Result<(), GridError> {
        let err = |msg: String| Err(GridError::Validation(msg));
        if !(self.base_mva > 0.0) {
            return err(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if self.buses.is_empty() {
            return err("case has no buses".into());
        }
        for (i, bus) in self.buses.iter().enumerate() {
            if !(bus.v_min > 0.0 && bus.v_min < bus.v_max) {
                return err(format!(
                    "bus {} (id {}): voltage limits must satisfy 0 < v_min < v_max, got [{}, {}]",
                    i, bus.id, bus.v_min, bus.v_max
                ));
            }
            if self.buses.iter().filter(|b| b.id == bus.id).count() != 1 {
                return err(format!("bus id {} appears more than once", bus.id));
            }
        }
        if self.bus_position(self.slack_bus).is_none() {
            return err(format!("slack bus id {} does not exist", self.slack_bus));
        }
        for (j, br) in self.branches.iter().enumerate() {
            if self.bus_position(br.from_bus).is_none() {
                return err(format!("branch {}: from_bus {} does not exist", j, br.from_bus));
            }
            if self.bus_position(br.to_bus).is_none() {
                return err(format!("branch {}: to_bus {} does not exist", j, br.to_bus));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return err(format!("branch {}: series impedance is zero", j));
            }
            if !(br.i_max > 0.0) {
                return err(format!("branch {}: i_max must be positive, got {}", j, br.i_max));
            }
            if !(br.tap > 0.0) {
                return err(format!("branch {}: tap must be positive, got {}", j, br.tap));
            }
        }
        if self.generators.is_empty() {
            return err("case has no generators".into());
        }
        for (i, g) in self.generators.iter().enumerate() {
            if self.bus_position(g.bus).is_none() {
                return err(format!("generator {}: bus {} does not exist", i, g.bus));
            }
            if g.p_min > g.p_max {
                return err(format!(
                    "generator {}: p_min {} exceeds p_max {}",
                    i, g.p_min, g.p_max
                ));
            }
            if g.q_min > g.q_max {
                return err(format!(
                    "generator {}: q_min {} exceeds q_max {}",
                    i, g.q_min, g.q_max
                ));
            }
            if g.ramp_up < 0.0 || g.ramp_down < 0.0 {
                return err(format!("generator {}: ramp limits must be non-negative", i));
            }
            if g.cost.c2 < 0.0 {
                return err(format!(
                    "generator {}: cost must be convex (c2 >= 0), got c2 = {}",
                    i, g.cost.c2
                ));
            }
            if g.kind == GeneratorKind::Renewable && g.p_min != 0.0 {
                return err(format!(
                    "generator {}: renewable units must have p_min = 0, got {}",
                    i, g.p_min
                ));
            }
        }
        if self.slack_generator().is_none() {
            return err(format!(
                "no generator at slack bus {}; the slack bus must host a unit",
                self.slack_bus
            ));
        }
        Ok(())
    }
}
