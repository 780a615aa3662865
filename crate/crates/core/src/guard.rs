//! Action security modification.
//!
//! Raw agent actions are normalized per-unit outputs in [-1, 1]. Before the
//! environment runs a power flow they pass through three steps, applied
//! sequentially for each time step of the look-ahead window:
//!
//! 1. de-normalization into MW plus adjustable-capacity calculation,
//! 2. redistribution of over-limit outputs (binding to the effective bounds),
//! 3. elimination of the generation-load deviation, distributing the
//!    imbalance across units with remaining capacity. In the full mode the
//!    weights blend capacity with marginal cost so that expensive units are
//!    cut first on a surplus and cheap units are raised first on a deficit
//!    (the equal-incremental-rate direction); a capacity-only weighting is
//!    kept as a selectable strategy, and `GuardMode::None` skips steps 2-3
//!    entirely.
//!
//! Thermal units are ramp-constrained against the previous step's
//! post-projection output (chaining to the previous window's first step);
//! renewables are bounded by their time-varying availability and carry no
//! ramp constraint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CostFunction, Generator, GeneratorKind};

/// Floor applied to marginal costs when they appear in weight denominators.
/// When every eligible unit has a non-positive marginal cost the floored
/// weights reduce to pure capacity proportions, which is the documented
/// fallback.
const MARGINAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GuardError {
    #[error("action has {got} components, expected {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("generator {gen} step {step}: infeasible band, lower {lower} exceeds upper {upper}")]
    InfeasibleBand { gen: usize, step: usize, lower: f64, upper: f64 },
    #[error("context: {0}")]
    Context(String),
}

/// Projection strategy, selecting the training modes compared in evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardMode {
    /// De-normalization only; no feasibility projection.
    None,
    /// Deviation spread proportionally to adjustable capacity.
    CapacityOnly,
    /// Capacity-and-marginal-cost weighting (equal incremental rate).
    EqualIncrementalRate,
}

/// Everything the projection needs about one look-ahead window.
#[derive(Debug, Clone)]
pub struct GuardContext {
    pub generators: Vec<Generator>,
    /// Post-projection outputs of the previous window's first step; `None`
    /// for the first window (no cross-window ramp constraint).
    pub prev_p: Option<Vec<f64>>,
    /// Per-step, per-generator available maximum. Only consulted for
    /// renewable units; thermal entries are ignored.
    pub available_p_max: Vec<Vec<f64>>,
    /// Per-step total active demand to balance against (MW).
    pub target_demand: Vec<f64>,
    /// Balance tolerance sigma (MW).
    pub sigma: f64,
    /// Iteration cap M for the deviation elimination.
    pub max_iter: usize,
    /// Half-width of the voltage adjustment range (p.u.).
    pub dv_max: f64,
    /// Per-generator voltage band of the unit's bus (v_min, v_max).
    pub bus_v_limits: Vec<(f64, f64)>,
}

impl GuardContext {
    pub fn steps(&self) -> usize {
        self.target_demand.len()
    }

    pub fn validate(&self) -> Result<(), GuardError> {
        if !(self.sigma > 0.0) {
            return Err(GuardError::Context(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.max_iter == 0 {
            return Err(GuardError::Context("max_iter must be at least 1".into()));
        }
        let t = self.steps();
        if self.available_p_max.len() != t {
            return Err(GuardError::Context(format!(
                "available_p_max covers {} steps, demand covers {}",
                self.available_p_max.len(),
                t
            )));
        }
        let ng = self.generators.len();
        for (tau, row) in self.available_p_max.iter().enumerate() {
            if row.len() != ng {
                return Err(GuardError::Context(format!(
                    "available_p_max step {} covers {} generators, case has {}",
                    tau,
                    row.len(),
                    ng
                )));
            }
            for (g, &cap) in row.iter().enumerate() {
                if self.generators[g].kind == GeneratorKind::Renewable && cap < 0.0 {
                    return Err(GuardError::Context(format!(
                        "negative availability {} for generator {} at step {}",
                        cap, g, tau
                    )));
                }
            }
        }
        if let Some(prev) = &self.prev_p {
            if prev.len() != ng {
                return Err(GuardError::Context(format!(
                    "prev_p covers {} generators, case has {}",
                    prev.len(),
                    ng
                )));
            }
        }
        if self.bus_v_limits.len() != ng {
            return Err(GuardError::Context(format!(
                "bus_v_limits covers {} generators, case has {}",
                self.bus_v_limits.len(),
                ng
            )));
        }
        Ok(())
    }
}

/// Per-step upper/lower effective bounds and the remaining adjustable
/// capacity around a candidate dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCapacity {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub v_up: Vec<f64>,
    pub v_down: Vec<f64>,
}

/// What happened while projecting one window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GuardReport {
    /// Elimination iterations used per step.
    pub iterations: Vec<usize>,
    /// Remaining |deviation| per step (MW).
    pub residual: Vec<f64>,
    /// Generators bound to a limit during redistribution, per step.
    pub clipped: Vec<Vec<usize>>,
    /// Set when the remaining capacity could not cover the deviation.
    pub capacity_exhausted: Vec<bool>,
    /// Set when the marginal-cost weighting degenerated to capacity weights.
    pub weight_fallback: Vec<bool>,
    /// Action components that arrived outside [-1, 1] and were clipped.
    pub action_clipped: usize,
}

/// Final per-step dispatch handed to the power-flow environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardedDispatch {
    /// Active power per step, per generator (MW).
    pub p: Vec<Vec<f64>>,
    /// Voltage setpoint per step, per generator (p.u.).
    pub v_set: Vec<Vec<f64>>,
    pub report: GuardReport,
}

/// Maps normalized outputs in [-1, 1] onto [p_min, p_max] with exact
/// endpoints: -1 lands on the lower bound, +1 on the upper. Out-of-range
/// components are clipped first; their indices are returned.
pub fn denormalize_action(a_bar: &[f64], bounds: &[(f64, f64)]) -> (Vec<f64>, Vec<usize>) {
    let mut clipped = Vec::new();
    let p = a_bar
        .iter()
        .zip(bounds.iter())
        .enumerate()
        .map(|(i, (&a, &(lo, hi)))| {
            let a = if !(-1.0..=1.0).contains(&a) {
                clipped.push(i);
                a.clamp(-1.0, 1.0)
            } else {
                a
            };
            lo * (1.0 - a) / 2.0 + hi * (1.0 + a) / 2.0
        })
        .collect();
    (p, clipped)
}

/// Effective bounds for one step: box limits intersected with thermal ramp
/// bands around `prev` and with renewable availability. `prev = None` drops
/// the ramp constraint (first step of the first window).
pub fn effective_bounds(
    generators: &[Generator],
    prev: Option<&[f64]>,
    available: &[f64],
    step: usize,
) -> Result<Vec<(f64, f64)>, GuardError> {
    generators
        .iter()
        .enumerate()
        .map(|(g, gen)| {
            let (lo, hi) = match gen.kind {
                GeneratorKind::Thermal => match prev {
                    Some(prev) => (
                        gen.p_min.max(prev[g] - gen.ramp_down),
                        gen.p_max.min(prev[g] + gen.ramp_up),
                    ),
                    None => (gen.p_min, gen.p_max),
                },
                GeneratorKind::Renewable => (0.0, gen.p_max.min(available[g])),
            };
            if lo > hi {
                Err(GuardError::InfeasibleBand { gen: g, step, lower: lo, upper: hi })
            } else {
                Ok((lo, hi))
            }
        })
        .collect()
}

/// Upper and lower adjustable capacity of each unit around dispatch `a`.
pub fn adjustable_capacity(a: &[f64], bounds: &[(f64, f64)]) -> StepCapacity {
    let upper: Vec<f64> = bounds.iter().map(|&(_, hi)| hi).collect();
    let lower: Vec<f64> = bounds.iter().map(|&(lo, _)| lo).collect();
    let v_up = a.iter().zip(&upper).map(|(&a, &u)| (u - a).max(0.0)).collect();
    let v_down = a.iter().zip(&lower).map(|(&a, &l)| (a - l).max(0.0)).collect();
    StepCapacity { upper, lower, v_up, v_down }
}

/// Binds over-limit outputs to their effective bounds and zeroes the
/// corresponding capacity; interior values are untouched. Returns the
/// indices of bound generators.
pub fn redistribute_over_limit(a: &mut [f64], cap: &mut StepCapacity) -> Vec<usize> {
    let mut clipped = Vec::new();
    for g in 0..a.len() {
        if a[g] > cap.upper[g] {
            a[g] = cap.upper[g];
            cap.v_up[g] = 0.0;
            cap.v_down[g] = (a[g] - cap.lower[g]).max(0.0);
            clipped.push(g);
        } else if a[g] < cap.lower[g] {
            a[g] = cap.lower[g];
            cap.v_down[g] = 0.0;
            cap.v_up[g] = (cap.upper[g] - a[g]).max(0.0);
            clipped.push(g);
        }
    }
    clipped
}

/// Per-step outcome of the deviation elimination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EliminationOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub capacity_exhausted: bool,
    pub weight_fallback: bool,
}

/// Drives the total output of one step toward `demand`, spending at most
/// `max_iter` passes. On a surplus, units with downward capacity are cut
/// with weights `v_down * k` (k = marginal cost, so expensive units are cut
/// first); on a deficit, units with upward capacity are raised with weights
/// `v_up / k` (cheap units raised first). `CapacityOnly` drops the marginal
/// factor. Moves are clipped to the remaining capacity; a unit that hits a
/// bound is placed on it exactly.
pub fn eliminate_deviation(
    a: &mut [f64],
    cap: &mut StepCapacity,
    costs: &[CostFunction],
    demand: f64,
    sigma: f64,
    max_iter: usize,
    mode: GuardMode,
) -> EliminationOutcome {
    let mut outcome = EliminationOutcome {
        iterations: 0,
        residual: (a.iter().sum::<f64>() - demand).abs(),
        capacity_exhausted: false,
        weight_fallback: false,
    };
    if mode == GuardMode::None {
        return outcome;
    }
    for _ in 0..max_iter {
        let deviation: f64 = a.iter().sum::<f64>() - demand;
        outcome.residual = deviation.abs();
        if deviation.abs() <= sigma {
            return outcome;
        }
        let surplus = deviation > 0.0;
        let room = |cap: &StepCapacity, g: usize| if surplus { cap.v_down[g] } else { cap.v_up[g] };
        let eligible: Vec<usize> = (0..a.len()).filter(|&g| room(cap, g) > 0.0).collect();
        if eligible.is_empty() {
            outcome.capacity_exhausted = true;
            return outcome;
        }
        let weights: Vec<f64> = match mode {
            GuardMode::CapacityOnly => eligible.iter().map(|&g| room(cap, g)).collect(),
            GuardMode::EqualIncrementalRate => {
                if eligible.iter().all(|&g| costs[g].marginal(a[g]) <= 0.0) {
                    outcome.weight_fallback = true;
                }
                eligible
                    .iter()
                    .map(|&g| {
                        let k = costs[g].marginal(a[g]).max(MARGINAL_FLOOR);
                        if surplus {
                            room(cap, g) * k
                        } else {
                            room(cap, g) / k
                        }
                    })
                    .collect()
            }
            GuardMode::None => unreachable!(),
        };
        let total_w: f64 = weights.iter().sum();
        let magnitude = deviation.abs();
        for (&g, &w) in eligible.iter().zip(weights.iter()) {
            let desired = magnitude * w / total_w;
            if surplus {
                if desired >= cap.v_down[g] {
                    a[g] = cap.lower[g];
                } else {
                    a[g] -= desired;
                }
            } else if desired >= cap.v_up[g] {
                a[g] = cap.upper[g];
            } else {
                a[g] += desired;
            }
            cap.v_up[g] = (cap.upper[g] - a[g]).max(0.0);
            cap.v_down[g] = (a[g] - cap.lower[g]).max(0.0);
        }
        outcome.iterations += 1;
    }
    let deviation = a.iter().sum::<f64>() - demand;
    outcome.residual = deviation.abs();
    if outcome.residual > sigma {
        let surplus = deviation > 0.0;
        let any_room =
            (0..a.len()).any(|g| if surplus { cap.v_down[g] > 0.0 } else { cap.v_up[g] > 0.0 });
        outcome.capacity_exhausted = !any_room;
    }
    outcome
}

/// MW-level projection of a whole window: steps 2-3 applied sequentially for
/// tau = 1..T with ramp chaining on the post-projection values. This is the
/// idempotent core of the guard; feeding its output back in returns it
/// unchanged. `GuardMode::None` is the identity.
pub fn project_dispatch(
    p_raw: &[Vec<f64>],
    ctx: &GuardContext,
    mode: GuardMode,
) -> Result<(Vec<Vec<f64>>, GuardReport), GuardError> {
    ctx.validate()?;
    let t_steps = ctx.steps();
    if p_raw.len() != t_steps {
        return Err(GuardError::Context(format!(
            "dispatch covers {} steps, context covers {}",
            p_raw.len(),
            t_steps
        )));
    }
    let costs: Vec<CostFunction> = ctx.generators.iter().map(|g| g.cost).collect();
    let mut report = GuardReport::default();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(t_steps);
    let mut prev: Option<Vec<f64>> = ctx.prev_p.clone();
    for tau in 0..t_steps {
        let mut a = p_raw[tau].clone();
        if mode == GuardMode::None {
            report.iterations.push(0);
            report.residual.push((a.iter().sum::<f64>() - ctx.target_demand[tau]).abs());
            report.clipped.push(Vec::new());
            report.capacity_exhausted.push(false);
            report.weight_fallback.push(false);
            prev = Some(a.clone());
            out.push(a);
            continue;
        }
        let bounds =
            effective_bounds(&ctx.generators, prev.as_deref(), &ctx.available_p_max[tau], tau)?;
        let mut cap = adjustable_capacity(&a, &bounds);
        let clipped = redistribute_over_limit(&mut a, &mut cap);
        let outcome = eliminate_deviation(
            &mut a,
            &mut cap,
            &costs,
            ctx.target_demand[tau],
            ctx.sigma,
            ctx.max_iter,
            mode,
        );
        report.iterations.push(outcome.iterations);
        report.residual.push(outcome.residual);
        report.clipped.push(clipped);
        report.capacity_exhausted.push(outcome.capacity_exhausted);
        report.weight_fallback.push(outcome.weight_fallback);
        prev = Some(a.clone());
        out.push(a);
    }
    Ok((out, report))
}

/// Full guard: splits the flat action into normalized outputs and voltage
/// adjustments, de-normalizes both, and projects the active power. The
/// voltage half passes through as `clip(v_setpoint + dv_bar * dv_max)` into
/// the bus voltage band; it takes no part in the balance.
pub fn guard(
    action: &[f64],
    ctx: &GuardContext,
    mode: GuardMode,
) -> Result<GuardedDispatch, GuardError> {
    ctx.validate()?;
    let t_steps = ctx.steps();
    let ng = ctx.generators.len();
    let expected = 2 * ng * t_steps;
    if action.len() != expected {
        return Err(GuardError::ActionDimension { expected, got: action.len() });
    }
    let mut action_clipped = 0usize;
    let mut p_raw: Vec<Vec<f64>> = Vec::with_capacity(t_steps);
    for tau in 0..t_steps {
        let a_bar = &action[tau * ng..(tau + 1) * ng];
        let bounds: Vec<(f64, f64)> = ctx
            .generators
            .iter()
            .enumerate()
            .map(|(g, gen)| match gen.kind {
                GeneratorKind::Thermal => (gen.p_min, gen.p_max),
                GeneratorKind::Renewable => (0.0, gen.p_max.min(ctx.available_p_max[tau][g])),
            })
            .collect();
        let (p, clipped) = denormalize_action(a_bar, &bounds);
        action_clipped += clipped.len();
        p_raw.push(p);
    }
    let mut v_set: Vec<Vec<f64>> = Vec::with_capacity(t_steps);
    let dv_base = ng * t_steps;
    for tau in 0..t_steps {
        let dv_bar = &action[dv_base + tau * ng..dv_base + (tau + 1) * ng];
        let row = ctx
            .generators
            .iter()
            .enumerate()
            .map(|(g, gen)| {
                let dv = dv_bar[g].clamp(-1.0, 1.0) * ctx.dv_max;
                let (v_lo, v_hi) = ctx.bus_v_limits[g];
                (gen.v_setpoint + dv).clamp(v_lo, v_hi)
            })
            .collect();
        action_clipped += dv_bar.iter().filter(|&&v| !(-1.0..=1.0).contains(&v)).count();
        v_set.push(row);
    }
    let (p, mut report) = project_dispatch(&p_raw, ctx, mode)?;
    report.action_clipped = action_clipped;
    Ok(GuardedDispatch { p, v_set, report })
}
