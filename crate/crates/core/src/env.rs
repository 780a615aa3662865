//! Receding-horizon dispatch environment.
//!
//! Each step dispatches one look-ahead window of T intervals: the action is
//! projected by the guard, every interval is solved with an AC power flow,
//! branches loaded beyond the hard-overload threshold are disconnected for
//! the remainder of the window, and the reward combines the negated
//! generation cost with five penalty families (active bounds, reactive
//! bounds, ramping, branch flow, voltage). A diverged power flow terminates
//! the episode with a divergence penalty; completing the final window earns
//! a bonus. The horizon then recedes by a single interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    apply_hard_overload, branch_loadings, build_admittance, solve_power_flow, BusLoads,
    GeneratorKind, NetworkCase, PowerFlowSolution, Schedule,
};
use crate::guard::{guard, GuardContext, GuardError, GuardMode, GuardedDispatch};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action has {got} components, expected {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("scenario exhausted: window {window} needs steps beyond horizon {horizon}")]
    ScenarioExhausted { window: usize, horizon: usize },
    #[error("scenario is too short: {horizon} steps, window needs {window_len}")]
    EmptyScenario { horizon: usize, window_len: usize },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Guard(#[from] GuardError),
    #[error("grid: {0}")]
    Grid(String),
    #[error("episode is done; call reset")]
    Done,
}

/// Per-bus load and per-unit renewable availability series at the dispatch
/// resolution, with the dataset-wide per-bus load envelope used by the state
/// normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadScenario {
    /// Active load per step, per bus (MW).
    pub load_p: Vec<Vec<f64>>,
    /// Reactive load per step, per bus (MVAr).
    pub load_q: Vec<Vec<f64>>,
    /// Available maximum per step, per generator (MW). Thermal entries carry
    /// the unit's p_max so the column layout is uniform.
    pub available_p_max: Vec<Vec<f64>>,
    /// Dataset-wide per-bus load maximum (MW).
    pub l_max: Vec<f64>,
    /// Dataset-wide per-bus load minimum (MW).
    pub l_min: Vec<f64>,
}

impl LoadScenario {
    /// Builds a scenario from raw series and computes the load envelope.
    pub fn from_series(
        load_p: Vec<Vec<f64>>,
        load_q: Vec<Vec<f64>>,
        available_p_max: Vec<Vec<f64>>,
    ) -> Result<Self, EnvError> {
        if load_p.is_empty() {
            return Err(EnvError::Scenario("load series is empty".into()));
        }
        let n_bus = load_p[0].len();
        if load_p.iter().any(|r| r.len() != n_bus) || load_q.len() != load_p.len() {
            return Err(EnvError::Scenario("ragged load series".into()));
        }
        if load_q.iter().any(|r| r.len() != n_bus) {
            return Err(EnvError::Scenario("ragged reactive series".into()));
        }
        if available_p_max.len() != load_p.len() {
            return Err(EnvError::Scenario("availability series length differs from loads".into()));
        }
        let mut l_max = vec![f64::NEG_INFINITY; n_bus];
        let mut l_min = vec![f64::INFINITY; n_bus];
        for row in &load_p {
            for (k, &v) in row.iter().enumerate() {
                l_max[k] = l_max[k].max(v);
                l_min[k] = l_min[k].min(v);
            }
        }
        Ok(Self { load_p, load_q, available_p_max, l_max, l_min })
    }

    pub fn horizon(&self) -> usize {
        self.load_p.len()
    }

    pub fn n_buses(&self) -> usize {
        self.load_p.first().map_or(0, |r| r.len())
    }

    /// Eq-style symmetric normalization of one bus load into [-1, 1]; a
    /// degenerate envelope maps to 0.
    pub fn normalize_load(&self, bus: usize, value: f64) -> f64 {
        let range = self.l_max[bus] - self.l_min[bus];
        if range == 0.0 {
            0.0
        } else {
            (2.0 * value - (self.l_max[bus] + self.l_min[bus])) / range
        }
    }
}

/// Environment parameters. Penalty weights follow the five families in
/// order: active bounds, reactive bounds, ramping, branch flow, voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Steps per look-ahead window.
    pub t_window: usize,
    pub dt_minutes: f64,
    pub penalty_weights: [f64; 5],
    pub overload_threshold: f64,
    pub completion_bonus: f64,
    pub divergence_penalty: f64,
    /// Small constant in the loading-rate denominator.
    pub epsilon: f64,
    /// Guard balance tolerance (MW).
    pub sigma: f64,
    /// Guard iteration cap.
    pub guard_max_iter: usize,
    /// Half-width of the voltage-adjustment action range (p.u.).
    pub dv_max: f64,
    /// Multiplier on total demand handed to the guard as balance target.
    pub loss_factor: f64,
    /// Power factor used to synthesize reactive load when a scenario lacks
    /// Q columns.
    pub power_factor: f64,
    /// Keep branch trips across windows instead of restoring at window end.
    pub trips_persist: bool,
    /// Multiplicative forecast-error sigma applied to the loads the agent
    /// sees (state and balance target); the power flow always runs on the
    /// true series. Zero disables the hook.
    pub forecast_noise: f64,
    /// Seed for the forecast-noise stream; a given (seed, window) pair
    /// always produces the same perturbation.
    pub forecast_noise_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            t_window: 16,
            dt_minutes: 15.0,
            penalty_weights: [1000.0; 5],
            overload_threshold: 1.4,
            completion_bonus: 100.0,
            divergence_penalty: 1000.0,
            epsilon: 1e-6,
            sigma: 1e-8,
            guard_max_iter: 100,
            dv_max: 0.05,
            loss_factor: 0.0,
            power_factor: 0.95,
            trips_persist: false,
            forecast_noise: 0.0,
            forecast_noise_seed: 0,
        }
    }
}

/// Flat state vector: normalized loads for the T window steps followed by
/// the previous window's action.
pub fn state_dim(n_bus: usize, n_gen: usize, t_window: usize) -> usize {
    n_bus * t_window + 2 * n_gen * t_window
}

/// Flat action vector: normalized outputs for T steps then voltage
/// adjustments for T steps.
pub fn action_dim(n_gen: usize, t_window: usize) -> usize {
    2 * n_gen * t_window
}

/// Assembles the state for window `t` (1-based): loads of steps
/// t..t+T-1 normalized into [-1, 1], then `prev_action` verbatim.
pub fn build_state(
    scenario: &LoadScenario,
    n_gen: usize,
    t_window: usize,
    window: usize,
    prev_action: &[f64],
) -> Result<Vec<f64>, EnvError> {
    let horizon = scenario.horizon();
    if window == 0 || window + t_window - 1 > horizon {
        return Err(EnvError::ScenarioExhausted { window, horizon });
    }
    let n_bus = scenario.n_buses();
    let expected_action = action_dim(n_gen, t_window);
    if prev_action.len() != expected_action {
        return Err(EnvError::ActionDimension { expected: expected_action, got: prev_action.len() });
    }
    let mut state = Vec::with_capacity(state_dim(n_bus, n_gen, t_window));
    for tau in 0..t_window {
        let step = window - 1 + tau;
        for bus in 0..n_bus {
            state.push(scenario.normalize_load(bus, scenario.load_p[step][bus]));
        }
    }
    state.extend_from_slice(prev_action);
    Ok(state)
}

/// Everything observable about one environment step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    /// Penalty magnitudes by family (already weighted).
    pub penalties: [f64; 5],
    /// Generation cost per solved step (realized output).
    pub step_costs: Vec<f64>,
    pub total_cost: f64,
    pub pf_iterations: Vec<usize>,
    /// (window step index, branch index) pairs tripped this window.
    pub tripped: Vec<(usize, usize)>,
    pub dispatch: GuardedDispatch,
    /// Realized per-generator output for each solved step.
    pub realized_p: Vec<Vec<f64>>,
    pub realized_q: Vec<Vec<f64>>,
    pub divergence_step: Option<usize>,
    pub completed_scenario: bool,
    /// Realized cost of the first step, the part taken into actual
    /// operation under the receding horizon.
    pub first_step_cost: f64,
    /// Box, ramp and availability violations of the dispatched window plus
    /// realized-output excursions (see `count_dispatch_violations`).
    pub violations: u64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// The receding-horizon MDP over one case and scenario.
#[derive(Debug, Clone)]
pub struct Env {
    case: NetworkCase,
    scenario: LoadScenario,
    config: EnvConfig,
    mode: GuardMode,
    window: usize,
    statuses: Vec<bool>,
    prev_action: Vec<f64>,
    prev_first_step_p: Option<Vec<f64>>,
    done: bool,
}

impl Env {
    pub fn new(
        case: NetworkCase,
        scenario: LoadScenario,
        config: EnvConfig,
        mode: GuardMode,
    ) -> Result<Self, EnvError> {
        case.validate().map_err(|e| EnvError::Grid(e.to_string()))?;
        if scenario.horizon() < config.t_window {
            return Err(EnvError::EmptyScenario {
                horizon: scenario.horizon(),
                window_len: config.t_window,
            });
        }
        if scenario.n_buses() != case.n_buses() {
            return Err(EnvError::Scenario(format!(
                "scenario covers {} buses, case has {}",
                scenario.n_buses(),
                case.n_buses()
            )));
        }
        if scenario.available_p_max.iter().any(|r| r.len() != case.n_generators()) {
            return Err(EnvError::Scenario(
                "availability columns do not match the generator list".into(),
            ));
        }
        let statuses = case.branch_statuses();
        Ok(Self {
            case,
            scenario,
            config,
            mode,
            window: 1,
            statuses,
            prev_action: Vec::new(),
            prev_first_step_p: None,
            done: false,
        })
    }

    pub fn case(&self) -> &NetworkCase {
        &self.case
    }

    pub fn scenario(&self) -> &LoadScenario {
        &self.scenario
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn mode(&self) -> GuardMode {
        self.mode
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn state_dim(&self) -> usize {
        state_dim(self.case.n_buses(), self.case.n_generators(), self.config.t_window)
    }

    pub fn action_dim(&self) -> usize {
        action_dim(self.case.n_generators(), self.config.t_window)
    }

    /// Number of dispatchable windows: the horizon recedes one step per
    /// window, so a scenario of H steps yields H - T + 1 windows.
    pub fn n_windows(&self) -> usize {
        self.scenario.horizon() - self.config.t_window + 1
    }

    /// Restores branch statuses and window position; returns the initial
    /// state (first window, all-zero previous action).
    pub fn reset(&mut self) -> Result<Vec<f64>, EnvError> {
        self.window = 1;
        self.statuses = self.case.branch_statuses();
        self.prev_action = vec![0.0; self.action_dim()];
        self.prev_first_step_p = None;
        self.done = false;
        self.state_for_window(1)
    }

    /// Loads as seen by the agent for one window: the true series, or a
    /// multiplicatively perturbed forecast when the noise hook is enabled.
    /// The perturbation is a pure function of (seed, window), so resets
    /// reproduce it.
    fn forecast_load_p(&self, window: usize) -> Vec<Vec<f64>> {
        let t = self.config.t_window;
        let base = window - 1;
        let truth: Vec<Vec<f64>> =
            (0..t).map(|tau| self.scenario.load_p[base + tau].clone()).collect();
        if self.config.forecast_noise == 0.0 {
            return truth;
        }
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
            self.config.forecast_noise_seed ^ (window as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        truth
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|p| {
                        let z: f64 = rng.gen_range(-1.0..1.0);
                        p * (1.0 + self.config.forecast_noise * z)
                    })
                    .collect()
            })
            .collect()
    }

    fn state_for_window(&self, window: usize) -> Result<Vec<f64>, EnvError> {
        let horizon = self.scenario.horizon();
        let t = self.config.t_window;
        if window == 0 || window + t - 1 > horizon {
            return Err(EnvError::ScenarioExhausted { window, horizon });
        }
        let forecast = self.forecast_load_p(window);
        let n_bus = self.case.n_buses();
        let mut state = Vec::with_capacity(self.state_dim());
        for row in &forecast {
            for bus in 0..n_bus {
                state.push(self.scenario.normalize_load(bus, row[bus]).clamp(-1.0, 1.0));
            }
        }
        state.extend_from_slice(&self.prev_action);
        Ok(state)
    }

    /// Guard context for the current window; exposed so callers can measure
    /// or replay the projection outside of `step`.
    pub fn guard_context(&self) -> GuardContext {
        let t = self.config.t_window;
        let base = self.window - 1;
        let available: Vec<Vec<f64>> =
            (0..t).map(|tau| self.scenario.available_p_max[base + tau].clone()).collect();
        let forecast = self.forecast_load_p(self.window);
        let target: Vec<f64> = (0..t)
            .map(|tau| forecast[tau].iter().sum::<f64>() * (1.0 + self.config.loss_factor))
            .collect();
        let bus_v_limits = self
            .case
            .generators
            .iter()
            .map(|g| {
                let b = &self.case.buses[self.case.bus_position(g.bus).expect("validated")];
                (b.v_min, b.v_max)
            })
            .collect();
        GuardContext {
            generators: self.case.generators.clone(),
            prev_p: self.prev_first_step_p.clone(),
            available_p_max: available,
            target_demand: target,
            sigma: self.config.sigma,
            max_iter: self.config.guard_max_iter,
            dv_max: self.config.dv_max,
            bus_v_limits,
        }
    }

    /// Dispatches the current window. See the module docs for the pipeline.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::Done);
        }
        let expected = self.action_dim();
        if action.len() != expected {
            return Err(EnvError::ActionDimension { expected, got: action.len() });
        }
        let t = self.config.t_window;
        let base = self.window - 1;
        let ctx = self.guard_context();
        let dispatch = guard(action, &ctx, self.mode)?;

        let mut solutions: Vec<PowerFlowSolution> = Vec::with_capacity(t);
        let mut pf_iterations = Vec::with_capacity(t);
        let mut tripped: Vec<(usize, usize)> = Vec::new();
        let mut divergence_step = None;
        for tau in 0..t {
            let schedule = Schedule {
                gen_p_mw: dispatch.p[tau].clone(),
                gen_v_set: dispatch.v_set[tau].clone(),
            };
            let loads = BusLoads {
                p_mw: self.scenario.load_p[base + tau].clone(),
                q_mvar: self.scenario.load_q[base + tau].clone(),
            };
            let ybus = build_admittance(&self.case, &self.statuses);
            let sol = solve_power_flow(&self.case, &ybus, &self.statuses, &schedule, &loads)
                .map_err(|e| EnvError::Grid(e.to_string()))?;
            pf_iterations.push(sol.iterations);
            if !sol.converged {
                divergence_step = Some(tau);
                break;
            }
            let loadings = branch_loadings(&sol, &self.case, self.config.epsilon);
            let (updated, new_trips) =
                apply_hard_overload(&self.statuses, &loadings, self.config.overload_threshold);
            self.statuses = updated;
            tripped.extend(new_trips.into_iter().map(|j| (tau, j)));
            solutions.push(sol);
        }

        let diverged = divergence_step.is_some();
        let penalties = compute_penalties(
            &self.case,
            &dispatch,
            &solutions,
            self.prev_first_step_p.as_deref(),
            self.window,
            &self.config,
        );
        let step_costs: Vec<f64> = solutions
            .iter()
            .map(|sol| {
                self.case
                    .generators
                    .iter()
                    .zip(&sol.gen_p)
                    .map(|(g, &p)| g.cost.eval(p))
                    .sum()
            })
            .collect();
        let total_cost: f64 = step_costs.iter().sum();
        let completed_scenario = !diverged && self.window == self.n_windows();
        let reward =
            compute_reward(&step_costs, &penalties, completed_scenario, diverged, &self.config);

        let realized_p: Vec<Vec<f64>> = solutions.iter().map(|s| s.gen_p.clone()).collect();
        let realized_q: Vec<Vec<f64>> = solutions.iter().map(|s| s.gen_q.clone()).collect();
        let first_step_cost = step_costs.first().copied().unwrap_or(0.0);
        let violations = count_dispatch_violations(
            &self.case,
            &dispatch,
            &realized_p,
            &ctx.available_p_max,
            self.prev_first_step_p.as_deref(),
        );

        self.prev_first_step_p = Some(dispatch.p[0].clone());
        self.prev_action = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        if !self.config.trips_persist {
            self.statuses = self.case.branch_statuses();
        }

        let done = diverged || completed_scenario;
        self.done = done;
        let next_state = if done {
            vec![0.0; self.state_dim()]
        } else {
            self.window += 1;
            self.state_for_window(self.window)?
        };

        Ok(StepOutcome {
            next_state,
            reward,
            done,
            info: StepInfo {
                penalties,
                step_costs,
                total_cost,
                pf_iterations,
                tripped,
                dispatch,
                realized_p,
                realized_q,
                divergence_step,
                completed_scenario,
                first_step_cost,
                violations,
            },
        })
    }
}

/// The five penalty families, each already multiplied by its weight, summed
/// over the solved steps of the window.
///
/// Active bounds use realized output (the slack unit may stray while every
/// scheduled unit is in bounds); reactive bounds use realized reactive
/// output; ramping applies to the dispatched schedule of thermal units with
/// the three-case step difference (zero at the very first step of the first
/// window, cross-window for the first step of later windows, intra-window
/// otherwise); branch flow penalizes `I/I_max` above one; voltage penalizes
/// magnitudes outside the bus band.
pub fn compute_penalties(
    case: &NetworkCase,
    dispatch: &GuardedDispatch,
    solutions: &[PowerFlowSolution],
    prev_first_step_p: Option<&[f64]>,
    window: usize,
    config: &EnvConfig,
) -> [f64; 5] {
    let solved = solutions.len();
    let mut raw = [0.0_f64; 5];
    for tau in 0..solved {
        let sol = &solutions[tau];
        for (g, gen) in case.generators.iter().enumerate() {
            let p = sol.gen_p[g];
            let p_max = match gen.kind {
                GeneratorKind::Thermal => gen.p_max,
                GeneratorKind::Renewable => gen.p_max,
            };
            raw[0] += (p - p_max).max(0.0) + (gen.p_min - p).max(0.0);
            let q = sol.gen_q[g];
            raw[1] += (q - gen.q_max).max(0.0) + (gen.q_min - q).max(0.0);
            if gen.kind == GeneratorKind::Thermal {
                let delta = if tau == 0 {
                    match prev_first_step_p {
                        None => 0.0, // first step of the first window
                        Some(prev) => {
                            debug_assert!(window > 1);
                            dispatch.p[0][g] - prev[g]
                        }
                    }
                } else {
                    dispatch.p[tau][g] - dispatch.p[tau - 1][g]
                };
                raw[2] += (delta - gen.ramp_up).max(0.0) + (-gen.ramp_down - delta).max(0.0);
            }
        }
        for (j, branch) in case.branches.iter().enumerate() {
            raw[3] += (sol.branch_i[j] / branch.i_max - 1.0).max(0.0);
        }
        for (k, bus) in case.buses.iter().enumerate() {
            let v = sol.v_mag[k];
            raw[4] += (v - bus.v_max).max(0.0) + (bus.v_min - v).max(0.0);
        }
    }
    let mut out = [0.0_f64; 5];
    for i in 0..5 {
        out[i] = config.penalty_weights[i] * raw[i];
    }
    out
}

/// Reward composition: negated total cost, minus the weighted penalties,
/// plus the completion bonus, minus the divergence penalty.
pub fn compute_reward(
    step_costs: &[f64],
    penalties: &[f64; 5],
    completed: bool,
    diverged: bool,
    config: &EnvConfig,
) -> f64 {
    let cost: f64 = step_costs.iter().sum();
    let pen: f64 = penalties.iter().sum();
    let bonus = if completed { config.completion_bonus } else { 0.0 };
    let div = if diverged { config.divergence_penalty } else { 0.0 };
    -cost - pen + bonus - div
}

/// Feasibility violations of a dispatched window against box, ramp and
/// availability bounds, plus realized output against box bounds. Used by
/// training metrics and evaluation reports; the numeric slack only forgives
/// float roundoff, never a real excursion.
pub fn count_dispatch_violations(
    case: &NetworkCase,
    dispatch: &GuardedDispatch,
    realized_p: &[Vec<f64>],
    available: &[Vec<f64>],
    prev_first_step_p: Option<&[f64]>,
) -> u64 {
    const TOL: f64 = 1e-9;
    let mut count = 0u64;
    for (tau, row) in dispatch.p.iter().enumerate() {
        for (g, gen) in case.generators.iter().enumerate() {
            let p = row[g];
            if p > gen.p_max + TOL || p < gen.p_min - TOL {
                count += 1;
            }
            match gen.kind {
                GeneratorKind::Renewable => {
                    if p > available[tau][g] + TOL {
                        count += 1;
                    }
                }
                GeneratorKind::Thermal => {
                    let delta = if tau == 0 {
                        match prev_first_step_p {
                            None => 0.0,
                            Some(prev) => p - prev[g],
                        }
                    } else {
                        p - dispatch.p[tau - 1][g]
                    };
                    if delta > gen.ramp_up + TOL || -delta > gen.ramp_down + TOL {
                        count += 1;
                    }
                }
            }
        }
    }
    for row in realized_p {
        for (g, gen) in case.generators.iter().enumerate() {
            if row[g] > gen.p_max + TOL || row[g] < gen.p_min - TOL {
                count += 1;
            }
        }
    }
    count
}
