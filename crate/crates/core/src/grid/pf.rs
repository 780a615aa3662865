//! Newton-Raphson AC power flow in polar form.
//!
//! Generator buses are treated as PV with clipped voltage setpoints, the
//! slack bus absorbs the active-power residual, and reactive outputs are
//! extracted (never clamped) so downstream penalty logic can price
//! violations. Every solve flat-starts and runs the full Jacobian; a
//! non-converged run is reported in the solution, not as an error.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{GridError, NetworkCase, PowerFlowSolution};
use crate::grid::build_admittance;

/// Convergence tolerance on the infinity norm of the power mismatch (p.u.).
pub const PF_TOLERANCE: f64 = 1e-8;
/// Iteration cap; hitting it marks the solution diverged.
pub const PF_MAX_ITERATIONS: usize = 20;

/// Per-generator dispatch handed to the solver: active power in MW and a
/// voltage setpoint in p.u. for the generator's bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub gen_p_mw: Vec<f64>,
    pub gen_v_set: Vec<f64>,
}

/// Per-bus load in physical units, aligned with the case bus list.
#[derive(Debug, Clone, PartialEq)]
pub struct BusLoads {
    pub p_mw: Vec<f64>,
    pub q_mvar: Vec<f64>,
}

/// Complex power injections S = V .* conj(Y V) in p.u.
fn injections(
    ybus: &DMatrix<Complex64>,
    v_mag: &[f64],
    v_ang: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = v_mag.len();
    let v: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(v_mag[k], v_ang[k]))
        .collect();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for k in 0..n {
        let mut i_k = Complex64::new(0.0, 0.0);
        for m in 0..n {
            i_k += ybus[(k, m)] * v[m];
        }
        let s = v[k] * i_k.conj();
        p[k] = s.re;
        q[k] = s.im;
    }
    (p, q)
}

/// Solves one AC power flow for the given dispatch and loads.
///
/// `ybus` must have been assembled for `statuses`; the flags are reused here
/// to zero out branch currents on disconnected branches. Returns a
/// `PowerFlowSolution` with `converged = false` (carrying iterations and the
/// last mismatch) when Newton iteration hits the cap, the Jacobian goes
/// singular, or the mismatch stops being finite.
pub fn solve_power_flow(
    case: &NetworkCase,
    ybus: &DMatrix<Complex64>,
    statuses: &[bool],
    schedule: &Schedule,
    loads: &BusLoads,
) -> Result<PowerFlowSolution, GridError> {
    let n = case.n_buses();
    let ng = case.n_generators();
    if schedule.gen_p_mw.len() != ng || schedule.gen_v_set.len() != ng {
        return Err(GridError::Dimension(format!(
            "schedule covers {} generators, case has {}",
            schedule.gen_p_mw.len(),
            ng
        )));
    }
    if loads.p_mw.len() != n || loads.q_mvar.len() != n {
        return Err(GridError::Dimension(format!(
            "loads cover {} buses, case has {}",
            loads.p_mw.len(),
            n
        )));
    }

    let base = case.base_mva;
    let slack = case.bus_position(case.slack_bus).expect("validated case");

    // Bus classification and per-bus generator grouping.
    let mut gens_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (g, gen) in case.generators.iter().enumerate() {
        let b = case.bus_position(gen.bus).expect("validated case");
        gens_at[b].push(g);
    }
    let pv: Vec<usize> = (0..n).filter(|&b| b != slack && !gens_at[b].is_empty()).collect();
    let pq: Vec<usize> = (0..n).filter(|&b| b != slack && gens_at[b].is_empty()).collect();

    // Flat start; generator buses pinned at the first listed unit's setpoint
    // clipped into the bus voltage band.
    let mut v_mag = vec![1.0; n];
    let mut v_ang = vec![0.0; n];
    for b in pv.iter().copied().chain(std::iter::once(slack)) {
        let g = gens_at[b][0];
        let bus = &case.buses[b];
        v_mag[b] = schedule.gen_v_set[g].clamp(bus.v_min, bus.v_max);
    }

    // Specified injections in p.u.
    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for b in 0..n {
        let gen_p: f64 = gens_at[b].iter().map(|&g| schedule.gen_p_mw[g]).sum();
        p_spec[b] = (gen_p - loads.p_mw[b]) / base;
        q_spec[b] = -loads.q_mvar[b] / base;
    }

    // Unknown ordering: angles at pv+pq, magnitudes at pq.
    let ang_buses: Vec<usize> = pv.iter().chain(pq.iter()).copied().collect();
    let mut ang_pos = vec![usize::MAX; n];
    for (i, &b) in ang_buses.iter().enumerate() {
        ang_pos[b] = i;
    }
    let mut vm_pos = vec![usize::MAX; n];
    for (i, &b) in pq.iter().enumerate() {
        vm_pos[b] = ang_buses.len() + i;
    }
    let n_unknowns = ang_buses.len() + pq.len();

    let mismatch = |p_calc: &[f64], q_calc: &[f64]| -> DVector<f64> {
        let mut f = DVector::zeros(n_unknowns);
        for (i, &b) in ang_buses.iter().enumerate() {
            f[i] = p_calc[b] - p_spec[b];
        }
        for (i, &b) in pq.iter().enumerate() {
            f[ang_buses.len() + i] = q_calc[b] - q_spec[b];
        }
        f
    };

    let mut converged = false;
    let mut iterations = 0;
    #[allow(unused_assignments)]
    let mut max_mismatch = f64::INFINITY;

    loop {
        let (p_calc, q_calc) = injections(ybus, &v_mag, &v_ang);
        let f = mismatch(&p_calc, &q_calc);
        max_mismatch = f.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        if !max_mismatch.is_finite() {
            break;
        }
        if max_mismatch < PF_TOLERANCE {
            converged = true;
            break;
        }
        if iterations >= PF_MAX_ITERATIONS {
            break;
        }

        // Full polar Jacobian.
        let mut jac = DMatrix::<f64>::zeros(n_unknowns, n_unknowns);
        for k in 0..n {
            let row_p = if k != slack { ang_pos[k] } else { usize::MAX };
            let row_q = if vm_pos[k] != usize::MAX { vm_pos[k] } else { usize::MAX };
            if row_p == usize::MAX && row_q == usize::MAX {
                continue;
            }
            for m in 0..n {
                let y = ybus[(k, m)];
                let (g, b) = (y.re, y.im);
                if g == 0.0 && b == 0.0 && k != m {
                    continue;
                }
                let theta = v_ang[k] - v_ang[m];
                let (sin_t, cos_t) = theta.sin_cos();
                if row_p != usize::MAX {
                    if ang_pos[m] != usize::MAX {
                        let h = if k == m {
                            -q_calc[k] - b * v_mag[k] * v_mag[k]
                        } else {
                            v_mag[k] * v_mag[m] * (g * sin_t - b * cos_t)
                        };
                        jac[(row_p, ang_pos[m])] = h;
                    }
                    if vm_pos[m] != usize::MAX {
                        let nn = if k == m {
                            p_calc[k] / v_mag[k] + g * v_mag[k]
                        } else {
                            v_mag[k] * (g * cos_t + b * sin_t)
                        };
                        jac[(row_p, vm_pos[m])] = nn;
                    }
                }
                if row_q != usize::MAX {
                    if ang_pos[m] != usize::MAX {
                        let j = if k == m {
                            p_calc[k] - g * v_mag[k] * v_mag[k]
                        } else {
                            -v_mag[k] * v_mag[m] * (g * cos_t + b * sin_t)
                        };
                        jac[(row_q, ang_pos[m])] = j;
                    }
                    if vm_pos[m] != usize::MAX {
                        let l = if k == m {
                            q_calc[k] / v_mag[k] - b * v_mag[k]
                        } else {
                            v_mag[k] * (g * sin_t - b * cos_t)
                        };
                        jac[(row_q, vm_pos[m])] = l;
                    }
                }
            }
        }

        let lu = jac.lu();
        let dx = match lu.solve(&(-f)) {
            Some(dx) if dx.iter().all(|x| x.is_finite()) => dx,
            _ => break, // singular Jacobian: report divergence
        };
        for (i, &b) in ang_buses.iter().enumerate() {
            v_ang[b] += dx[i];
        }
        for (i, &b) in pq.iter().enumerate() {
            v_mag[b] += dx[ang_buses.len() + i];
        }
        iterations += 1;
    }

    let mut gen_p = schedule.gen_p_mw.clone();
    let mut gen_q = vec![0.0; ng];
    let mut branch_i = vec![0.0; case.n_branches()];
    if converged {
        let (p_calc, q_calc) = injections(ybus, &v_mag, &v_ang);
        // Realized reactive output, split equally among co-located units.
        for b in pv.iter().copied().chain(std::iter::once(slack)) {
            let total_q = q_calc[b] * base + loads.q_mvar[b];
            let share = total_q / gens_at[b].len() as f64;
            for &g in &gens_at[b] {
                gen_q[g] = share;
            }
        }
        // Slack unit absorbs the active residual; co-located units keep
        // their scheduled output.
        let slack_gen = case.slack_generator().expect("validated case");
        let others: f64 = gens_at[slack]
            .iter()
            .filter(|&&g| g != slack_gen)
            .map(|&g| schedule.gen_p_mw[g])
            .sum();
        gen_p[slack_gen] = p_calc[slack] * base + loads.p_mw[slack] - others;

        let v: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(v_mag[k], v_ang[k]))
            .collect();
        for (j, branch) in case.branches.iter().enumerate() {
            if !statuses.get(j).copied().unwrap_or(false) {
                continue;
            }
            let f = case.bus_position(branch.from_bus).expect("validated case");
            let t = case.bus_position(branch.to_bus).expect("validated case");
            let (y_ff, y_ft, y_tf, y_tt) = crate::grid::branch_two_port(branch);
            let i_from = (y_ff * v[f] + y_ft * v[t]).norm();
            let i_to = (y_tf * v[f] + y_tt * v[t]).norm();
            branch_i[j] = i_from.max(i_to);
        }
    }

    Ok(PowerFlowSolution {
        v_mag,
        v_ang,
        gen_p,
        gen_q,
        branch_i,
        converged,
        iterations,
        max_mismatch,
    })
}

/// Per-branch loading rate I / (I_max + epsilon); out-of-service branches
/// carry zero current and therefore zero loading.
pub fn branch_loadings(solution: &PowerFlowSolution, case: &NetworkCase, epsilon: f64) -> Vec<f64> {
    solution
        .branch_i
        .iter()
        .zip(case.branches.iter())
        .map(|(i, br)| i / (br.i_max + epsilon))
        .collect()
}

/// Disconnects every branch whose loading exceeds the threshold. Returns the
/// updated flags and the indices of newly tripped branches.
pub fn apply_hard_overload(
    statuses: &[bool],
    loadings: &[f64],
    threshold: f64,
) -> (Vec<bool>, Vec<usize>) {
    let mut updated = statuses.to_vec();
    let mut tripped = Vec::new();
    for (j, &rate) in loadings.iter().enumerate() {
        if updated[j] && rate > threshold {
            updated[j] = false;
            tripped.push(j);
        }
    }
    (updated, tripped)
}

/// One-stop solve that assembles the admittance matrix first; convenience
/// wrapper used by the environment and the CLI.
pub fn solve_with_statuses(
    case: &NetworkCase,
    statuses: &[bool],
    schedule: &Schedule,
    loads: &BusLoads,
) -> Result<PowerFlowSolution, GridError> {
    let ybus = build_admittance(case, statuses);
    solve_power_flow(case, &ybus, statuses, schedule, loads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, CostFunction, Generator, GeneratorKind};

    fn two_bus_case() -> NetworkCase {
        NetworkCase {
            base_mva: 100.0,
            buses: vec![
                Bus { id: 0, v_min: 0.9, v_max: 1.1, shunt_g: 0.0, shunt_b: 0.0 },
                Bus { id: 1, v_min: 0.9, v_max: 1.1, shunt_g: 0.0, shunt_b: 0.0 },
            ],
            branches: vec![Branch {
                from_bus: 0,
                to_bus: 1,
                r: 0.0,
                x: 0.1,
                b_charging: 0.0,
                tap: 1.0,
                shift: 0.0,
                i_max: 1.0,
                status: true,
            }],
            generators: vec![Generator {
                bus: 0,
                p_min: 0.0,
                p_max: 5000.0,
                q_min: -3000.0,
                q_max: 3000.0,
                ramp_up: 100.0,
                ramp_down: 100.0,
                cost: CostFunction::new(0.01, 10.0, 0.0),
                kind: GeneratorKind::Thermal,
                v_setpoint: 1.0,
            }],
            slack_bus: 0,
        }
    }

    /// Independent mismatch recomputation in complex form: max |S_calc - S_spec|.
    fn recomputed_mismatch(
        case: &NetworkCase,
        statuses: &[bool],
        schedule: &Schedule,
        loads: &BusLoads,
        sol: &PowerFlowSolution,
    ) -> f64 {
        let ybus = build_admittance(case, statuses);
        let n = case.n_buses();
        let v: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(sol.v_mag[k], sol.v_ang[k]))
            .collect();
        let slack = case.bus_position(case.slack_bus).unwrap();
        let mut worst = 0.0_f64;
        for k in 0..n {
            let mut i_k = Complex64::new(0.0, 0.0);
            for m in 0..n {
                i_k += ybus[(k, m)] * v[m];
            }
            let s = v[k] * i_k.conj();
            let gen_p: f64 = case
                .generators
                .iter()
                .enumerate()
                .filter(|(_, g)| case.bus_position(g.bus).unwrap() == k)
                .map(|(g, _)| schedule.gen_p_mw[g])
                .sum();
            if k != slack {
                worst = worst.max((s.re - (gen_p - loads.p_mw[k]) / case.base_mva).abs());
            }
            let has_gen = case.generators.iter().any(|g| case.bus_position(g.bus).unwrap() == k);
            if !has_gen && k != slack {
                worst = worst.max((s.im + loads.q_mvar[k] / case.base_mva).abs());
            }
        }
        worst
    }

    #[test]
    fn zero_injection_flat_start_is_exact() {
        let case = two_bus_case();
        let statuses = vec![true];
        let schedule = Schedule { gen_p_mw: vec![0.0], gen_v_set: vec![1.0] };
        let loads = BusLoads { p_mw: vec![0.0, 0.0], q_mvar: vec![0.0, 0.0] };
        let sol = solve_with_statuses(&case, &statuses, &schedule, &loads).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        assert!(sol.max_mismatch < 1e-10);
        assert_eq!(sol.v_mag, vec![1.0, 1.0]);
        assert_eq!(sol.v_ang, vec![0.0, 0.0]);
    }

    #[test]
    fn two_bus_load_satisfies_residual_oracle() {
        let case = two_bus_case();
        let statuses = vec![true];
        let schedule = Schedule { gen_p_mw: vec![0.0], gen_v_set: vec![1.0] };
        // 0.1 + j0 p.u. load at bus 1.
        let loads = BusLoads { p_mw: vec![0.0, 10.0], q_mvar: vec![0.0, 0.0] };
        let sol = solve_with_statuses(&case, &statuses, &schedule, &loads).unwrap();
        assert!(sol.converged, "mismatch {}", sol.max_mismatch);
        let res = recomputed_mismatch(&case, &statuses, &schedule, &loads, &sol);
        assert!(res < 1e-10, "residual {res}");
        // Lossless line: slack covers exactly the load.
        assert!((sol.gen_p[0] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn overloaded_two_bus_diverges() {
        let case = two_bus_case();
        let statuses = vec![true];
        let schedule = Schedule { gen_p_mw: vec![0.0], gen_v_set: vec![1.0] };
        // 20 p.u. transfer over x=0.1 exceeds the V^2/(2X) = 5 p.u. limit.
        let loads = BusLoads { p_mw: vec![0.0, 2000.0], q_mvar: vec![0.0, 0.0] };
        let sol = solve_with_statuses(&case, &statuses, &schedule, &loads).unwrap();
        assert!(!sol.converged);
        assert!(sol.iterations > 0);
    }

    #[test]
    fn losses_are_nonnegative_with_resistive_lines() {
        let mut case = two_bus_case();
        case.branches[0].r = 0.02;
        let statuses = vec![true];
        let schedule = Schedule { gen_p_mw: vec![0.0], gen_v_set: vec![1.0] };
        let loads = BusLoads { p_mw: vec![0.0, 30.0], q_mvar: vec![0.0, 9.8] };
        let sol = solve_with_statuses(&case, &statuses, &schedule, &loads).unwrap();
        assert!(sol.converged);
        let total_gen: f64 = sol.gen_p.iter().sum();
        let total_load: f64 = loads.p_mw.iter().sum();
        assert!(total_gen - total_load >= 0.0, "losses {}", total_gen - total_load);
    }

    #[test]
    fn transformer_branch_solves_and_passes_residual_oracle() {
        let mut case = two_bus_case();
        case.branches[0].r = 0.01;
        case.branches[0].tap = 0.97;
        case.branches[0].shift = 0.05;
        case.branches[0].b_charging = 0.04;
        let statuses = vec![true];
        let schedule = Schedule { gen_p_mw: vec![0.0], gen_v_set: vec![1.02] };
        let loads = BusLoads { p_mw: vec![0.0, 25.0], q_mvar: vec![0.0, 8.0] };
        let sol = solve_with_statuses(&case, &statuses, &schedule, &loads).unwrap();
        assert!(sol.converged);
        let res = recomputed_mismatch(&case, &statuses, &schedule, &loads, &sol);
        assert!(res < 1e-10, "residual {res}");
    }

    #[test]
    fn solver_is_deterministic() {
        let case = two_bus_case();
        let statuses = vec![true];
        let schedule = Schedule { gen_p_mw: vec![0.0], gen_v_set: vec![1.0] };
        let loads = BusLoads { p_mw: vec![0.0, 42.0], q_mvar: vec![0.0, 13.0] };
        let a = solve_with_statuses(&case, &statuses, &schedule, &loads).unwrap();
        let b = solve_with_statuses(&case, &statuses, &schedule, &loads).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loading_rate_formula() {
        let case = two_bus_case();
        let mut sol = PowerFlowSolution {
            v_mag: vec![1.0; 2],
            v_ang: vec![0.0; 2],
            gen_p: vec![0.0],
            gen_q: vec![0.0],
            branch_i: vec![0.0],
            converged: true,
            iterations: 0,
            max_mismatch: 0.0,
        };
        assert_eq!(branch_loadings(&sol, &case, 1e-6), vec![0.0]);
        sol.branch_i = vec![1.0];
        let l = branch_loadings(&sol, &case, 1e-6)[0];
        assert!(l < 1.0 && (l - 1.0 / 1.000001).abs() < 1e-12);
        sol.branch_i = vec![1.5];
        let l = branch_loadings(&sol, &case, 1e-6)[0];
        assert!((l - 1.4999985).abs() < 1e-6);
    }

    #[test]
    fn hard_overload_trips_only_above_threshold() {
        let (s, tripped) = apply_hard_overload(&[true, true], &[1.5, 0.9], 1.4);
        assert_eq!(s, vec![false, true]);
        assert_eq!(tripped, vec![0]);

        let (s, tripped) = apply_hard_overload(&[true, true], &[1.3, 1.39], 1.4);
        assert_eq!(s, vec![true, true]);
        assert!(tripped.is_empty());

        let statuses = vec![true, false, true];
        let (s, tripped) = apply_hard_overload(&statuses, &[0.0, 0.0, 0.0], 1.4);
        assert_eq!(s, statuses);
        assert!(tripped.is_empty());
    }
}
