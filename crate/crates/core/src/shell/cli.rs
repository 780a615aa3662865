//! Command-line interface.
//!
//! Subcommands: `synth` (generate case + scenario), `pf` (one power flow),
//! `guard` (project an action file), `train`, `eval`, `baseline`. Every run
//! that writes outputs also writes a manifest echoing its full
//! configuration, sufficient to reproduce the results bit for bit.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::agent::{evaluate, load_checkpoint, save_checkpoint, train, EvalReport};
use crate::env::{Env, LoadScenario};
use crate::grid::{solve_with_statuses, BusLoads, GeneratorKind, NetworkCase, Schedule};
use crate::guard::{guard, GuardContext};
use crate::oracle::{lambda_dispatch, rolling_baseline, BaselineOptions, DispatchInstance};
use crate::util::atomic_write;

use super::{
    parse_case, parse_mode, parse_scenario, render_line_chart, synth, write_case, write_manifest,
    write_metrics, write_scenario, Manifest, MetricsRecord, RunConfig, SynthSpec,
    METRICS_FORMAT_VERSION,
};

#[derive(Parser)]
#[command(
    name = "laed",
    version,
    about = "Look-ahead AC economic dispatch toolkit",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic case and scenario.
    Synth(SynthArgs),
    /// Solve one power flow at a scenario step (economic dispatch schedule).
    Pf(PfArgs),
    /// Project an action file through the security modification.
    Guard(GuardArgs),
    /// Train an agent and emit metrics plus a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint with noise-free rollouts.
    Eval(EvalArgs),
    /// Rolling economic-dispatch baseline with power-flow audit.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    buses: usize,
    #[arg(long, default_value_t = 3)]
    gens: usize,
    #[arg(long, default_value_t = 1)]
    renewables: usize,
    #[arg(long, default_value_t = 96)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for case.json and scenario.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PfArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// 1-based scenario step to solve.
    #[arg(long, default_value_t = 1)]
    step: usize,
}

#[derive(Args)]
struct GuardArgs {
    #[arg(long)]
    case: PathBuf,
    /// JSON file: {"action": [..]}.
    #[arg(long)]
    action: PathBuf,
    /// JSON context file; see the README for the schema.
    #[arg(long)]
    context: PathBuf,
    #[arg(long, default_value = "m3")]
    mode: String,
    /// Output directory; prints to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Optional JSON RunConfig; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also render reward-curve PNGs from the metrics.
    #[arg(long, default_value_t = false)]
    plot: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = false)]
    plot: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Number of leading steps to dispatch (defaults to the whole horizon).
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests exit 0 by clap convention.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Pf(args) => cmd_pf(args),
        Command::Guard(args) => cmd_guard(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Baseline(args) => cmd_baseline(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let body = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&body).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn load_inputs(case: &Path, scenario: &Path, power_factor: f64) -> Result<(NetworkCase, LoadScenario)> {
    let case_doc = parse_case(case)?;
    let scenario_doc = parse_scenario(scenario, &case_doc, power_factor)?;
    Ok((case_doc, scenario_doc))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        buses: args.buses,
        gens: args.gens,
        renewables: args.renewables,
        steps: args.steps,
        seed: args.seed,
    };
    let (case, scenario) = synth(&spec)?;
    std::fs::create_dir_all(&args.out)?;
    let case_path = args.out.join("case.json");
    let scenario_path = args.out.join("scenario.csv");
    write_case(&case_path, &case)?;
    write_scenario(&scenario_path, &case, &scenario)?;
    println!(
        "wrote {} ({} buses, {} generators, {} branches) and {} ({} steps)",
        case_path.display(),
        case.n_buses(),
        case.n_generators(),
        case.n_branches(),
        scenario_path.display(),
        scenario.horizon()
    );
    Ok(())
}

fn cmd_pf(args: PfArgs) -> Result<()> {
    let case = parse_case(&args.case)?;
    let (loads, caps) = match &args.scenario {
        Some(path) => {
            let scenario = parse_scenario(path, &case, 0.95)?;
            if args.step == 0 || args.step > scenario.horizon() {
                bail!("step {} outside scenario horizon {}", args.step, scenario.horizon());
            }
            let s = args.step - 1;
            (
                BusLoads {
                    p_mw: scenario.load_p[s].clone(),
                    q_mvar: scenario.load_q[s].clone(),
                },
                scenario.available_p_max[s].clone(),
            )
        }
        None => (
            BusLoads { p_mw: vec![0.0; case.n_buses()], q_mvar: vec![0.0; case.n_buses()] },
            case.generators.iter().map(|g| g.p_max).collect(),
        ),
    };
    // Schedule from single-step economic dispatch against the step's demand.
    let demand: f64 = loads.p_mw.iter().sum();
    let instance = DispatchInstance {
        costs: case.generators.iter().map(|g| g.cost).collect(),
        bounds: case
            .generators
            .iter()
            .enumerate()
            .map(|(g, gen)| match gen.kind {
                GeneratorKind::Thermal => (gen.p_min, gen.p_max),
                GeneratorKind::Renewable => (0.0, gen.p_max.min(caps[g])),
            })
            .collect(),
        demand,
    };
    let dispatch = lambda_dispatch(&instance)?;
    let schedule = Schedule {
        gen_p_mw: dispatch.p.clone(),
        gen_v_set: case.generators.iter().map(|g| g.v_setpoint).collect(),
    };
    let statuses = case.branch_statuses();
    let sol = solve_with_statuses(&case, &statuses, &schedule, &loads)?;
    if !sol.converged {
        bail!(
            "power flow diverged after {} iterations (mismatch {:.3e})",
            sol.iterations,
            sol.max_mismatch
        );
    }
    println!(
        "converged in {} iterations, max mismatch {:.3e} p.u.",
        sol.iterations, sol.max_mismatch
    );
    println!("bus  v_mag(pu)  v_ang(deg)");
    for (k, bus) in case.buses.iter().enumerate() {
        println!("{:>3}  {:>9.5}  {:>10.4}", bus.id, sol.v_mag[k], sol.v_ang[k].to_degrees());
    }
    println!("gen  P(MW)      Q(MVAr)");
    for g in 0..case.n_generators() {
        println!("{:>3}  {:>9.3}  {:>9.3}", g, sol.gen_p[g], sol.gen_q[g]);
    }
    println!("branch  I(pu)    loading");
    for (j, branch) in case.branches.iter().enumerate() {
        println!(
            "{:>6}  {:>7.4}  {:>7.4}",
            j,
            sol.branch_i[j],
            sol.branch_i[j] / (branch.i_max + 1e-6)
        );
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ActionFile {
    action: Vec<f64>,
}

/// Window context for the standalone guard command. Availability defaults
/// to each unit's p_max when omitted.
#[derive(Debug, Serialize, Deserialize)]
struct ContextFile {
    target_demand: Vec<f64>,
    #[serde(default)]
    prev_p: Option<Vec<f64>>,
    #[serde(default)]
    available_p_max: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_sigma")]
    sigma: f64,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
    #[serde(default = "default_dv_max")]
    dv_max: f64,
}

fn default_sigma() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    100
}

fn default_dv_max() -> f64 {
    0.05
}

fn cmd_guard(args: GuardArgs) -> Result<()> {
    let case = parse_case(&args.case)?;
    let mode = parse_mode(&args.mode)?;
    let action: ActionFile = serde_json::from_str(
        &std::fs::read_to_string(&args.action)
            .with_context(|| format!("reading {}", args.action.display()))?,
    )
    .with_context(|| format!("parsing {}", args.action.display()))?;
    let ctx_file: ContextFile = serde_json::from_str(
        &std::fs::read_to_string(&args.context)
            .with_context(|| format!("reading {}", args.context.display()))?,
    )
    .with_context(|| format!("parsing {}", args.context.display()))?;

    let t = ctx_file.target_demand.len();
    let available = ctx_file
        .available_p_max
        .unwrap_or_else(|| vec![case.generators.iter().map(|g| g.p_max).collect(); t]);
    let bus_v_limits = case
        .generators
        .iter()
        .map(|g| {
            let b = &case.buses[case.bus_position(g.bus).expect("validated")];
            (b.v_min, b.v_max)
        })
        .collect();
    let ctx = GuardContext {
        generators: case.generators.clone(),
        prev_p: ctx_file.prev_p,
        available_p_max: available,
        target_demand: ctx_file.target_demand,
        sigma: ctx_file.sigma,
        max_iter: ctx_file.max_iter,
        dv_max: ctx_file.dv_max,
        bus_v_limits,
    };
    let dispatch = guard(&action.action, &ctx, mode)?;
    let body = serde_json::to_string_pretty(&dispatch)?;
    match args.out {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("dispatch.json");
            atomic_write(&path, body.as_bytes())?;
            println!("wrote {}", path.display());
        }
        None => println!("{body}"),
    }
    Ok(())
}

fn apply_overrides(config: &mut RunConfig, mode: Option<&str>, seed: Option<u64>, episodes: Option<usize>) {
    if let Some(mode) = mode {
        config.mode = mode.to_string();
    }
    if let Some(seed) = seed {
        config.seed = seed;
        config.ddpg.seed = seed;
    }
    if let Some(episodes) = episodes {
        config.ddpg.episodes = episodes;
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut config = load_run_config(args.config.as_deref())?;
    apply_overrides(&mut config, args.mode.as_deref(), args.seed, args.episodes);
    config.ddpg.seed = config.seed;
    let mode = config.guard_mode()?;
    let (case, scenario) = load_inputs(&args.case, &args.scenario, config.env.power_factor)?;
    let mut env = Env::new(case, scenario, config.env.clone(), mode)?;

    std::fs::create_dir_all(&args.out)?;
    let ckpt_path = args.out.join("checkpoint.json");
    let every = config.checkpoint_every;
    let (agent, metrics) = train(&mut env, &config.ddpg, |episode, _m, agent| {
        if every > 0 && (episode + 1) % every == 0 {
            let _ = save_checkpoint(&ckpt_path, agent);
        }
    })?;
    save_checkpoint(&ckpt_path, &agent)?;

    let records: Vec<MetricsRecord> = metrics.iter().map(MetricsRecord::from).collect();
    let metrics_path = args.out.join("train_metrics.csv");
    write_metrics(&metrics_path, &records)?;
    write_manifest(
        &args.out.join("manifest.json"),
        &Manifest {
            metrics_format_version: METRICS_FORMAT_VERSION,
            case: args.case.display().to_string(),
            scenario: args.scenario.display().to_string(),
            config: config.clone(),
        },
    )?;
    if args.plot {
        let rewards: Vec<f64> = metrics.iter().map(|m| m.reward).collect();
        let costs: Vec<f64> = metrics.iter().map(|m| m.cost).collect();
        render_line_chart(&args.out.join("reward_curve.png"), &[rewards])?;
        render_line_chart(&args.out.join("cost_curve.png"), &[costs])?;
    }
    let last = metrics.last();
    println!(
        "trained {} episodes (mode {}), final reward {}, wrote {}",
        metrics.len(),
        config.mode,
        last.map_or(f64::NAN, |m| m.reward),
        metrics_path.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut config = load_run_config(args.config.as_deref())?;
    apply_overrides(&mut config, args.mode.as_deref(), None, None);
    let mode = config.guard_mode()?;
    let (case, scenario) = load_inputs(&args.case, &args.scenario, config.env.power_factor)?;
    let n_gen = case.n_generators();
    let mut env = Env::new(case, scenario, config.env.clone(), mode)?;
    let agent = load_checkpoint(&args.checkpoint)?;
    let report = evaluate(&agent, &mut env)?;

    std::fs::create_dir_all(&args.out)?;
    let records: Vec<MetricsRecord> = report.windows.iter().map(MetricsRecord::from).collect();
    write_metrics(&args.out.join("eval_metrics.csv"), &records)?;
    let summary_path = args.out.join("eval_summary.json");
    atomic_write(&summary_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_manifest(
        &args.out.join("manifest.json"),
        &Manifest {
            metrics_format_version: METRICS_FORMAT_VERSION,
            case: args.case.display().to_string(),
            scenario: args.scenario.display().to_string(),
            config: config.clone(),
        },
    )?;
    if args.plot {
        let series: Vec<Vec<f64>> = (0..n_gen)
            .map(|g| {
                report
                    .windows
                    .iter()
                    .map(|w| w.first_step_p.get(g).copied().unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        render_line_chart(&args.out.join("dispatch_curves.png"), &series)?;
    }
    print_eval_summary(&report);
    println!("wrote {}", summary_path.display());
    Ok(())
}

fn print_eval_summary(report: &EvalReport) {
    println!(
        "windows {}  completed {}  divergences {}  violations {}",
        report.windows.len(),
        report.completed,
        report.divergences,
        report.violations
    );
    println!(
        "realized first-step cost {:.3}  total reward {:.3}",
        report.total_first_step_cost, report.total_reward
    );
    println!(
        "decision latency mean {:.3} ms  max {:.3} ms",
        report.latency_mean_ms, report.latency_max_ms
    );
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let (case, scenario) = load_inputs(&args.case, &args.scenario, 0.95)?;
    let report = rolling_baseline(&case, &scenario, &BaselineOptions { steps: args.steps })?;
    std::fs::create_dir_all(&args.out)?;
    let mut body = String::from("step,cost,lambda,converged,infeasible\n");
    for r in &report.records {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step + 1,
            r.cost,
            r.lambda,
            r.converged,
            r.infeasible
        ));
    }
    let csv_path = args.out.join("baseline.csv");
    atomic_write(&csv_path, body.as_bytes())?;
    let summary = serde_json::json!({
        "total_cost": report.total_cost,
        "steps": report.records.len(),
        "infeasible_steps": report.infeasible_steps,
        "pf_divergences": report.pf_divergences,
    });
    atomic_write(
        &args.out.join("baseline_summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    println!(
        "baseline over {} steps: total realized cost {:.3} ({} infeasible, {} divergent)",
        report.records.len(),
        report.total_cost,
        report.infeasible_steps.len(),
        report.pf_divergences.len()
    );
    println!("wrote {}", csv_path.display());
    Ok(())
}
