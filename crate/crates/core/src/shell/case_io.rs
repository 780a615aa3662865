//! Network case document: a single JSON file with top-level keys
//! `base_mva`, `buses[]`, `branches[]`, `generators[]`, `slack_bus`.
//!
//! Parsing goes through raw mirrors with optional fields so a missing or
//! bad value names the offending entity instead of just a byte offset.

use std::path::Path;

use serde::Deserialize;

use crate::grid::{Branch, Bus, CostFunction, Generator, GeneratorKind, NetworkCase};
use crate::util::atomic_write;

use super::ShellError;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    base_mva: Option<f64>,
    slack_bus: Option<usize>,
    buses: Option<Vec<RawBus>>,
    branches: Option<Vec<RawBranch>>,
    generators: Option<Vec<RawGenerator>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBus {
    id: Option<usize>,
    v_min: Option<f64>,
    v_max: Option<f64>,
    #[serde(default)]
    shunt_g: f64,
    #[serde(default)]
    shunt_b: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    from_bus: Option<usize>,
    to_bus: Option<usize>,
    r: Option<f64>,
    x: Option<f64>,
    #[serde(default)]
    b_charging: f64,
    tap: Option<f64>,
    #[serde(default)]
    shift: f64,
    i_max: Option<f64>,
    status: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    c2: Option<f64>,
    c1: Option<f64>,
    #[serde(default)]
    c0: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    bus: Option<usize>,
    p_min: Option<f64>,
    p_max: Option<f64>,
    q_min: Option<f64>,
    q_max: Option<f64>,
    ramp_up: Option<f64>,
    ramp_down: Option<f64>,
    cost: Option<RawCost>,
    kind: Option<String>,
    v_setpoint: Option<f64>,
}

fn req<T>(value: Option<T>, entity: &str, field: &str) -> Result<T, String> {
    value.ok_or_else(|| format!("{entity}: missing field `{field}`"))
}

fn convert(raw: RawCase) -> Result<NetworkCase, String> {
    let base_mva = req(raw.base_mva, "case", "base_mva")?;
    let slack_bus = req(raw.slack_bus, "case", "slack_bus")?;
    let buses = req(raw.buses, "case", "buses")?
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let entity = format!("bus {i}");
            Ok(Bus {
                id: req(b.id, &entity, "id")?,
                v_min: req(b.v_min, &entity, "v_min")?,
                v_max: req(b.v_max, &entity, "v_max")?,
                shunt_g: b.shunt_g,
                shunt_b: b.shunt_b,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let branches = req(raw.branches, "case", "branches")?
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let entity = format!("branch {i}");
            Ok(Branch {
                from_bus: req(b.from_bus, &entity, "from_bus")?,
                to_bus: req(b.to_bus, &entity, "to_bus")?,
                r: req(b.r, &entity, "r")?,
                x: req(b.x, &entity, "x")?,
                b_charging: b.b_charging,
                tap: b.tap.unwrap_or(1.0),
                shift: b.shift,
                i_max: req(b.i_max, &entity, "i_max")?,
                status: b.status.unwrap_or(true),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let generators = req(raw.generators, "case", "generators")?
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            let entity = format!("generator {i}");
            let cost = req(g.cost, &entity, "cost")?;
            let kind = match req(g.kind, &entity, "kind")?.as_str() {
                "thermal" => GeneratorKind::Thermal,
                "renewable" => GeneratorKind::Renewable,
                other => return Err(format!("{entity}: unknown kind {other:?}")),
            };
            Ok(Generator {
                bus: req(g.bus, &entity, "bus")?,
                p_min: req(g.p_min, &entity, "p_min")?,
                p_max: req(g.p_max, &entity, "p_max")?,
                q_min: req(g.q_min, &entity, "q_min")?,
                q_max: req(g.q_max, &entity, "q_max")?,
                ramp_up: req(g.ramp_up, &entity, "ramp_up")?,
                ramp_down: req(g.ramp_down, &entity, "ramp_down")?,
                cost: CostFunction::new(
                    req(cost.c2, &entity, "cost.c2")?,
                    req(cost.c1, &entity, "cost.c1")?,
                    cost.c0,
                ),
                kind,
                v_setpoint: req(g.v_setpoint, &entity, "v_setpoint")?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(NetworkCase { base_mva, buses, branches, generators, slack_bus })
}

/// Reads and validates a case document.
pub fn parse_case(path: &Path) -> Result<NetworkCase, ShellError> {
    let body = std::fs::read_to_string(path)?;
    let raw: RawCase =
        serde_json::from_str(&body).map_err(|e| ShellError::parse(path, e.to_string()))?;
    let case = convert(raw).map_err(|msg| ShellError::parse(path, msg))?;
    case.validate().map_err(|e| ShellError::parse(path, e.to_string()))?;
    Ok(case)
}

/// Writes a case document (pretty-printed, atomic).
pub fn write_case(path: &Path, case: &NetworkCase) -> Result<(), ShellError> {
    let body = serde_json::to_string_pretty(case)
        .map_err(|e| ShellError::Invalid(format!("serialize case: {e}")))?;
    atomic_write(path, body.as_bytes())?;
    Ok(())
}
