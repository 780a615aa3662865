//! Scenario CSV: one row per dispatch interval, columns
//! `step,bus_<id>_p[,bus_<id>_q],...,ren_<gen_index>_pmax,...`.
//!
//! Reactive columns are optional; absent ones are synthesized from the
//! configured power factor. Availability columns are required for every
//! renewable unit and must be non-negative.

use std::path::Path;

use crate::env::LoadScenario;
use crate::grid::{GeneratorKind, NetworkCase};
use crate::util::atomic_write;

use super::ShellError;

enum Column {
    Step,
    BusP(usize),
    BusQ(usize),
    RenewableCap(usize),
}

fn classify(name: &str, case: &NetworkCase) -> Result<Column, String> {
    if name == "step" {
        return Ok(Column::Step);
    }
    if let Some(rest) = name.strip_prefix("bus_") {
        if let Some(id) = rest.strip_suffix("_p") {
            let id: usize = id.parse().map_err(|_| format!("bad bus id in column {name:?}"))?;
            return case
                .bus_position(id)
                .map(Column::BusP)
                .ok_or_else(|| format!("unknown bus column {name:?}"));
        }
        if let Some(id) = rest.strip_suffix("_q") {
            let id: usize = id.parse().map_err(|_| format!("bad bus id in column {name:?}"))?;
            return case
                .bus_position(id)
                .map(Column::BusQ)
                .ok_or_else(|| format!("unknown bus column {name:?}"));
        }
    }
    if let Some(rest) = name.strip_prefix("ren_") {
        if let Some(idx) = rest.strip_suffix("_pmax") {
            let g: usize =
                idx.parse().map_err(|_| format!("bad generator index in column {name:?}"))?;
            match case.generators.get(g) {
                Some(gen) if gen.kind == GeneratorKind::Renewable => {
                    return Ok(Column::RenewableCap(g))
                }
                Some(_) => return Err(format!("column {name:?} targets a non-renewable unit")),
                None => return Err(format!("column {name:?} targets an unknown generator")),
            }
        }
    }
    Err(format!("unrecognized column {name:?}"))
}

/// Parses a scenario against its case; `power_factor` fills missing
/// reactive columns (lagging, Q = P tan(acos(pf))).
pub fn parse_scenario(
    path: &Path,
    case: &NetworkCase,
    power_factor: f64,
) -> Result<LoadScenario, ShellError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ShellError::parse(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| ShellError::parse(path, e.to_string()))?.clone();
    let columns: Vec<Column> = headers
        .iter()
        .map(|h| classify(h, case).map_err(|msg| ShellError::parse(path, msg)))
        .collect::<Result<_, _>>()?;

    let n_bus = case.n_buses();
    let ng = case.n_generators();
    let mut have_p = vec![false; n_bus];
    let mut have_q = vec![false; n_bus];
    let mut have_cap = vec![false; ng];
    for col in &columns {
        match col {
            Column::BusP(b) => have_p[*b] = true,
            Column::BusQ(b) => have_q[*b] = true,
            Column::RenewableCap(g) => have_cap[*g] = true,
            Column::Step => {}
        }
    }
    for (b, bus) in case.buses.iter().enumerate() {
        if !have_p[b] {
            return Err(ShellError::parse(path, format!("missing column bus_{}_p", bus.id)));
        }
    }
    for (g, gen) in case.generators.iter().enumerate() {
        if gen.kind == GeneratorKind::Renewable && !have_cap[g] {
            return Err(ShellError::parse(path, format!("missing column ren_{g}_pmax")));
        }
    }

    let tan_phi = (power_factor.clamp(-1.0, 1.0).acos()).tan();
    let mut load_p: Vec<Vec<f64>> = Vec::new();
    let mut load_q: Vec<Vec<f64>> = Vec::new();
    let mut caps: Vec<Vec<f64>> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ShellError::parse(path, e.to_string()))?;
        if record.len() != columns.len() {
            return Err(ShellError::parse(
                path,
                format!("row {}: {} fields, header has {}", row_idx + 1, record.len(), columns.len()),
            ));
        }
        let mut p = vec![0.0; n_bus];
        let mut q = vec![f64::NAN; n_bus];
        let mut cap: Vec<f64> =
            case.generators.iter().map(|g| g.p_max).collect();
        let mut step_value: Option<u64> = None;
        for (col, field) in columns.iter().zip(record.iter()) {
            let parse_f64 = || -> Result<f64, ShellError> {
                field.parse::<f64>().map_err(|_| {
                    ShellError::parse(path, format!("row {}: bad number {field:?}", row_idx + 1))
                })
            };
            match col {
                Column::Step => {
                    step_value = Some(field.parse::<u64>().map_err(|_| {
                        ShellError::parse(path, format!("row {}: bad step {field:?}", row_idx + 1))
                    })?);
                }
                Column::BusP(b) => p[*b] = parse_f64()?,
                Column::BusQ(b) => q[*b] = parse_f64()?,
                Column::RenewableCap(g) => {
                    let v = parse_f64()?;
                    if v < 0.0 {
                        return Err(ShellError::parse(
                            path,
                            format!("row {}: negative availability {v}", row_idx + 1),
                        ));
                    }
                    cap[*g] = v;
                }
            }
        }
        if let Some(s) = step_value {
            if s != row_idx as u64 + 1 {
                return Err(ShellError::parse(
                    path,
                    format!("row {}: step column must count 1..n, got {s}", row_idx + 1),
                ));
            }
        }
        for b in 0..n_bus {
            if q[b].is_nan() {
                q[b] = p[b] * tan_phi;
            }
        }
        load_p.push(p);
        load_q.push(q);
        caps.push(cap);
    }
    if load_p.is_empty() {
        return Err(ShellError::parse(path, "scenario has no rows"));
    }
    LoadScenario::from_series(load_p, load_q, caps)
        .map_err(|e| ShellError::parse(path, e.to_string()))
}

/// Writes a scenario in the canonical column order: active loads in case
/// bus order, reactive loads, then renewable availability.
pub fn write_scenario(
    path: &Path,
    case: &NetworkCase,
    scenario: &LoadScenario,
) -> Result<(), ShellError> {
    let renewables = case.renewable_indices();
    let mut header = vec!["step".to_string()];
    for bus in &case.buses {
        header.push(format!("bus_{}_p", bus.id));
    }
    for bus in &case.buses {
        header.push(format!("bus_{}_q", bus.id));
    }
    for &g in &renewables {
        header.push(format!("ren_{g}_pmax"));
    }
    let mut body = header.join(",");
    body.push('\n');
    for step in 0..scenario.horizon() {
        let mut fields = vec![(step + 1).to_string()];
        for b in 0..case.n_buses() {
            fields.push(format!("{}", scenario.load_p[step][b]));
        }
        for b in 0..case.n_buses() {
            fields.push(format!("{}", scenario.load_q[step][b]));
        }
        for &g in &renewables {
            fields.push(format!("{}", scenario.available_p_max[step][g]));
        }
        body.push_str(&fields.join(","));
        body.push('\n');
    }
    atomic_write(path, body.as_bytes())?;
    Ok(())
}
