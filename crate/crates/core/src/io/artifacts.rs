//! Result files of a run.
//!
//! ```text
//! out/
//!   summary.json
//!   verification.csv
//!   solve_log.txt
//!   timeseries/<config>_<method>/currents_<branch>.csv
//!                                voltages.csv
//!                                storage_<building>.csv
//!                                power_sold.csv
//! ```
//!
//! Nothing time-dependent is written, so identical inputs give identical
//! files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::des::{CaseData, CostTerm, Scenario};
use crate::error::{Error, Result};
use crate::methods::{max_excess_pct, Method, MethodResult, ViolationKind};
use crate::network::Configuration;
use crate::powerflow::{ErrorReport, Quantity};

pub const SUMMARY_FILE: &str = "summary.json";
pub const VERIFICATION_FILE: &str = "verification.csv";
pub const LOG_FILE: &str = "solve_log.txt";
pub const OBJECTIVE_KEY: &str = "Objective value (£)";

#[derive(Debug, Clone)]
pub struct RunCell {
    pub configuration: Configuration,
    pub result: MethodResult,
    /// Verifier comparison, for results with a network solution.
    pub verification: Option<std::result::Result<ErrorReport, String>>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub case_name: String,
    pub scenario: Scenario,
    pub backend: String,
    pub cells: Vec<RunCell>,
}

/// Table-style key of a cost row.
pub fn cost_key(term: CostTerm) -> String {
    format!("{} (£)", term.label())
}

fn cell_dir_name(cell: &RunCell) -> String {
    format!("{}_{}", cell.configuration.as_str(), cell.result.method.slug())
}

fn notes(r: &MethodResult) -> String {
    let mut n = r.status.as_str().replace('_', " ");
    if !r.message.is_empty() {
        n.push_str(": ");
        n.push_str(&r.message);
    }
    n
}

fn cell_json(cell: &RunCell) -> Value {
    let r = &cell.result;
    let mut m = Map::new();
    m.insert("method".into(), json!(r.method.label()));
    m.insert("configuration".into(), json!(cell.configuration.as_str()));
    m.insert("status".into(), json!(r.status.as_str()));
    m.insert("notes".into(), json!(notes(r)));
    if let (Some(costs), true) = (&r.costs, r.is_feasible()) {
        let mut c = Map::new();
        for term in CostTerm::ALL {
            c.insert(cost_key(term), json!(costs.get(term)));
        }
        c.insert(OBJECTIVE_KEY.into(), json!(r.objective.unwrap_or(costs.total())));
        m.insert("costs".into(), Value::Object(c));
    }
    if let Some(d) = &r.design {
        let buildings: Vec<Value> = d
            .buildings
            .iter()
            .map(|b| {
                json!({
                    "id": b.id,
                    "panels": b.panels,
                    "pv_capacity_kw": b.pv_capacity_kw,
                    "boiler_kw": b.boiler_kw,
                    "battery_kwh": b.batteries.iter().map(|x| x.capacity_kwh).sum::<f64>(),
                })
            })
            .collect();
        m.insert(
            "design".into(),
            json!({
                "PV capacity (kWp)": d.total_pv_kw(),
                "Battery capacity (kWh)": d.total_storage_kwh(),
                "buildings": buildings,
            }),
        );
    }
    if r.opf.is_some() {
        m.insert("violations".into(), json!(r.violations.len()));
        m.insert(
            "max_current_excess_pct".into(),
            json!(max_excess_pct(&r.violations, ViolationKind::Current)),
        );
    }
    if !r.infeasible_families.is_empty() {
        m.insert("infeasible_families".into(), json!(r.infeasible_families));
    }
    if let Some(g) = r.gap {
        m.insert("gap".into(), json!(g));
    }
    if let Some(n) = r.nodes {
        m.insert("nodes".into(), json!(n));
    }
    if let Some(Ok(v)) = &cell.verification {
        m.insert("verification_max_abs_error_pct".into(), json!(v.max_abs()));
    }
    Value::Object(m)
}

pub fn summary_json(report: &RunReport) -> Value {
    json!({
        "case": report.case_name,
        "scenario": report.scenario.number(),
        "backend": report.backend,
        "currency": "GBP",
        "units": {
            "costs": "GBP per year",
            "capacity": "kW",
            "storage": "kWh",
            "current": "A",
            "voltage": "pu",
        },
        "cells": report.cells.iter().map(cell_json).collect::<Vec<_>>(),
    })
}

fn put(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-season time series of one result. Currents and voltages need a
/// network solution and are skipped otherwise.
pub fn export_plot_data(result: &MethodResult, case: &CaseData, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let season_name = |s: usize| case.seasons[s].name.as_str();

    if let Some(opf) = &result.opf {
        for (k, label) in opf.branch_labels.iter().enumerate() {
            let mut out = String::from("season,t,amps,i_max\n");
            for p in &opf.periods {
                let _ = writeln!(out, "{},{},{},{}", season_name(p.season), p.t, p.current_a[k], opf.i_max_a[k]);
            }
            let path = dir.join(format!("currents_{label}.csv"));
            put(&path, &out)?;
            written.push(path);
        }
        let mut out = String::from("season,t");
        for id in &opf.bus_ids {
            let _ = write!(out, ",v_{id}");
        }
        out.push('\n');
        for p in &opf.periods {
            let _ = write!(out, "{},{}", season_name(p.season), p.t);
            for v in &p.v {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        let path = dir.join("voltages.csv");
        put(&path, &out)?;
        written.push(path);
    }

    if let Some(design) = &result.design {
        for (b, bd) in design.buildings.iter().enumerate() {
            let mut out = String::from("season,t,kwh\n");
            for (s, season) in design.operation.iter().enumerate() {
                for (t, h) in season[b].iter().enumerate() {
                    let kwh: f64 = h.batteries.iter().map(|x| x.stored).sum();
                    let _ = writeln!(out, "{},{t},{kwh}", season_name(s));
                }
            }
            let path = dir.join(format!("storage_{}.csv", bd.id));
            put(&path, &out)?;
            written.push(path);
        }
        let mut out = String::from("season,t,kw\n");
        for (s, season) in design.operation.iter().enumerate() {
            for t in 0..case.seasons[s].n_t() {
                let kw: f64 = season.iter().map(|b| b[t].pv_sold).sum();
                let _ = writeln!(out, "{},{t},{kw}", season_name(s));
            }
        }
        let path = dir.join("power_sold.csv");
        put(&path, &out)?;
        written.push(path);
    }
    Ok(written)
}

/// Verifier errors per result, one `Min`/`Max` pair each.
pub fn verification_csv(report: &RunReport) -> String {
    let mut out = String::from("configuration,method,stat");
    for q in Quantity::ALL {
        out.push(',');
        out.push_str(q.label());
    }
    out.push('\n');
    for cell in &report.cells {
        let Some(Ok(v)) = &cell.verification else {
            continue;
        };
        for (stat, hi) in [("Min", false), ("Max", true)] {
            let _ = write!(out, "{},{},{stat}", cell.configuration.as_str(), cell.result.method.label());
            for q in Quantity::ALL {
                let (lo, h) = v.range(q);
                let _ = write!(out, ",{:.6}", if hi { h } else { lo });
            }
            out.push('\n');
        }
    }
    out
}

fn solve_log(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "case {} scenario {} backend {}", report.case_name, report.scenario.number(), report.backend);
    for cell in &report.cells {
        let r = &cell.result;
        let _ = write!(out, "[{} {}] {}", cell.configuration.as_str(), r.method.label(), r.status.as_str());
        if let Some(o) = r.objective {
            let _ = write!(out, " objective {o:.2}");
        }
        if let Some(n) = r.nodes {
            let _ = write!(out, " nodes {n}");
        }
        if !r.message.is_empty() {
            let _ = write!(out, " ({})", r.message);
        }
        out.push('\n');
        for v in &r.violations {
            let _ = writeln!(
                out,
                "  violation {:?} {} season {} t {}: {:.4} vs limit {:.4} ({:+.2}%)",
                v.kind, v.element, v.season, v.t, v.value, v.limit, v.excess_pct
            );
        }
        match &cell.verification {
            Some(Ok(v)) => {
                let _ = writeln!(
                    out,
                    "  verifier: max |error| {:.4}% over {} timepoints, max mismatch {:.2e} pu",
                    v.max_abs(),
                    v.timepoints,
                    v.max_mismatch_pu
                );
            }
            Some(Err(e)) => {
                let _ = writeln!(out, "  verifier failed: {e}");
            }
            None => {}
        }
    }
    out
}

/// Writes the full artifact set and returns the files written.
pub fn write_artifacts(report: &RunReport, case: &CaseData, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let mut summary = serde_json::to_string_pretty(&summary_json(report)).expect("json");
    summary.push('\n');
    let p = out.join(SUMMARY_FILE);
    put(&p, &summary)?;
    written.push(p);

    if report.cells.iter().any(|c| c.verification.is_some()) {
        let p = out.join(VERIFICATION_FILE);
        put(&p, &verification_csv(report))?;
        written.push(p);
    }
    let p = out.join(LOG_FILE);
    put(&p, &solve_log(report))?;
    written.push(p);

    let ts = out.join("timeseries");
    for cell in &report.cells {
        if cell.result.design.is_none() {
            continue;
        }
        // MILP cells are identical across configurations; write them once
        if cell.result.method == Method::Milp
            && report
                .cells
                .iter()
                .take_while(|c| !std::ptr::eq(*c, cell))
                .any(|c| c.result.method == Method::Milp)
        {
            continue;
        }
        let name = if cell.result.method == Method::Milp {
            "milp".to_string()
        } else {
            cell_dir_name(cell)
        };
        written.extend(export_plot_data(&cell.result, case, &ts.join(name))?);
    }
    Ok(written)
}
