//! Command-line driver.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use log::{info, warn};

use crate::backend::{backend_by_name, resolve_backend_name};
use crate::des::{CaseData, Scenario};
use crate::error::Result;
use crate::io::{load_case, write_artifacts, write_case, RunCell, RunReport};
use crate::methods::{run_chain, Method, MethodContext, MethodSettings, MethodStatus};
use crate::network::Configuration;
use crate::powerflow::{verify_timeseries, PowerFlowOptions};
use crate::synth::example_case;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Milp,
    Bl1,
    Bl2,
    Minlp,
    All,
}

impl MethodArg {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Milp => vec![Method::Milp],
            MethodArg::Bl1 => vec![Method::Bl1],
            MethodArg::Bl2 => vec![Method::Bl2],
            MethodArg::Minlp => vec![Method::Minlp],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConfigArg {
    Delta,
    Wye,
}

impl From<ConfigArg> for Configuration {
    fn from(c: ConfigArg) -> Self {
        match c {
            ConfigArg::Delta => Configuration::Delta,
            ConfigArg::Wye => Configuration::Wye,
        }
    }
}

/// Design of grid-connected distributed energy systems with AC power flow
/// constraints.
#[derive(Debug, Parser)]
#[command(name = "desopf", version)]
pub struct Args {
    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodArg,
    /// 1 = no storage, 2 = with storage.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub scenario: u8,
    #[arg(long, value_enum, default_value = "delta")]
    pub config: ConfigArg,
    /// BL-1 also fixes the MILP schedule (network audit of the MILP solution).
    #[arg(long)]
    pub fix_operations: bool,
    /// Case directory; the bundled example is used when omitted.
    #[arg(long, value_name = "DIR")]
    pub case: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = "desopf-out")]
    pub out: PathBuf,
    /// Solver backend (default from DESOPF_BACKEND, else `highs`).
    #[arg(long, value_name = "NAME")]
    pub backend: Option<String>,
    /// NLP feasibility tolerance.
    #[arg(long, value_name = "X")]
    pub tol: Option<f64>,
    /// MINLP node limit.
    #[arg(long, value_name = "N")]
    pub node_limit: Option<usize>,
    /// MINLP time limit in seconds.
    #[arg(long, value_name = "S")]
    pub time_limit: Option<f64>,
    /// Write the bundled example case to DIR and exit.
    #[arg(long, value_name = "DIR")]
    pub write_example: Option<PathBuf>,
}

impl Args {
    pub fn settings(&self) -> MethodSettings {
        let mut s = MethodSettings {
            fix_operations: self.fix_operations,
            ..MethodSettings::default()
        };
        if let Some(t) = self.tol {
            s.nlp.feasibility_tol = t;
        }
        if let Some(n) = self.node_limit {
            s.node_limit = n;
        }
        if let Some(t) = self.time_limit {
            s.time_limit = t;
        }
        s
    }
}

/// Runs the requested methods and writes the artifacts. Returns the report
/// so callers can inspect it.
pub fn execute(args: &Args, case: &CaseData, case_name: &str) -> Result<RunReport> {
    let scenario = Scenario::from_number(args.scenario)?;
    let case = case.for_scenario(scenario);
    let backend_name = resolve_backend_name(args.backend.as_deref());
    let backend = backend_by_name(&backend_name)?;
    let settings = args.settings();
    let ctx = MethodContext {
        case: &case,
        backend: backend.as_ref(),
        settings: &settings,
    };
    let configuration: Configuration = args.config.into();
    let methods = args.method.methods();
    let results = run_chain(&ctx, configuration, &methods, None)?;
    let pf = PowerFlowOptions::default();
    let cells = results
        .into_iter()
        .map(|result| {
            let verification = match (&result.opf, result.is_feasible()) {
                (Some(opf), true) => Some(verify_timeseries(opf, &case.network, &pf).map_err(|e| e.to_string())),
                _ => None,
            };
            info!(
                "{} {}: {} in {:.2}s",
                configuration.as_str(),
                result.method,
                result.status.as_str(),
                result.seconds
            );
            RunCell {
                configuration,
                result,
                verification,
            }
        })
        .collect();
    let report = RunReport {
        case_name: case_name.to_string(),
        scenario,
        backend: backend_name,
        cells,
    };
    write_artifacts(&report, &case, &args.out)?;
    Ok(report)
}

pub fn exit_code(report: &RunReport) -> i32 {
    let bad = report.cells.iter().any(|c| {
        matches!(
            c.result.status,
            MethodStatus::Infeasible | MethodStatus::NoIncumbent | MethodStatus::Failed
        )
    });
    if bad {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    }
}

/// Parses `argv` and runs; returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    if let Some(dir) = &args.write_example {
        return match write_case(&example_case(), dir) {
            Ok(files) => {
                println!("wrote {} files to {}", files.len(), dir.display());
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        };
    }
    let (case, name) = match &args.case {
        Some(dir) => match load_case(dir) {
            Ok(c) => (c, dir.display().to_string()),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_ERROR;
            }
        },
        None => {
            warn!("no --case given, using the bundled example case");
            (example_case(), "example".to_string())
        }
    };
    match execute(&args, &case, &name) {
        Ok(report) => {
            for c in &report.cells {
                let r = &c.result;
                let obj = r.objective.map_or("-".to_string(), |o| format!("{o:.2}"));
                println!(
                    "{:<6} {:<5} {:<16} objective {:>12}  {:.2}s{}",
                    r.method.label(),
                    c.configuration.as_str(),
                    r.status.as_str(),
                    obj,
                    r.seconds,
                    if r.message.is_empty() {
                        String::new()
                    } else {
                        format!("  {}", r.message)
                    }
                );
            }
            println!("artifacts in {}", args.out.display());
            exit_code(&report)
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
