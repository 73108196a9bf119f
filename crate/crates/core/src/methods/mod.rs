//! The four solution methods: network-free MILP, two bi-level schemes that
//! fix MILP decisions before an NLP with the network, and an NLP-based
//! branch-and-bound over the full mixed-integer model.

pub mod audit;
pub mod bnb;
pub mod matrix;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::{
    diagnose_infeasible_families, MilpOptions, NlpOptions, SolveOutcome, SolveStatus, SolverBackend,
};
use crate::des::{
    build_des_model, evaluate_cost_breakdown, CaseData, CostBreakdown, DesModel, DesignSolution,
};
use crate::error::{Error, Result};
use crate::network::Configuration;
use crate::opf::{build_combined_model, CombinedModel, OpfSolution};
use crate::system::VarId;

pub use audit::{audit, max_excess_pct, Violation, ViolationKind};
pub use bnb::run_minlp;
pub use matrix::{run_method_matrix, MatrixCell, MatrixReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Milp,
    Bl1,
    Bl2,
    Minlp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Milp, Method::Bl1, Method::Bl2, Method::Minlp];

    pub fn label(self) -> &'static str {
        match self {
            Method::Milp => "MILP",
            Method::Bl1 => "BL-1",
            Method::Bl2 => "BL-2",
            Method::Minlp => "MINLP",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Method::Milp => "milp",
            Method::Bl1 => "bl1",
            Method::Bl2 => "bl2",
            Method::Minlp => "minlp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "milp" => Ok(Method::Milp),
            "bl1" => Ok(Method::Bl1),
            "bl2" => Ok(Method::Bl2),
            "minlp" => Ok(Method::Minlp),
            _ => Err(Error::invalid(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodStatus {
    Optimal,
    LocallyOptimal,
    Infeasible,
    NoIncumbent,
    Failed,
}

impl MethodStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, MethodStatus::Optimal | MethodStatus::LocallyOptimal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MethodStatus::Optimal => "optimal",
            MethodStatus::LocallyOptimal => "locally_optimal",
            MethodStatus::Infeasible => "infeasible",
            MethodStatus::NoIncumbent => "no_incumbent",
            MethodStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub status: MethodStatus,
    /// £/yr; present for feasible results.
    pub objective: Option<f64>,
    pub design: Option<DesignSolution>,
    pub costs: Option<CostBreakdown>,
    pub opf: Option<OpfSolution>,
    pub violations: Vec<Violation>,
    pub seconds: f64,
    /// MILP relative gap, or MINLP gap to the best open-node bound.
    pub gap: Option<f64>,
    pub message: String,
    pub infeasible_families: Vec<String>,
    /// Design-model part of the solution point.
    pub des_x: Option<Vec<f64>>,
    /// Full point of the model that produced the result.
    pub full_x: Option<Vec<f64>>,
    pub nodes: Option<usize>,
}

impl MethodResult {
    fn empty(method: Method, status: MethodStatus, message: impl Into<String>) -> Self {
        MethodResult {
            method,
            status,
            objective: None,
            design: None,
            costs: None,
            opf: None,
            violations: Vec::new(),
            seconds: 0.0,
            gap: None,
            message: message.into(),
            infeasible_families: Vec::new(),
            des_x: None,
            full_x: None,
            nodes: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status.is_feasible()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    /// BL-1 also fixes operational variables (audit mode).
    pub fix_operations: bool,
    pub milp: MilpOptions,
    pub nlp: NlpOptions,
    pub node_limit: usize,
    /// MINLP wall-clock limit, seconds.
    pub time_limit: f64,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            fix_operations: false,
            milp: MilpOptions {
                mip_rel_gap: 0.0,
                ..MilpOptions::default()
            },
            nlp: NlpOptions::default(),
            node_limit: 500,
            time_limit: 300.0,
        }
    }
}

pub struct MethodContext<'a> {
    pub case: &'a CaseData,
    pub backend: &'a dyn SolverBackend,
    pub settings: &'a MethodSettings,
}

/// Network-free design optimisation.
pub fn run_milp(ctx: &MethodContext) -> Result<MethodResult> {
    let clock = Instant::now();
    let model = build_des_model(ctx.case)?;
    let out = ctx.backend.solve_milp(&model.system, &ctx.settings.milp)?;
    let mut res = match (&out.status, &out.x) {
        (SolveStatus::Optimal | SolveStatus::TimeLimit | SolveStatus::IterationLimit, Some(x)) => {
            let design = DesignSolution::from_values(&model, ctx.case, x);
            let costs = evaluate_cost_breakdown(&design, ctx.case);
            let objective = model.system.objective_value(x);
            let gap = out
                .bound
                .map(|b| ((objective - b) / objective.abs().max(1e-9)).max(0.0));
            MethodResult {
                status: if out.status == SolveStatus::Optimal {
                    MethodStatus::Optimal
                } else {
                    MethodStatus::LocallyOptimal
                },
                objective: Some(objective),
                design: Some(design),
                costs: Some(costs),
                gap,
                des_x: Some(x.clone()),
                full_x: Some(x.clone()),
                ..MethodResult::empty(Method::Milp, MethodStatus::Optimal, out.message.clone())
            }
        }
        (SolveStatus::Infeasible, _) => {
            let fams = diagnose_infeasible_families(ctx.backend, &model.system)?;
            let mut r = MethodResult::empty(
                Method::Milp,
                MethodStatus::Infeasible,
                format!(
                    "design model infeasible; conflicting constraint families: {}",
                    fams.join(", ")
                ),
            );
            r.infeasible_families = fams.into_iter().map(String::from).collect();
            r
        }
        (status, _) => MethodResult::empty(
            Method::Milp,
            MethodStatus::Failed,
            format!(
                "MILP solve ended with status {} {}",
                status.as_str(),
                out.message
            ),
        ),
    };
    res.seconds = clock.elapsed().as_secs_f64();
    Ok(res)
}

/// Design, selection and mode variables of every season.
pub(crate) fn design_and_binary_vars(des: &DesModel) -> (Vec<VarId>, Vec<VarId>) {
    let mut design = Vec::new();
    let mut binaries = des.mode_binaries();
    for season in &des.vars {
        for b in season {
            design.push(b.panels);
            design.push(b.boiler_capacity);
            for bat in &b.batteries {
                design.push(bat.volume);
                design.push(bat.capacity);
                binaries.push(bat.select);
            }
        }
    }
    (design, binaries)
}

fn fix_all(model: &mut CombinedModel, vars: &[VarId], x: &[f64]) -> Result<()> {
    for v in vars {
        model.des.system.fix(*v, x[v.0])?;
    }
    Ok(())
}

fn require_milp(milp: &MethodResult) -> Result<&[f64]> {
    match (&milp.des_x, milp.method) {
        (Some(x), Method::Milp) if milp.is_feasible() => Ok(x),
        _ => Err(Error::invalid("a feasible MILP result is required")),
    }
}

/// Turns an NLP outcome on a combined model into a method result, checking
/// feasibility by auditing the returned point rather than trusting the
/// backend status alone.
pub(crate) fn nlp_result(
    ctx: &MethodContext,
    method: Method,
    model: &CombinedModel,
    out: SolveOutcome,
    clock: Instant,
) -> MethodResult {
    let Some(x) = out.x else {
        let mut r = MethodResult::empty(
            method,
            MethodStatus::Failed,
            format!(
                "NLP ended with status {}: {}",
                out.status.as_str(),
                out.message
            ),
        );
        r.seconds = clock.elapsed().as_secs_f64();
        return r;
    };
    let sys = model.system();
    let n_des = model.des.system.n_vars() - opf_var_count(model);
    let opf = model.opf_solution(ctx.case, &x);
    let violations = audit(&opf);
    let residual = sys
        .max_linear_violation(&x)
        .max(balance_residual(model, &x));
    let feasible = violations.is_empty() && residual <= ctx.settings.nlp.feasibility_tol;
    let design = DesignSolution::from_values(&model.des, ctx.case, &x);
    let costs = evaluate_cost_breakdown(&design, ctx.case);
    let mut message = out.message;
    if feasible && !out.status.has_solution() {
        message = format!("{} (limit reached: {})", message, out.status.as_str())
            .trim()
            .to_string();
    }
    MethodResult {
        method,
        status: if feasible {
            MethodStatus::LocallyOptimal
        } else {
            MethodStatus::Infeasible
        },
        objective: feasible.then(|| sys.objective_value(&x)),
        design: Some(design),
        costs: Some(costs),
        opf: Some(opf),
        violations,
        seconds: clock.elapsed().as_secs_f64(),
        gap: None,
        message,
        infeasible_families: Vec::new(),
        des_x: Some(x[..n_des].to_vec()),
        full_x: Some(x),
        nodes: None,
    }
}

fn opf_var_count(model: &CombinedModel) -> usize {
    model.buses.iter().flatten().map(|b| 4 * b.len()).sum()
}

/// Largest power-balance residual, pu.
pub(crate) fn balance_residual(model: &CombinedModel, x: &[f64]) -> f64 {
    let sys = model.system();
    sys.blocks
        .iter()
        .flat_map(|b| &b.rows)
        .map(|&r| (sys.nonlinear[r].func.value(x) - sys.nonlinear[r].rhs).abs())
        .fold(0.0, f64::max)
}

/// BL-1: binaries and capacities fixed at the MILP solution (and the whole
/// schedule too with `fix_operations`), then the network-constrained NLP.
pub fn run_bl1(
    ctx: &MethodContext,
    configuration: Configuration,
    milp: &MethodResult,
) -> Result<MethodResult> {
    let clock = Instant::now();
    let milp_x = require_milp(milp)?;
    let mut model = build_combined_model(ctx.case, configuration)?;
    let (design, binaries) = design_and_binary_vars(&model.des);
    if ctx.settings.fix_operations {
        let all: Vec<VarId> = (0..milp_x.len()).map(VarId).collect();
        fix_all(&mut model, &all, milp_x)?;
    } else {
        fix_all(&mut model, &design, milp_x)?;
        fix_all(&mut model, &binaries, milp_x)?;
    }
    let start = model.start_point(ctx.case, milp_x);
    let out = ctx
        .backend
        .solve_nlp(model.system(), &start, None, &ctx.settings.nlp)?;
    let mut res = nlp_result(ctx, Method::Bl1, &model, out, clock);
    if ctx.settings.fix_operations && !res.is_feasible() {
        res.message = format!(
            "MILP schedule is not realisable on the network ({} limit violations)",
            res.violations.len()
        );
    }
    Ok(res)
}

/// BL-2: only binaries fixed. Starts from the MILP point; when a feasible
/// BL-1 result is available it is also tried as a start and the better
/// outcome is kept.
pub fn run_bl2(
    ctx: &MethodContext,
    configuration: Configuration,
    milp: &MethodResult,
    bl1: Option<&MethodResult>,
) -> Result<MethodResult> {
    let clock = Instant::now();
    let milp_x = require_milp(milp)?;
    let mut model = build_combined_model(ctx.case, configuration)?;
    let (_, binaries) = design_and_binary_vars(&model.des);
    fix_all(&mut model, &binaries, milp_x)?;

    let start = model.start_point(ctx.case, milp_x);
    let out = ctx
        .backend
        .solve_nlp(model.system(), &start, None, &ctx.settings.nlp)?;
    let mut best = nlp_result(ctx, Method::Bl2, &model, out, clock);
    if let Some(b1) = bl1.filter(|r| r.is_feasible() && r.method == Method::Bl1) {
        if let Some(x1) = &b1.full_x {
            if x1.len() == model.system().n_vars() {
                let out = ctx
                    .backend
                    .solve_nlp(model.system(), x1, None, &ctx.settings.nlp)?;
                let alt = nlp_result(ctx, Method::Bl2, &model, out, clock);
                if better(&alt, &best) {
                    best = alt;
                }
            }
        }
    }
    best.seconds = clock.elapsed().as_secs_f64();
    Ok(best)
}

/// Feasible beats infeasible; then lower objective.
pub(crate) fn better(a: &MethodResult, b: &MethodResult) -> bool {
    match (a.is_feasible(), b.is_feasible()) {
        (true, false) => true,
        (false, _) => false,
        (true, true) => a.objective.unwrap_or(f64::INFINITY) < b.objective.unwrap_or(f64::INFINITY),
    }
}

/// Runs `method` on one configuration, computing its prerequisites
/// (MILP, BL-1, BL-2) as needed. All computed results are returned in
/// method order.
pub fn run_chain(
    ctx: &MethodContext,
    configuration: Configuration,
    methods: &[Method],
    milp: Option<&MethodResult>,
) -> Result<Vec<MethodResult>> {
    let want = |m: Method| methods.contains(&m);
    let owned_milp;
    let milp = match milp {
        Some(m) => m,
        None => {
            owned_milp = run_milp(ctx)?;
            &owned_milp
        }
    };
    let mut out = Vec::new();
    if want(Method::Milp) {
        out.push(milp.clone());
    }
    if !milp.is_feasible() {
        for m in methods.iter().filter(|m| **m != Method::Milp) {
            let mut r = MethodResult::empty(
                *m,
                MethodStatus::Failed,
                "MILP stage did not produce a design",
            );
            r.infeasible_families = milp.infeasible_families.clone();
            out.push(r);
        }
        return Ok(out);
    }
    let need_bl1 = want(Method::Bl1) || want(Method::Bl2) || want(Method::Minlp);
    let bl1 = if need_bl1 {
        Some(run_bl1(ctx, configuration, milp)?)
    } else {
        None
    };
    // the audit-mode BL-1 is a check on the MILP schedule, not a start point
    let bl1_start = bl1.as_ref().filter(|_| !ctx.settings.fix_operations);
    let bl2 = if want(Method::Bl2) || want(Method::Minlp) {
        Some(run_bl2(ctx, configuration, milp, bl1_start)?)
    } else {
        None
    };
    if let (true, Some(r)) = (want(Method::Bl1), &bl1) {
        out.push(r.clone());
    }
    if let (true, Some(r)) = (want(Method::Bl2), &bl2) {
        out.push(r.clone());
    }
    if want(Method::Minlp) {
        let seed = bl2
            .as_ref()
            .filter(|r| r.is_feasible())
            .or(bl1_start.filter(|r| r.is_feasible()));
        out.push(run_minlp(ctx, configuration, milp, seed)?);
    }
    Ok(out)
}
