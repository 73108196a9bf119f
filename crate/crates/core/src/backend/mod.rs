//! Solver backends behind a small contract: a MILP solve and a local NLP
//! solve over a [`ConstraintSystem`].

pub mod highs;
pub mod slp;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::system::{ConstraintSystem, VarKind};

pub use slp::NlpOptions;

pub const DEFAULT_BACKEND: &str = "highs";
pub const BACKEND_ENV: &str = "DESOPF_BACKEND";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    LocallyOptimal,
    Infeasible,
    TimeLimit,
    NodeLimit,
    IterationLimit,
    Unbounded,
    Failed,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::LocallyOptimal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::LocallyOptimal => "locally_optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Best point found, if any (may be present with a limit status).
    pub x: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Proven lower bound, when the solver provides one.
    pub bound: Option<f64>,
    pub iterations: usize,
    pub seconds: f64,
    pub message: String,
}

impl SolveOutcome {
    pub fn failed(message: impl Into<String>) -> Self {
        SolveOutcome {
            status: SolveStatus::Failed,
            x: None,
            objective: None,
            bound: None,
            iterations: 0,
            seconds: 0.0,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpOptions {
    pub time_limit: Option<f64>,
    pub mip_rel_gap: f64,
    /// Solve the continuous relaxation instead.
    pub relax_integrality: bool,
    pub feasibility_tol: f64,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            time_limit: None,
            mip_rel_gap: 1e-6,
            relax_integrality: false,
            feasibility_tol: 1e-9,
        }
    }
}

pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Solves the linear rows of `sys` (nonlinear rows are ignored).
    fn solve_milp(&self, sys: &ConstraintSystem, opts: &MilpOptions) -> Result<SolveOutcome>;

    /// Local solve of the continuous problem from `start`. Integrality is
    /// ignored. `bounds` overrides the declared variable bounds.
    fn solve_nlp(
        &self,
        sys: &ConstraintSystem,
        start: &[f64],
        bounds: Option<&[(f64, f64)]>,
        opts: &NlpOptions,
    ) -> Result<SolveOutcome>;
}

/// HiGHS for linear problems, sequential linear programming on top of
/// HiGHS for nonlinear ones.
#[derive(Debug, Default, Clone, Copy)]
pub struct HighsBackend;

pub const BACKENDS: &[&str] = &["highs"];

pub fn backend_by_name(name: &str) -> Result<Box<dyn SolverBackend>> {
    match name.to_ascii_lowercase().as_str() {
        "highs" | "highs-slp" => Ok(Box::new(HighsBackend)),
        _ => Err(Error::UnknownBackend(name.to_string())),
    }
}

/// Backend name from the explicit choice, the environment, or the default.
pub fn resolve_backend_name(explicit: Option<&str>) -> String {
    explicit
        .map(str::to_string)
        .or_else(|| std::env::var(BACKEND_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| DEFAULT_BACKEND.to_string())
}

/// Column bounds honouring fixings and overrides.
pub(crate) fn column_bounds(
    sys: &ConstraintSystem,
    over: Option<&[(f64, f64)]>,
) -> Vec<(f64, f64)> {
    sys.vars
        .iter()
        .enumerate()
        .map(|(k, v)| match v.fixed {
            Some(f) => (f, f),
            None => over.map_or(v.bounds(), |o| o[k]),
        })
        .collect()
}

pub(crate) fn linear_model(
    sys: &ConstraintSystem,
    bounds: &[(f64, f64)],
    integral: bool,
) -> highs::SparseModel {
    use crate::system::Sense;
    let mut m = highs::SparseModel::default();
    for (k, (lo, hi)) in bounds.iter().enumerate() {
        m.add_col(sys.objective_coeffs()[k], *lo, *hi);
    }
    m.offset = sys.objective_constant;
    for row in &sys.linear {
        let (lo, hi) = match row.sense {
            Sense::Le => (f64::NEG_INFINITY, row.rhs),
            Sense::Ge => (row.rhs, f64::INFINITY),
            Sense::Eq => (row.rhs, row.rhs),
        };
        m.add_row(lo, hi, row.terms.iter().map(|(v, c)| (v.0, *c)));
    }
    if integral && sys.vars.iter().any(|v| v.kind != VarKind::Continuous) {
        m.integrality = Some(
            sys.vars
                .iter()
                .map(|v| v.kind.is_integral() as std::os::raw::c_int)
                .collect(),
        );
    }
    m
}

impl SolverBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve_milp(&self, sys: &ConstraintSystem, opts: &MilpOptions) -> Result<SolveOutcome> {
        let start = Instant::now();
        let bounds = column_bounds(sys, None);
        if let Some((k, _)) = bounds.iter().enumerate().find(|(_, (lo, hi))| lo > hi) {
            return Err(Error::invalid(format!(
                "variable `{}` has empty bounds",
                sys.vars[k].name
            )));
        }
        let model = linear_model(sys, &bounds, !opts.relax_integrality);
        let is_mip = model.integrality.is_some();
        let mut h = highs::Highs::new();
        h.set_f64("primal_feasibility_tolerance", opts.feasibility_tol);
        h.set_f64("mip_feasibility_tolerance", opts.feasibility_tol);
        h.set_f64("mip_rel_gap", opts.mip_rel_gap);
        if let Some(t) = opts.time_limit {
            h.set_f64("time_limit", t.max(0.01));
        }
        h.pass(&model).map_err(|m| backend_err(self, m))?;
        let st = h.run().map_err(|m| backend_err(self, m))?;
        let n = model.n_cols();
        let has_primal = h.info_i32("primal_solution_status").is_some_and(|s| s >= 2)
            || st == highs::ModelStatus::Optimal;
        let status = match st {
            highs::ModelStatus::Optimal => SolveStatus::Optimal,
            highs::ModelStatus::Infeasible => SolveStatus::Infeasible,
            highs::ModelStatus::Unbounded => SolveStatus::Unbounded,
            highs::ModelStatus::TimeLimit => SolveStatus::TimeLimit,
            highs::ModelStatus::IterationLimit => SolveStatus::IterationLimit,
            highs::ModelStatus::Other(c) => {
                return Ok(SolveOutcome {
                    seconds: start.elapsed().as_secs_f64(),
                    ..SolveOutcome::failed(format!("HiGHS model status {c}"))
                })
            }
        };
        let x = has_primal.then(|| {
            let (mut x, _) = h.solution(n, model.n_rows());
            for (k, v) in sys.vars.iter().enumerate() {
                if let Some(f) = v.fixed {
                    x[k] = f;
                } else if is_mip && v.kind.is_integral() {
                    x[k] = x[k].round();
                }
            }
            x
        });
        let objective = x.as_ref().map(|x| sys.objective_value(x));
        let bound = if is_mip {
            h.info_f64("mip_dual_bound").filter(|b| b.is_finite())
        } else {
            objective
        };
        Ok(SolveOutcome {
            status,
            x,
            objective,
            bound,
            iterations: 1,
            seconds: start.elapsed().as_secs_f64(),
            message: String::new(),
        })
    }

    fn solve_nlp(
        &self,
        sys: &ConstraintSystem,
        start: &[f64],
        bounds: Option<&[(f64, f64)]>,
        opts: &NlpOptions,
    ) -> Result<SolveOutcome> {
        if start.len() != sys.n_vars() {
            return Err(Error::Dimension(format!(
                "start point has {} entries, system has {} variables",
                start.len(),
                sys.n_vars()
            )));
        }
        if let Some(b) = bounds {
            if b.len() != sys.n_vars() {
                return Err(Error::Dimension("bound override length mismatch".into()));
            }
        }
        slp::solve(sys, start, bounds, opts).map_err(|m| backend_err(self, m))
    }
}

fn backend_err(b: &dyn SolverBackend, message: String) -> Error {
    Error::Backend {
        backend: b.name().to_string(),
        message,
    }
}

/// Names the constraint families whose removal makes the continuous
/// relaxation feasible.
pub fn diagnose_infeasible_families(
    backend: &dyn SolverBackend,
    sys: &ConstraintSystem,
) -> Result<Vec<&'static str>> {
    let mut families: Vec<&'static str> = sys.linear.iter().map(|r| r.family).collect();
    families.sort_unstable();
    families.dedup();
    let opts = MilpOptions {
        relax_integrality: true,
        ..MilpOptions::default()
    };
    let mut culprits = Vec::new();
    for fam in families {
        let mut reduced = sys.clone();
        reduced.linear.retain(|r| r.family != fam);
        reduced.nonlinear.clear();
        reduced.blocks.clear();
        let out = backend.solve_milp(&reduced, &opts)?;
        if out.status == SolveStatus::Optimal || out.status == SolveStatus::Unbounded {
            culprits.push(fam);
        }
    }
    Ok(culprits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Sense;

    #[test]
    fn registry() {
        assert_eq!(backend_by_name("HiGHS").unwrap().name(), "highs");
        assert!(matches!(
            backend_by_name("gurobi"),
            Err(Error::UnknownBackend(_))
        ));
        assert_eq!(resolve_backend_name(Some("x")), "x");
    }

    #[test]
    fn milp_respects_fixings_and_integrality() {
        let mut s = ConstraintSystem::new();
        let x = s.add_var("x", 0.0, 10.0, VarKind::Integer);
        let y = s.continuous("y", 0.0, 10.0);
        s.add_linear("c", "cap", vec![(x, 2.0), (y, 1.0)], Sense::Le, 7.5);
        s.add_objective(x, -3.0);
        s.add_objective(y, -1.0);
        let out = HighsBackend
            .solve_milp(&s, &MilpOptions::default())
            .unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        let v = out.x.unwrap();
        assert_eq!(v[0], 3.0);
        assert!((v[1] - 1.5).abs() < 1e-9);

        s.fix(x, 1.0).unwrap();
        let out = HighsBackend
            .solve_milp(&s, &MilpOptions::default())
            .unwrap();
        assert!((out.objective.unwrap() + 8.5).abs() < 1e-9);
    }

    #[test]
    fn diagnosis_names_the_conflicting_family() {
        let mut s = ConstraintSystem::new();
        let x = s.continuous("x", 0.0, 10.0);
        s.add_linear("lo", "demand", vec![(x, 1.0)], Sense::Ge, 5.0);
        s.add_linear("hi", "capacity", vec![(x, 1.0)], Sense::Le, 3.0);
        let out = HighsBackend
            .solve_milp(&s, &MilpOptions::default())
            .unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
        let fams = diagnose_infeasible_families(&HighsBackend, &s).unwrap();
        assert_eq!(fams, vec!["capacity", "demand"]);
    }
}
