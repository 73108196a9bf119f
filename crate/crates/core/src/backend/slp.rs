//! Sequential linear programming with a trust region and an l1 penalty.
//!
//! Each iteration linearises the nonlinear rows at the current point and
//! solves an LP with HiGHS (warm-started from the previous basis). Nonlinear
//! rows get elastic columns priced at the penalty `mu`. Square equality
//! blocks are then re-solved by Newton's method for their dependent
//! variables, so accepted iterates satisfy them to `restoration_tol`.
//! Bounds on dependent variables are enforced through the penalty.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::highs::{Basis, Highs, ModelStatus, SparseModel};
use super::{column_bounds, SolveOutcome, SolveStatus};
use crate::system::{ConstraintSystem, Sense};

#[derive(Debug, Clone, PartialEq)]
pub struct NlpOptions {
    /// Largest scaled constraint violation accepted as feasible.
    pub feasibility_tol: f64,
    /// Stop when the predicted merit decrease falls below
    /// `optimality_tol * (1 + |merit|)`.
    pub optimality_tol: f64,
    pub max_iterations: usize,
    pub initial_radius: f64,
    pub max_radius: f64,
    pub min_radius: f64,
    pub initial_penalty: f64,
    pub max_penalty: f64,
    pub restoration_tol: f64,
    pub time_limit: Option<f64>,
}

impl Default for NlpOptions {
    fn default() -> Self {
        NlpOptions {
            feasibility_tol: 1e-6,
            optimality_tol: 1e-9,
            max_iterations: 200,
            initial_radius: 0.05,
            max_radius: 1.0,
            min_radius: 1e-9,
            initial_penalty: 1e4,
            max_penalty: 1e12,
            restoration_tol: 1e-10,
            time_limit: None,
        }
    }
}

const NOT_DEP: usize = usize::MAX;
/// Half-width of the box on dependent variables in the LP subproblem.
/// They are pinned by the linearised block rows; the box only keeps the LP
/// well posed.
const DEP_BOX: f64 = 1.0;
/// Relative linearised violation decrease below which a point is taken
/// as a stationary point of the infeasibility.
const INFEASIBLE_PROGRESS: f64 = 1e-6;

struct Problem<'a> {
    sys: &'a ConstraintSystem,
    opts: &'a NlpOptions,
    bounds: Vec<(f64, f64)>,
    /// Position of a variable within its block's dependents, or NOT_DEP.
    dep_pos: Vec<usize>,
    /// Variables appearing in any nonlinear row.
    in_nl: Vec<bool>,
    row_scale: Vec<f64>,
    deps: Vec<usize>,
    in_block: Vec<bool>,
}

impl<'a> Problem<'a> {
    fn new(sys: &'a ConstraintSystem, bounds: Vec<(f64, f64)>, opts: &'a NlpOptions) -> Self {
        let n = sys.n_vars();
        let mut dep_pos = vec![NOT_DEP; n];
        let mut deps = Vec::new();
        let mut in_block = vec![false; sys.nonlinear.len()];
        for b in &sys.blocks {
            for (k, v) in b.dependents.iter().enumerate() {
                dep_pos[v.0] = k;
                deps.push(v.0);
            }
            for r in &b.rows {
                in_block[*r] = true;
            }
        }
        let mut in_nl = vec![false; n];
        for row in &sys.nonlinear {
            for v in row.func.vars() {
                in_nl[v.0] = true;
            }
        }
        let row_scale = sys
            .nonlinear
            .iter()
            .enumerate()
            .map(|(k, r)| {
                if in_block[k] || r.sense == Sense::Eq {
                    1.0
                } else {
                    r.rhs.abs().max(1e-12)
                }
            })
            .collect();
        Problem {
            sys,
            opts,
            bounds,
            dep_pos,
            in_nl,
            row_scale,
            deps,
            in_block,
        }
    }

    fn is_dep(&self, j: usize) -> bool {
        self.dep_pos[j] != NOT_DEP
    }

    fn nl_values(&self, x: &[f64]) -> Vec<f64> {
        self.sys.nonlinear.iter().map(|r| r.func.value(x)).collect()
    }

    /// Scaled l1 violation and its largest component.
    fn violation(&self, x: &[f64], vals: &[f64]) -> (f64, f64) {
        let mut sum = 0.0;
        let mut max = 0.0f64;
        let mut add = |v: f64| {
            sum += v;
            max = max.max(v);
        };
        for (k, row) in self.sys.nonlinear.iter().enumerate() {
            add(row.sense.violation(vals[k], row.rhs) / self.row_scale[k]);
        }
        for &j in &self.deps {
            let (lo, hi) = self.bounds[j];
            add((lo - x[j]).max(0.0) + (x[j] - hi).max(0.0));
        }
        for row in &self.sys.linear {
            add(row.sense.violation(row.activity(x), row.rhs));
        }
        (sum, max)
    }

    /// Newton solve of every equality block for its dependents.
    fn restore(&self, x: &mut [f64]) -> bool {
        self.sys.blocks.iter().all(|b| self.restore_block(b, x))
    }

    fn restore_block(&self, block: &crate::system::EqualityBlock, x: &mut [f64]) -> bool {
        let m = block.rows.len();
        let residual = |x: &[f64]| -> DVector<f64> {
            DVector::from_iterator(
                m,
                block.rows.iter().map(|&r| {
                    let row = &self.sys.nonlinear[r];
                    row.func.value(x) - row.rhs
                }),
            )
        };
        let mut r = residual(x);
        let mut norm = r.amax();
        let mut grad = Vec::new();
        for _ in 0..50 {
            if norm <= self.opts.restoration_tol {
                return true;
            }
            let mut jac = DMatrix::<f64>::zeros(m, m);
            for (i, &ri) in block.rows.iter().enumerate() {
                let f = &self.sys.nonlinear[ri].func;
                grad.clear();
                grad.resize(f.vars().len(), 0.0);
                f.value_and_gradient(x, &mut grad);
                for (v, g) in f.vars().iter().zip(&grad) {
                    let p = self.dep_pos[v.0];
                    if p != NOT_DEP && block.dependents[p] == *v {
                        jac[(i, p)] += g;
                    }
                }
            }
            let Some(step) = jac.lu().solve(&(-&r)) else {
                return false;
            };
            let saved: Vec<f64> = block.dependents.iter().map(|v| x[v.0]).collect();
            let mut alpha = 1.0;
            loop {
                for (k, v) in block.dependents.iter().enumerate() {
                    x[v.0] = saved[k] + alpha * step[k];
                }
                let r_new = residual(x);
                let n_new = r_new.amax();
                if n_new.is_finite() && n_new < (1.0 - 1e-4 * alpha) * norm {
                    r = r_new;
                    norm = n_new;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-6 {
                    for (k, v) in block.dependents.iter().enumerate() {
                        x[v.0] = saved[k];
                    }
                    return false;
                }
            }
        }
        norm <= self.opts.restoration_tol
    }
}

/// Layout of the LP subproblem. Columns: model variables, then elastic
/// columns; rows: linear rows, linearised nonlinear rows, soft bounds.
struct LpBuilder {
    model: SparseModel,
    /// Elastic column ranges per nonlinear row.
    elastic: Vec<(usize, usize)>,
    /// Soft-bound elastic columns.
    bound_elastic: Vec<usize>,
}

impl LpBuilder {
    fn build(
        p: &Problem,
        x: &[f64],
        vals: &[f64],
        radius: f64,
        mu: f64,
        feasibility_only: bool,
    ) -> Self {
        let sys = p.sys;
        let n = sys.n_vars();
        let mut m = SparseModel::default();
        let c = sys.objective_coeffs();
        for j in 0..n {
            let (lo, hi) = p.bounds[j];
            let (lo, hi) = if lo == hi {
                (lo, hi)
            } else if p.is_dep(j) {
                (x[j] - DEP_BOX, x[j] + DEP_BOX)
            } else if p.in_nl[j] {
                ((x[j] - radius).max(lo), (x[j] + radius).min(hi))
            } else {
                (lo, hi)
            };
            m.add_col(if feasibility_only { 0.0 } else { c[j] }, lo, hi);
        }
        let weight = if feasibility_only { 1.0 } else { mu };
        let mut elastic = Vec::with_capacity(sys.nonlinear.len());
        for (k, row) in sys.nonlinear.iter().enumerate() {
            let first = m.n_cols();
            let count = if p.in_block[k] {
                0
            } else if row.sense == Sense::Eq {
                2
            } else {
                1
            };
            for _ in 0..count {
                m.add_col(weight, 0.0, f64::INFINITY);
            }
            elastic.push((first, count));
        }
        let mut bound_elastic = Vec::new();
        for &j in &p.deps {
            let (lo, hi) = p.bounds[j];
            for finite in [lo.is_finite(), hi.is_finite()] {
                if finite {
                    bound_elastic.push(m.add_col(weight, 0.0, f64::INFINITY));
                }
            }
        }

        for row in &sys.linear {
            let (lo, hi) = match row.sense {
                Sense::Le => (f64::NEG_INFINITY, row.rhs),
                Sense::Ge => (row.rhs, f64::INFINITY),
                Sense::Eq => (row.rhs, row.rhs),
            };
            m.add_row(lo, hi, row.terms.iter().map(|(v, c)| (v.0, *c)));
        }
        let mut grad = Vec::new();
        for (k, row) in sys.nonlinear.iter().enumerate() {
            let f = &row.func;
            grad.clear();
            grad.resize(f.vars().len(), 0.0);
            f.value_and_gradient(x, &mut grad);
            let s = p.row_scale[k];
            // g(x) + grad.(y - x) <sense> rhs
            let mut rhs = row.rhs - vals[k];
            let mut terms: Vec<(usize, f64)> = Vec::with_capacity(f.vars().len() + 2);
            for (v, g) in f.vars().iter().zip(&grad) {
                rhs += g * x[v.0];
                terms.push((v.0, g / s));
            }
            let rhs = rhs / s;
            let (e0, count) = elastic[k];
            if count == 0 {
                // block rows are kept exact; restoration re-solves them anyway
                m.add_row(rhs, rhs, terms);
                continue;
            }
            match row.sense {
                Sense::Le => {
                    terms.push((e0, -1.0));
                    m.add_row(f64::NEG_INFINITY, rhs, terms);
                }
                Sense::Ge => {
                    terms.push((e0, 1.0));
                    m.add_row(rhs, f64::INFINITY, terms);
                }
                Sense::Eq => {
                    debug_assert_eq!(count, 2);
                    terms.push((e0, 1.0));
                    terms.push((e0 + 1, -1.0));
                    m.add_row(rhs, rhs, terms);
                }
            }
        }
        let mut e = bound_elastic.iter();
        for &j in &p.deps {
            let (lo, hi) = p.bounds[j];
            if lo.is_finite() {
                let col = *e.next().expect("elastic column");
                m.add_row(lo, f64::INFINITY, [(j, 1.0), (col, 1.0)]);
            }
            if hi.is_finite() {
                let col = *e.next().expect("elastic column");
                m.add_row(f64::NEG_INFINITY, hi, [(j, 1.0), (col, -1.0)]);
            }
        }
        LpBuilder {
            model: m,
            elastic,
            bound_elastic,
        }
    }

    fn elastic_sum(&self, y: &[f64]) -> f64 {
        let nl: f64 = self
            .elastic
            .iter()
            .flat_map(|&(s, c)| s..s + c)
            .map(|k| y[k])
            .sum();
        nl + self.bound_elastic.iter().map(|&k| y[k]).sum::<f64>()
    }
}

struct LpSolver {
    highs: Highs,
    basis: Option<Basis>,
    tol: f64,
}

impl LpSolver {
    fn new(tol: f64) -> Self {
        let highs = Highs::new();
        highs.set_f64("primal_feasibility_tolerance", tol);
        highs.set_f64("dual_feasibility_tolerance", tol);
        LpSolver {
            highs,
            basis: None,
            tol,
        }
    }

    fn solve(
        &mut self,
        lp: &LpBuilder,
        time_left: Option<f64>,
    ) -> Result<Option<Vec<f64>>, String> {
        match self.solve_once(lp, time_left) {
            Err(e) if e != "time limit" && self.basis.is_some() => {
                log::debug!("LP subproblem failed from warm basis ({e}); retrying cold");
                let tol = self.tol;
                *self = LpSolver::new(tol);
                self.solve_once(lp, time_left)
            }
            other => other,
        }
    }

    fn solve_once(
        &mut self,
        lp: &LpBuilder,
        time_left: Option<f64>,
    ) -> Result<Option<Vec<f64>>, String> {
        self.highs.pass(&lp.model)?;
        if let Some(b) = &self.basis {
            if b.cols.len() == lp.model.n_cols() && b.rows.len() == lp.model.n_rows() {
                self.highs.set_basis(b);
            }
        }
        if let Some(t) = time_left {
            self.highs.set_f64("time_limit", t.max(0.01));
        }
        let st = self.highs.run()?;
        match st {
            ModelStatus::Optimal => {
                let (y, _) = self.highs.solution(lp.model.n_cols(), lp.model.n_rows());
                self.basis = self.highs.basis(lp.model.n_cols(), lp.model.n_rows());
                Ok(Some(y))
            }
            ModelStatus::Infeasible => Ok(None),
            ModelStatus::TimeLimit => Err("time limit".into()),
            other => Err(format!("LP subproblem ended with status {other:?}")),
        }
    }
}

pub(crate) fn solve(
    sys: &ConstraintSystem,
    start: &[f64],
    bounds: Option<&[(f64, f64)]>,
    opts: &NlpOptions,
) -> Result<SolveOutcome, String> {
    let clock = Instant::now();
    let p = Problem::new(sys, column_bounds(sys, bounds), opts);
    let n = sys.n_vars();
    let time_left = || opts.time_limit.map(|t| t - clock.elapsed().as_secs_f64());
    let finish = |status: SolveStatus, x: Option<Vec<f64>>, iterations: usize, message: String| {
        let objective = x.as_ref().map(|x| sys.objective_value(x));
        SolveOutcome {
            status,
            x,
            objective,
            bound: None,
            iterations,
            seconds: clock.elapsed().as_secs_f64(),
            message,
        }
    };

    let mut x: Vec<f64> = start.to_vec();
    for (j, xj) in x.iter_mut().enumerate() {
        let (lo, hi) = p.bounds[j];
        if !p.is_dep(j) {
            *xj = xj.clamp(lo, hi);
        }
    }
    if !p.restore(&mut x) {
        return Ok(finish(
            SolveStatus::Failed,
            None,
            0,
            "equality blocks could not be solved at the start point".into(),
        ));
    }

    let mut lp_solver = LpSolver::new(1e-9);
    let mut feas_solver = LpSolver::new(1e-9);
    let mut mu = opts.initial_penalty;
    let mut radius = opts.initial_radius;
    let mut vals = p.nl_values(&x);
    let (mut viol, mut viol_max) = p.violation(&x, &vals);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let c = sys.objective_coeffs();
    let lin_obj = |x: &[f64]| -> f64 { c.iter().zip(x).map(|(a, b)| a * b).sum() };
    let mut status = SolveStatus::IterationLimit;
    let mut message = String::new();
    let mut iter = 0;

    while iter < opts.max_iterations {
        iter += 1;
        if viol_max <= opts.feasibility_tol {
            let f = lin_obj(&x);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x.clone()));
            }
        }
        if time_left().is_some_and(|t| t <= 0.0) {
            status = SolveStatus::TimeLimit;
            break;
        }

        let mut lp = LpBuilder::build(&p, &x, &vals, radius, mu, false);
        let y = match lp_solver.solve(&lp, time_left()) {
            Ok(Some(y)) => y,
            Ok(None) => {
                // the linear rows cannot be met inside the trust region
                let wide = LpBuilder::build(&p, &x, &vals, opts.max_radius.max(1e6), mu, true);
                match feas_solver.solve(&wide, time_left()) {
                    Ok(Some(_)) => {
                        radius = (radius * 4.0).min(opts.max_radius.max(radius));
                        continue;
                    }
                    Ok(None) => {
                        status = SolveStatus::Infeasible;
                        message = "linear constraints are infeasible".into();
                        break;
                    }
                    Err(e) if e == "time limit" => {
                        status = SolveStatus::TimeLimit;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(e) if e == "time limit" => {
                status = SolveStatus::TimeLimit;
                break;
            }
            Err(e) => return Err(e),
        };
        let mut y = y;
        let mut e_lp = lp.elastic_sum(&y);

        // steer the penalty so each step makes linearised feasibility progress
        if viol > opts.feasibility_tol * 1e-3 && e_lp > 1e-12 {
            let feas = LpBuilder::build(&p, &x, &vals, radius, mu, true);
            let e_f = match feas_solver.solve(&feas, time_left()) {
                Ok(Some(yf)) => feas.elastic_sum(&yf),
                Ok(None) => e_lp,
                Err(e) if e == "time limit" => {
                    status = SolveStatus::TimeLimit;
                    break;
                }
                Err(e) => return Err(e),
            };
            while viol - e_lp < 0.1 * (viol - e_f) && mu < opts.max_penalty {
                mu *= 10.0;
                lp = LpBuilder::build(&p, &x, &vals, radius, mu, false);
                match lp_solver.solve(&lp, time_left()) {
                    Ok(Some(y2)) => {
                        y = y2;
                        e_lp = lp.elastic_sum(&y);
                    }
                    Ok(None) => break,
                    Err(e) if e == "time limit" => {
                        status = SolveStatus::TimeLimit;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if status == SolveStatus::TimeLimit {
                break;
            }
            if viol_max > opts.feasibility_tol && viol - e_f <= INFEASIBLE_PROGRESS * viol.max(1.0)
            {
                let wide = LpBuilder::build(&p, &x, &vals, opts.max_radius, mu, true);
                let e_w = match feas_solver.solve(&wide, time_left()) {
                    Ok(Some(yw)) => wide.elastic_sum(&yw),
                    Ok(None) => viol,
                    Err(e) if e == "time limit" => {
                        status = SolveStatus::TimeLimit;
                        break;
                    }
                    Err(e) => return Err(e),
                };
                if viol - e_w <= INFEASIBLE_PROGRESS * viol.max(1.0) {
                    status = SolveStatus::Infeasible;
                    message =
                        format!("stationary point of the constraint violation ({viol_max:.3e})");
                    break;
                }
            }
        }

        let merit = lin_obj(&x) + mu * viol;
        let model_val = lin_obj(&y[..n]) + mu * e_lp;
        let pred = merit - model_val;
        if pred <= opts.optimality_tol * (1.0 + merit.abs()) {
            if viol_max <= opts.feasibility_tol {
                status = SolveStatus::LocallyOptimal;
            } else if mu >= opts.max_penalty {
                status = SolveStatus::Infeasible;
                message = format!("penalty limit reached with violation {viol_max:.3e}");
            } else {
                mu *= 10.0;
                continue;
            }
            break;
        }

        let mut trial: Vec<f64> = y[..n].to_vec();
        let step = (0..n)
            .filter(|&j| p.in_nl[j] && !p.is_dep(j))
            .map(|j| (trial[j] - x[j]).abs())
            .fold(0.0f64, f64::max);
        let restored = p.restore(&mut trial);
        let (t_vals, t_viol, t_max, ratio) = if restored {
            let tv = p.nl_values(&trial);
            let (s, m) = p.violation(&trial, &tv);
            let ared = merit - (lin_obj(&trial) + mu * s);
            (tv, s, m, ared / pred)
        } else {
            (Vec::new(), 0.0, 0.0, f64::NEG_INFINITY)
        };
        log::debug!(
            "slp {iter}: viol {viol:.3e} max {viol_max:.3e} mu {mu:.0e} radius {radius:.2e} pred {pred:.3e} ratio {ratio:.3} step {step:.2e} restored {restored}"
        );
        if ratio >= 0.1 {
            x = trial;
            vals = t_vals;
            viol = t_viol;
            viol_max = t_max;
            if ratio >= 0.75 && step >= 0.8 * radius {
                radius = (2.0 * radius).min(opts.max_radius);
            }
        } else {
            radius = (0.3 * step.min(radius)).max(0.25 * opts.min_radius);
            if radius < opts.min_radius {
                status = if viol_max <= opts.feasibility_tol {
                    SolveStatus::LocallyOptimal
                } else {
                    message = format!("trust region collapsed with violation {viol_max:.3e}");
                    SolveStatus::Infeasible
                };
                break;
            }
        }
    }

    if viol_max <= opts.feasibility_tol {
        let f = lin_obj(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x.clone()));
        }
    }
    match best {
        Some((_, xb)) => {
            let st = if status == SolveStatus::Infeasible {
                SolveStatus::LocallyOptimal
            } else {
                status
            };
            Ok(finish(st, Some(xb), iter, message))
        }
        None => {
            let st = if status == SolveStatus::LocallyOptimal {
                SolveStatus::Infeasible
            } else {
                status
            };
            Ok(finish(st, Some(x), iter, message))
        }
    }
}
