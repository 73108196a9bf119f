//! NLP-based branch-and-bound over the integer variables of the combined
//! model. Node relaxations are solved locally, so the bound it reports is a
//! heuristic one for this nonconvex problem.

use std::time::Instant;

use log::{debug, info};

use super::{better, nlp_result, Method, MethodContext, MethodResult, MethodStatus};
use crate::backend::NlpOptions;
use crate::error::Result;
use crate::network::Configuration;
use crate::opf::build_combined_model;

/// Distance from the nearest integer below which a value counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
struct Node {
    /// `(variable index, lower, upper)` overrides on top of the root bounds.
    overrides: Vec<(usize, f64, f64)>,
    depth: usize,
    /// Objective of the parent relaxation.
    bound: f64,
    start: Vec<f64>,
}

/// The rounding heuristic runs at nodes whose depth is a multiple of this.
const HEURISTIC_EVERY: usize = 8;

fn push_children(
    open: &mut Vec<Node>,
    node: &Node,
    k: usize,
    value: f64,
    bounds: &[(f64, f64)],
    obj: f64,
    x: &[f64],
) {
    let (lo, hi) = bounds[k];
    let make = |l: f64, h: f64| {
        let mut overrides = node.overrides.clone();
        overrides.push((k, l, h));
        Node {
            overrides,
            depth: node.depth + 1,
            bound: obj,
            start: x.to_vec(),
        }
    };
    let down = make(lo, value.floor());
    let up = make(value.ceil(), hi);
    // the child on the side of the rounded value is explored first
    if value - value.floor() >= 0.5 {
        open.push(down);
        open.push(up);
    } else {
        open.push(up);
        open.push(down);
    }
}

/// Index of the open node to expand: deepest first, lowest bound among equals.
fn select(open: &[Node]) -> usize {
    let mut best = 0;
    for (k, n) in open.iter().enumerate().skip(1) {
        let b = &open[best];
        if n.depth > b.depth || (n.depth == b.depth && n.bound < b.bound) {
            best = k;
        }
    }
    best
}

/// Most fractional integer variable, if any.
fn branching_var(x: &[f64], ints: &[usize]) -> Option<(usize, f64)> {
    ints.iter()
        .map(|&k| (k, (x[k] - x[k].floor() - 0.5).abs()))
        .filter(|&(_, d)| d < 0.5 - INTEGRALITY_TOL)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| (k, x[k]))
}

pub fn run_minlp(
    ctx: &MethodContext,
    configuration: Configuration,
    milp: &MethodResult,
    seed: Option<&MethodResult>,
) -> Result<MethodResult> {
    let clock = Instant::now();
    let model = build_combined_model(ctx.case, configuration)?;
    let sys = model.system();
    let root_bounds: Vec<(f64, f64)> = sys.vars.iter().map(|v| v.bounds()).collect();
    let ints: Vec<usize> = sys.integer_vars().iter().map(|v| v.0).collect();

    let mut incumbent: Option<MethodResult> = seed
        .filter(|r| r.is_feasible())
        .filter(|r| r.full_x.as_ref().is_some_and(|x| x.len() == sys.n_vars()))
        .cloned()
        .map(|mut r| {
            r.method = Method::Minlp;
            r
        });
    let root_start = match (&incumbent, &milp.des_x) {
        (Some(r), _) => r.full_x.clone().unwrap_or_default(),
        (None, Some(x)) => model.start_point(ctx.case, x),
        (None, None) => model.start_point(ctx.case, &vec![0.0; sys.n_vars()]),
    };

    let mut open = vec![Node {
        overrides: Vec::new(),
        depth: 0,
        bound: f64::NEG_INFINITY,
        start: root_start,
    }];
    let mut nodes = 0usize;
    let mut limit_hit = None;
    let deadline = ctx.settings.time_limit;

    while !open.is_empty() {
        if nodes >= ctx.settings.node_limit {
            limit_hit = Some("node limit");
            break;
        }
        let elapsed = clock.elapsed().as_secs_f64();
        if elapsed >= deadline {
            limit_hit = Some("time limit");
            break;
        }
        let node = open.swap_remove(select(&open));
        let cutoff = incumbent
            .as_ref()
            .and_then(|r| r.objective)
            .unwrap_or(f64::INFINITY);
        if node.bound >= cutoff - 1e-9 * cutoff.abs().max(1.0) {
            continue;
        }
        nodes += 1;

        let mut bounds = root_bounds.clone();
        for &(k, lo, hi) in &node.overrides {
            bounds[k] = (lo, hi);
        }
        let opts = NlpOptions {
            time_limit: Some(deadline - elapsed),
            ..ctx.settings.nlp.clone()
        };
        let out = ctx
            .backend
            .solve_nlp(sys, &node.start, Some(&bounds), &opts)?;
        let res = nlp_result(ctx, Method::Minlp, &model, out, clock);
        let (Some(obj), Some(x)) = (res.objective, res.full_x.clone()) else {
            debug!(
                "node {nodes} (depth {}) pruned: relaxation infeasible",
                node.depth
            );
            continue;
        };
        if obj >= cutoff - 1e-9 * cutoff.abs().max(1.0) {
            debug!("node {nodes} pruned by bound {obj:.4}");
            continue;
        }
        let Some((k, value)) = branching_var(&x, &ints) else {
            info!("node {nodes}: integral solution {obj:.4}");
            incumbent = Some(res);
            continue;
        };

        if node.depth % HEURISTIC_EVERY != 0 {
            push_children(&mut open, &node, k, value, &bounds, obj, &x);
            continue;
        }
        // rounding heuristic: every integer variable at its nearest value
        let mut rounded = bounds.clone();
        for &i in &ints {
            let r = x[i].round().clamp(bounds[i].0, bounds[i].1);
            rounded[i] = (r, r);
        }
        let mut start = x.clone();
        for &i in &ints {
            start[i] = rounded[i].0;
        }
        let out = ctx.backend.solve_nlp(sys, &start, Some(&rounded), &opts)?;
        let heur = nlp_result(ctx, Method::Minlp, &model, out, clock);
        if heur.is_feasible() && incumbent.as_ref().is_none_or(|inc| better(&heur, inc)) {
            info!(
                "node {nodes}: rounding found {:.4}",
                heur.objective.unwrap_or(f64::NAN)
            );
            incumbent = Some(heur);
        }

        push_children(&mut open, &node, k, value, &bounds, obj, &x);
    }

    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let mut res = match incumbent {
        Some(mut r) => {
            let obj = r.objective.unwrap_or(f64::NAN);
            r.gap = Some(if open.is_empty() || limit_hit.is_none() {
                0.0
            } else {
                ((obj - open_bound) / obj.abs().max(1e-9)).max(0.0)
            });
            r.status = MethodStatus::LocallyOptimal;
            r.message = match limit_hit {
                Some(l) => format!("{l} reached after {nodes} nodes"),
                None => format!("search complete after {nodes} nodes"),
            };
            r
        }
        None => {
            let mut r = MethodResult::empty(
                Method::Minlp,
                MethodStatus::NoIncumbent,
                format!(
                    "no feasible integer solution found ({} after {nodes} nodes)",
                    limit_hit.unwrap_or("search complete")
                ),
            );
            r.violations = Vec::new();
            r
        }
    };
    res.nodes = Some(nodes);
    res.seconds = clock.elapsed().as_secs_f64();
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(depth: usize, bound: f64) -> Node {
        Node {
            overrides: vec![],
            depth,
            bound,
            start: vec![],
        }
    }

    #[test]
    fn selection_prefers_depth_then_bound() {
        let open = vec![node(1, 5.0), node(2, 9.0), node(2, 3.0), node(0, 0.0)];
        assert_eq!(select(&open), 2);
    }

    #[test]
    fn most_fractional_variable() {
        let x = [0.0, 0.1, 0.45, 1.0, 0.9];
        assert_eq!(branching_var(&x, &[0, 1, 2, 3, 4]).map(|b| b.0), Some(2));
        assert_eq!(branching_var(&x, &[0, 3]), None);
        assert_eq!(branching_var(&[1.0 - 1e-8], &[0]), None);
    }
}
