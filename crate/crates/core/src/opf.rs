//! AC power-flow constraints in polar bus-injection form and their coupling
//! to the design model.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::des::{build_des_model, BuildingVars, CaseData, DesModel};
use crate::error::{Error, Result};
use crate::network::{
    assemble_admittance, current_limit_squared, voltage_diff_sq, AdmittanceMatrix, BusKind,
    Configuration, CurrentLimit, NetworkTopology,
};
use crate::system::{ConstraintSystem, NonlinearFunction, Sense, VarId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusVars {
    pub v: VarId,
    pub theta: VarId,
    pub p: VarId,
    pub q: VarId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceKind {
    Active,
    Reactive,
}

/// `P_n - V_n Σ_m V_m (G cos + B sin)` or its reactive analogue
/// `Q_n - V_n Σ_m V_m (G sin - B cos)`.
#[derive(Debug, Clone)]
pub struct PowerBalance {
    kind: BalanceKind,
    /// `[injection, V_n, θ_n, V_m1, θ_m1, ...]`.
    vars: Vec<VarId>,
    g_nn: f64,
    b_nn: f64,
    /// `(G_nm, B_nm)` aligned with the neighbour pairs in `vars`.
    coupling: Vec<(f64, f64)>,
}

impl PowerBalance {
    pub fn new(kind: BalanceKind, bus: usize, buses: &[BusVars], y: &AdmittanceMatrix) -> Self {
        let own = buses[bus];
        let injection = match kind {
            BalanceKind::Active => own.p,
            BalanceKind::Reactive => own.q,
        };
        let mut vars = vec![injection, own.v, own.theta];
        let mut coupling = Vec::new();
        let mut g_nn = 0.0;
        let mut b_nn = 0.0;
        for (m, g, b) in y.row_entries(bus) {
            if m == bus {
                g_nn = g;
                b_nn = b;
            } else {
                vars.push(buses[m].v);
                vars.push(buses[m].theta);
                coupling.push((g, b));
            }
        }
        PowerBalance {
            kind,
            vars,
            g_nn,
            b_nn,
            coupling,
        }
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let inj = x[self.vars[0].0];
        let vn = x[self.vars[1].0];
        let tn = x[self.vars[2].0];
        let mut f;
        let mut d_vn;
        let mut d_tn = 0.0;
        match self.kind {
            BalanceKind::Active => {
                f = vn * vn * self.g_nn;
                d_vn = 2.0 * vn * self.g_nn;
            }
            BalanceKind::Reactive => {
                f = -vn * vn * self.b_nn;
                d_vn = -2.0 * vn * self.b_nn;
            }
        }
        let mut grad = grad;
        for (k, (g, b)) in self.coupling.iter().enumerate() {
            let vm = x[self.vars[3 + 2 * k].0];
            let tm = x[self.vars[4 + 2 * k].0];
            let (s, c) = (tn - tm).sin_cos();
            let (a, da) = match self.kind {
                // a = G cos + B sin, da = d a / d θn
                BalanceKind::Active => (g * c + b * s, -g * s + b * c),
                BalanceKind::Reactive => (g * s - b * c, g * c + b * s),
            };
            f += vn * vm * a;
            d_vn += vm * a;
            d_tn += vn * vm * da;
            if let Some(gr) = grad.as_deref_mut() {
                gr[3 + 2 * k] = -vn * a;
                gr[4 + 2 * k] = vn * vm * da;
            }
        }
        if let Some(gr) = grad {
            gr[0] = 1.0;
            gr[1] = -d_vn;
            gr[2] = -d_tn;
        }
        inj - f
    }
}

impl NonlinearFunction for PowerBalance {
    fn vars(&self) -> &[VarId] {
        &self.vars
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad))
    }
}

/// `scale · |V_n∠θ_n − V_m∠θ_m|²`.
#[derive(Debug, Clone)]
pub struct BranchCurrentSq {
    vars: [VarId; 4],
    scale: f64,
}

impl BranchCurrentSq {
    pub fn new(from: BusVars, to: BusVars, scale: f64) -> Self {
        BranchCurrentSq {
            vars: [from.v, from.theta, to.v, to.theta],
            scale,
        }
    }
}

impl NonlinearFunction for BranchCurrentSq {
    fn vars(&self) -> &[VarId] {
        &self.vars
    }

    fn value(&self, x: &[f64]) -> f64 {
        let [vn, tn, vm, tm] = self.vars.map(|v| x[v.0]);
        self.scale * voltage_diff_sq(vn, tn, vm, tm)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let [vn, tn, vm, tm] = self.vars.map(|v| x[v.0]);
        let dr = vn * tn.cos() - vm * tm.cos();
        let di = vn * tn.sin() - vm * tm.sin();
        let k = 2.0 * self.scale;
        grad[0] = k * (dr * tn.cos() + di * tn.sin());
        grad[1] = k * (-dr * vn * tn.sin() + di * vn * tn.cos());
        grad[2] = -k * (dr * tm.cos() + di * tm.sin());
        grad[3] = k * (dr * vm * tm.sin() - di * vm * tm.cos());
        self.scale * (dr * dr + di * di)
    }
}

/// Declares unbounded V, θ, P, Q for every bus of one period.
pub fn declare_bus_vars(
    sys: &mut ConstraintSystem,
    topology: &NetworkTopology,
    label: &str,
) -> Vec<BusVars> {
    let inf = f64::INFINITY;
    topology
        .buses
        .iter()
        .map(|b| BusVars {
            v: sys.continuous(format!("v[{label},{}]", b.id), 0.0, inf),
            theta: sys.continuous(format!("theta[{label},{}]", b.id), -inf, inf),
            p: sys.continuous(format!("p[{label},{}]", b.id), -inf, inf),
            q: sys.continuous(format!("q[{label},{}]", b.id), -inf, inf),
        })
        .collect()
}

/// Slack fixed at 1∠0 with free injections; other buses get voltage and
/// ±180° angle bounds.
pub fn emit_slack_and_bounds(
    sys: &mut ConstraintSystem,
    topology: &NetworkTopology,
    buses: &[BusVars],
) -> Result<()> {
    if !topology.buses.iter().any(|b| b.id == topology.slack_bus) {
        return Err(Error::Structure("network has no slack bus".into()));
    }
    let slack = topology.slack_index();
    let [lb, ub] = topology.v_bounds_pu;
    for (k, bv) in buses.iter().enumerate() {
        if k == slack {
            sys.vars[bv.v.0].lower = 1.0;
            sys.vars[bv.v.0].upper = 1.0;
            sys.fix(bv.v, 1.0)?;
            sys.vars[bv.theta.0].lower = 0.0;
            sys.vars[bv.theta.0].upper = 0.0;
            sys.fix(bv.theta, 0.0)?;
        } else {
            sys.vars[bv.v.0].lower = lb;
            sys.vars[bv.v.0].upper = ub;
            sys.vars[bv.theta.0].lower = -PI;
            sys.vars[bv.theta.0].upper = PI;
        }
    }
    Ok(())
}

/// Active and reactive balance rows for every bus, registered as one
/// equality block whose dependents are the non-slack V, θ and the slack
/// P, Q.
pub fn emit_power_balances(
    sys: &mut ConstraintSystem,
    y: &AdmittanceMatrix,
    topology: &NetworkTopology,
    buses: &[BusVars],
    label: &str,
) -> Vec<usize> {
    let mut rows = Vec::with_capacity(2 * buses.len());
    for (n, bus) in topology.buses.iter().enumerate() {
        for (kind, tag) in [
            (BalanceKind::Active, "p_balance"),
            (BalanceKind::Reactive, "q_balance"),
        ] {
            rows.push(sys.add_nonlinear(
                format!("{tag}[{label},{}]", bus.id),
                tag,
                Arc::new(PowerBalance::new(kind, n, buses, y)),
                Sense::Eq,
                0.0,
            ));
        }
    }
    let slack = topology.slack_index();
    let mut deps = Vec::with_capacity(2 * buses.len());
    for (n, bv) in buses.iter().enumerate() {
        if n == slack {
            deps.push(bv.p);
            deps.push(bv.q);
        } else {
            deps.push(bv.v);
            deps.push(bv.theta);
        }
    }
    sys.add_block(rows.clone(), deps);
    rows
}

/// One squared-current inequality per branch.
pub fn emit_current_limits(
    sys: &mut ConstraintSystem,
    topology: &NetworkTopology,
    limits: &[CurrentLimit],
    buses: &[BusVars],
    label: &str,
) -> Vec<usize> {
    topology
        .branch_ends()
        .into_iter()
        .zip(limits)
        .zip(&topology.branches)
        .map(|(((a, b), lim), br)| {
            sys.add_nonlinear(
                format!("current[{label},{}]", br.label()),
                "current_limit",
                Arc::new(BranchCurrentSq::new(
                    buses[a],
                    buses[b],
                    lim.voltage_diff_scale,
                )),
                Sense::Le,
                lim.rhs,
            )
        })
        .collect()
}

/// Reactive load of a building in kvar for an active load in kW.
pub fn reactive_load_kvar(p_kw: f64, power_factor: f64) -> f64 {
    p_kw * power_factor.acos().tan()
}

/// Ties node injections to building flows for one period.
pub fn emit_linking(
    sys: &mut ConstraintSystem,
    case: &CaseData,
    season: usize,
    t: usize,
    des: &[BuildingVars],
    buses: &[BusVars],
    label: &str,
) -> Result<()> {
    let topo = &case.network;
    let to_pu = 1e3 / topo.bases.s_base_va;
    let slack = topo.slack_index();
    for (n, bus) in topo.buses.iter().enumerate() {
        if n == slack {
            continue;
        }
        let bv = buses[n];
        let mut p_terms = vec![(bv.p, 1.0)];
        let mut q_rhs = 0.0;
        if bus.kind != BusKind::Passive {
            for id in &bus.buildings {
                let i = case.building_index(id).ok_or_else(|| {
                    Error::invalid(format!("bus {} references unknown building `{id}`", bus.id))
                })?;
                let h = &des[i].hours[t];
                p_terms.push((h.pv_sold, -to_pu));
                p_terms.push((h.grid, to_pu));
                for b in &h.batteries {
                    p_terms.push((b.charge_grid, to_pu));
                }
                let load = case.buildings[i].elec_demand_kw[season][t];
                q_rhs -= reactive_load_kvar(load, case.params.load_power_factor) * to_pu;
            }
        }
        let family = if bus.kind == BusKind::Passive {
            "passive_injection"
        } else {
            "injection_link"
        };
        sys.add_linear(
            format!("p_link[{label},{}]", bus.id),
            family,
            p_terms,
            Sense::Eq,
            0.0,
        );
        sys.add_linear(
            format!("q_link[{label},{}]", bus.id),
            family,
            vec![(bv.q, 1.0)],
            Sense::Eq,
            q_rhs,
        );
    }
    Ok(())
}

/// Design model with the network attached for every (season, t).
#[derive(Debug, Clone)]
pub struct CombinedModel {
    pub des: DesModel,
    /// `[season][t][bus]`.
    pub buses: Vec<Vec<Vec<BusVars>>>,
    pub configuration: Configuration,
    pub limits: Vec<CurrentLimit>,
    /// Indices of the current-limit rows, `[season][t][branch]`.
    pub current_rows: Vec<Vec<Vec<usize>>>,
}

pub fn build_combined_model(
    case: &CaseData,
    configuration: Configuration,
) -> Result<CombinedModel> {
    let des = build_des_model(case)?;
    attach_network(des, case, configuration)
}

/// Attaches OPF variables and constraints to an already built design model.
pub fn attach_network(
    mut des: DesModel,
    case: &CaseData,
    configuration: Configuration,
) -> Result<CombinedModel> {
    let topo = &case.network;
    let y = assemble_admittance(topo)?;
    let limits = topo
        .branches
        .iter()
        .map(|b| current_limit_squared(b, configuration, &topo.bases))
        .collect::<Result<Vec<_>>>()?;
    let mut buses = Vec::with_capacity(case.seasons.len());
    let mut current_rows = Vec::with_capacity(case.seasons.len());
    for (s, spec) in case.seasons.iter().enumerate() {
        let mut season_buses = Vec::with_capacity(spec.n_t());
        let mut season_rows = Vec::with_capacity(spec.n_t());
        for t in 0..spec.n_t() {
            let label = format!("{},{}", spec.name, t + 1);
            let sys = &mut des.system;
            let bv = declare_bus_vars(sys, topo, &label);
            emit_slack_and_bounds(sys, topo, &bv)?;
            emit_power_balances(sys, &y, topo, &bv, &label);
            season_rows.push(emit_current_limits(sys, topo, &limits, &bv, &label));
            emit_linking(sys, case, s, t, &des.vars[s], &bv, &label)?;
            season_buses.push(bv);
        }
        buses.push(season_buses);
        current_rows.push(season_rows);
    }
    Ok(CombinedModel {
        des,
        buses,
        configuration,
        limits,
        current_rows,
    })
}

impl CombinedModel {
    pub fn system(&self) -> &ConstraintSystem {
        &self.des.system
    }

    /// Extends a design-model point with flat voltages and injections
    /// implied by the building flows.
    pub fn start_point(&self, case: &CaseData, des_x: &[f64]) -> Vec<f64> {
        let sys = &self.des.system;
        let mut x = vec![0.0; sys.n_vars()];
        x[..des_x.len()].copy_from_slice(des_x);
        let to_pu = 1e3 / case.network.bases.s_base_va;
        for (s, season) in self.buses.iter().enumerate() {
            for (t, bvs) in season.iter().enumerate() {
                for (n, bv) in bvs.iter().enumerate() {
                    x[bv.v.0] = 1.0;
                    x[bv.theta.0] = 0.0;
                    let bus = &case.network.buses[n];
                    let (mut p, mut q) = (0.0, 0.0);
                    for id in &bus.buildings {
                        if let Some(i) = case.building_index(id) {
                            let h = &self.des.vars[s][i].hours[t];
                            p += des_x[h.pv_sold.0] - des_x[h.grid.0];
                            for b in &h.batteries {
                                p -= des_x[b.charge_grid.0];
                            }
                            q -= reactive_load_kvar(
                                case.buildings[i].elec_demand_kw[s][t],
                                case.params.load_power_factor,
                            );
                        }
                    }
                    x[bv.p.0] = p * to_pu;
                    x[bv.q.0] = q * to_pu;
                }
            }
        }
        for (k, v) in sys.vars.iter().enumerate() {
            if let Some(f) = v.fixed {
                x[k] = f;
            }
        }
        x
    }

    pub fn opf_solution(&self, case: &CaseData, x: &[f64]) -> OpfSolution {
        let topo = &case.network;
        let i_base = topo.bases.i_base();
        let ends = topo.branch_ends();
        let mut periods = Vec::new();
        for (s, season) in self.buses.iter().enumerate() {
            for (t, bvs) in season.iter().enumerate() {
                let v: Vec<f64> = bvs.iter().map(|b| x[b.v.0]).collect();
                let theta: Vec<f64> = bvs.iter().map(|b| x[b.theta.0]).collect();
                let current_a = ends
                    .iter()
                    .zip(&self.limits)
                    .map(|(&(a, b), lim)| {
                        lim.current_pu(voltage_diff_sq(v[a], theta[a], v[b], theta[b])) * i_base
                    })
                    .collect();
                periods.push(OpfPeriod {
                    season: s,
                    t,
                    v,
                    theta,
                    p: bvs.iter().map(|b| x[b.p.0]).collect(),
                    q: bvs.iter().map(|b| x[b.q.0]).collect(),
                    current_a,
                });
            }
        }
        OpfSolution {
            configuration: self.configuration,
            bus_ids: topo.buses.iter().map(|b| b.id).collect(),
            branch_labels: topo.branches.iter().map(|b| b.label()).collect(),
            i_max_a: topo.branches.iter().map(|b| b.i_max_a).collect(),
            v_bounds_pu: topo.v_bounds_pu,
            periods,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfPeriod {
    pub season: usize,
    pub t: usize,
    pub v: Vec<f64>,
    /// Radians.
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Branch currents in amps, in the active configuration's convention.
    pub current_a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    pub configuration: Configuration,
    pub bus_ids: Vec<u32>,
    pub branch_labels: Vec<String>,
    pub i_max_a: Vec<f64>,
    pub v_bounds_pu: [f64; 2],
    pub periods: Vec<OpfPeriod>,
}

impl OpfSolution {
    /// Largest current as a fraction of its limit.
    pub fn max_loading(&self) -> f64 {
        self.periods
            .iter()
            .flat_map(|p| p.current_a.iter().zip(&self.i_max_a).map(|(i, m)| i / m))
            .fold(0.0, f64::max)
    }
}
