//! Newton-Raphson power flow in complex form, used to cross-check OPF
//! solutions. Shares no code with the OPF constraint emitters.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Configuration, NetworkTopology};
use crate::opf::OpfSolution;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowOptions {
    pub max_iter: usize,
    /// Infinity-norm mismatch tolerance, pu.
    pub tol: f64,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            max_iter: 30,
            tol: 1e-8,
        }
    }
}

/// Bus admittance matrix and branch data of a topology.
#[derive(Debug, Clone)]
pub struct PowerFlowCase {
    pub ybus: DMatrix<Complex64>,
    pub slack: usize,
    /// `(from, to, series admittance)` per branch, in pu.
    pub branches: Vec<(usize, usize, Complex64)>,
    pub i_base_a: f64,
}

impl PowerFlowCase {
    pub fn new(topology: &NetworkTopology) -> Result<Self> {
        topology.validate()?;
        let n = topology.n_buses();
        let z_base = topology.bases.v_base_v.powi(2) / topology.bases.s_base_va;
        let mut ybus = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        let mut branches = Vec::with_capacity(topology.branches.len());
        for br in &topology.branches {
            let a = topology.bus_index(br.from).expect("validated");
            let b = topology.bus_index(br.to).expect("validated");
            let y = Complex64::new(1.0, 0.0) / Complex64::new(br.r_ohm / z_base, br.x_ohm / z_base);
            ybus[(a, a)] += y;
            ybus[(b, b)] += y;
            ybus[(a, b)] -= y;
            ybus[(b, a)] -= y;
            branches.push((a, b, y));
        }
        Ok(PowerFlowCase {
            ybus,
            slack: topology.slack_index(),
            branches,
            i_base_a: topology.bases.s_base_va / (3f64.sqrt() * topology.bases.v_base_v),
        })
    }

    pub fn n(&self) -> usize {
        self.ybus.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowResult {
    pub v: Vec<f64>,
    /// Radians.
    pub theta: Vec<f64>,
    /// Injections at every bus (slack computed), pu.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Series-admittance current magnitude per branch, pu, before any
    /// configuration scaling.
    pub branch_current_pu: Vec<f64>,
    pub losses_pu: f64,
    pub iterations: usize,
    /// Mismatch infinity norm after each iteration (entry 0 is the start).
    pub mismatch_history: Vec<f64>,
}

impl PowerFlowResult {
    pub fn mismatch(&self) -> f64 {
        *self.mismatch_history.last().unwrap_or(&f64::NAN)
    }

    /// Branch currents in amps for a configuration: the wye current is a
    /// third of the delta current for the same voltages.
    pub fn currents_a(&self, case: &PowerFlowCase, config: Configuration) -> Vec<f64> {
        self.branch_current_pu
            .iter()
            .map(|i| i * config.current_scale() * case.i_base_a)
            .collect()
    }
}

fn complex_voltages(v: &[f64], theta: &[f64]) -> DVector<Complex64> {
    DVector::from_iterator(
        v.len(),
        v.iter()
            .zip(theta)
            .map(|(m, a)| Complex64::from_polar(*m, *a)),
    )
}

/// Solves for non-slack voltages given specified injections at every
/// non-slack bus (entries at the slack index are ignored).
pub fn solve_power_flow(
    case: &PowerFlowCase,
    p_spec: &[f64],
    q_spec: &[f64],
    opts: &PowerFlowOptions,
) -> Result<PowerFlowResult> {
    let n = case.n();
    if p_spec.len() != n || q_spec.len() != n {
        return Err(Error::Dimension(format!(
            "{} buses but {} / {} injections",
            n,
            p_spec.len(),
            q_spec.len()
        )));
    }
    let pq: Vec<usize> = (0..n).filter(|&k| k != case.slack).collect();
    let m = pq.len();
    let mut v = vec![1.0; n];
    let mut theta = vec![0.0; n];
    let s_spec: Vec<Complex64> = p_spec
        .iter()
        .zip(q_spec)
        .map(|(p, q)| Complex64::new(*p, *q))
        .collect();

    let mismatch =
        |v: &[f64], theta: &[f64]| -> (DVector<f64>, DVector<Complex64>, DVector<Complex64>) {
            let vc = complex_voltages(v, theta);
            let ic = &case.ybus * &vc;
            let mut f = DVector::zeros(2 * m);
            for (k, &b) in pq.iter().enumerate() {
                let s = vc[b] * ic[b].conj() - s_spec[b];
                f[k] = s.re;
                f[m + k] = s.im;
            }
            (f, vc, ic)
        };

    let (mut f, mut vc, mut ic) = mismatch(&v, &theta);
    let mut history = vec![f.amax()];
    let mut iterations = 0;
    while history.last().copied().unwrap_or(0.0) > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::Divergence {
                iterations,
                mismatch: *history.last().unwrap(),
            });
        }
        iterations += 1;
        // dS/dθ = j diag(V) conj(diag(I) - Y diag(V))
        // dS/d|V| = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for (r, &a) in pq.iter().enumerate() {
            for (c, &b) in pq.iter().enumerate() {
                let y = case.ybus[(a, b)];
                let vn = vc[b] / vc[b].norm();
                let mut ds_dth = -Complex64::i() * vc[a] * (y * vc[b]).conj();
                let mut ds_dv = vc[a] * (y * vn).conj();
                if a == b {
                    ds_dth += Complex64::i() * vc[a] * ic[a].conj();
                    ds_dv += ic[a].conj() * vn;
                }
                jac[(r, c)] = ds_dth.re;
                jac[(r, m + c)] = ds_dv.re;
                jac[(m + r, c)] = ds_dth.im;
                jac[(m + r, m + c)] = ds_dv.im;
            }
        }
        let dx = jac.lu().solve(&(-&f)).ok_or(Error::Divergence {
            iterations,
            mismatch: *history.last().unwrap(),
        })?;
        for (k, &b) in pq.iter().enumerate() {
            theta[b] += dx[k];
            v[b] += dx[m + k];
        }
        (f, vc, ic) = mismatch(&v, &theta);
        history.push(f.amax());
        if !history.last().unwrap().is_finite() {
            return Err(Error::Divergence {
                iterations,
                mismatch: f64::INFINITY,
            });
        }
    }

    let s: Vec<Complex64> = (0..n).map(|k| vc[k] * ic[k].conj()).collect();
    let branch_current_pu = case
        .branches
        .iter()
        .map(|&(a, b, y)| (y * (vc[a] - vc[b])).norm())
        .collect();
    Ok(PowerFlowResult {
        p: s.iter().map(|x| x.re).collect(),
        q: s.iter().map(|x| x.im).collect(),
        losses_pu: s.iter().map(|x| x.re).sum(),
        v,
        theta,
        branch_current_pu,
        iterations,
        mismatch_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    VPh,
    ThetaPh,
    PBus,
    QBus,
    IL,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [
        Quantity::VPh,
        Quantity::ThetaPh,
        Quantity::PBus,
        Quantity::QBus,
        Quantity::IL,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Quantity::VPh => "V_ph",
            Quantity::ThetaPh => "theta_ph",
            Quantity::PBus => "P_bus",
            Quantity::QBus => "Q_bus",
            Quantity::IL => "I_L",
        }
    }
}

/// Reference magnitude (pu, rad or A) below which a quantity counts as zero.
pub const ZERO_REFERENCE: f64 = 1e-6;

/// Percentage error with the verifier value as reference; falls back to
/// absolute error (scaled by 100) when the reference is below
/// [`ZERO_REFERENCE`], where relative error is dominated by round-off.
pub fn percent_error(opf: f64, verifier: f64) -> f64 {
    if verifier.abs() < ZERO_REFERENCE {
        (opf - verifier) * 100.0
    } else {
        (opf - verifier) / verifier.abs() * 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `(min %, max %)` per quantity in [`Quantity::ALL`] order.
    pub ranges: Vec<(Quantity, f64, f64)>,
    /// Largest verifier mismatch over all timepoints, pu.
    pub max_mismatch_pu: f64,
    pub timepoints: usize,
}

impl ErrorReport {
    pub fn range(&self, q: Quantity) -> (f64, f64) {
        self.ranges
            .iter()
            .find(|r| r.0 == q)
            .map_or((0.0, 0.0), |r| (r.1, r.2))
    }

    pub fn max_abs(&self) -> f64 {
        self.ranges
            .iter()
            .map(|r| r.1.abs().max(r.2.abs()))
            .fold(0.0, f64::max)
    }

    /// Quantities whose error magnitude exceeds `threshold_pct`.
    pub fn flagged(&self, threshold_pct: f64) -> Vec<Quantity> {
        self.ranges
            .iter()
            .filter(|r| r.1.abs() > threshold_pct || r.2.abs() > threshold_pct)
            .map(|r| r.0)
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = String::from("stat");
        for q in Quantity::ALL {
            out.push(',');
            out.push_str(q.label());
        }
        out.push('\n');
        for (name, pick) in [("Min", 0usize), ("Max", 1)] {
            out.push_str(name);
            for q in Quantity::ALL {
                let (lo, hi) = self.range(q);
                out.push_str(&format!(",{:.6}", if pick == 0 { lo } else { hi }));
            }
            out.push('\n');
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Re-solves every period of an OPF solution from its node injections and
/// compares voltages, angles, injections and branch currents.
pub fn verify_timeseries(
    opf: &OpfSolution,
    topology: &NetworkTopology,
    opts: &PowerFlowOptions,
) -> Result<ErrorReport> {
    let case = PowerFlowCase::new(topology)?;
    let n = case.n();
    if opf.bus_ids.len() != n || opf.i_max_a.len() != case.branches.len() {
        return Err(Error::Dimension(format!(
            "solution has {} buses / {} branches, network has {} / {}",
            opf.bus_ids.len(),
            opf.i_max_a.len(),
            n,
            case.branches.len()
        )));
    }
    let mut lo = [f64::INFINITY; 5];
    let mut hi = [f64::NEG_INFINITY; 5];
    let mut push = |q: usize, e: f64| {
        lo[q] = lo[q].min(e);
        hi[q] = hi[q].max(e);
    };
    let mut worst = 0.0f64;
    for period in &opf.periods {
        if period.v.len() != n || period.current_a.len() != case.branches.len() {
            return Err(Error::Dimension(format!(
                "period ({}, {}) has inconsistent lengths",
                period.season, period.t
            )));
        }
        let r = solve_power_flow(&case, &period.p, &period.q, opts)?;
        worst = worst.max(r.mismatch());
        for k in 0..n {
            if k != case.slack {
                push(0, percent_error(period.v[k], r.v[k]));
                push(1, percent_error(period.theta[k], r.theta[k]));
            }
            push(2, percent_error(period.p[k], r.p[k]));
            push(3, percent_error(period.q[k], r.q[k]));
        }
        for (i_opf, i_nr) in period
            .current_a
            .iter()
            .zip(r.currents_a(&case, opf.configuration))
        {
            push(4, percent_error(*i_opf, i_nr));
        }
    }
    let fix = |v: f64| if v.is_finite() { v } else { 0.0 };
    Ok(ErrorReport {
        ranges: Quantity::ALL
            .iter()
            .enumerate()
            .map(|(k, q)| (*q, fix(lo[k]), fix(hi[k])))
            .collect(),
        max_mismatch_pu: worst,
        timepoints: opf.periods.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, Bus, BusKind, PerUnitBases};

    fn radial(n: usize, r_pu: f64, x_pu: f64) -> NetworkTopology {
        let bases = PerUnitBases::default();
        let zb = bases.z_base();
        NetworkTopology {
            buses: (1..=n as u32)
                .map(|id| Bus {
                    id,
                    kind: if id == 1 {
                        BusKind::Slack
                    } else {
                        BusKind::Passive
                    },
                    buildings: vec![],
                })
                .collect(),
            branches: (1..n as u32)
                .map(|k| Branch {
                    from: k,
                    to: k + 1,
                    r_ohm: r_pu * zb,
                    x_ohm: x_pu * zb,
                    i_max_a: 500.0,
                })
                .collect(),
            slack_bus: 1,
            v_bounds_pu: [0.9, 1.1],
            bases,
            configuration: Configuration::Delta,
        }
    }

    #[test]
    fn zero_injection_is_flat() {
        let case = PowerFlowCase::new(&radial(4, 0.01, 0.02)).unwrap();
        let r =
            solve_power_flow(&case, &[0.0; 4], &[0.0; 4], &PowerFlowOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.v.iter().all(|v| *v == 1.0) && r.theta.iter().all(|t| *t == 0.0));
        assert_eq!(r.losses_pu, 0.0);
    }

    #[test]
    fn two_bus_oracle() {
        let case = PowerFlowCase::new(&radial(2, 0.0, 0.1)).unwrap();
        let r = solve_power_flow(
            &case,
            &[0.0, -0.1],
            &[0.0, 0.0],
            &PowerFlowOptions::default(),
        )
        .unwrap();
        let u = (1.0 + (1.0f64 - 4e-4).sqrt()) / 2.0;
        assert!((r.v[1] - u.sqrt()).abs() < 1e-6);
        assert!((r.v[1] - 0.99995).abs() < 1e-6);
        assert!((r.theta[1].to_degrees() + 0.573).abs() < 1e-3);
        assert!(r.mismatch() < 1e-8);
        // lossless line: slack supplies exactly the load
        assert!((r.p[0] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn quadratic_convergence_and_positive_losses() {
        let case = PowerFlowCase::new(&radial(5, 0.02, 0.04)).unwrap();
        let p = [0.0, -0.2, 0.05, -0.1, -0.15];
        let q = [0.0, -0.05, 0.0, -0.03, -0.04];
        let r = solve_power_flow(&case, &p, &q, &PowerFlowOptions::default()).unwrap();
        let h = &r.mismatch_history;
        assert!(h.len() >= 3);
        let (a, b) = (h[h.len() - 3], h[h.len() - 2]);
        assert!(b / a < 0.1, "{h:?}");
        assert!(r.losses_pu > 0.0);
        let d = r.currents_a(&case, Configuration::Delta);
        let w = r.currents_a(&case, Configuration::Wye);
        for (x, y) in d.iter().zip(&w) {
            assert!((x / 3.0 - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn three_bus_matches_grid_search() {
        let mut topo = radial(3, 0.05, 0.05);
        topo.branches[1].r_ohm *= 2.0;
        let case = PowerFlowCase::new(&topo).unwrap();
        let p = [0.0, -0.3, -0.2];
        let q = [0.0, -0.1, -0.05];
        let r = solve_power_flow(&case, &p, &q, &PowerFlowOptions::default()).unwrap();
        // refine a grid over (V2, θ2, V3, θ3) by successive zooming
        let resid = |x: &[f64; 4]| -> f64 {
            let v = [1.0, x[0], x[2]];
            let th = [0.0, x[1], x[3]];
            let vc = complex_voltages(&v, &th);
            let ic = &case.ybus * &vc;
            (1..3)
                .map(|k| {
                    let s = vc[k] * ic[k].conj();
                    (s.re - p[k]).abs() + (s.im - q[k]).abs()
                })
                .sum()
        };
        let mut centre = [0.95, -0.05, 0.93, -0.07];
        let mut width = 0.1;
        for _ in 0..40 {
            let mut best = (f64::INFINITY, centre);
            let steps = [-1.0, -0.5, 0.0, 0.5, 1.0];
            for a in steps {
                for b in steps {
                    for c in steps {
                        for d in steps {
                            let x = [
                                centre[0] + a * width,
                                centre[1] + b * width,
                                centre[2] + c * width,
                                centre[3] + d * width,
                            ];
                            let f = resid(&x);
                            if f < best.0 {
                                best = (f, x);
                            }
                        }
                    }
                }
            }
            centre = best.1;
            width *= 0.7;
        }
        assert!((centre[0] - r.v[1]).abs() < 1e-4);
        assert!((centre[1] - r.theta[1]).abs() < 1e-4);
        assert!((centre[2] - r.v[2]).abs() < 1e-4);
        assert!((centre[3] - r.theta[2]).abs() < 1e-4);
    }

    #[test]
    fn divergence_is_reported() {
        let case = PowerFlowCase::new(&radial(2, 0.0, 0.5)).unwrap();
        let err = solve_power_flow(
            &case,
            &[0.0, -5.0],
            &[0.0, 0.0],
            &PowerFlowOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn percent_error_rules() {
        assert!((percent_error(1.01, 1.0) - 1.0).abs() < 1e-12);
        assert_eq!(percent_error(0.0, 0.0), 0.0);
        assert!((percent_error(1e-8, 0.0) - 1e-6).abs() < 1e-18);
        assert!((percent_error(0.0, 1e-8) + 1e-6).abs() < 1e-18);
    }
}
