use serde::{Deserialize, Serialize};

use crate::opf::OpfSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Current,
    VoltageLow,
    VoltageHigh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Branch label or bus id.
    pub element: String,
    pub season: usize,
    pub t: usize,
    pub value: f64,
    pub limit: f64,
    /// Excess over the limit in percent of the limit.
    pub excess_pct: f64,
}

/// Relative tolerance on limits before a deviation counts as a violation.
pub const AUDIT_REL_TOL: f64 = 1e-6;

/// Lists every current and voltage limit breach of an OPF solution.
pub fn audit(sol: &OpfSolution) -> Vec<Violation> {
    let mut out = Vec::new();
    let [lb, ub] = sol.v_bounds_pu;
    for p in &sol.periods {
        for (k, (i, imax)) in p.current_a.iter().zip(&sol.i_max_a).enumerate() {
            if *i > imax * (1.0 + AUDIT_REL_TOL) {
                out.push(Violation {
                    kind: ViolationKind::Current,
                    element: sol.branch_labels[k].clone(),
                    season: p.season,
                    t: p.t,
                    value: *i,
                    limit: *imax,
                    excess_pct: (i / imax - 1.0) * 100.0,
                });
            }
        }
        for (k, v) in p.v.iter().enumerate() {
            let (kind, limit) = if *v < lb * (1.0 - AUDIT_REL_TOL) {
                (ViolationKind::VoltageLow, lb)
            } else if *v > ub * (1.0 + AUDIT_REL_TOL) {
                (ViolationKind::VoltageHigh, ub)
            } else {
                continue;
            };
            out.push(Violation {
                kind,
                element: sol.bus_ids[k].to_string(),
                season: p.season,
                t: p.t,
                value: *v,
                limit,
                excess_pct: ((v - limit) / limit).abs() * 100.0,
            });
        }
    }
    out
}

pub fn max_excess_pct(violations: &[Violation], kind: ViolationKind) -> f64 {
    violations
        .iter()
        .filter(|v| v.kind == kind)
        .map(|v| v.excess_pct)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Configuration;
    use crate::opf::OpfPeriod;

    #[test]
    fn flags_current_and_voltage() {
        let sol = OpfSolution {
            configuration: Configuration::Delta,
            bus_ids: vec![1, 2],
            branch_labels: vec!["1-2".into()],
            i_max_a: vec![100.0],
            v_bounds_pu: [0.95, 1.05],
            periods: vec![
                OpfPeriod {
                    season: 0,
                    t: 3,
                    v: vec![1.0, 1.06],
                    theta: vec![0.0, 0.01],
                    p: vec![0.0; 2],
                    q: vec![0.0; 2],
                    current_a: vec![140.0],
                },
                OpfPeriod {
                    season: 1,
                    t: 0,
                    v: vec![1.0, 1.0],
                    theta: vec![0.0; 2],
                    p: vec![0.0; 2],
                    q: vec![0.0; 2],
                    current_a: vec![100.0],
                },
            ],
        };
        let v = audit(&sol);
        assert_eq!(v.len(), 2);
        assert!((max_excess_pct(&v, ViolationKind::Current) - 40.0).abs() < 1e-9);
        assert_eq!(v[1].kind, ViolationKind::VoltageHigh);
        assert_eq!(v[1].element, "2");
    }
}
