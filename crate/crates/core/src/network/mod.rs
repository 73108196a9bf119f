//! Balanced single-phase-equivalent model of the distribution feeder.
//!
//! Quantities are carried in SI units in the data model and converted to per
//! unit at the boundary of the optimisation model. Lines are series
//! impedances only: shunt elements are not represented and transformers sit
//! at nominal ratio.

mod schema;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use schema::{parse_network, NETWORK_FILE};

/// Load-side connection of the three-phase consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Configuration {
    Delta,
    Wye,
}

impl Configuration {
    /// Factor applied to the squared voltage-difference term of the branch
    /// current constraint. Delta line currents are three times the wye ones
    /// for the same line voltage and load, hence 1/9 on the squared term.
    pub fn current_sq_scale(self) -> f64 {
        match self {
            Configuration::Delta => 1.0,
            Configuration::Wye => 1.0 / 9.0,
        }
    }

    pub fn current_scale(self) -> f64 {
        match self {
            Configuration::Delta => 1.0,
            Configuration::Wye => 1.0 / 3.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Configuration::Delta => "delta",
            Configuration::Wye => "wye",
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "delta" => Ok(Configuration::Delta),
            "wye" | "star" => Ok(Configuration::Wye),
            other => Err(Error::invalid(format!("unknown configuration `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    #[serde(alias = "load", alias = "load_generator")]
    LoadGenerator,
    Passive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buildings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r_ohm: f64,
    pub x_ohm: f64,
    /// Line current rating in amperes.
    pub i_max_a: f64,
}

impl Branch {
    pub fn label(&self) -> String {
        format!("{}-{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerUnitBases {
    pub s_base_va: f64,
    /// Line-to-line voltage base.
    pub v_base_v: f64,
}

impl Default for PerUnitBases {
    fn default() -> Self {
        PerUnitBases {
            s_base_va: 1.0e6,
            v_base_v: 400.0,
        }
    }
}

impl PerUnitBases {
    pub fn new(s_base_va: f64, v_base_v: f64) -> Result<Self> {
        let bases = PerUnitBases {
            s_base_va,
            v_base_v,
        };
        bases.validate()?;
        Ok(bases)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_base_va.is_finite() && self.s_base_va > 0.0) {
            return Err(Error::invalid("s_base_va must be positive"));
        }
        if !(self.v_base_v.is_finite() && self.v_base_v > 0.0) {
            return Err(Error::invalid("v_base_v must be positive"));
        }
        Ok(())
    }

    pub fn z_base(&self) -> f64 {
        self.v_base_v * self.v_base_v / self.s_base_va
    }

    /// Line current base, `S / (sqrt(3) V_L)`.
    pub fn i_base(&self) -> f64 {
        self.s_base_va / (3f64.sqrt() * self.v_base_v)
    }

    /// Converts kilowatts (the unit of the DES flows) to per unit power.
    pub fn kw_to_pu(&self, kw: f64) -> f64 {
        kw * 1.0e3 / self.s_base_va
    }

    pub fn pu_to_kw(&self, pu: f64) -> f64 {
        pu * self.s_base_va / 1.0e3
    }
}

/// Kind of quantity handled by the per-unit conversions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Power,
    Voltage,
    Current,
    Impedance,
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power" => Ok(Quantity::Power),
            "voltage" => Ok(Quantity::Voltage),
            "current" => Ok(Quantity::Current),
            "impedance" => Ok(Quantity::Impedance),
            other => Err(Error::invalid(format!("unknown quantity kind `{other}`"))),
        }
    }
}

impl Quantity {
    fn base(self, bases: &PerUnitBases) -> f64 {
        match self {
            Quantity::Power => bases.s_base_va,
            Quantity::Voltage => bases.v_base_v,
            Quantity::Current => bases.i_base(),
            Quantity::Impedance => bases.z_base(),
        }
    }
}

/// SI value (VA, V, A or ohm) to per unit.
pub fn to_per_unit(value: f64, kind: Quantity, bases: &PerUnitBases) -> f64 {
    value / kind.base(bases)
}

pub fn from_per_unit(value: f64, kind: Quantity, bases: &PerUnitBases) -> f64 {
    value * kind.base(bases)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesAdmittance {
    pub y: Complex64,
    /// Squared magnitude of `y`.
    pub mag_sq: f64,
}

impl SeriesAdmittance {
    pub fn magnitude(&self) -> f64 {
        self.mag_sq.sqrt()
    }
}

/// Per-unit series admittance `1 / ((R + jX) / z_base)` of a branch.
pub fn series_admittance(branch: &Branch, z_base: f64) -> Result<SeriesAdmittance> {
    let z = Complex64::new(branch.r_ohm, branch.x_ohm) / z_base;
    if z.norm_sqr() == 0.0 || !z.norm_sqr().is_finite() {
        return Err(Error::invalid(format!(
            "branch {} has zero or non-finite impedance",
            branch.label()
        )));
    }
    let y = z.inv();
    Ok(SeriesAdmittance {
        y,
        mag_sq: y.norm_sqr(),
    })
}

/// Data for the squared branch-current inequality
/// `scale * |V_n - V_m|^2 <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentLimit {
    pub y_mag_sq: f64,
    pub rhs: f64,
    pub voltage_diff_scale: f64,
}

impl CurrentLimit {
    /// Reported line current (per unit) for a given squared voltage difference.
    pub fn current_pu(&self, diff_sq: f64) -> f64 {
        (self.voltage_diff_scale * diff_sq * self.y_mag_sq).sqrt()
    }
}

pub fn current_limit_squared(
    branch: &Branch,
    config: Configuration,
    bases: &PerUnitBases,
) -> Result<CurrentLimit> {
    if !(branch.i_max_a > 0.0) {
        return Err(Error::invalid(format!(
            "branch {}: i_max_a must be positive",
            branch.label()
        )));
    }
    let y = series_admittance(branch, bases.z_base())?;
    let i_max_pu = to_per_unit(branch.i_max_a, Quantity::Current, bases);
    Ok(CurrentLimit {
        y_mag_sq: y.mag_sq,
        rhs: i_max_pu * i_max_pu / y.mag_sq,
        voltage_diff_scale: config.current_sq_scale(),
    })
}

/// Squared magnitude of the complex voltage difference between two buses.
pub fn voltage_diff_sq(v_n: f64, th_n: f64, v_m: f64, th_m: f64) -> f64 {
    let dr = v_n * th_n.cos() - v_m * th_m.cos();
    let di = v_n * th_n.sin() - v_m * th_m.sin();
    dr * dr + di * di
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkTopology {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub slack_bus: u32,
    /// `[V_LB, V_UB]` in per unit.
    pub v_bounds_pu: [f64; 2],
    #[serde(default)]
    pub bases: PerUnitBases,
    pub configuration: Configuration,
}

impl NetworkTopology {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.bus_index(self.slack_bus)
            .expect("validated topology has a slack bus")
    }

    /// `(from_index, to_index)` of every branch.
    pub fn branch_ends(&self) -> Vec<(usize, usize)> {
        self.branches
            .iter()
            .map(|b| {
                (
                    self.bus_index(b.from).expect("validated"),
                    self.bus_index(b.to).expect("validated"),
                )
            })
            .collect()
    }

    /// Bus index hosting each building.
    pub fn building_bus(&self) -> HashMap<&str, usize> {
        let mut map = HashMap::new();
        for (k, bus) in self.buses.iter().enumerate() {
            for b in &bus.buildings {
                map.insert(b.as_str(), k);
            }
        }
        map
    }

    pub fn with_configuration(&self, configuration: Configuration) -> Self {
        NetworkTopology {
            configuration,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bases.validate()?;
        if self.buses.is_empty() {
            return Err(Error::invalid("network has no buses"));
        }
        let mut seen = BTreeSet::new();
        for (k, bus) in self.buses.iter().enumerate() {
            if !seen.insert(bus.id) {
                return Err(Error::invalid(format!(
                    "buses[{k}]: duplicate bus id {}",
                    bus.id
                )));
            }
            if bus.kind != BusKind::LoadGenerator && !bus.buildings.is_empty() {
                return Err(Error::invalid(format!(
                    "buses[{k}]: bus {} is not a load/generator bus but lists buildings",
                    bus.id
                )));
            }
        }
        let slacks: Vec<_> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .collect();
        if slacks.len() != 1 {
            return Err(Error::invalid(format!(
                "network must have exactly one slack bus, found {}",
                slacks.len()
            )));
        }
        if slacks[0].id != self.slack_bus {
            return Err(Error::invalid(format!(
                "slack_bus {} does not match the bus of kind slack ({})",
                self.slack_bus, slacks[0].id
            )));
        }
        let mut buildings = BTreeSet::new();
        for bus in &self.buses {
            for b in &bus.buildings {
                if !buildings.insert(b.as_str()) {
                    return Err(Error::invalid(format!(
                        "building `{b}` is attached to more than one bus"
                    )));
                }
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            if br.from == br.to {
                return Err(Error::invalid(format!(
                    "branches[{k}]: from == to ({})",
                    br.from
                )));
            }
            for end in [br.from, br.to] {
                if self.bus_index(end).is_none() {
                    return Err(Error::invalid(format!("branches[{k}]: unknown bus {end}")));
                }
            }
            if !(br.r_ohm >= 0.0) || !br.r_ohm.is_finite() {
                return Err(Error::invalid(format!("branches[{k}].r_ohm: must be >= 0")));
            }
            if !br.x_ohm.is_finite() {
                return Err(Error::invalid(format!(
                    "branches[{k}].x_ohm: must be finite"
                )));
            }
            if br.r_ohm == 0.0 && br.x_ohm == 0.0 {
                return Err(Error::invalid(format!(
                    "branches[{k}]: zero impedance (r_ohm = x_ohm = 0)"
                )));
            }
            if !(br.i_max_a > 0.0) {
                return Err(Error::invalid(format!(
                    "branches[{k}].i_max_a: must be > 0"
                )));
            }
        }
        let [lb, ub] = self.v_bounds_pu;
        if !(lb < 1.0 && 1.0 < ub) {
            return Err(Error::invalid(format!(
                "v_bounds_pu: need V_LB < 1 < V_UB, got [{lb}, {ub}]"
            )));
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.n_buses();
        let mut adj = vec![Vec::new(); n];
        for (a, b) in self.branch_ends() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let start = self
            .bus_index(self.slack_bus)
            .ok_or_else(|| Error::invalid("slack bus not found"))?;
        let mut reached = vec![false; n];
        reached[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(k) = queue.pop_front() {
            for &m in &adj[k] {
                if !reached[m] {
                    reached[m] = true;
                    queue.push_back(m);
                }
            }
        }
        let isolated: Vec<String> = self
            .buses
            .iter()
            .zip(&reached)
            .filter(|(_, r)| !**r)
            .map(|(b, _)| b.id.to_string())
            .collect();
        if isolated.is_empty() {
            Ok(())
        } else {
            Err(Error::Structure(format!(
                "buses {{{}}} are not connected to slack bus {}",
                isolated.join(", "),
                self.slack_bus
            )))
        }
    }
}

/// Dense bus admittance matrix in per-unit siemens.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn zeros(n: usize) -> Self {
        AdmittanceMatrix {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n + col]
    }

    fn add(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.n + col] += v;
    }

    pub fn row_sum(&self, row: usize) -> Complex64 {
        self.data[row * self.n..(row + 1) * self.n].iter().sum()
    }

    /// Non-zero entries `(col, G, B)` of a row.
    pub fn row_entries(&self, row: usize) -> Vec<(usize, f64, f64)> {
        (0..self.n)
            .filter_map(|m| {
                let y = self.get(row, m);
                (y.re != 0.0 || y.im != 0.0).then_some((m, y.re, y.im))
            })
            .collect()
    }
}

pub fn assemble_admittance(topology: &NetworkTopology) -> Result<AdmittanceMatrix> {
    topology.check_connected()?;
    let n = topology.n_buses();
    let z_base = topology.bases.z_base();
    let mut y_bus = AdmittanceMatrix::zeros(n);
    for (br, (a, b)) in topology.branches.iter().zip(topology.branch_ends()) {
        let y = series_admittance(br, z_base)?.y;
        y_bus.add(a, a, y);
        y_bus.add(b, b, y);
        y_bus.add(a, b, -y);
        y_bus.add(b, a, -y);
    }
    Ok(y_bus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn branch(from: u32, to: u32, r: f64, x: f64) -> Branch {
        Branch {
            from,
            to,
            r_ohm: r,
            x_ohm: x,
            i_max_a: 100.0,
        }
    }

    fn chain(n: u32, r: f64, x: f64) -> NetworkTopology {
        NetworkTopology {
            buses: (1..=n)
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
            branches: (1..n).map(|k| branch(k, k + 1, r, x)).collect(),
            slack_bus: 1,
            v_bounds_pu: [0.9, 1.1],
            bases: PerUnitBases::new(1.0, 1.0).unwrap(),
            configuration: Configuration::Delta,
        }
    }

    #[test]
    fn series_admittance_examples() {
        let y = series_admittance(&branch(1, 2, 1.0, 0.0), 1.0).unwrap().y;
        assert_abs_diff_eq!(y.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y.im, 0.0, epsilon = 1e-15);

        let y = series_admittance(&branch(1, 2, 0.0, 1.0), 1.0).unwrap().y;
        assert_abs_diff_eq!(y.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y.im, -1.0, epsilon = 1e-15);

        // (0.1 - 0.1j) / 0.02
        let s = series_admittance(&branch(1, 2, 0.1, 0.1), 1.0).unwrap();
        assert_abs_diff_eq!(s.y.re, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.y.im, -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mag_sq, 50.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_impedance_rejected() {
        assert!(series_admittance(&branch(1, 2, 0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn single_branch_matrix() {
        let net = chain(2, 0.1, 0.1);
        let y = assemble_admittance(&net).unwrap();
        let expect = Complex64::new(5.0, -5.0);
        assert_abs_diff_eq!((y.get(0, 0) - expect).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((y.get(1, 1) - expect).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((y.get(0, 1) + expect).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((y.get(1, 0) + expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn chain_middle_diagonal_is_twice_branch() {
        let net = chain(3, 0.1, 0.1);
        let y = assemble_admittance(&net).unwrap();
        let yb = series_admittance(&net.branches[0], 1.0).unwrap().y;
        assert_abs_diff_eq!((y.get(1, 1) - yb * 2.0).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn disconnected_bus_is_named() {
        let mut net = chain(4, 0.1, 0.1);
        net.branches.pop();
        let err = assemble_admittance(&net).unwrap_err().to_string();
        assert!(err.contains("{4}"), "{err}");
    }

    #[test]
    fn validation_catches_bad_inputs() {
        let mut net = chain(3, 0.1, 0.1);
        net.branches[0].to = 1;
        assert!(net.validate().is_err());

        let mut net = chain(3, 0.1, 0.1);
        net.branches[1].r_ohm = -0.1;
        assert!(net.validate().is_err());

        let mut net = chain(3, 0.1, 0.1);
        net.v_bounds_pu = [1.0, 1.1];
        assert!(net.validate().is_err());

        let mut net = chain(3, 0.1, 0.1);
        net.buses[1].kind = BusKind::Slack;
        assert!(net.validate().is_err());

        let mut net = chain(3, 0.1, 0.1);
        net.buses[1].kind = BusKind::LoadGenerator;
        net.buses[2].kind = BusKind::LoadGenerator;
        net.buses[1].buildings = vec!["A".into()];
        net.buses[2].buildings = vec!["A".into()];
        assert!(net.validate().is_err());
    }

    #[test]
    fn current_limit_payload() {
        // |y| = 10 pu, I_max = 0.5 pu
        let bases = PerUnitBases::new(1.0, 1.0).unwrap();
        let mut br = branch(1, 2, 0.0, 0.1);
        br.i_max_a = 0.5 * bases.i_base();
        let lim = current_limit_squared(&br, Configuration::Delta, &bases).unwrap();
        assert_abs_diff_eq!(lim.y_mag_sq, 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(lim.rhs, 0.0025, epsilon = 1e-12);
        assert_eq!(lim.voltage_diff_scale, 1.0);

        let wye = current_limit_squared(&br, Configuration::Wye, &bases).unwrap();
        assert_abs_diff_eq!(wye.voltage_diff_scale, 1.0 / 9.0, epsilon = 1e-15);
        assert_eq!(wye.rhs, lim.rhs);
        assert_eq!(wye.current_pu(0.0), 0.0);

        br.i_max_a = 0.0;
        assert!(current_limit_squared(&br, Configuration::Delta, &bases).is_err());
    }

    #[test]
    fn per_unit_identities() {
        let bases = PerUnitBases::default();
        assert_eq!(to_per_unit(1.0e6, Quantity::Power, &bases), 1.0);
        assert_eq!(to_per_unit(400.0, Quantity::Voltage, &bases), 1.0);
        for q in [Quantity::Power, Quantity::Voltage, Quantity::Current] {
            assert_eq!(to_per_unit(0.0, q, &bases), 0.0);
        }
        assert!("frequency".parse::<Quantity>().is_err());
        assert_eq!("Current".parse::<Quantity>().unwrap(), Quantity::Current);
        assert_abs_diff_eq!(bases.z_base(), 0.16, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn per_unit_round_trip(x in -1.0e7f64..1.0e7, s in 1.0f64..1.0e8, v in 1.0f64..1.0e5, k in 0usize..4) {
            let bases = PerUnitBases::new(s, v).unwrap();
            let kind = [Quantity::Power, Quantity::Voltage, Quantity::Current, Quantity::Impedance][k];
            let back = from_per_unit(to_per_unit(x, kind, &bases), kind, &bases);
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1e-300));
        }

        #[test]
        fn admittance_symmetric_with_zero_row_sums(
            rs in proptest::collection::vec(0.0f64..1.0, 5),
            xs in proptest::collection::vec(0.01f64..1.0, 5),
            parents in proptest::collection::vec(0usize..100, 5),
        ) {
            // random radial tree over 6 buses plus one meshing branch
            let mut net = chain(6, 0.1, 0.1);
            net.branches = (0..5).map(|k| {
                let child = k as u32 + 2;
                let parent = (parents[k] % (k + 1)) as u32 + 1;
                branch(parent, child, rs[k], xs[k])
            }).collect();
            net.branches.push(branch(2, 6, 0.05, 0.05));
            let y = assemble_admittance(&net).unwrap();
            for i in 0..6 {
                prop_assert!(y.row_sum(i).norm() < 1e-12 * (1.0 + y.get(i, i).norm()));
                for j in 0..6 {
                    prop_assert_eq!(y.get(i, j), y.get(j, i));
                }
            }
        }

        #[test]
        fn wye_current_is_third_of_delta(vn in 0.9f64..1.1, vm in 0.9f64..1.1, tn in -0.5f64..0.5, tm in -0.5f64..0.5) {
            let bases = PerUnitBases::default();
            let br = branch(1, 2, 0.01, 0.003);
            let d = current_limit_squared(&br, Configuration::Delta, &bases).unwrap();
            let w = current_limit_squared(&br, Configuration::Wye, &bases).unwrap();
            let sq = voltage_diff_sq(vn, tn, vm, tm);
            prop_assert!((w.current_pu(sq) - d.current_pu(sq) / 3.0).abs() <= 1e-12 * (1.0 + d.current_pu(sq)));
        }
    }
}
