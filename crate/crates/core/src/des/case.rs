use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusKind, NetworkTopology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvTech {
    /// £ per panel.
    pub invest_per_panel: f64,
    pub panel_area_m2: f64,
    /// kW per panel.
    pub panel_rating_kw: f64,
    pub efficiency: f64,
    /// £/kW-yr.
    pub fixed_om_per_kw_yr: f64,
    /// £/kWh.
    pub var_om_per_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoilerTech {
    /// £/kW.
    pub invest_per_kw: f64,
    pub efficiency: f64,
    /// £/kWh of gas.
    pub gas_price_per_kwh: f64,
    /// Optional cap on the boiler size allowed at any building (kW).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_capacity_kw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryTech {
    pub name: String,
    /// £/kWh.
    pub invest_per_kwh: f64,
    /// £/kWh-yr.
    pub om_per_kwh_yr: f64,
    /// Volumetric energy density, kWh/m³.
    pub ved_kwh_per_m3: f64,
    pub dod_max: f64,
    pub soc_max: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Finance {
    pub interest_rate: f64,
    pub lifetime_years: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechnologyCatalog {
    pub pv: PvTech,
    pub boiler: BoilerTech,
    pub batteries: Vec<BatteryTech>,
    pub finance: Finance,
}

impl Default for TechnologyCatalog {
    fn default() -> Self {
        TechnologyCatalog {
            pv: PvTech {
                invest_per_panel: 450.0,
                panel_area_m2: 1.75,
                panel_rating_kw: 0.25,
                efficiency: 0.135,
                fixed_om_per_kw_yr: 12.5,
                var_om_per_kwh: 0.005,
            },
            boiler: BoilerTech {
                invest_per_kw: 40.0,
                efficiency: 0.94,
                gas_price_per_kwh: 0.02514,
                max_capacity_kw: None,
            },
            batteries: vec![BatteryTech {
                name: "li-ion".into(),
                invest_per_kwh: 270.0,
                om_per_kwh_yr: 11.0,
                ved_kwh_per_m3: 20.0,
                dod_max: 0.85,
                soc_max: 0.9,
                eta_charge: 0.94,
                eta_discharge: 0.94,
            }],
            finance: Finance {
                interest_rate: 0.075,
                lifetime_years: 20.0,
            },
        }
    }
}

/// Modelling constants that the formulation leaves open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Big-M for the purchase/sale and charge/discharge exclusivity rows, kW.
    pub big_m_kw: f64,
    /// Charge rate cap as a fraction of capacity per time step.
    pub charge_rate_fraction: f64,
    pub discharge_rate_fraction: f64,
    /// Capacity big-M tying battery size to its selection binary, kWh.
    pub battery_capacity_big_m_kwh: f64,
    /// Load power factor (lagging) used for reactive demand.
    pub load_power_factor: f64,
    /// Treat panel counts as integers in the mixed-integer methods.
    pub integer_panels: bool,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            big_m_kw: 1000.0,
            charge_rate_fraction: 0.5,
            discharge_rate_fraction: 0.5,
            battery_capacity_big_m_kwh: 100.0,
            load_power_factor: 0.95,
            integer_panels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSchedule {
    /// Grid purchase price, £/kWh, one 24-point profile per season.
    pub grid_price: Vec<Vec<f64>>,
    /// FIT export tariff, £/kWh.
    pub fit_export: f64,
    /// FIT generation tariff, £/kWh.
    pub fit_generation: f64,
}

impl TariffSchedule {
    /// Flat purchase price in every season.
    pub fn flat(price: f64, n_seasons: usize, n_t: usize) -> Self {
        TariffSchedule {
            grid_price: vec![vec![price; n_t]; n_seasons],
            fit_export: 0.0477,
            fit_generation: 0.1586,
        }
    }

    /// Economy 7: the night price applies to the seven hours starting at
    /// `night_start` (0-based hour index, wrapping).
    pub fn economy7(day: f64, night: f64, night_start: usize, n_seasons: usize) -> Self {
        let profile: Vec<f64> = (0..24)
            .map(|h| {
                if (h + 24 - night_start) % 24 < 7 {
                    night
                } else {
                    day
                }
            })
            .collect();
        TariffSchedule {
            grid_price: vec![profile; n_seasons],
            fit_export: 0.0477,
            fit_generation: 0.1586,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingData {
    pub id: String,
    pub roof_area_m2: f64,
    pub volume_m3: f64,
    /// kW, `[season][t]`.
    pub elec_demand_kw: Vec<Vec<f64>>,
    /// kW, `[season][t]`.
    pub heat_demand_kw: Vec<Vec<f64>>,
}

impl BuildingData {
    pub fn peak_elec(&self) -> f64 {
        self.elec_demand_kw
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn peak_heat(&self) -> f64 {
        self.heat_demand_kw
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonSpec {
    pub name: String,
    pub n_days: f64,
    pub dt_hours: f64,
    /// kW/m² per timepoint.
    pub irradiance_kw_m2: Vec<f64>,
}

impl SeasonSpec {
    pub fn n_t(&self) -> usize {
        self.irradiance_kw_m2.len()
    }
}

/// Default season lengths when only season names are known.
pub fn default_season_days(n_seasons: usize) -> Option<Vec<f64>> {
    match n_seasons {
        1 => Some(vec![365.0]),
        4 => Some(vec![90.0, 91.0, 92.0, 92.0]),
        _ => None,
    }
}

/// Storage scenario: 1 excludes batteries, 2 allows them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    NoStorage = 1,
    WithStorage = 2,
}

impl Scenario {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Scenario::NoStorage),
            2 => Ok(Scenario::WithStorage),
            _ => Err(Error::invalid(format!(
                "unknown scenario {n}, expected 1 or 2"
            ))),
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseData {
    pub catalog: TechnologyCatalog,
    pub params: ModelParams,
    pub tariffs: TariffSchedule,
    pub buildings: Vec<BuildingData>,
    pub seasons: Vec<SeasonSpec>,
    pub network: NetworkTopology,
}

impl CaseData {
    pub fn n_t(&self) -> usize {
        self.seasons.first().map_or(0, SeasonSpec::n_t)
    }

    pub fn building_index(&self, id: &str) -> Option<usize> {
        self.buildings.iter().position(|b| b.id == id)
    }

    /// Applies a storage scenario: scenario 1 sets every building's
    /// available battery volume to zero.
    pub fn for_scenario(&self, scenario: Scenario) -> CaseData {
        let mut case = self.clone();
        if scenario == Scenario::NoStorage {
            for b in &mut case.buildings {
                b.volume_m3 = 0.0;
            }
        }
        case
    }

    pub fn validate(&self) -> Result<()> {
        let cat = &self.catalog;
        let in_unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must lie in (0, 1], got {v}"
                )))
            }
        };
        let non_neg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be >= 0, got {v}")))
            }
        };
        in_unit("pv.efficiency", cat.pv.efficiency)?;
        in_unit("boiler.efficiency", cat.boiler.efficiency)?;
        non_neg("pv.invest_per_panel", cat.pv.invest_per_panel)?;
        non_neg("pv.fixed_om_per_kw_yr", cat.pv.fixed_om_per_kw_yr)?;
        non_neg("pv.var_om_per_kwh", cat.pv.var_om_per_kwh)?;
        if !(cat.pv.panel_area_m2 > 0.0 && cat.pv.panel_rating_kw > 0.0) {
            return Err(Error::invalid("pv panel area and rating must be positive"));
        }
        non_neg("boiler.invest_per_kw", cat.boiler.invest_per_kw)?;
        non_neg("boiler.gas_price_per_kwh", cat.boiler.gas_price_per_kwh)?;
        if let Some(m) = cat.boiler.max_capacity_kw {
            non_neg("boiler.max_capacity_kw", m)?;
        }
        for (k, b) in cat.batteries.iter().enumerate() {
            in_unit(&format!("batteries[{k}].dod_max"), b.dod_max)?;
            in_unit(&format!("batteries[{k}].soc_max"), b.soc_max)?;
            in_unit(&format!("batteries[{k}].eta_charge"), b.eta_charge)?;
            in_unit(&format!("batteries[{k}].eta_discharge"), b.eta_discharge)?;
            non_neg(&format!("batteries[{k}].invest_per_kwh"), b.invest_per_kwh)?;
            non_neg(&format!("batteries[{k}].om_per_kwh_yr"), b.om_per_kwh_yr)?;
            if !(b.ved_kwh_per_m3 > 0.0) {
                return Err(Error::invalid(format!(
                    "batteries[{k}].ved_kwh_per_m3 must be positive"
                )));
            }
        }
        if !(cat.finance.lifetime_years > 0.0) || !(cat.finance.interest_rate >= 0.0) {
            return Err(Error::invalid(
                "finance: need lifetime > 0 and interest rate >= 0",
            ));
        }
        let p = &self.params;
        if !(p.big_m_kw > 0.0 && p.battery_capacity_big_m_kwh > 0.0) {
            return Err(Error::invalid("big-M constants must be positive"));
        }
        non_neg("params.charge_rate_fraction", p.charge_rate_fraction)?;
        non_neg("params.discharge_rate_fraction", p.discharge_rate_fraction)?;
        in_unit("params.load_power_factor", p.load_power_factor)?;

        if self.seasons.is_empty() {
            return Err(Error::invalid("no seasons"));
        }
        let n_t = self.n_t();
        if n_t == 0 {
            return Err(Error::invalid("seasons have no timepoints"));
        }
        let days: f64 = self.seasons.iter().map(|s| s.n_days).sum();
        if (days - 365.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "season days sum to {days}, expected 365"
            )));
        }
        for s in &self.seasons {
            if s.n_t() != n_t {
                return Err(Error::invalid(format!(
                    "season `{}` has {} irradiance points, expected {n_t}",
                    s.name,
                    s.n_t()
                )));
            }
            if !(s.dt_hours > 0.0) {
                return Err(Error::invalid(format!(
                    "season `{}`: dt_hours must be > 0",
                    s.name
                )));
            }
            if let Some(v) = s.irradiance_kw_m2.iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::invalid(format!(
                    "season `{}`: negative irradiance {v}",
                    s.name
                )));
            }
        }

        let t = &self.tariffs;
        non_neg("tariffs.fit_export", t.fit_export)?;
        non_neg("tariffs.fit_generation", t.fit_generation)?;
        if t.grid_price.len() != self.seasons.len() {
            return Err(Error::invalid(format!(
                "tariffs: {} grid price profiles for {} seasons",
                t.grid_price.len(),
                self.seasons.len()
            )));
        }
        for (s, prof) in t.grid_price.iter().enumerate() {
            if prof.len() != n_t {
                return Err(Error::invalid(format!(
                    "tariffs: season {} has {} grid prices, expected {n_t}",
                    self.seasons[s].name,
                    prof.len()
                )));
            }
            if prof.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::invalid("tariffs: negative grid price"));
            }
        }

        if self.buildings.is_empty() {
            return Err(Error::invalid("no buildings"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for b in &self.buildings {
            if !ids.insert(b.id.as_str()) {
                return Err(Error::invalid(format!("duplicate building id `{}`", b.id)));
            }
            non_neg(&format!("building {} roof_area_m2", b.id), b.roof_area_m2)?;
            non_neg(&format!("building {} volume_m3", b.id), b.volume_m3)?;
            for (what, prof) in [
                ("electricity", &b.elec_demand_kw),
                ("heat", &b.heat_demand_kw),
            ] {
                if prof.len() != self.seasons.len() {
                    return Err(Error::invalid(format!(
                        "building {}: {what} demand has {} season profiles, expected {}",
                        b.id,
                        prof.len(),
                        self.seasons.len()
                    )));
                }
                for (s, row) in prof.iter().enumerate() {
                    if row.len() != n_t {
                        return Err(Error::invalid(format!(
                            "building {}: {what} demand in season `{}` has {} values, expected {n_t}",
                            b.id,
                            self.seasons[s].name,
                            row.len()
                        )));
                    }
                    if row.iter().any(|v| !(*v >= 0.0)) {
                        return Err(Error::invalid(format!(
                            "building {}: negative {what} demand",
                            b.id
                        )));
                    }
                }
            }
        }

        self.network.validate()?;
        let map = self.network.building_bus();
        for b in &self.buildings {
            if !map.contains_key(b.id.as_str()) {
                return Err(Error::invalid(format!(
                    "building `{}` is not attached to any network bus",
                    b.id
                )));
            }
        }
        for bus in &self.network.buses {
            if bus.kind == BusKind::LoadGenerator && bus.buildings.is_empty() {
                return Err(Error::invalid(format!(
                    "load bus {} has no buildings",
                    bus.id
                )));
            }
            for id in &bus.buildings {
                if !ids.contains(id.as_str()) {
                    return Err(Error::invalid(format!(
                        "bus {} references unknown building `{id}`",
                        bus.id
                    )));
                }
            }
        }
        Ok(())
    }
}
