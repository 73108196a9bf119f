use serde::{Deserialize, Serialize};

use super::case::CaseData;
use super::model::DesModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryDesign {
    pub name: String,
    pub volume_m3: f64,
    pub capacity_kwh: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingDesign {
    pub id: String,
    pub panels: f64,
    pub pv_capacity_kw: f64,
    pub boiler_kw: f64,
    pub batteries: Vec<BatteryDesign>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryHour {
    pub charge: f64,
    pub charge_pv: f64,
    pub charge_grid: f64,
    pub discharge: f64,
    pub stored: f64,
    pub charging: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingHour {
    pub grid: f64,
    pub pv_used: f64,
    pub pv_sold: f64,
    pub boiler: f64,
    pub selling: bool,
    pub batteries: Vec<BatteryHour>,
}

impl BuildingHour {
    /// Net export to the network in kW (negative when importing).
    pub fn net_export_kw(&self) -> f64 {
        self.pv_sold - self.grid - self.batteries.iter().map(|b| b.charge_grid).sum::<f64>()
    }
}

/// Capacities and hourly schedules extracted from a model solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSolution {
    pub buildings: Vec<BuildingDesign>,
    /// `[season][building][t]`.
    pub operation: Vec<Vec<Vec<BuildingHour>>>,
}

impl DesignSolution {
    pub fn from_values(model: &DesModel, case: &CaseData, x: &[f64]) -> Self {
        let v = |id: crate::system::VarId| x[id.0];
        let on = |id: crate::system::VarId| x[id.0] > 0.5;
        let buildings = model.vars[0]
            .iter()
            .zip(&case.buildings)
            .map(|(bv, bd)| BuildingDesign {
                id: bd.id.clone(),
                panels: v(bv.panels),
                pv_capacity_kw: v(bv.panels) * case.catalog.pv.panel_rating_kw,
                boiler_kw: v(bv.boiler_capacity),
                batteries: bv
                    .batteries
                    .iter()
                    .zip(&case.catalog.batteries)
                    .map(|(b, bt)| BatteryDesign {
                        name: bt.name.clone(),
                        volume_m3: v(b.volume),
                        capacity_kwh: v(b.capacity),
                        selected: on(b.select),
                    })
                    .collect(),
            })
            .collect();
        let operation = model
            .vars
            .iter()
            .map(|season| {
                season
                    .iter()
                    .map(|bv| {
                        bv.hours
                            .iter()
                            .map(|h| BuildingHour {
                                grid: v(h.grid),
                                pv_used: v(h.pv_used),
                                pv_sold: v(h.pv_sold),
                                boiler: v(h.boiler),
                                selling: on(h.sell_mode),
                                batteries: h
                                    .batteries
                                    .iter()
                                    .map(|b| BatteryHour {
                                        charge: v(b.charge),
                                        charge_pv: v(b.charge_pv),
                                        charge_grid: v(b.charge_grid),
                                        discharge: v(b.discharge),
                                        stored: v(b.stored),
                                        charging: on(b.charging),
                                    })
                                    .collect(),
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        DesignSolution {
            buildings,
            operation,
        }
    }

    pub fn total_pv_kw(&self) -> f64 {
        self.buildings.iter().map(|b| b.pv_capacity_kw).sum()
    }

    pub fn total_storage_kwh(&self) -> f64 {
        self.buildings
            .iter()
            .flat_map(|b| &b.batteries)
            .map(|b| b.capacity_kwh)
            .sum()
    }

    /// Largest absolute electricity balance residual, kW.
    pub fn max_balance_residual(&self, case: &CaseData) -> f64 {
        let mut worst = 0.0f64;
        for (s, season) in self.operation.iter().enumerate() {
            for (b, hours) in season.iter().enumerate() {
                for (t, h) in hours.iter().enumerate() {
                    let supply =
                        h.grid + h.pv_used + h.batteries.iter().map(|x| x.discharge).sum::<f64>();
                    let r = (supply - case.buildings[b].elec_demand_kw[s][t]).abs();
                    worst = worst.max(r);
                }
            }
        }
        worst
    }

    /// Count of (season, building, t, battery) slots with both charge and
    /// discharge above `tol`.
    pub fn simultaneous_charge_discharge(&self, tol: f64) -> usize {
        self.operation
            .iter()
            .flatten()
            .flatten()
            .flat_map(|h| &h.batteries)
            .filter(|b| b.charge > tol && b.discharge > tol)
            .count()
    }

    /// Count of slots with both grid purchase and PV sale above `tol`.
    pub fn simultaneous_buy_sell(&self, tol: f64) -> usize {
        self.operation
            .iter()
            .flatten()
            .flatten()
            .filter(|h| h.grid > tol && h.pv_sold > tol)
            .count()
    }
}
