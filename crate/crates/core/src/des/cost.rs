use serde::{Deserialize, Serialize};

use super::case::CaseData;
use super::solution::DesignSolution;

/// Capital recovery factor `i(1+i)^n / ((1+i)^n - 1)`; `1/n` when `i = 0`.
pub fn capital_recovery_factor(interest: f64, years: f64) -> f64 {
    if interest == 0.0 {
        return 1.0 / years;
    }
    let g = (1.0 + interest).powf(years);
    interest * g / (g - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CostTerm {
    PvInvestment,
    BoilerInvestment,
    BatteryInvestment,
    GridElectricity,
    PvOperation,
    BoilerOperation,
    BatteryOperation,
    GenerationIncome,
    ExportIncome,
}

impl CostTerm {
    pub const ALL: [CostTerm; 9] = [
        CostTerm::PvInvestment,
        CostTerm::BoilerInvestment,
        CostTerm::BatteryInvestment,
        CostTerm::GridElectricity,
        CostTerm::PvOperation,
        CostTerm::BoilerOperation,
        CostTerm::BatteryOperation,
        CostTerm::GenerationIncome,
        CostTerm::ExportIncome,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CostTerm::PvInvestment => "PV investment",
            CostTerm::BoilerInvestment => "Boiler investment",
            CostTerm::BatteryInvestment => "Battery investment",
            CostTerm::GridElectricity => "Grid electricity",
            CostTerm::PvOperation => "PV operation",
            CostTerm::BoilerOperation => "Boiler operation",
            CostTerm::BatteryOperation => "Battery operation",
            CostTerm::GenerationIncome => "Generation income",
            CostTerm::ExportIncome => "Export income",
        }
    }

    pub fn is_income(self) -> bool {
        matches!(self, CostTerm::GenerationIncome | CostTerm::ExportIncome)
    }

    pub fn sign(self) -> f64 {
        if self.is_income() {
            -1.0
        } else {
            1.0
        }
    }
}

/// Annual cost per category, £/yr. Incomes are stored as positive amounts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostBreakdown {
    pub items: Vec<(CostTerm, f64)>,
}

impl CostBreakdown {
    pub fn get(&self, term: CostTerm) -> f64 {
        self.items
            .iter()
            .filter(|(t, _)| *t == term)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.items.iter().map(|(t, v)| t.sign() * v).sum()
    }
}

/// Re-prices a design solution from the case data, independently of the
/// objective vector of the model that produced it.
pub fn evaluate_cost_breakdown(sol: &DesignSolution, case: &CaseData) -> CostBreakdown {
    let cat = &case.catalog;
    let pv = &cat.pv;
    let crf = capital_recovery_factor(cat.finance.interest_rate, cat.finance.lifetime_years);
    let mut acc = [0.0f64; 9];
    let mut add = |t: CostTerm, v: f64| acc[t as usize] += v;

    for d in &sol.buildings {
        add(CostTerm::PvInvestment, d.panels * pv.invest_per_panel * crf);
        add(
            CostTerm::BoilerInvestment,
            d.boiler_kw * cat.boiler.invest_per_kw * crf,
        );
        for (bt, b) in cat.batteries.iter().zip(&d.batteries) {
            add(
                CostTerm::BatteryInvestment,
                b.capacity_kwh * bt.invest_per_kwh * crf,
            );
        }
    }
    for (s, spec) in case.seasons.iter().enumerate() {
        let days = spec.n_days;
        let dt = spec.dt_hours;
        for (b, d) in sol.buildings.iter().enumerate() {
            add(
                CostTerm::PvOperation,
                d.panels * pv.panel_rating_kw * pv.fixed_om_per_kw_yr * days / 365.0,
            );
            for (bt, bat) in cat.batteries.iter().zip(&d.batteries) {
                add(
                    CostTerm::BatteryOperation,
                    bat.capacity_kwh * bt.om_per_kwh_yr / dt * days / 365.0,
                );
            }
            for (t, h) in sol.operation[s][b].iter().enumerate() {
                let price = case.tariffs.grid_price[s][t];
                let charge_grid: f64 = h.batteries.iter().map(|x| x.charge_grid).sum();
                let charge_pv: f64 = h.batteries.iter().map(|x| x.charge_pv).sum();
                let generated = h.pv_used + h.pv_sold + charge_pv;
                add(
                    CostTerm::GridElectricity,
                    (h.grid + charge_grid) * price * dt * days,
                );
                add(
                    CostTerm::PvOperation,
                    generated * pv.var_om_per_kwh * dt * days,
                );
                add(
                    CostTerm::BoilerOperation,
                    h.boiler * dt * cat.boiler.gas_price_per_kwh / cat.boiler.efficiency * days,
                );
                add(
                    CostTerm::GenerationIncome,
                    generated * case.tariffs.fit_generation * dt * days,
                );
                add(
                    CostTerm::ExportIncome,
                    h.pv_sold * case.tariffs.fit_export * dt * days,
                );
            }
        }
    }
    CostBreakdown {
        items: CostTerm::ALL
            .iter()
            .map(|t| (*t, acc[*t as usize]))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn crf_reference_values() {
        assert_relative_eq!(
            capital_recovery_factor(0.075, 20.0),
            0.098092,
            epsilon = 5e-7
        );
        assert_relative_eq!(capital_recovery_factor(0.0, 20.0), 0.05);
    }

    #[test]
    fn labels_unique() {
        let labels: std::collections::BTreeSet<_> =
            CostTerm::ALL.iter().map(|t| t.label()).collect();
        assert_eq!(labels.len(), 9);
        assert_eq!(CostTerm::ALL.iter().filter(|t| t.is_income()).count(), 2);
    }
}
