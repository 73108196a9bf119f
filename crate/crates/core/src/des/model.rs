use crate::error::{Error, Result};
use crate::system::{ConstraintSystem, Sense, VarId, VarKind};

use super::case::CaseData;
use super::cost::{capital_recovery_factor, CostTerm};

const INF: f64 = f64::INFINITY;

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryDesignVars {
    pub volume: VarId,
    pub capacity: VarId,
    /// Selection binary.
    pub select: VarId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryHourVars {
    pub charge: VarId,
    pub charge_pv: VarId,
    pub charge_grid: VarId,
    pub discharge: VarId,
    pub stored: VarId,
    /// 1 while charging, 0 while discharging.
    pub charging: VarId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourVars {
    pub grid: VarId,
    pub pv_used: VarId,
    pub pv_sold: VarId,
    pub boiler: VarId,
    /// 1 in selling mode (no purchase), 0 in purchasing mode.
    pub sell_mode: VarId,
    pub batteries: Vec<BatteryHourVars>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingVars {
    pub panels: VarId,
    pub boiler_capacity: VarId,
    pub batteries: Vec<BatteryDesignVars>,
    pub hours: Vec<HourVars>,
}

impl BuildingVars {
    fn shift(&mut self, offset: usize) {
        let s = |v: &mut VarId| v.0 += offset;
        s(&mut self.panels);
        s(&mut self.boiler_capacity);
        for b in &mut self.batteries {
            s(&mut b.volume);
            s(&mut b.capacity);
            s(&mut b.select);
        }
        for h in &mut self.hours {
            s(&mut h.grid);
            s(&mut h.pv_used);
            s(&mut h.pv_sold);
            s(&mut h.boiler);
            s(&mut h.sell_mode);
            for b in &mut h.batteries {
                s(&mut b.charge);
                s(&mut b.charge_pv);
                s(&mut b.charge_grid);
                s(&mut b.discharge);
                s(&mut b.stored);
                s(&mut b.charging);
            }
        }
    }

    /// Design (capacity) variables in a fixed order: panels, boiler, then
    /// per battery type volume, capacity, selection.
    pub fn design_vars(&self) -> Vec<VarId> {
        let mut v = vec![self.panels, self.boiler_capacity];
        for b in &self.batteries {
            v.extend([b.volume, b.capacity, b.select]);
        }
        v
    }
}

/// One season's independent model.
#[derive(Debug, Clone)]
pub struct SeasonFragment {
    pub season: usize,
    pub system: ConstraintSystem,
    pub buildings: Vec<BuildingVars>,
}

/// Multi-season design model with linked capacities.
#[derive(Debug, Clone)]
pub struct DesModel {
    pub system: ConstraintSystem,
    /// `[season][building]`.
    pub vars: Vec<Vec<BuildingVars>>,
    /// Objective contributions keyed by cost category. Coefficients are
    /// magnitudes; incomes enter the objective negated.
    pub cost_terms: Vec<(CostTerm, Vec<(VarId, f64)>)>,
}

impl DesModel {
    pub fn n_seasons(&self) -> usize {
        self.vars.len()
    }

    /// Design variables of building `b` in the first season, which carry
    /// the investment cost.
    pub fn design(&self, b: usize) -> &BuildingVars {
        &self.vars[0][b]
    }

    pub fn cost_term_value(&self, term: CostTerm, x: &[f64]) -> f64 {
        self.cost_terms
            .iter()
            .filter(|(t, _)| *t == term)
            .flat_map(|(_, terms)| terms.iter())
            .map(|(v, c)| c * x[v.0])
            .sum()
    }

    /// All binaries that switch operating modes (X, Q).
    pub fn mode_binaries(&self) -> Vec<VarId> {
        let mut out = Vec::new();
        for season in &self.vars {
            for b in season {
                for h in &b.hours {
                    out.push(h.sell_mode);
                    out.extend(h.batteries.iter().map(|bh| bh.charging));
                }
            }
        }
        out
    }
}

/// Builds the design-and-operation model of one season.
pub fn build_seasonal_model(case: &CaseData, season: usize) -> Result<SeasonFragment> {
    let spec = case
        .seasons
        .get(season)
        .ok_or_else(|| Error::invalid(format!("season index {season} out of range")))?;
    let cat = &case.catalog;
    let p = &case.params;
    let pv = &cat.pv;
    let dt = spec.dt_hours;
    let n_t = spec.n_t();
    let sname = &spec.name;
    let mut sys = ConstraintSystem::new();
    let mut buildings = Vec::with_capacity(case.buildings.len());

    for bld in &case.buildings {
        let bid = &bld.id;
        let elec = &bld.elec_demand_kw[season];
        let heat = &bld.heat_demand_kw[season];
        let tag = |what: &str| format!("{what}[{sname},{bid}]");

        let panel_kind = if p.integer_panels {
            VarKind::Integer
        } else {
            VarKind::Continuous
        };
        let panels = sys.add_var(
            tag("n_panel"),
            0.0,
            bld.roof_area_m2 / pv.panel_area_m2,
            panel_kind,
        );
        let boiler_capacity = sys.continuous(
            tag("boiler_max"),
            0.0,
            cat.boiler.max_capacity_kw.unwrap_or(INF),
        );
        let batteries: Vec<BatteryDesignVars> = cat
            .batteries
            .iter()
            .map(|bt| BatteryDesignVars {
                volume: sys.continuous(format!("vol[{sname},{bid},{}]", bt.name), 0.0, INF),
                capacity: sys.continuous(format!("cap[{sname},{bid},{}]", bt.name), 0.0, INF),
                select: sys.binary(format!("w[{sname},{bid},{}]", bt.name)),
            })
            .collect();

        sys.add_linear(
            tag("roof_area"),
            "roof_area",
            vec![(panels, pv.panel_area_m2)],
            Sense::Le,
            bld.roof_area_m2,
        );
        for (bt, bd) in cat.batteries.iter().zip(&batteries) {
            sys.add_linear(
                format!("battery_energy_density[{sname},{bid},{}]", bt.name),
                "battery_energy_density",
                vec![(bd.capacity, 1.0), (bd.volume, -bt.ved_kwh_per_m3)],
                Sense::Eq,
                0.0,
            );
            sys.add_linear(
                format!("battery_selection[{sname},{bid},{}]", bt.name),
                "battery_selection",
                vec![
                    (bd.capacity, 1.0),
                    (bd.select, -p.battery_capacity_big_m_kwh),
                ],
                Sense::Le,
                0.0,
            );
        }
        if !batteries.is_empty() {
            sys.add_linear(
                tag("battery_volume"),
                "battery_volume",
                batteries.iter().map(|b| (b.volume, 1.0)).collect(),
                Sense::Le,
                bld.volume_m3,
            );
            sys.add_linear(
                tag("battery_type"),
                "battery_type",
                batteries.iter().map(|b| (b.select, 1.0)).collect(),
                Sense::Le,
                1.0,
            );
        }

        let mut hours: Vec<HourVars> = Vec::with_capacity(n_t);
        for t in 0..n_t {
            let th = t + 1;
            let at = |what: &str| format!("{what}[{sname},{bid},{th}]");
            let load = elec[t];
            let hv = HourVars {
                grid: sys.continuous(at("grid"), 0.0, INF),
                pv_used: sys.continuous(at("pv_used"), 0.0, INF),
                pv_sold: sys.continuous(at("pv_sold"), 0.0, INF),
                boiler: sys.continuous(at("boiler"), 0.0, INF),
                sell_mode: sys.binary(at("x")),
                batteries: cat
                    .batteries
                    .iter()
                    .map(|bt| {
                        let bat = |what: &str| format!("{what}[{sname},{bid},{},{th}]", bt.name);
                        BatteryHourVars {
                            charge: sys.continuous(bat("charge"), 0.0, INF),
                            charge_pv: sys.continuous(bat("charge_pv"), 0.0, INF),
                            charge_grid: sys.continuous(bat("charge_grid"), 0.0, INF),
                            discharge: sys.continuous(bat("discharge"), 0.0, INF),
                            stored: sys.continuous(bat("stored"), 0.0, INF),
                            charging: sys.binary(bat("q")),
                        }
                    })
                    .collect(),
            };

            let mut balance = vec![(hv.grid, 1.0), (hv.pv_used, 1.0)];
            balance.extend(hv.batteries.iter().map(|b| (b.discharge, 1.0)));
            sys.add_linear(
                at("electricity_balance"),
                "electricity_balance",
                balance,
                Sense::Eq,
                load,
            );
            sys.add_linear(
                at("heat_balance"),
                "heat_balance",
                vec![(hv.boiler, 1.0)],
                Sense::Eq,
                heat[t],
            );
            sys.add_linear(
                at("purchase_exclusivity"),
                "purchase_exclusivity",
                vec![(hv.grid, 1.0), (hv.sell_mode, load)],
                Sense::Le,
                load,
            );
            sys.add_linear(
                at("sale_exclusivity"),
                "sale_exclusivity",
                vec![(hv.pv_sold, 1.0), (hv.sell_mode, -p.big_m_kw)],
                Sense::Le,
                0.0,
            );

            let mut pv_out = vec![(hv.pv_used, 1.0), (hv.pv_sold, 1.0)];
            pv_out.extend(hv.batteries.iter().map(|b| (b.charge_pv, 1.0)));
            let mut rating = pv_out.clone();
            rating.push((panels, -pv.panel_rating_kw));
            sys.add_linear(at("pv_rating"), "pv_rating", rating, Sense::Le, 0.0);
            let mut irr = pv_out;
            irr.push((
                panels,
                -pv.panel_area_m2 * spec.irradiance_kw_m2[t] * pv.efficiency,
            ));
            sys.add_linear(at("pv_irradiance"), "pv_irradiance", irr, Sense::Le, 0.0);
            sys.add_linear(
                at("boiler_capacity"),
                "boiler_capacity",
                vec![(hv.boiler, 1.0), (boiler_capacity, -1.0)],
                Sense::Le,
                0.0,
            );

            for (k, ((bt, bd), bh)) in cat
                .batteries
                .iter()
                .zip(&batteries)
                .zip(&hv.batteries)
                .enumerate()
            {
                let bat = |what: &str| format!("{what}[{sname},{bid},{},{th}]", bt.name);
                sys.add_linear(
                    bat("charge_split"),
                    "charge_split",
                    vec![
                        (bh.charge, 1.0),
                        (bh.charge_pv, -1.0),
                        (bh.charge_grid, -1.0),
                    ],
                    Sense::Eq,
                    0.0,
                );
                sys.add_linear(
                    bat("soc_max"),
                    "soc_max",
                    vec![(bh.stored, 1.0), (bd.capacity, -bt.soc_max)],
                    Sense::Le,
                    0.0,
                );
                sys.add_linear(
                    bat("dod_min"),
                    "dod_min",
                    vec![(bh.stored, 1.0), (bd.capacity, -(1.0 - bt.dod_max))],
                    Sense::Ge,
                    0.0,
                );
                // stored_t = stored_{t-1} + eta_c*charge*dt - discharge*dt/eta_d,
                // with stored_0 = 0
                let mut bal = vec![
                    (bh.stored, 1.0),
                    (bh.charge, -bt.eta_charge * dt),
                    (bh.discharge, dt / bt.eta_discharge),
                ];
                if t > 0 {
                    bal.push((hours[t - 1].batteries[k].stored, -1.0));
                }
                sys.add_linear(
                    bat("storage_balance"),
                    "storage_balance",
                    bal,
                    Sense::Eq,
                    0.0,
                );
                if t > 0 {
                    sys.add_linear(
                        bat("discharge_availability"),
                        "discharge_availability",
                        vec![
                            (bh.discharge, dt / bt.eta_discharge),
                            (hours[t - 1].batteries[k].stored, -1.0),
                        ],
                        Sense::Le,
                        0.0,
                    );
                }
                sys.add_linear(
                    bat("charge_rate"),
                    "charge_rate",
                    vec![(bh.charge, 1.0), (bd.capacity, -p.charge_rate_fraction)],
                    Sense::Le,
                    0.0,
                );
                sys.add_linear(
                    bat("discharge_rate"),
                    "discharge_rate",
                    vec![
                        (bh.discharge, 1.0),
                        (bd.capacity, -p.discharge_rate_fraction),
                    ],
                    Sense::Le,
                    0.0,
                );
                sys.add_linear(
                    bat("charge_mode"),
                    "charge_mode",
                    vec![(bh.charge, 1.0), (bh.charging, -p.big_m_kw)],
                    Sense::Le,
                    0.0,
                );
                sys.add_linear(
                    bat("discharge_mode"),
                    "discharge_mode",
                    vec![(bh.discharge, 1.0), (bh.charging, p.big_m_kw)],
                    Sense::Le,
                    p.big_m_kw,
                );
            }
            hours.push(hv);
        }

        for (k, bt) in cat.batteries.iter().enumerate() {
            if n_t > 1 {
                sys.add_linear(
                    format!("storage_cyclic[{sname},{bid},{}]", bt.name),
                    "storage_cyclic",
                    vec![
                        (hours[0].batteries[k].stored, 1.0),
                        (hours[n_t - 1].batteries[k].stored, -1.0),
                    ],
                    Sense::Eq,
                    0.0,
                );
            }
        }

        buildings.push(BuildingVars {
            panels,
            boiler_capacity,
            batteries,
            hours,
        });
    }

    Ok(SeasonFragment {
        season,
        system: sys,
        buildings,
    })
}

/// Concatenates season fragments and equates every capacity decision
/// across consecutive seasons.
pub fn link_seasons(fragments: Vec<SeasonFragment>) -> Result<DesModel> {
    if fragments.is_empty() {
        return Err(Error::invalid("no season fragments to link"));
    }
    let mut system = ConstraintSystem::new();
    let mut vars: Vec<Vec<BuildingVars>> = Vec::with_capacity(fragments.len());
    for frag in fragments {
        let offset = system.append(frag.system)?;
        let mut bvars = frag.buildings;
        for b in &mut bvars {
            b.shift(offset);
        }
        if let Some(prev) = vars.last() {
            if prev.len() != bvars.len() {
                return Err(Error::Dimension(
                    "season fragments differ in building count".into(),
                ));
            }
            for (k, (a, b)) in prev.iter().zip(&bvars).enumerate() {
                let (da, db) = (a.design_vars(), b.design_vars());
                if da.len() != db.len() {
                    return Err(Error::Dimension(
                        "season fragments differ in battery types".into(),
                    ));
                }
                // selection binaries follow from capacity links; only
                // panels, boiler and battery capacities are linked
                let link: Vec<(VarId, VarId)> = std::iter::once((a.panels, b.panels))
                    .chain(std::iter::once((a.boiler_capacity, b.boiler_capacity)))
                    .chain(
                        a.batteries
                            .iter()
                            .zip(&b.batteries)
                            .map(|(x, y)| (x.capacity, y.capacity)),
                    )
                    .collect();
                for (j, (u, v)) in link.into_iter().enumerate() {
                    system.add_linear(
                        format!("season_link[{},{k},{j}]", vars.len()),
                        "season_link",
                        vec![(v, 1.0), (u, -1.0)],
                        Sense::Eq,
                        0.0,
                    );
                }
            }
        }
        vars.push(bvars);
    }
    Ok(DesModel {
        system,
        vars,
        cost_terms: Vec::new(),
    })
}

/// Builds the annualised cost terms and writes them into the objective.
pub fn assemble_objective(model: &mut DesModel, case: &CaseData) -> Result<()> {
    if model.n_seasons() != case.seasons.len() {
        return Err(Error::Dimension(format!(
            "model has {} seasons, case has {}",
            model.n_seasons(),
            case.seasons.len()
        )));
    }
    let cat = &case.catalog;
    let pv = &cat.pv;
    let crf = capital_recovery_factor(cat.finance.interest_rate, cat.finance.lifetime_years);
    let mut terms: Vec<(CostTerm, Vec<(VarId, f64)>)> =
        CostTerm::ALL.iter().map(|t| (*t, Vec::new())).collect();
    let mut push = |term: CostTerm, v: VarId, c: f64| {
        if c != 0.0 {
            terms[term as usize].1.push((v, c));
        }
    };

    for design in &model.vars[0] {
        push(
            CostTerm::PvInvestment,
            design.panels,
            pv.invest_per_panel * crf,
        );
        push(
            CostTerm::BoilerInvestment,
            design.boiler_capacity,
            cat.boiler.invest_per_kw * crf,
        );
        for (bt, bd) in cat.batteries.iter().zip(&design.batteries) {
            push(
                CostTerm::BatteryInvestment,
                bd.capacity,
                bt.invest_per_kwh * crf,
            );
        }
    }

    for (s, spec) in case.seasons.iter().enumerate() {
        let days = spec.n_days;
        let dt = spec.dt_hours;
        let year_frac = days / 365.0;
        for bv in &model.vars[s] {
            push(
                CostTerm::PvOperation,
                bv.panels,
                pv.fixed_om_per_kw_yr * pv.panel_rating_kw * year_frac,
            );
            for (bt, bd) in cat.batteries.iter().zip(&bv.batteries) {
                push(
                    CostTerm::BatteryOperation,
                    bd.capacity,
                    bt.om_per_kwh_yr / dt * year_frac,
                );
            }
            for (t, h) in bv.hours.iter().enumerate() {
                let price = case.tariffs.grid_price[s][t];
                push(CostTerm::GridElectricity, h.grid, price * dt * days);
                let gen_var = pv.var_om_per_kwh * dt * days;
                let gen_fit = case.tariffs.fit_generation * dt * days;
                for v in [h.pv_used, h.pv_sold] {
                    push(CostTerm::PvOperation, v, gen_var);
                    push(CostTerm::GenerationIncome, v, gen_fit);
                }
                push(
                    CostTerm::ExportIncome,
                    h.pv_sold,
                    case.tariffs.fit_export * dt * days,
                );
                push(
                    CostTerm::BoilerOperation,
                    h.boiler,
                    dt * cat.boiler.gas_price_per_kwh / cat.boiler.efficiency * days,
                );
                for bh in &h.batteries {
                    push(CostTerm::GridElectricity, bh.charge_grid, price * dt * days);
                    push(CostTerm::PvOperation, bh.charge_pv, gen_var);
                    push(CostTerm::GenerationIncome, bh.charge_pv, gen_fit);
                }
            }
        }
    }

    for (term, list) in &terms {
        for (v, c) in list {
            model.system.add_objective(*v, term.sign() * c);
        }
    }
    model.cost_terms = terms;
    Ok(())
}

/// Full MILP design model for a case.
pub fn build_des_model(case: &CaseData) -> Result<DesModel> {
    let fragments = (0..case.seasons.len())
        .map(|s| build_seasonal_model(case, s))
        .collect::<Result<Vec<_>>>()?;
    let mut model = link_seasons(fragments)?;
    assemble_objective(&mut model, case)?;
    Ok(model)
}
