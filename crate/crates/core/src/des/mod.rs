//! Building-level distributed energy system design model.

pub mod case;
pub mod cost;
pub mod model;
pub mod solution;

pub use case::{
    BatteryTech, BoilerTech, BuildingData, CaseData, Finance, ModelParams, PvTech, Scenario,
    SeasonSpec, TariffSchedule, TechnologyCatalog,
};
pub use cost::{capital_recovery_factor, evaluate_cost_breakdown, CostBreakdown, CostTerm};
pub use model::{
    assemble_objective, build_des_model, build_seasonal_model, link_seasons, BuildingVars,
    DesModel, SeasonFragment,
};
pub use solution::DesignSolution;
