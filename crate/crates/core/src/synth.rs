//! Bundled example case and seeded random cases of the same shape.
//!
//! Demand and irradiance curves are representative UK-style daily profiles,
//! scaled so that each building's peaks equal the tabulated values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::des::case::default_season_days;
use crate::des::{
    BuildingData, CaseData, ModelParams, SeasonSpec, TariffSchedule, TechnologyCatalog,
};
use crate::network::{Branch, Bus, BusKind, Configuration, NetworkTopology, PerUnitBases};

pub const SEASON_NAMES: [&str; 4] = ["winter", "spring", "summer", "autumn"];

/// Daily irradiation, kWh/m², and daylight window (first, last hour) per season.
const DAILY_IRRADIATION: [f64; 4] = [1.2, 3.5, 5.0, 2.3];
const DAYLIGHT: [(f64, f64); 4] = [(8.0, 16.0), (6.0, 19.5), (4.5, 21.0), (7.0, 17.5)];

const ELEC_SEASON: [f64; 4] = [1.0, 0.85, 0.75, 0.9];
const HEAT_SEASON: [f64; 4] = [1.0, 0.55, 0.2, 0.6];

/// `(id, peak elec kW, peak heat kW, roof m², volume m³, daytime profile)`.
pub const EXAMPLE_BUILDINGS: [(&str, f64, f64, f64, f64, bool); 5] = [
    ("A", 3.8, 10.0, 150.0, 5.0, false),
    ("B", 18.4, 47.6, 700.0, 5.0, true),
    ("C", 14.1, 27.1, 600.0, 5.0, true),
    ("D", 3.8, 6.4, 150.0, 5.0, false),
    ("E", 12.0, 31.3, 550.0, 5.0, true),
];

/// Half-sine irradiance over the daylight window, scaled to the daily total.
pub fn irradiance_profile(daily_kwh_m2: f64, sunrise: f64, sunset: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..24)
        .map(|h| {
            let mid = h as f64 + 0.5;
            if mid <= sunrise || mid >= sunset {
                0.0
            } else {
                (std::f64::consts::PI * (mid - sunrise) / (sunset - sunrise)).sin()
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| r4(v * daily_kwh_m2 / total)).collect()
}

/// Rounds to 4 decimals so written case files stay readable.
fn r4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    (-((h - centre) / width).powi(2)).exp()
}

/// Unit-peak electricity shape.
pub fn electricity_shape(daytime: bool) -> Vec<f64> {
    let raw: Vec<f64> = (0..24)
        .map(|h| {
            let h = h as f64;
            if daytime {
                0.3 + 0.6 * (bump(h, 10.0, 2.5) + bump(h, 15.0, 2.5)).min(1.0)
                    + 0.15 * bump(h, 19.0, 1.5)
            } else {
                0.3 + 0.35 * bump(h, 8.0, 1.5) + 0.7 * bump(h, 19.0, 2.0)
            }
        })
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    raw.iter().map(|v| v / max).collect()
}

/// Unit-peak heat shape.
pub fn heat_shape() -> Vec<f64> {
    let raw: Vec<f64> = (0..24)
        .map(|h| {
            let h = h as f64;
            0.15 + 0.85 * bump(h, 7.5, 1.5) + 0.7 * bump(h, 18.5, 2.5)
        })
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    raw.iter().map(|v| v / max).collect()
}

fn building(
    id: &str,
    peak_e: f64,
    peak_h: f64,
    roof: f64,
    vol: f64,
    daytime: bool,
) -> BuildingData {
    let es = electricity_shape(daytime);
    let hs = heat_shape();
    BuildingData {
        id: id.to_string(),
        roof_area_m2: roof,
        volume_m3: vol,
        elec_demand_kw: ELEC_SEASON
            .iter()
            .map(|m| es.iter().map(|v| r4(v * m * peak_e)).collect())
            .collect(),
        heat_demand_kw: HEAT_SEASON
            .iter()
            .map(|m| hs.iter().map(|v| r4(v * m * peak_h)).collect())
            .collect(),
    }
}

fn seasons(irr_scale: f64) -> Vec<SeasonSpec> {
    let days = default_season_days(4).expect("four seasons");
    (0..4)
        .map(|s| SeasonSpec {
            name: SEASON_NAMES[s].to_string(),
            n_days: days[s],
            dt_hours: 1.0,
            irradiance_kw_m2: irradiance_profile(
                DAILY_IRRADIATION[s] * irr_scale,
                DAYLIGHT[s].0,
                DAYLIGHT[s].1,
            ),
        })
        .collect()
}

/// Ten-bus radial feeder: trunk 1-2-3-4-5-6 with laterals 3-7, 4-8, 5-9,
/// 6-10. Buildings A-D sit on the lateral ends, E on bus 6.
pub fn example_network() -> NetworkTopology {
    let load = |id: u32, b: &str| Bus {
        id,
        kind: BusKind::LoadGenerator,
        buildings: vec![b.to_string()],
    };
    let passive = |id: u32| Bus {
        id,
        kind: BusKind::Passive,
        buildings: vec![],
    };
    let br = |from, to, r_ohm, x_ohm, i_max_a| Branch {
        from,
        to,
        r_ohm,
        x_ohm,
        i_max_a,
    };
    NetworkTopology {
        buses: vec![
            Bus {
                id: 1,
                kind: BusKind::Slack,
                buildings: vec![],
            },
            passive(2),
            passive(3),
            passive(4),
            passive(5),
            load(6, "E"),
            load(7, "A"),
            load(8, "B"),
            load(9, "C"),
            load(10, "D"),
        ],
        branches: vec![
            br(1, 2, 0.0032, 0.0128, 110.0),
            br(2, 3, 0.00994, 0.0029, 300.0),
            br(3, 4, 0.00994, 0.0029, 300.0),
            br(4, 5, 0.00994, 0.0029, 300.0),
            br(5, 6, 0.00994, 0.0029, 300.0),
            br(3, 7, 0.0345, 0.0026, 200.0),
            br(4, 8, 0.0345, 0.0026, 200.0),
            br(5, 9, 0.0345, 0.0026, 200.0),
            br(6, 10, 0.0345, 0.0026, 200.0),
        ],
        slack_bus: 1,
        v_bounds_pu: [0.94, 1.06],
        bases: PerUnitBases::default(),
        configuration: Configuration::Delta,
    }
}

/// The bundled five-building case.
pub fn example_case() -> CaseData {
    CaseData {
        catalog: TechnologyCatalog::default(),
        params: ModelParams::default(),
        tariffs: TariffSchedule::flat(0.1389, 4, 24),
        buildings: EXAMPLE_BUILDINGS
            .iter()
            .map(|&(id, e, h, roof, vol, day)| building(id, e, h, roof, vol, day))
            .collect(),
        seasons: seasons(1.0),
        network: example_network(),
    }
}

/// Random case with the example's shape: perturbed demands, roofs,
/// irradiance level, line impedances and limits.
pub fn random_case(seed: u64) -> CaseData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut case = example_case();
    for b in &mut case.buildings {
        let fe = rng.random_range(0.7..1.3);
        let fh = rng.random_range(0.7..1.3);
        for row in &mut b.elec_demand_kw {
            row.iter_mut().for_each(|v| *v = r4(*v * fe));
        }
        for row in &mut b.heat_demand_kw {
            row.iter_mut().for_each(|v| *v = r4(*v * fh));
        }
        b.roof_area_m2 *= rng.random_range(0.4..1.0);
        b.volume_m3 = rng.random_range(1.0..5.0);
    }
    case.seasons = seasons(rng.random_range(0.85..1.15));
    for br in &mut case.network.branches {
        br.r_ohm *= rng.random_range(0.8..1.2);
        br.x_ohm *= rng.random_range(0.8..1.2);
        br.i_max_a *= rng.random_range(0.8..1.5);
    }
    case
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_matches_tabulated_peaks() {
        let case = example_case();
        case.validate().unwrap();
        for (b, &(id, e, h, roof, vol, _)) in case.buildings.iter().zip(&EXAMPLE_BUILDINGS) {
            assert_eq!(b.id, id);
            assert!((b.peak_elec() - e).abs() < 1e-9, "{id}");
            assert!((b.peak_heat() - h).abs() < 1e-9, "{id}");
            assert_eq!((b.roof_area_m2, b.volume_m3), (roof, vol));
        }
    }

    #[test]
    fn annual_irradiation_is_uk_like() {
        let case = example_case();
        let annual: f64 = case
            .seasons
            .iter()
            .map(|s| s.n_days * s.irradiance_kw_m2.iter().sum::<f64>())
            .sum();
        assert!((1000.0..1200.0).contains(&annual), "{annual}");
    }

    #[test]
    fn random_cases_validate() {
        for seed in 0..20 {
            random_case(seed).validate().unwrap();
        }
        assert_eq!(random_case(3), random_case(3));
    }
}
