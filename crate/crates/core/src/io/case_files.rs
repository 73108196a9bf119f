//! Case directory layout.
//!
//! | file | content |
//! |---|---|
//! | `catalog.json` | technology and finance parameters; missing keys take defaults |
//! | `params.json` | optional modelling constants |
//! | `tariffs.json` | `grid_price` (number, 24-vector or one vector per season), `fit_export`, `fit_generation` |
//! | `seasons.json` | optional `[{"name", "n_days", "dt_hours"}]` |
//! | `buildings.csv` | `id,roof_area_m2,volume_m3` |
//! | `demand_<season>.csv`, `heat_<season>.csv` | `building,t1..tN` in kW |
//! | `irradiance.csv` | `season,t1..tN` in kW/m² |
//! | `network.json` | see [`crate::network::parse_network`] |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::des::case::default_season_days;
use crate::des::{BuildingData, CaseData, ModelParams, SeasonSpec, TariffSchedule, TechnologyCatalog};
use crate::error::{Error, Result};
use crate::network::{parse_network, NETWORK_FILE};

pub const CATALOG_FILE: &str = "catalog.json";
pub const PARAMS_FILE: &str = "params.json";
pub const TARIFFS_FILE: &str = "tariffs.json";
pub const SEASONS_FILE: &str = "seasons.json";
pub const BUILDINGS_FILE: &str = "buildings.csv";
pub const IRRADIANCE_FILE: &str = "irradiance.csv";

pub fn demand_file(season: &str) -> String {
    format!("demand_{season}.csv")
}

pub fn heat_file(season: &str) -> String {
    format!("heat_{season}.csv")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        Error::schema(
            path,
            format!("line {} column {} at `{}`: {}", inner.line(), inner.column(), e.path(), inner),
        )
    })
}

/// Fills keys missing from `given` with `defaults`, logging each one.
fn merge_defaults(given: &mut Value, defaults: &Value, at: &str, file: &Path) {
    match (given, defaults) {
        (Value::Object(g), Value::Object(d)) => {
            for (k, dv) in d {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match g.get_mut(k) {
                    Some(gv) => merge_defaults(gv, dv, &path, file),
                    None => {
                        warn!("{}: `{path}` not given, using default {dv}", file.display());
                        g.insert(k.clone(), dv.clone());
                    }
                }
            }
        }
        (Value::Array(g), Value::Array(d)) if !d.is_empty() => {
            for (i, gv) in g.iter_mut().enumerate() {
                merge_defaults(gv, &d[0], &format!("{at}[{i}]"), file);
            }
        }
        _ => {}
    }
}

fn load_with_defaults<T: Serialize + DeserializeOwned>(path: &Path, defaults: &T) -> Result<T> {
    let text = read(path)?;
    let mut value: Value = parse_json(&text, path)?;
    if !value.is_object() {
        return Err(Error::schema(path, "expected a JSON object"));
    }
    let d = serde_json::to_value(defaults).expect("defaults serialise");
    merge_defaults(&mut value, &d, "", path);
    serde_path_to_error::deserialize(value)
        .map_err(|e| Error::schema(path, format!("at `{}`: {}", e.path(), e.inner())))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PriceSpec {
    Flat(f64),
    Daily(Vec<f64>),
    Seasonal(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TariffFile {
    grid_price: Option<PriceSpec>,
    fit_export: Option<f64>,
    fit_generation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeasonEntry {
    name: String,
    n_days: f64,
    #[serde(default = "one")]
    dt_hours: f64,
}

fn one() -> f64 {
    1.0
}

/// Default grid price, £/kWh.
pub const DEFAULT_GRID_PRICE: f64 = 0.1389;

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::schema(path, format!("{other:?}")),
        })
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_num(path: &Path, rec: &csv::StringRecord, col: usize, header: &csv::StringRecord) -> Result<f64> {
    let field = header.get(col).unwrap_or("?");
    let raw = rec.get(col).unwrap_or("");
    raw.parse::<f64>().map_err(|_| {
        Error::schema(path, format!("line {} field `{field}`: `{raw}` is not a number", line_of(rec)))
    })
}

/// Rows of `label,v1..vN`, keyed by label, in file order.
fn read_profiles(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rdr = csv_reader(path)?;
    let header = rdr
        .headers()
        .map_err(|e| Error::schema(path, e.to_string()))?
        .clone();
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::schema(path, e.to_string()))?;
        let label = rec.get(0).unwrap_or("").to_string();
        if out.iter().any(|(l, _)| *l == label) {
            return Err(Error::schema(path, format!("line {}: duplicate row `{label}`", line_of(&rec))));
        }
        let vals = (1..rec.len())
            .map(|c| parse_num(path, &rec, c, &header))
            .collect::<Result<Vec<_>>>()?;
        out.push((label, vals));
    }
    Ok(out)
}

fn profile_row(path: &Path, rows: &[(String, Vec<f64>)], label: &str, n_t: usize) -> Result<Vec<f64>> {
    let (_, v) = rows
        .iter()
        .find(|(l, _)| l == label)
        .ok_or_else(|| Error::schema(path, format!("no row for `{label}`")))?;
    if v.len() != n_t {
        return Err(Error::schema(
            path,
            format!("row `{label}` has {} values, expected {n_t}", v.len()),
        ));
    }
    Ok(v.clone())
}

/// Loads and validates a case directory.
pub fn load_case(dir: &Path) -> Result<CaseData> {
    if !dir.is_dir() {
        return Err(Error::invalid(format!("case directory {} does not exist", dir.display())));
    }
    let p = |f: &str| dir.join(f);

    let catalog_path = p(CATALOG_FILE);
    let catalog = if catalog_path.exists() {
        load_with_defaults(&catalog_path, &TechnologyCatalog::default())?
    } else {
        warn!("{} not found, using the default technology catalog", catalog_path.display());
        TechnologyCatalog::default()
    };
    let params_path = p(PARAMS_FILE);
    let params = if params_path.exists() {
        load_with_defaults(&params_path, &ModelParams::default())?
    } else {
        ModelParams::default()
    };

    let irr_path = p(IRRADIANCE_FILE);
    let irradiance = read_profiles(&irr_path)?;
    if irradiance.is_empty() {
        return Err(Error::schema(&irr_path, "no seasons"));
    }
    let seasons_path = p(SEASONS_FILE);
    let entries: Vec<SeasonEntry> = if seasons_path.exists() {
        parse_json(&read(&seasons_path)?, &seasons_path)?
    } else {
        let days = default_season_days(irradiance.len()).ok_or_else(|| {
            Error::schema(
                &seasons_path,
                format!("required for {} seasons (defaults exist for 1 or 4)", irradiance.len()),
            )
        })?;
        warn!("{} not found, using season lengths {days:?} days", seasons_path.display());
        irradiance
            .iter()
            .zip(days)
            .map(|((name, _), n_days)| SeasonEntry {
                name: name.clone(),
                n_days,
                dt_hours: 1.0,
            })
            .collect()
    };
    let n_t = irradiance[0].1.len();
    let seasons = entries
        .iter()
        .map(|e| {
            Ok(SeasonSpec {
                name: e.name.clone(),
                n_days: e.n_days,
                dt_hours: e.dt_hours,
                irradiance_kw_m2: profile_row(&irr_path, &irradiance, &e.name, n_t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let tariffs_path = p(TARIFFS_FILE);
    let tf: TariffFile = if tariffs_path.exists() {
        parse_json(&read(&tariffs_path)?, &tariffs_path)?
    } else {
        TariffFile {
            grid_price: None,
            fit_export: None,
            fit_generation: None,
        }
    };
    let defaults = TariffSchedule::flat(DEFAULT_GRID_PRICE, seasons.len(), n_t);
    let grid_price = match tf.grid_price {
        None => {
            warn!("{}: `grid_price` not given, using {DEFAULT_GRID_PRICE}", tariffs_path.display());
            defaults.grid_price.clone()
        }
        Some(PriceSpec::Flat(v)) => vec![vec![v; n_t]; seasons.len()],
        Some(PriceSpec::Daily(v)) => vec![v; seasons.len()],
        Some(PriceSpec::Seasonal(v)) => v,
    };
    let fit_export = tf.fit_export.unwrap_or_else(|| {
        warn!("{}: `fit_export` not given, using {}", tariffs_path.display(), defaults.fit_export);
        defaults.fit_export
    });
    let fit_generation = tf.fit_generation.unwrap_or_else(|| {
        warn!("{}: `fit_generation` not given, using {}", tariffs_path.display(), defaults.fit_generation);
        defaults.fit_generation
    });
    let tariffs = TariffSchedule {
        grid_price,
        fit_export,
        fit_generation,
    };

    let b_path = p(BUILDINGS_FILE);
    let mut rdr = csv_reader(&b_path)?;
    let header = rdr
        .headers()
        .map_err(|e| Error::schema(&b_path, e.to_string()))?
        .clone();
    let expected = ["id", "roof_area_m2", "volume_m3"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::schema(
            &b_path,
            format!("line 1: header must be `{}`", expected.join(",")),
        ));
    }
    let mut buildings = Vec::new();
    let mut demand_rows: BTreeMap<String, Vec<(String, Vec<f64>)>> = BTreeMap::new();
    let mut heat_rows: BTreeMap<String, Vec<(String, Vec<f64>)>> = BTreeMap::new();
    for s in &seasons {
        demand_rows.insert(s.name.clone(), read_profiles(&p(&demand_file(&s.name)))?);
        heat_rows.insert(s.name.clone(), read_profiles(&p(&heat_file(&s.name)))?);
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::schema(&b_path, e.to_string()))?;
        if rec.len() != 3 {
            return Err(Error::schema(
                &b_path,
                format!("line {}: expected 3 fields, found {}", line_of(&rec), rec.len()),
            ));
        }
        let id = rec[0].to_string();
        if buildings.iter().any(|b: &BuildingData| b.id == id) {
            return Err(Error::schema(
                &b_path,
                format!("line {}: duplicate building id `{id}`", line_of(&rec)),
            ));
        }
        let roof = parse_num(&b_path, &rec, 1, &header)?;
        let volume = parse_num(&b_path, &rec, 2, &header)?;
        let mut elec = Vec::new();
        let mut heat = Vec::new();
        for s in &seasons {
            elec.push(profile_row(&p(&demand_file(&s.name)), &demand_rows[&s.name], &id, n_t)?);
            heat.push(profile_row(&p(&heat_file(&s.name)), &heat_rows[&s.name], &id, n_t)?);
        }
        buildings.push(BuildingData {
            id,
            roof_area_m2: roof,
            volume_m3: volume,
            elec_demand_kw: elec,
            heat_demand_kw: heat,
        });
    }
    if buildings.is_empty() {
        return Err(Error::schema(&b_path, "no buildings"));
    }

    let net_path = p(NETWORK_FILE);
    let network = parse_network(&read(&net_path)?, &net_path)?;

    let case = CaseData {
        catalog,
        params,
        tariffs,
        buildings,
        seasons,
        network,
    };
    case.validate()?;
    Ok(case)
}

fn profile_csv(first: &str, rows: impl Iterator<Item = (String, Vec<f64>)>, n_t: usize) -> String {
    let mut out = String::from(first);
    for t in 1..=n_t {
        out.push_str(&format!(",t{t}"));
    }
    out.push('\n');
    for (label, vals) in rows {
        out.push_str(&label);
        for v in vals {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Writes every file of the layout, creating `dir` if needed.
pub fn write_case(case: &CaseData, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        write(&path, &text)?;
        written.push(path);
        Ok(())
    };
    put(CATALOG_FILE, json(&case.catalog))?;
    put(PARAMS_FILE, json(&case.params))?;
    put(TARIFFS_FILE, json(&case.tariffs))?;
    let seasons: Vec<SeasonEntry> = case
        .seasons
        .iter()
        .map(|s| SeasonEntry {
            name: s.name.clone(),
            n_days: s.n_days,
            dt_hours: s.dt_hours,
        })
        .collect();
    put(SEASONS_FILE, json(&seasons))?;
    let mut b = String::from("id,roof_area_m2,volume_m3\n");
    for bd in &case.buildings {
        b.push_str(&format!("{},{},{}\n", bd.id, bd.roof_area_m2, bd.volume_m3));
    }
    put(BUILDINGS_FILE, b)?;
    let n_t = case.n_t();
    for (s, spec) in case.seasons.iter().enumerate() {
        let rows = |f: fn(&BuildingData) -> &Vec<Vec<f64>>| {
            case.buildings.iter().map(move |b| (b.id.clone(), f(b)[s].clone()))
        };
        put(&demand_file(&spec.name), profile_csv("building", rows(|b| &b.elec_demand_kw), n_t))?;
        put(&heat_file(&spec.name), profile_csv("building", rows(|b| &b.heat_demand_kw), n_t))?;
    }
    put(
        IRRADIANCE_FILE,
        profile_csv(
            "season",
            case.seasons.iter().map(|s| (s.name.clone(), s.irradiance_kw_m2.clone())),
            n_t,
        ),
    )?;
    put(NETWORK_FILE, json(&case.network))?;
    Ok(written)
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::example_case;

    #[test]
    fn roundtrip_example() {
        let dir = tempfile::tempdir().unwrap();
        let case = example_case();
        write_case(&case, dir.path()).unwrap();
        assert_eq!(load_case(dir.path()).unwrap(), case);
    }

    #[test]
    fn short_demand_row_names_row() {
        let dir = tempfile::tempdir().unwrap();
        write_case(&example_case(), dir.path()).unwrap();
        let f = dir.path().join("demand_summer.csv");
        let text = fs::read_to_string(&f).unwrap();
        let patched: Vec<String> = text
            .lines()
            .map(|l| {
                if l.starts_with("C,") {
                    l.rsplit_once(',').unwrap().0.to_string()
                } else {
                    l.to_string()
                }
            })
            .collect();
        fs::write(&f, patched.join("\n") + "\n").unwrap();
        let err = load_case(dir.path()).unwrap_err().to_string();
        assert!(err.contains("demand_summer.csv"), "{err}");
        assert!(err.contains("`C`") && err.contains("23"), "{err}");
    }

    #[test]
    fn empty_buildings_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_case(&example_case(), dir.path()).unwrap();
        fs::write(dir.path().join(BUILDINGS_FILE), "id,roof_area_m2,volume_m3\n").unwrap();
        let err = load_case(dir.path()).unwrap_err().to_string();
        assert!(err.contains("no buildings"), "{err}");
    }

    #[test]
    fn duplicate_building_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_case(&example_case(), dir.path()).unwrap();
        fs::write(
            dir.path().join(BUILDINGS_FILE),
            "id,roof_area_m2,volume_m3\nA,150,5\nA,150,5\n",
        )
        .unwrap();
        let err = load_case(dir.path()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("duplicate"), "{err}");
    }

    #[test]
    fn bad_number_reports_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        write_case(&example_case(), dir.path()).unwrap();
        fs::write(
            dir.path().join(BUILDINGS_FILE),
            "id,roof_area_m2,volume_m3\nA,150,5\nB,lots,5\n",
        )
        .unwrap();
        let err = load_case(dir.path()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("roof_area_m2"), "{err}");
    }

    #[test]
    fn partial_catalog_and_optional_files_default() {
        let dir = tempfile::tempdir().unwrap();
        let case = example_case();
        write_case(&case, dir.path()).unwrap();
        fs::write(dir.path().join(CATALOG_FILE), r#"{"pv": {"efficiency": 0.2}}"#).unwrap();
        fs::write(dir.path().join(TARIFFS_FILE), r#"{"grid_price": 0.2}"#).unwrap();
        fs::remove_file(dir.path().join(SEASONS_FILE)).unwrap();
        fs::remove_file(dir.path().join(PARAMS_FILE)).unwrap();
        let loaded = load_case(dir.path()).unwrap();
        assert_eq!(loaded.catalog.pv.efficiency, 0.2);
        assert_eq!(loaded.catalog.pv.invest_per_panel, 450.0);
        assert_eq!(loaded.catalog.batteries, case.catalog.batteries);
        assert_eq!(loaded.tariffs.grid_price[3][5], 0.2);
        assert_eq!(loaded.tariffs.fit_export, 0.0477);
        assert_eq!(loaded.seasons[1].n_days, 91.0);
    }
}
