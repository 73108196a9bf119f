use std::fs;
use std::path::Path;

use desopf::cli::{run_cli, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK};
use serde_json::Value;

fn run(out: &Path, extra: &[&str]) -> i32 {
    let mut argv = vec!["desopf".to_string(), "--out".into(), out.display().to_string()];
    argv.extend(extra.iter().map(|s| s.to_string()));
    run_cli(argv)
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn milp_only_run_writes_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--method", "milp"]), EXIT_OK);
    let s = summary(dir.path());
    let cells = s["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0]["method"], "MILP");
    assert!(cells[0]["costs"]["Objective value (£)"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("timeseries/milp/power_sold.csv").exists());
    assert!(!dir.path().join("verification.csv").exists());
}

#[test]
fn audit_of_milp_schedule_fails_on_delta() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(dir.path(), &["--method", "bl1", "--fix-operations"]);
    assert_eq!(code, EXIT_INFEASIBLE);
    let s = summary(dir.path());
    let cell = &s["cells"][0];
    assert_eq!(cell["status"], "infeasible");
    assert!(cell["max_current_excess_pct"].as_f64().unwrap() > 20.0);
    let log = fs::read_to_string(dir.path().join("solve_log.txt")).unwrap();
    assert!(log.contains("violation Current"));
}

#[test]
fn full_matrix_on_wye_with_bundled_case_files() {
    let dir = tempfile::tempdir().unwrap();
    let case = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases/example");
    let code = run(
        dir.path(),
        &[
            "--case",
            case.to_str().unwrap(),
            "--config",
            "wye",
            "--scenario",
            "2",
            "--node-limit",
            "5",
            "--time-limit",
            "20",
        ],
    );
    assert_eq!(code, EXIT_OK);
    let s = summary(dir.path());
    let methods: Vec<&str> = s["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods, ["MILP", "BL-1", "BL-2", "MINLP"]);
    let csv = fs::read_to_string(dir.path().join("verification.csv")).unwrap();
    assert!(csv.starts_with("configuration,method,stat"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(dir.path().join("timeseries/wye_bl2/currents_1-2.csv").exists());
}

#[test]
fn usage_and_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--scenario", "3"]), EXIT_ERROR);
    assert_eq!(run(dir.path(), &["--method", "nope"]), EXIT_ERROR);
    let missing = dir.path().join("missing");
    assert_eq!(run(dir.path(), &["--case", missing.to_str().unwrap()]), EXIT_ERROR);
}

#[test]
fn write_example_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let case_dir = dir.path().join("case");
    assert_eq!(run(dir.path(), &["--write-example", case_dir.to_str().unwrap()]), EXIT_OK);
    let loaded = desopf::io::load_case(&case_dir).unwrap();
    assert_eq!(loaded, desopf::synth::example_case());
}
