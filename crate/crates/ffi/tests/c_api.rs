use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use desopf_ffi::*;

fn last_error() -> String {
    let p = desopf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn milp_on_bundled_example() {
    let case = desopf_case_example();
    unsafe {
        assert_eq!(desopf_case_building_count(case), 5);
        let mut opts = desopf_options_default();
        opts.method = DesopfMethod::Milp;
        let mut res = ptr::null_mut();
        assert_eq!(desopf_run(case, &opts, &mut res), DesopfStatus::Ok);
        assert_eq!(desopf_result_outcome(res), DesopfOutcome::Optimal);
        let mut obj = 0.0;
        assert_eq!(desopf_result_objective(res, &mut obj), DesopfStatus::Ok);
        assert!(obj > 0.0);
        let mut pv = 0.0;
        assert_eq!(desopf_result_pv_kw(res, &mut pv), DesopfStatus::Ok);
        assert!(pv > 0.0);
        let mut x = 0.0;
        assert_eq!(
            desopf_result_max_current_excess_pct(res, &mut x),
            DesopfStatus::NoValue
        );
        desopf_result_free(res);
        desopf_case_free(case);
    }
}

#[test]
fn audited_schedule_reports_infeasible_with_excess() {
    let case = desopf_case_example();
    unsafe {
        let mut opts = desopf_options_default();
        opts.method = DesopfMethod::Bl1;
        opts.fix_operations = 1;
        let mut res = ptr::null_mut();
        assert_eq!(desopf_run(case, &opts, &mut res), DesopfStatus::Ok);
        assert_eq!(desopf_result_outcome(res), DesopfOutcome::Infeasible);
        assert!(desopf_result_violation_count(res) > 0);
        let mut x = 0.0;
        assert_eq!(desopf_result_max_current_excess_pct(res, &mut x), DesopfStatus::Ok);
        assert!(x > 20.0);
        let mut obj = 0.0;
        assert_eq!(desopf_result_objective(res, &mut obj), DesopfStatus::NoValue);
        desopf_result_free(res);
        desopf_case_free(case);
    }
}

#[test]
fn argument_errors() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(desopf_case_load(ptr::null(), &mut out), DesopfStatus::NullArgument);
        let missing = CString::new("/nonexistent/desopf-case").unwrap();
        assert_eq!(desopf_case_load(missing.as_ptr(), &mut out), DesopfStatus::LoadFailed);
        assert!(out.is_null());
        assert!(!last_error().is_empty());

        let case = desopf_case_example();
        let mut opts = desopf_options_default();
        opts.scenario = 7;
        let mut res = ptr::null_mut();
        assert_eq!(desopf_run(case, &opts, &mut res), DesopfStatus::InvalidArgument);
        assert!(last_error().contains('7'));
        assert_eq!(desopf_run(case, ptr::null(), &mut res), DesopfStatus::NullArgument);
        desopf_case_free(case);
        desopf_case_free(ptr::null_mut());
        desopf_result_free(ptr::null_mut());
    }
}

#[test]
fn loads_the_bundled_case_directory() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases/example");
    let dir = CString::new(dir.to_str().unwrap()).unwrap();
    let mut case = ptr::null_mut();
    unsafe {
        assert_eq!(desopf_case_load(dir.as_ptr(), &mut case), DesopfStatus::Ok);
        assert_eq!(desopf_case_building_count(case), 5);
        desopf_case_free(case);
    }
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let src = "#include \"desopf.h\"\nint main(void) {\n  DesopfOptions o = desopf_options_default();\n  return o.scenario == 1 ? 0 : 1;\n}\n";
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("check.c");
    std::fs::write(&file, src).unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&file)
        .output()
    else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
