//! C interface to the desopf optimiser.
//!
//! Cases and results are opaque handles owned by the caller and released
//! with the matching `_free` function. Every fallible call returns a
//! [`DesopfStatus`]; the text of the last error on the calling thread is
//! available from [`desopf_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use desopf::backend::{backend_by_name, resolve_backend_name};
use desopf::des::{CaseData, Scenario};
use desopf::io::load_case;
use desopf::methods::{
    max_excess_pct, run_chain, Method, MethodContext, MethodResult, MethodSettings, MethodStatus,
    ViolationKind,
};
use desopf::network::Configuration;
use desopf::synth::example_case;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesopfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    LoadFailed = 3,
    SolveFailed = 4,
    NoValue = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesopfMethod {
    Milp = 0,
    Bl1 = 1,
    Bl2 = 2,
    Minlp = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesopfConfiguration {
    Delta = 0,
    Wye = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesopfOutcome {
    Optimal = 0,
    LocallyOptimal = 1,
    Infeasible = 2,
    NoIncumbent = 3,
    Failed = 4,
}

/// Run options. Obtain defaults from [`desopf_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DesopfOptions {
    pub method: DesopfMethod,
    pub configuration: DesopfConfiguration,
    /// 1 = no storage, 2 = with storage.
    pub scenario: u8,
    /// Nonzero: BL-1 also fixes the MILP schedule.
    pub fix_operations: u8,
    pub node_limit: usize,
    pub time_limit_s: f64,
}

/// Opaque case handle.
pub struct DesopfCase {
    inner: CaseData,
}

/// Opaque result handle.
pub struct DesopfResult {
    inner: MethodResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn guard(f: impl FnOnce() -> DesopfStatus) -> DesopfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            DesopfStatus::Panic
        }
    }
}

/// Last error message on this thread, or NULL. Valid until the next call
/// that fails on the same thread.
#[no_mangle]
pub extern "C" fn desopf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn desopf_options_default() -> DesopfOptions {
    let s = MethodSettings::default();
    DesopfOptions {
        method: DesopfMethod::Minlp,
        configuration: DesopfConfiguration::Delta,
        scenario: 1,
        fix_operations: 0,
        node_limit: s.node_limit,
        time_limit_s: s.time_limit,
    }
}

/// The bundled five-building example case.
#[no_mangle]
pub extern "C" fn desopf_case_example() -> *mut DesopfCase {
    Box::into_raw(Box::new(DesopfCase {
        inner: example_case(),
    }))
}

/// Loads a case directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn desopf_case_load(dir: *const c_char, out: *mut *mut DesopfCase) -> DesopfStatus {
    guard(|| {
        if dir.is_null() || out.is_null() {
            set_error("null argument");
            return DesopfStatus::NullArgument;
        }
        *out = ptr::null_mut();
        let Ok(dir) = CStr::from_ptr(dir).to_str() else {
            set_error("path is not valid UTF-8");
            return DesopfStatus::InvalidArgument;
        };
        match load_case(Path::new(dir)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DesopfCase { inner }));
                DesopfStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                DesopfStatus::LoadFailed
            }
        }
    })
}

/// # Safety
/// `case` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn desopf_case_free(case: *mut DesopfCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// # Safety
/// `case` must be a live case handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn desopf_case_building_count(case: *const DesopfCase) -> usize {
    case.as_ref().map_or(0, |c| c.inner.buildings.len())
}

/// Runs one method (computing its prerequisites) and stores the result.
/// Infeasible outcomes are still `DESOPF_STATUS_OK`; inspect them with
/// [`desopf_result_outcome`].
///
/// # Safety
/// `case` must be a live case handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn desopf_run(
    case: *const DesopfCase,
    options: *const DesopfOptions,
    out: *mut *mut DesopfResult,
) -> DesopfStatus {
    guard(|| {
        let (Some(case), Some(opts)) = (case.as_ref(), options.as_ref()) else {
            set_error("null argument");
            return DesopfStatus::NullArgument;
        };
        if out.is_null() {
            set_error("null argument");
            return DesopfStatus::NullArgument;
        }
        *out = ptr::null_mut();
        let scenario = match Scenario::from_number(opts.scenario) {
            Ok(s) => s,
            Err(e) => {
                set_error(e.to_string());
                return DesopfStatus::InvalidArgument;
            }
        };
        if opts.time_limit_s.is_nan() || opts.time_limit_s <= 0.0 {
            set_error("time limit must be positive");
            return DesopfStatus::InvalidArgument;
        }
        let method = match opts.method {
            DesopfMethod::Milp => Method::Milp,
            DesopfMethod::Bl1 => Method::Bl1,
            DesopfMethod::Bl2 => Method::Bl2,
            DesopfMethod::Minlp => Method::Minlp,
        };
        let configuration = match opts.configuration {
            DesopfConfiguration::Delta => Configuration::Delta,
            DesopfConfiguration::Wye => Configuration::Wye,
        };
        let data = case.inner.for_scenario(scenario);
        let backend = match backend_by_name(&resolve_backend_name(None)) {
            Ok(b) => b,
            Err(e) => {
                set_error(e.to_string());
                return DesopfStatus::SolveFailed;
            }
        };
        let settings = MethodSettings {
            fix_operations: opts.fix_operations != 0,
            node_limit: opts.node_limit,
            time_limit: opts.time_limit_s,
            ..MethodSettings::default()
        };
        let ctx = MethodContext {
            case: &data,
            backend: backend.as_ref(),
            settings: &settings,
        };
        match run_chain(&ctx, configuration, &[method], None) {
            Ok(mut res) => match res.pop() {
                Some(inner) => {
                    *out = Box::into_raw(Box::new(DesopfResult { inner }));
                    DesopfStatus::Ok
                }
                None => {
                    set_error("no result produced");
                    DesopfStatus::SolveFailed
                }
            },
            Err(e) => {
                set_error(e.to_string());
                DesopfStatus::SolveFailed
            }
        }
    })
}

/// # Safety
/// `result` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn desopf_result_free(result: *mut DesopfResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be a live result handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn desopf_result_outcome(result: *const DesopfResult) -> DesopfOutcome {
    match result.as_ref().map(|r| r.inner.status) {
        Some(MethodStatus::Optimal) => DesopfOutcome::Optimal,
        Some(MethodStatus::LocallyOptimal) => DesopfOutcome::LocallyOptimal,
        Some(MethodStatus::Infeasible) => DesopfOutcome::Infeasible,
        Some(MethodStatus::NoIncumbent) => DesopfOutcome::NoIncumbent,
        Some(MethodStatus::Failed) | None => DesopfOutcome::Failed,
    }
}

unsafe fn write_value(result: *const DesopfResult, out: *mut f64, f: impl FnOnce(&MethodResult) -> Option<f64>) -> DesopfStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            set_error("null argument");
            return DesopfStatus::NullArgument;
        };
        if out.is_null() {
            set_error("null argument");
            return DesopfStatus::NullArgument;
        }
        match f(&r.inner) {
            Some(v) => {
                *out = v;
                DesopfStatus::Ok
            }
            None => {
                set_error("value not available for this result");
                DesopfStatus::NoValue
            }
        }
    })
}

/// Annualised cost in £/yr. `DESOPF_STATUS_NO_VALUE` for infeasible results.
///
/// # Safety
/// `result` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn desopf_result_objective(result: *const DesopfResult, out: *mut f64) -> DesopfStatus {
    write_value(result, out, |r| r.objective)
}

/// Installed PV capacity, kWp.
///
/// # Safety
/// As [`desopf_result_objective`].
#[no_mangle]
pub unsafe extern "C" fn desopf_result_pv_kw(result: *const DesopfResult, out: *mut f64) -> DesopfStatus {
    write_value(result, out, |r| r.design.as_ref().map(|d| d.total_pv_kw()))
}

/// Installed battery capacity, kWh.
///
/// # Safety
/// As [`desopf_result_objective`].
#[no_mangle]
pub unsafe extern "C" fn desopf_result_storage_kwh(result: *const DesopfResult, out: *mut f64) -> DesopfStatus {
    write_value(result, out, |r| r.design.as_ref().map(|d| d.total_storage_kwh()))
}

/// Largest branch current excess over its limit, percent (0 when none).
/// Needs a network solution, so MILP results give `DESOPF_STATUS_NO_VALUE`.
///
/// # Safety
/// As [`desopf_result_objective`].
#[no_mangle]
pub unsafe extern "C" fn desopf_result_max_current_excess_pct(
    result: *const DesopfResult,
    out: *mut f64,
) -> DesopfStatus {
    write_value(result, out, |r| {
        r.opf
            .as_ref()
            .map(|_| max_excess_pct(&r.violations, ViolationKind::Current))
    })
}

/// Number of current and voltage limit violations.
///
/// # Safety
/// `result` must be a live result handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn desopf_result_violation_count(result: *const DesopfResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.violations.len())
}
