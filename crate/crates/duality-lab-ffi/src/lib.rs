//! C ABI for the duality lab: run experiments from TOML config text
//! through an opaque result handle, query metric rows, and call a few
//! scalar functions directly. All functions return a status code;
//! `dl_last_error_message` retrieves the message for the calling thread.
//!
//! Allocation contract: strings returned through `char**` out-params are
//! owned by the caller and must be released with `dl_string_free`;
//! handles with `dl_result_free`.

use duality_lab::error::Error;
use duality_lab::exp::{self, ExperimentConfig};
use duality_lab::{sbm, stochastic};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlStatus {
    DlOk = 0,
    DlErrParameter = 1,
    DlErrConfig = 2,
    DlErrRun = 3,
    DlErrNullPointer = 4,
    DlErrUtf8 = 5,
    DlErrIndex = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &Error) -> DlStatus {
    match err {
        Error::Parameter(_) | Error::Size(_) | Error::Range(_) | Error::Domain(_) => {
            DlStatus::DlErrParameter
        }
        Error::Config(_) => DlStatus::DlErrConfig,
        _ => DlStatus::DlErrRun,
    }
}

/// Opaque run result handle.
pub struct DlRunResult {
    inner: exp::RunResult,
}

/// Last error message for this thread; valid until the next failing call.
#[no_mangle]
pub extern "C" fn dl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version string (static storage).
#[no_mangle]
pub extern "C" fn dl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parse a TOML experiment config and run it; writes result artifacts to
/// the config's output directory (or `output_dir_override` when non-null)
/// and hands back an opaque result handle.
///
/// # Safety
/// `config_toml` must be a valid NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dl_run_config(
    config_toml: *const c_char,
    output_dir_override: *const c_char,
    out: *mut *mut DlRunResult,
) -> DlStatus {
    if config_toml.is_null() || out.is_null() {
        set_error("null pointer argument");
        return DlStatus::DlErrNullPointer;
    }
    let text = match CStr::from_ptr(config_toml).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("config text is not valid UTF-8");
            return DlStatus::DlErrUtf8;
        }
    };
    let mut config = match ExperimentConfig::from_toml_str(text) {
        Ok(c) => c,
        Err(e) => {
            set_error(&e.to_string());
            return status_of(&e);
        }
    };
    if !output_dir_override.is_null() {
        match CStr::from_ptr(output_dir_override).to_str() {
            Ok(dir) => config.output_dir = PathBuf::from(dir),
            Err(_) => {
                set_error("output dir is not valid UTF-8");
                return DlStatus::DlErrUtf8;
            }
        }
    }
    match exp::run_config(&config) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(DlRunResult { inner: result }));
            DlStatus::DlOk
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Number of metric rows in a result.
///
/// # Safety
/// `result` must be a handle from `dl_run_config` (or null, yielding 0).
#[no_mangle]
pub unsafe extern "C" fn dl_result_row_count(result: *const DlRunResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (*result).inner.rows.len()
}

/// One metric row, flattened for C consumption.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DlMetric {
    pub value: f64,
    /// Standard error (named to avoid the C `stderr` macro).
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: u64,
}

/// Fetch row `index`: numeric fields into `metric`, the metric name into
/// `name_out` (caller frees with `dl_string_free`). Either out-pointer
/// may be null to skip it.
///
/// # Safety
/// `result` must be a live handle; out-pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn dl_result_row(
    result: *const DlRunResult,
    index: usize,
    metric: *mut DlMetric,
    name_out: *mut *mut c_char,
) -> DlStatus {
    if result.is_null() {
        set_error("null result handle");
        return DlStatus::DlErrNullPointer;
    }
    let rows = &(*result).inner.rows;
    let Some(row) = rows.get(index) else {
        set_error("row index out of range");
        return DlStatus::DlErrIndex;
    };
    if !metric.is_null() {
        *metric = DlMetric {
            value: row.value,
            std_error: row.stderr,
            ci_low: row.ci_low,
            ci_high: row.ci_high,
            n_samples: row.n_samples,
        };
    }
    if !name_out.is_null() {
        let name: String = row.name.chars().filter(|&c| c != '\0').collect();
        *name_out = CString::new(name).unwrap().into_raw();
    }
    DlStatus::DlOk
}

/// Whole result as CSV text (caller frees with `dl_string_free`).
///
/// # Safety
/// `result` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dl_result_csv(
    result: *const DlRunResult,
    out: *mut *mut c_char,
) -> DlStatus {
    if result.is_null() || out.is_null() {
        set_error("null pointer argument");
        return DlStatus::DlErrNullPointer;
    }
    let csv: String = (*result).inner.csv().chars().filter(|&c| c != '\0').collect();
    *out = CString::new(csv).unwrap().into_raw();
    DlStatus::DlOk
}

/// Semantic config hash of the run (caller frees).
///
/// # Safety
/// `result` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dl_result_config_hash(
    result: *const DlRunResult,
    out: *mut *mut c_char,
) -> DlStatus {
    if result.is_null() || out.is_null() {
        set_error("null pointer argument");
        return DlStatus::DlErrNullPointer;
    }
    *out = CString::new((*result).inner.config_hash.clone())
        .unwrap()
        .into_raw();
    DlStatus::DlOk
}

/// Release a result handle.
///
/// # Safety
/// `result` must be a handle from `dl_run_config`, released once.
#[no_mangle]
pub unsafe extern "C" fn dl_result_free(result: *mut DlRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Release a string allocated by this library.
///
/// # Safety
/// `s` must come from this library, released once.
#[no_mangle]
pub unsafe extern "C" fn dl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Critical moment curve `p(rho) = pi / arccos(-rho)`; `rho = -1` yields
/// infinity.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dl_critical_curve(rho: f64, out: *mut f64) -> DlStatus {
    if out.is_null() {
        set_error("null out pointer");
        return DlStatus::DlErrNullPointer;
    }
    match sbm::critical_curve(rho) {
        Ok(v) => {
            *out = v;
            DlStatus::DlOk
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Brownian-bridge barrier-crossing probability for a step of length
/// `dt`; `diffusivity` is the variance per unit time of the gap process.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dl_bridge_crossing_prob(
    a: f64,
    b: f64,
    dt: f64,
    diffusivity: f64,
    out: *mut f64,
) -> DlStatus {
    if out.is_null() {
        set_error("null out pointer");
        return DlStatus::DlErrNullPointer;
    }
    match stochastic::bridge_crossing_prob(a, b, dt, diffusivity) {
        Ok(v) => {
            *out = v;
            DlStatus::DlOk
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}
