//! C ABI over collidesim.
//!
//! Every function returns a `CsStatus` code; on failure the message is available from
//! `cs_last_error()` on the same thread. Handles are opaque and must be released with the
//! matching `*_free` function. The `execution.dense_limit` key, when set, applies process-wide.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use collidesim::cli;
use collidesim::config::{ExperimentConfig, RawConfig};
use collidesim::estimator::EstimateReport;
use collidesim::validation;
use collidesim::Error;

/// Status codes. Library errors use the same values as the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    /// Config, parse, dimension or argument error.
    InvalidInput = 1,
    DenseLimit = 2,
    /// Numerical failure or malformed program.
    Numerical = 3,
    /// A validation criterion ran and failed.
    ValidationFailed = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Key/value experiment configuration.
pub struct CsConfig {
    raw: RawConfig,
}

/// Result of one estimate.
pub struct CsReport {
    report: EstimateReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> CsStatus {
    match err.exit_code() {
        2 => CsStatus::DenseLimit,
        3 => CsStatus::Numerical,
        _ => CsStatus::InvalidInput,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), CsStatus>) -> CsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            CsStatus::Panic
        }
    }
}

fn lib<T>(r: collidesim::Result<T>) -> Result<T, CsStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, CsStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(CsStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        CsStatus::InvalidInput
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, CsStatus> {
    p.as_ref().ok_or_else(|| {
        set_error(format!("{what} is null"));
        CsStatus::NullPointer
    })
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, CsStatus> {
    p.as_mut().ok_or_else(|| {
        set_error(format!("{what} is null"));
        CsStatus::NullPointer
    })
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn cs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Configuration with every key at its default.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_config_new(out: *mut *mut CsConfig) -> CsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(CsConfig { raw: RawConfig::default() }));
        Ok(())
    })
}

/// Load a `.json` or key/value config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_config_load(path: *const c_char, out: *mut *mut CsConfig) -> CsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let raw = lib(RawConfig::load(Path::new(path)))?;
        *out = Box::into_raw(Box::new(CsConfig { raw }));
        Ok(())
    })
}

/// Set one `section.key` to `value`.
///
/// # Safety
/// `cfg` must come from `cs_config_new` or `cs_config_load`; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cs_config_set(cfg: *mut CsConfig, key: *const c_char, value: *const c_char) -> CsStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        let (key, value) = (str_arg(key, "key")?, str_arg(value, "value")?);
        lib(cfg.raw.set(key, value))
    })
}

/// Copy the 16-hex-digit config hash into `buf` (at least 17 bytes).
///
/// # Safety
/// `cfg` must be a live handle and `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cs_config_hash(cfg: *const CsConfig, buf: *mut c_char, len: usize) -> CsStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        if buf.is_null() {
            set_error("buf is null");
            return Err(CsStatus::NullPointer);
        }
        let hash = cfg.raw.hash();
        if len <= hash.len() {
            set_error(format!("buffer of {len} bytes is too small"));
            return Err(CsStatus::InvalidInput);
        }
        ptr::copy_nonoverlapping(hash.as_ptr().cast::<c_char>(), buf, hash.len());
        *buf.add(hash.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_config_free(cfg: *mut CsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn experiment(cfg: &CsConfig) -> Result<ExperimentConfig, CsStatus> {
    lib(ExperimentConfig::from_raw(&cfg.raw))
}

/// Run the configured estimate; no files are written.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_estimate(cfg: *const CsConfig, out: *mut *mut CsReport) -> CsStatus {
    guard(|| {
        let cfg = experiment(ref_arg(cfg, "cfg")?)?;
        let out = out_arg(out, "out")?;
        let (_, report) = lib(cli::run_estimate(&cfg))?;
        *out = Box::into_raw(Box::new(CsReport { report }));
        Ok(())
    })
}

/// Scalar fields of a report.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CsReportSummary {
    pub mu: f64,
    pub std_error: f64,
    pub runs: u64,
    pub zeta: f64,
    pub cnot_per_run_mean: f64,
    pub depth_proxy_mean: f64,
    pub hoeffding_runs: u64,
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_report_summary(report: *const CsReport, out: *mut CsReportSummary) -> CsStatus {
    guard(|| {
        let r = &ref_arg(report, "report")?.report;
        *out_arg(out, "out")? = CsReportSummary {
            mu: r.mu,
            std_error: r.stderr,
            runs: r.t,
            zeta: r.zeta,
            cnot_per_run_mean: r.cnot_per_run_mean,
            depth_proxy_mean: r.depth_proxy_mean,
            hoeffding_runs: r.hoeffding_t,
        };
        Ok(())
    })
}

/// Copy up to `len` per-run values into `buf`; `written` receives the total available.
///
/// # Safety
/// `report` must be a live handle, `buf` must hold `len` doubles (or be null when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn cs_report_samples(
    report: *const CsReport,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> CsStatus {
    guard(|| {
        let samples = &ref_arg(report, "report")?.report.samples;
        let count = samples.len().min(len);
        if count > 0 {
            if buf.is_null() {
                set_error("buf is null");
                return Err(CsStatus::NullPointer);
            }
            ptr::copy_nonoverlapping(samples.as_ptr(), buf, count);
        }
        *out_arg(written, "written")? = samples.len();
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_report_free(report: *mut CsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Exact values at the configured `dynamics.t`. `lindblad` is NaN for custom models.
///
/// # Safety
/// `cfg` must be a live handle; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cs_oracle(cfg: *const CsConfig, lindblad: *mut f64, collision: *mut f64) -> CsStatus {
    guard(|| {
        let mut cfg = experiment(ref_arg(cfg, "cfg")?)?;
        cfg.times = vec![cfg.t];
        let rows = lib(cli::oracle_rows(&cfg))?;
        let (_, l, c, _) = rows[0];
        *out_arg(lindblad, "lindblad")? = l.unwrap_or(f64::NAN);
        *out_arg(collision, "collision")? = c;
        Ok(())
    })
}

/// Run one acceptance criterion (1-9). Returns `ValidationFailed` if it ran and failed.
#[no_mangle]
pub extern "C" fn cs_validate(id: u8) -> CsStatus {
    guard(|| {
        let res = validation::run_criterion(id).ok_or_else(|| {
            set_error(format!("unknown criterion {id}"));
            CsStatus::InvalidInput
        })?;
        if res.passed {
            Ok(())
        } else {
            set_error(res.to_string());
            Err(CsStatus::ValidationFailed)
        }
    })
}
