//! C ABI over the fedsel simulator.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a `FedselStatus`
//! and leaves a message for `fedsel_last_error` on failure. Nothing unwinds
//! across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fedsel::config::{parse_config, ExperimentConfig};
use fedsel::report::{emit_run_artifacts, moving_average, rounds_csv};
use fedsel::sim::{self, ExperimentResult};
use fedsel::Error;

/// Status codes. The non-zero values below 5 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FedselStatus {
    Ok = 0,
    Config = 2,
    Runtime = 3,
    Io = 4,
    NullPointer = 5,
    Panic = 6,
    /// Output buffer too small; the needed length was still written.
    BufferTooSmall = 7,
    InvalidUtf8 = 8,
}

/// An experiment configuration.
pub struct FedselConfig {
    inner: ExperimentConfig,
}

/// The outcome of one experiment run.
pub struct FedselResult {
    inner: ExperimentResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: FedselStatus, message: impl Into<String>) -> FedselStatus {
    set_error(message.into());
    status
}

fn from_error(e: &Error) -> FedselStatus {
    let status = match e.exit_code() {
        2 => FedselStatus::Config,
        4 => FedselStatus::Io,
        _ => FedselStatus::Runtime,
    };
    fail(status, e.to_string())
}

/// Runs `body`, converting panics into `FedselStatus::Panic`.
fn guard(body: impl FnOnce() -> FedselStatus) -> FedselStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(FedselStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, FedselStatus> {
    if s.is_null() {
        return Err(fail(FedselStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(FedselStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn fedsel_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next fedsel call on the same thread.
#[no_mangle]
pub extern "C" fn fedsel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads and validates a TOML config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedsel_config_load(path: *const c_char, out: *mut *mut FedselConfig) -> FedselStatus {
    guard(|| {
        if out.is_null() {
            return fail(FedselStatus::NullPointer, "out is null");
        }
        let path = match read_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match parse_config(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(FedselConfig { inner }));
                FedselStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Parses a config from TOML text. Relative spec paths resolve against the
/// working directory.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedsel_config_parse(toml: *const c_char, out: *mut *mut FedselConfig) -> FedselStatus {
    guard(|| {
        if out.is_null() {
            return fail(FedselStatus::NullPointer, "out is null");
        }
        let text = match read_str(toml, "toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::from_toml_str(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(FedselConfig { inner }));
                FedselStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Overrides the master seed.
///
/// # Safety
/// `config` must come from `fedsel_config_load` or `fedsel_config_parse`.
#[no_mangle]
pub unsafe extern "C" fn fedsel_config_set_seed(config: *mut FedselConfig, seed: u64) -> FedselStatus {
    guard(|| {
        let Some(cfg) = config.as_mut() else {
            return fail(FedselStatus::NullPointer, "config is null");
        };
        if seed > i64::MAX as u64 {
            return fail(FedselStatus::Config, "seed must fit in a signed 64-bit integer");
        }
        cfg.inner.seed = seed;
        FedselStatus::Ok
    })
}

/// Overrides the round budget (at least 1).
///
/// # Safety
/// `config` must come from `fedsel_config_load` or `fedsel_config_parse`.
#[no_mangle]
pub unsafe extern "C" fn fedsel_config_set_rounds(config: *mut FedselConfig, rounds: usize) -> FedselStatus {
    guard(|| {
        let Some(cfg) = config.as_mut() else {
            return fail(FedselStatus::NullPointer, "config is null");
        };
        if rounds < 1 {
            return fail(FedselStatus::Config, "total_rounds must be at least 1");
        }
        cfg.inner.total_rounds = rounds;
        FedselStatus::Ok
    })
}

/// # Safety
/// `config` must be null or an unfreed handle.
#[no_mangle]
pub unsafe extern "C" fn fedsel_config_free(config: *mut FedselConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the experiment described by `config`.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedsel_run(config: *const FedselConfig, out: *mut *mut FedselResult) -> FedselStatus {
    guard(|| {
        let Some(cfg) = config.as_ref() else {
            return fail(FedselStatus::NullPointer, "config is null");
        };
        if out.is_null() {
            return fail(FedselStatus::NullPointer, "out is null");
        }
        match sim::run(&cfg.inner) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(FedselResult { inner }));
                FedselStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Number of round records, the bootstrap round included. 0 for null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedsel_result_num_rounds(result: *const FedselResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.records.len())
}

fn copy_out<T: Copy>(values: &[T], buf: *mut T, capacity: usize, written: *mut usize) -> FedselStatus {
    if written.is_null() {
        return fail(FedselStatus::NullPointer, "written is null");
    }
    // SAFETY: checked non-null; caller provides a writable usize.
    unsafe { *written = values.len() };
    if buf.is_null() && capacity == 0 {
        return FedselStatus::Ok;
    }
    if buf.is_null() {
        return fail(FedselStatus::NullPointer, "buffer is null");
    }
    if capacity < values.len() {
        return fail(
            FedselStatus::BufferTooSmall,
            format!("buffer holds {capacity}, need {}", values.len()),
        );
    }
    // SAFETY: caller guarantees `buf` has `capacity >= values.len()` slots.
    unsafe { ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len()) };
    FedselStatus::Ok
}

/// Copies the per-round test accuracy into `buf`. `*written` always receives
/// the series length; pass a null buffer with capacity 0 to query it.
///
/// # Safety
/// `buf` must have room for `capacity` doubles; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedsel_result_accuracy(
    result: *const FedselResult,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> FedselStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return fail(FedselStatus::NullPointer, "result is null");
        };
        copy_out(&r.inner.accuracy_series(), buf, capacity, written)
    })
}

/// Copies participation counts, ascending by client id, into the parallel
/// arrays `ids` and `counts`. Sizing follows `fedsel_result_accuracy`.
///
/// # Safety
/// `ids` and `counts` must each have room for `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn fedsel_result_participation(
    result: *const FedselResult,
    ids: *mut u32,
    counts: *mut u64,
    capacity: usize,
    written: *mut usize,
) -> FedselStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return fail(FedselStatus::NullPointer, "result is null");
        };
        let id_vec: Vec<u32> = r.inner.participation.keys().copied().collect();
        let count_vec: Vec<u64> = r.inner.participation.values().map(|&c| c as u64).collect();
        match copy_out(&id_vec, ids, capacity, written) {
            FedselStatus::Ok => copy_out(&count_vec, counts, capacity, written),
            other => other,
        }
    })
}

/// The rounds table as CSV text. Free with `fedsel_string_free`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedsel_result_rounds_csv(result: *const FedselResult, out: *mut *mut c_char) -> FedselStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return fail(FedselStatus::NullPointer, "result is null");
        };
        if out.is_null() {
            return fail(FedselStatus::NullPointer, "out is null");
        }
        match CString::new(rounds_csv(&r.inner)) {
            Ok(s) => {
                *out = s.into_raw();
                FedselStatus::Ok
            }
            Err(_) => fail(FedselStatus::Runtime, "csv contains a NUL byte"),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn fedsel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes CSV tables, SVG charts and the config echo into `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fedsel_result_write_artifacts(result: *const FedselResult, dir: *const c_char) -> FedselStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return fail(FedselStatus::NullPointer, "result is null");
        };
        let dir = match read_str(dir, "dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match emit_run_artifacts(&r.inner, Path::new(dir)) {
            Ok(_) => FedselStatus::Ok,
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `result` must be null or an unfreed handle.
#[no_mangle]
pub unsafe extern "C" fn fedsel_result_free(result: *mut FedselResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Trailing moving average with leading partial windows; `out` receives
/// `len` values.
///
/// # Safety
/// `series` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsel_moving_average(
    series: *const f64,
    len: usize,
    window: usize,
    out: *mut f64,
) -> FedselStatus {
    guard(|| {
        if len > 0 && (series.is_null() || out.is_null()) {
            return fail(FedselStatus::NullPointer, "series or out is null");
        }
        let input = if len == 0 { &[][..] } else { std::slice::from_raw_parts(series, len) };
        match moving_average(input, window) {
            Ok(ma) => {
                if len > 0 {
                    ptr::copy_nonoverlapping(ma.as_ptr(), out, len);
                }
                FedselStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}
