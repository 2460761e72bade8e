//! C ABI over the fedtank simulator.
//!
//! The surface follows the usual opaque-handle pattern: parse a JSON
//! config into an [`FtConfig`], run it into an [`FtRun`], then read
//! per-round metrics or write the standard output files. Every call
//! returns an [`FtStatus`]; on failure the thread-local message from
//! [`ft_last_error_message`] has the details. Handles are freed with
//! their matching `*_free` function exactly once.
//!
//! The generated header lives at `include/fedtank.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fedtank::cli::{self, RunConfig};
use fedtank::sim::RoundRecord;

/// Result codes for every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The config failed to parse or validate.
    InvalidConfig = 3,
    /// Dataset files were missing or malformed.
    DataError = 4,
    /// The experiment itself failed.
    RunError = 5,
    /// A round or class index was out of range.
    OutOfRange = 6,
    /// The requested class has no samples in the held-out set.
    Absent = 7,
    /// Output files could not be written.
    IoError = 8,
    /// A panic was caught at the FFI boundary.
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn error_status(err: &fedtank::Error) -> FtStatus {
    use fedtank::Error as E;
    set_error(&err.to_string());
    match err {
        E::Config { .. } | E::InvalidArgument(_) => FtStatus::InvalidConfig,
        E::BadMagic { .. } | E::Truncated { .. } | E::CountMismatch { .. } => FtStatus::DataError,
        E::Io(_) => FtStatus::IoError,
        _ => FtStatus::RunError,
    }
}

/// Opaque resolved experiment configuration.
pub struct FtConfig {
    inner: RunConfig,
}

/// Opaque completed run: the per-round record stream plus provenance.
pub struct FtRun {
    execution: cli::Execution,
    config: RunConfig,
}

impl FtRun {
    fn record(&self, round: usize) -> Option<&RoundRecord> {
        self.execution.records.get(round)
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, FtStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(FtStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        FtStatus::InvalidUtf8
    })
}

fn guard<F: FnOnce() -> FtStatus>(body: F) -> FtStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic caught at FFI boundary");
            FtStatus::Panic
        }
    }
}

/// Library version as a static string; never freed by the caller.
#[no_mangle]
pub extern "C" fn ft_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message for the most recent failure on this thread; valid until the
/// next failing call. Never freed by the caller.
#[no_mangle]
pub extern "C" fn ft_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parse and validate a JSON config document into a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_config_parse_json(
    json: *const c_char,
    out: *mut *mut FtConfig,
) -> FtStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return FtStatus::NullPointer;
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match cli::parse_config_str(text, &[]) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(FtConfig { inner: cfg }));
                FtStatus::Ok
            }
            Err(e) => error_status(&e),
        }
    })
}

/// Parse and validate a JSON config file into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_config_parse_file(
    path: *const c_char,
    out: *mut *mut FtConfig,
) -> FtStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return FtStatus::NullPointer;
        }
        let path = match read_str(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match cli::parse_config(Path::new(path), &[]) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(FtConfig { inner: cfg }));
                FtStatus::Ok
            }
            Err(e) => error_status(&e),
        }
    })
}

/// Apply one `key=value` override (same syntax as `fedtank run --set`).
///
/// # Safety
/// `config` must be a live handle and `assignment` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ft_config_set(
    config: *mut FtConfig,
    assignment: *const c_char,
) -> FtStatus {
    guard(|| {
        let Some(cfg) = config.as_mut() else {
            set_error("null config handle");
            return FtStatus::NullPointer;
        };
        let assignment = match read_str(assignment) {
            Ok(a) => a,
            Err(status) => return status,
        };
        match cli::override_config(&cfg.inner, assignment) {
            Ok(updated) => {
                cfg.inner = updated;
                FtStatus::Ok
            }
            Err(e) => error_status(&e),
        }
    })
}

/// Serialize the resolved config as JSON; free with [`ft_string_free`].
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_config_to_json(
    config: *const FtConfig,
    out: *mut *mut c_char,
) -> FtStatus {
    guard(|| {
        let Some(cfg) = config.as_ref() else {
            set_error("null config handle");
            return FtStatus::NullPointer;
        };
        if out.is_null() {
            set_error("null output pointer");
            return FtStatus::NullPointer;
        }
        match serde_json::to_string(&cfg.inner) {
            Ok(json) => {
                let c = CString::new(json).expect("serde_json output has no NUL");
                *out = c.into_raw();
                FtStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                FtStatus::RunError
            }
        }
    })
}

/// Free a config handle. Null is a no-op.
///
/// # Safety
/// `config` must come from a `ft_config_parse_*` call, freed once.
#[no_mangle]
pub unsafe extern "C" fn ft_config_free(config: *mut FtConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Run the experiment the config describes; blocks until done.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_run_experiment(
    config: *const FtConfig,
    out: *mut *mut FtRun,
) -> FtStatus {
    guard(|| {
        let Some(cfg) = config.as_ref() else {
            set_error("null config handle");
            return FtStatus::NullPointer;
        };
        if out.is_null() {
            set_error("null output pointer");
            return FtStatus::NullPointer;
        }
        match cli::execute(&cfg.inner, true) {
            Ok(execution) => {
                *out = Box::into_raw(Box::new(FtRun {
                    execution,
                    config: cfg.inner.clone(),
                }));
                FtStatus::Ok
            }
            Err(e) => error_status(&e),
        }
    })
}

/// Free a run handle. Null is a no-op.
///
/// # Safety
/// `run` must come from [`ft_run_experiment`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ft_run_free(run: *mut FtRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of recorded rounds; 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ft_run_n_rounds(run: *const FtRun) -> usize {
    run.as_ref().map_or(0, |r| r.execution.records.len())
}

unsafe fn with_record<F>(run: *const FtRun, round: usize, out_ok: F) -> FtStatus
where
    F: FnOnce(&RoundRecord) -> FtStatus,
{
    let Some(run) = run.as_ref() else {
        set_error("null run handle");
        return FtStatus::NullPointer;
    };
    match run.record(round) {
        Some(rec) => out_ok(rec),
        None => {
            set_error(&format!(
                "round {round} out of range ({} rounds recorded)",
                run.execution.records.len()
            ));
            FtStatus::OutOfRange
        }
    }
}

/// Overall held-out accuracy of the global model after a round.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_run_overall_accuracy(
    run: *const FtRun,
    round: usize,
    out: *mut f64,
) -> FtStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return FtStatus::NullPointer;
        }
        with_record(run, round, |rec| {
            *out = rec.global_eval.overall_accuracy;
            FtStatus::Ok
        })
    })
}

/// Held-out accuracy on one class after a round; `FT_STATUS_ABSENT` if the
/// class has no samples.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_run_class_accuracy(
    run: *const FtRun,
    round: usize,
    class: usize,
    out: *mut f64,
) -> FtStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return FtStatus::NullPointer;
        }
        with_record(run, round, |rec| match rec.per_class.get(&class) {
            Some(&acc) => {
                *out = acc;
                FtStatus::Ok
            }
            None => {
                set_error(&format!("class {class} absent from the held-out set"));
                FtStatus::Absent
            }
        })
    })
}

/// Number of models in the final selection of a round (N for
/// non-selective aggregators).
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_run_n_selected(
    run: *const FtRun,
    round: usize,
    out: *mut usize,
) -> FtStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return FtStatus::NullPointer;
        }
        with_record(run, round, |rec| {
            *out = rec.n_selected();
            FtStatus::Ok
        })
    })
}

/// Ballots cast and affirmative ballots in a round (zero outside
/// two_layer).
///
/// # Safety
/// `run` must be a live handle; `cast`/`yes` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ft_run_votes(
    run: *const FtRun,
    round: usize,
    cast: *mut usize,
    yes: *mut usize,
) -> FtStatus {
    guard(|| {
        if cast.is_null() || yes.is_null() {
            set_error("null output pointer");
            return FtStatus::NullPointer;
        }
        with_record(run, round, |rec| {
            *cast = rec.ballots.len();
            *yes = rec.ballots.iter().filter(|b| b.vote).count();
            FtStatus::Ok
        })
    })
}

/// How many Byzantine participants ended a round selected.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_run_byzantine_selected(
    run: *const FtRun,
    round: usize,
    out: *mut usize,
) -> FtStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return FtStatus::NullPointer;
        }
        with_record(run, round, |rec| {
            *out = rec.byzantine_selected.values().filter(|&&s| s).count();
            FtStatus::Ok
        })
    })
}

/// Write rounds.csv, rounds.jsonl, manifest.json, and
/// resolved_config.json into a directory (created if needed).
///
/// # Safety
/// `run` must be a live handle and `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ft_run_write_outputs(
    run: *const FtRun,
    dir: *const c_char,
) -> FtStatus {
    guard(|| {
        let Some(run) = run.as_ref() else {
            set_error("null run handle");
            return FtStatus::NullPointer;
        };
        let dir = match read_str(dir) {
            Ok(d) => d,
            Err(status) => return status,
        };
        match cli::write_outputs(&run.execution, &run.config, Path::new(dir)) {
            Ok(_) => FtStatus::Ok,
            Err(e) => error_status(&e),
        }
    })
}

/// Full record stream as a JSON array; free with [`ft_string_free`].
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_run_records_json(
    run: *const FtRun,
    out: *mut *mut c_char,
) -> FtStatus {
    guard(|| {
        let Some(run) = run.as_ref() else {
            set_error("null run handle");
            return FtStatus::NullPointer;
        };
        if out.is_null() {
            set_error("null output pointer");
            return FtStatus::NullPointer;
        }
        match serde_json::to_string(&run.execution.records) {
            Ok(json) => {
                let c = CString::new(json).expect("serde_json output has no NUL");
                *out = c.into_raw();
                FtStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                FtStatus::RunError
            }
        }
    })
}

/// Free a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from a fedtank FFI call, freed once.
#[no_mangle]
pub unsafe extern "C" fn ft_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
