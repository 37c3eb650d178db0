//! C ABI over the `compjp` simulator.
//!
//! Every fallible function returns a [`CompjpStatus`]; on failure the message
//! is available from [`compjp_last_error_message`] on the same thread. Handles
//! are opaque and owned by the caller, who releases them with the matching
//! `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use compjp::config::SimConfig;
use compjp::eval::percentile;
use compjp::results::{emit_results, ResultsRow};
use compjp::sim::{run_experiment, RunResult, MAX_RANK};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompjpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad string encoding, index or probability.
    InvalidArgument = 2,
    /// Unknown key, malformed value or inconsistent configuration.
    Config = 3,
    /// Numerical failure during a run.
    Simulation = 4,
    Io = 5,
    /// Internal bug; the handle arguments are left untouched.
    Panic = 6,
}

/// Opaque simulation configuration.
pub struct CompjpConfig(SimConfig);

/// Opaque result of one run.
pub struct CompjpResult(RunResult);

/// Metrics of one drop.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompjpDropMetrics {
    pub seed: u64,
    pub cell_rate: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub candidates: u64,
}

/// Number of entries written by [`compjp_result_rank_distribution`].
pub const COMPJP_MAX_RANK: usize = 8;
const _: () = assert!(COMPJP_MAX_RANK == MAX_RANK);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(CompjpStatus, String);

impl From<compjp::Error> for Failure {
    fn from(e: compjp::Error) -> Self {
        let status = match &e {
            compjp::Error::Io { .. } => CompjpStatus::Io,
            e if e.is_config_error() => CompjpStatus::Config,
            _ => CompjpStatus::Simulation,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: CompjpStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CompjpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CompjpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            CompjpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(CompjpStatus::NullPointer, format!("`{name}` is null"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| fail(CompjpStatus::InvalidArgument, format!("`{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(|| fail(CompjpStatus::NullPointer, format!("`{name}` is null")), Ok)
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().map_or_else(|| fail(CompjpStatus::NullPointer, format!("`{name}` is null")), Ok)
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into the library on this
/// thread.
#[no_mangle]
pub extern "C" fn compjp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a configuration with the default settings.
#[no_mangle]
pub extern "C" fn compjp_config_new() -> *mut CompjpConfig {
    Box::into_raw(Box::new(CompjpConfig(SimConfig::default())))
}

/// Parses `key = value` lines (`#` starts a comment) on top of the defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn compjp_config_parse(text: *const c_char, out: *mut *mut CompjpConfig) -> CompjpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = SimConfig::parse(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(CompjpConfig(cfg)));
        Ok(())
    })
}

/// Sets one key, e.g. `("ue-antennas", "2")`.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn compjp_config_set(
    cfg: *mut CompjpConfig,
    key: *const c_char,
    value: *const c_char,
) -> CompjpStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        cfg.0.set(str_arg(key, "key")?, str_arg(value, "value")?)?;
        Ok(())
    })
}

/// Checks the configuration without running it.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn compjp_config_validate(cfg: *const CompjpConfig) -> CompjpStatus {
    guard(|| {
        ref_arg(cfg, "cfg")?.0.validate()?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn compjp_config_free(cfg: *mut CompjpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the experiment. Blocks until done; uses all cores.
///
/// # Safety
/// `cfg` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn compjp_run(cfg: *const CompjpConfig, out: *mut *mut CompjpResult) -> CompjpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = run_experiment(&ref_arg(cfg, "cfg")?.0)?;
        *out = Box::into_raw(Box::new(CompjpResult(r)));
        Ok(())
    })
}

/// # Safety
/// `r` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn compjp_result_free(r: *mut CompjpResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Mean cell rate over drops, bit/s/Hz.
///
/// # Safety
/// `r` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn compjp_result_cell_rate(r: *const CompjpResult, out: *mut f64) -> CompjpStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(r, "r")?.0.cell_rate();
        Ok(())
    })
}

/// Percentile `p ∈ [0, 1]` of the pooled per-UE long-term rates.
///
/// # Safety
/// `r` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn compjp_result_ue_percentile(r: *const CompjpResult, p: f64, out: *mut f64) -> CompjpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = ref_arg(r, "r")?;
        if !(0.0..=1.0).contains(&p) {
            return fail(CompjpStatus::InvalidArgument, format!("percentile {p} outside [0, 1]"));
        }
        let rates = r.0.ue_rates();
        if rates.is_empty() {
            return fail(CompjpStatus::InvalidArgument, "run has no UEs");
        }
        *out = percentile(&rates, p);
        Ok(())
    })
}

/// Fraction of scheduled UEs with rank 1..=`COMPJP_MAX_RANK`, written to
/// `out[0..len]`; `len` must be at least `COMPJP_MAX_RANK`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn compjp_result_rank_distribution(
    r: *const CompjpResult,
    out: *mut f64,
    len: usize,
) -> CompjpStatus {
    guard(|| {
        let r = ref_arg(r, "r")?;
        if out.is_null() {
            return fail(CompjpStatus::NullPointer, "`out` is null");
        }
        if len < MAX_RANK {
            return fail(CompjpStatus::InvalidArgument, format!("need room for {MAX_RANK} entries, got {len}"));
        }
        let d = r.0.rank_distribution();
        std::slice::from_raw_parts_mut(out, MAX_RANK).copy_from_slice(&d);
        Ok(())
    })
}

/// Largest per-BS transmit power over `P_BS` seen in any block.
///
/// # Safety
/// `r` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn compjp_result_max_power_ratio(r: *const CompjpResult, out: *mut f64) -> CompjpStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(r, "r")?.0.max_power_ratio();
        Ok(())
    })
}

/// Number of drops in the result; 0 for a null handle.
///
/// # Safety
/// `r` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn compjp_result_drop_count(r: *const CompjpResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.drops.len())
}

/// # Safety
/// `r` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn compjp_result_drop_metrics(
    r: *const CompjpResult,
    index: usize,
    out: *mut CompjpDropMetrics,
) -> CompjpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = ref_arg(r, "r")?;
        let Some(d) = r.0.drops.get(index) else {
            return fail(CompjpStatus::InvalidArgument, format!("drop {index} of {}", r.0.drops.len()));
        };
        let pct = |p| if d.ue_rate.is_empty() { f64::NAN } else { percentile(&d.ue_rate, p) };
        *out = CompjpDropMetrics {
            seed: d.seed,
            cell_rate: d.cell_rate,
            p5: pct(0.05),
            p50: pct(0.50),
            p95: pct(0.95),
            candidates: d.candidates as u64,
        };
        Ok(())
    })
}

/// Writes the one-row results CSV (same format as the command-line tool).
///
/// # Safety
/// `r` must come from this library; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn compjp_result_write_csv(r: *const CompjpResult, path: *const c_char) -> CompjpStatus {
    guard(|| {
        let r = ref_arg(r, "r")?;
        let path = str_arg(path, "path")?;
        emit_results(&[ResultsRow::from_run(&r.0)], Path::new(path))?;
        Ok(())
    })
}

/// Number of distinct BS subsets of size 1..=`jmax` out of `num_bs`.
/// Fails with `INVALID_ARGUMENT` if it does not fit in 64 bits.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn compjp_exhaustive_cluster_count(num_bs: u64, jmax: u64, out: *mut u64) -> CompjpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let n = compjp::clustering::exhaustive_cluster_count(num_bs, jmax)?;
        match u64::try_from(&n) {
            Ok(v) => *out = v,
            Err(_) => return fail(CompjpStatus::InvalidArgument, format!("{n} does not fit in 64 bits")),
        }
        Ok(())
    })
}

/// Sector antenna gain in dB at angle `theta` (rad) off boresight.
#[no_mangle]
pub extern "C" fn compjp_antenna_gain_db(theta: f64, theta_3db: f64, sidelobe_floor_db: f64) -> f64 {
    compjp::topology::antenna_gain_db(theta, theta_3db, sidelobe_floor_db)
}

/// Resource elements per coherence block for the given Doppler (Hz) and
/// delay spread (s).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn compjp_block_size(doppler_hz: f64, delay_spread_s: f64, out: *mut usize) -> CompjpStatus {
    guard(|| {
        *out_arg(out, "out")? = compjp::channel::block_size(doppler_hz, delay_spread_s)?;
        Ok(())
    })
}
