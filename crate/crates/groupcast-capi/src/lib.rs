//! C ABI for embedding the simulator and its retransmission planner.
//!
//! Conventions: handles are opaque pointers released by their matching
//! `_free` function; functions that can fail return [`GcStatus`] and leave
//! a description retrievable through [`gc_last_error_message`]; strings
//! cross the boundary as NUL-terminated UTF-8, and strings returned by the
//! library are released with [`gc_string_free`]. All entry points catch
//! panics and report them as [`GcStatus::Panic`] instead of unwinding into
//! the caller.

use groupcast::error::Error;
use groupcast::harq::{MatrixRow, ReceptionMatrix, TransportBlock};
use groupcast::index_coding::{oracle_min_partition, plan_combinations, xor_decode, xor_encode};
use groupcast::sim::config::SimConfig;
use groupcast::sim::engine::{run, RunOutput};
use groupcast::sim::metrics::{
    compute_metrics, delivery_rows, write_delivery_csv, write_report_csv, MetricsReport,
    PacketOutcome,
};
use groupcast::sim::trace::write_trace_csv;
use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

/// Result of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The operation failed; `gc_last_error_message` describes why.
    Failed = 3,
    /// The library panicked; treat the handle as poisoned.
    Panic = 4,
}

/// Opaque simulation configuration.
pub struct GcConfig {
    inner: SimConfig,
}

/// Opaque completed run: configuration, trace, and report.
pub struct GcRun {
    cfg: SimConfig,
    output: RunOutput,
    report: MetricsReport,
    delivery: Vec<PacketOutcome>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(err: Error) -> GcStatus {
    set_error(err.to_string());
    GcStatus::Failed
}

/// Runs `f` with panics converted to a status, storing any error text.
fn guarded(f: impl FnOnce() -> GcStatus) -> GcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            GcStatus::Panic
        }
    }
}

/// Reads a required C string argument.
///
/// # Safety
/// `ptr` must be null or point to a NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, GcStatus> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(GcStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        GcStatus::InvalidUtf8
    })
}

/// Message describing the most recent failure on this thread, or an empty
/// string when no failure has been recorded. The pointer stays valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(c"".as_ptr(), |c| c.as_ptr())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library.
#[no_mangle]
pub unsafe extern "C" fn gc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ============================================================================
// Configuration
// ============================================================================

/// Creates a configuration with the library defaults.
#[no_mangle]
pub extern "C" fn gc_config_new() -> *mut GcConfig {
    Box::into_raw(Box::new(GcConfig {
        inner: SimConfig::default(),
    }))
}

/// Loads a configuration from a flat `key = value` file; null on failure.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gc_config_load(path: *const c_char) -> *mut GcConfig {
    let mut out = ptr::null_mut();
    guarded(|| {
        let path = match read_str(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match SimConfig::load(Path::new(path)) {
            Ok(inner) => {
                out = Box::into_raw(Box::new(GcConfig { inner }));
                GcStatus::Ok
            }
            Err(e) => fail(e),
        }
    });
    out
}

/// Releases a configuration.
///
/// # Safety
/// `cfg` must be null or a pointer from `gc_config_new`/`gc_config_load`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn gc_config_free(cfg: *mut GcConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets one configuration key (dotted name) to a value.
///
/// # Safety
/// `cfg` must be a live configuration handle; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gc_config_set(
    cfg: *mut GcConfig,
    key: *const c_char,
    value: *const c_char,
) -> GcStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_mut() else {
            set_error("null config handle".into());
            return GcStatus::NullPointer;
        };
        let (key, value) = match (read_str(key), read_str(value)) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match cfg.inner.apply(key, value) {
            Ok(()) => GcStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Renders the effective configuration; free with `gc_string_free`.
///
/// # Safety
/// `cfg` must be null or a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn gc_config_dump(cfg: *const GcConfig) -> *mut c_char {
    let mut out = ptr::null_mut();
    guarded(|| {
        let Some(cfg) = cfg.as_ref() else {
            set_error("null config handle".into());
            return GcStatus::NullPointer;
        };
        match CString::new(cfg.inner.dump()) {
            Ok(c) => {
                out = c.into_raw();
                GcStatus::Ok
            }
            Err(_) => {
                set_error("configuration text contains a NUL byte".into());
                GcStatus::Failed
            }
        }
    });
    out
}

// ============================================================================
// Runs and reports
// ============================================================================

/// Validates the configuration and simulates one run; null on failure.
///
/// # Safety
/// `cfg` must be null or a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn gc_run(cfg: *const GcConfig) -> *mut GcRun {
    let mut out = ptr::null_mut();
    guarded(|| {
        let Some(cfg) = cfg.as_ref() else {
            set_error("null config handle".into());
            return GcStatus::NullPointer;
        };
        let cfg = cfg.inner.clone();
        let output = match run(&cfg) {
            Ok(o) => o,
            Err(e) => return fail(e),
        };
        let report = match compute_metrics(&cfg, &output.events) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        let delivery = match delivery_rows(&cfg, &output.events) {
            Ok(d) => d,
            Err(e) => return fail(e),
        };
        out = Box::into_raw(Box::new(GcRun {
            cfg,
            output,
            report,
            delivery,
        }));
        GcStatus::Ok
    });
    out
}

/// Releases a run.
///
/// # Safety
/// `handle` must be null or an unfreed pointer from `gc_run`.
#[no_mangle]
pub unsafe extern "C" fn gc_run_free(handle: *mut GcRun) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Looks up one report metric by its `report.csv` name.
///
/// Undefined metrics (written as `na` in the CSV) fail with a message.
///
/// # Safety
/// `handle` must be a live run handle, `name` a NUL-terminated string and
/// `value` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn gc_run_metric(
    handle: *const GcRun,
    name: *const c_char,
    value: *mut f64,
) -> GcStatus {
    guarded(|| {
        let Some(run) = handle.as_ref() else {
            set_error("null run handle".into());
            return GcStatus::NullPointer;
        };
        if value.is_null() {
            set_error("null value destination".into());
            return GcStatus::NullPointer;
        }
        let name = match read_str(name) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let r = &run.report;
        let opt_u = |v: Option<u64>| v.map(|x| x as f64);
        let looked_up = match name {
            "measured_packets" => Some(r.measured_packets as f64),
            "usable_units_per_period" => Some(r.usable_units_per_period as f64),
            "mean_units_per_packet" => r.mean_units_per_packet,
            "group_capacity" => opt_u(r.group_capacity),
            "group_capacity_exact" => r.group_capacity_exact,
            "unique_goodput_bps" => Some(r.unique_goodput_bps),
            "aggregate_goodput_bps" => Some(r.aggregate_goodput_bps),
            "residual_undelivered" => Some(r.residual_undelivered),
            "mean_delay_sf" => r.mean_delay_sf,
            "p95_delay_sf" => opt_u(r.p95_delay_sf),
            "max_delay_sf" => opt_u(r.max_delay_sf),
            "feedback_messages" => Some(r.feedback_messages as f64),
            "allocations" => Some(r.allocations as f64),
            "coded_allocs" => Some(r.coded_allocs as f64),
            "redundant_receptions_avoided" => Some(r.redundant_receptions_avoided as f64),
            "infeasible_packets" => Some(r.infeasible_packets as f64),
            "total_units" => Some(r.total_units as f64),
            "mbsfn_reserved_units" => Some(r.mbsfn_reserved_units as f64),
            "pmch_used_units" => Some(r.pmch_used_units as f64),
            other => {
                set_error(format!("unknown metric: {other}"));
                return GcStatus::Failed;
            }
        };
        match looked_up {
            Some(v) => {
                *value = v;
                GcStatus::Ok
            }
            None => {
                set_error(format!("metric {name} is undefined for this run"));
                GcStatus::Failed
            }
        }
    })
}

/// Number of packets in the run's delivery log.
///
/// # Safety
/// `handle` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn gc_run_packet_count(handle: *const GcRun) -> usize {
    handle.as_ref().map_or(0, |run| run.delivery.len())
}

unsafe fn write_artifact(
    handle: *const GcRun,
    path: *const c_char,
    write: impl Fn(&GcRun, &Path) -> groupcast::Result<()>,
) -> GcStatus {
    guarded(|| {
        let Some(run) = handle.as_ref() else {
            set_error("null run handle".into());
            return GcStatus::NullPointer;
        };
        let path = match read_str(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match write(run, Path::new(path)) {
            Ok(()) => GcStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Writes the run's `report.csv`.
///
/// # Safety
/// `handle` must be a live run handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gc_run_write_report(
    handle: *const GcRun,
    path: *const c_char,
) -> GcStatus {
    write_artifact(handle, path, |run, p| write_report_csv(p, &run.report))
}

/// Writes the run's `trace.csv`.
///
/// # Safety
/// `handle` must be a live run handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gc_run_write_trace(
    handle: *const GcRun,
    path: *const c_char,
) -> GcStatus {
    write_artifact(handle, path, |run, p| write_trace_csv(p, &run.output.events))
}

/// Writes the run's `delivery.csv`.
///
/// # Safety
/// `handle` must be a live run handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gc_run_write_delivery(
    handle: *const GcRun,
    path: *const c_char,
) -> GcStatus {
    write_artifact(handle, path, |run, p| write_delivery_csv(p, &run.delivery))
}

/// Writes the effective configuration of the run.
///
/// # Safety
/// `handle` must be a live run handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gc_run_write_config(
    handle: *const GcRun,
    path: *const c_char,
) -> GcStatus {
    write_artifact(handle, path, |run, p| {
        std::fs::write(p, run.cfg.dump()).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        })
    })
}

// ============================================================================
// Retransmission planning and XOR combining
// ============================================================================

/// Builds a reception matrix from per-row bitmasks of missing receivers.
///
/// Masks support up to 64 receivers; every row must have at least one bit.
unsafe fn matrix_from_masks(
    masks: *const u64,
    n_rows: usize,
) -> Result<ReceptionMatrix, GcStatus> {
    if masks.is_null() && n_rows > 0 {
        set_error("null mask array".into());
        return Err(GcStatus::NullPointer);
    }
    let masks = slice::from_raw_parts(masks, n_rows);
    let rows = masks
        .iter()
        .enumerate()
        .map(|(i, &mask)| MatrixRow {
            process: i as u64,
            seq: i as u64,
            tb: i as u64,
            payload_len: 1,
            nacks: (0..64)
                .filter(|b| mask & (1u64 << b) != 0)
                .map(|b| b as usize)
                .collect::<BTreeSet<_>>(),
        })
        .collect();
    Ok(ReceptionMatrix { group: 0, rows })
}

/// Plans combined retransmissions over rows of missing-receiver bitmasks.
///
/// Writes each row's plan index to `plan_of_row` (length `n_rows`; plans
/// are numbered 0.. in schedule order) and the number of plans to
/// `plan_count`.
///
/// # Safety
/// `row_masks` and `plan_of_row` must point to `n_rows` elements;
/// `plan_count` must be a valid destination.
#[no_mangle]
pub unsafe extern "C" fn gc_plan_combinations(
    row_masks: *const u64,
    n_rows: usize,
    max_m: u32,
    plan_of_row: *mut usize,
    plan_count: *mut usize,
) -> GcStatus {
    guarded(|| {
        if (plan_of_row.is_null() && n_rows > 0) || plan_count.is_null() {
            set_error("null output argument".into());
            return GcStatus::NullPointer;
        }
        let matrix = match matrix_from_masks(row_masks, n_rows) {
            Ok(m) => m,
            Err(status) => return status,
        };
        let plans = match plan_combinations(&matrix, max_m) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        let out = slice::from_raw_parts_mut(plan_of_row, n_rows);
        for (idx, plan) in plans.iter().enumerate() {
            for &row in &plan.rows {
                out[row] = idx;
            }
        }
        *plan_count = plans.len();
        GcStatus::Ok
    })
}

/// Exact minimum number of combined retransmissions for the given rows.
///
/// Exponential in `n_rows`; rows are capped at the library's oracle limit.
///
/// # Safety
/// `row_masks` must point to `n_rows` elements and `minimum` must be a
/// valid destination.
#[no_mangle]
pub unsafe extern "C" fn gc_oracle_min_partition(
    row_masks: *const u64,
    n_rows: usize,
    max_m: u32,
    minimum: *mut usize,
) -> GcStatus {
    guarded(|| {
        if minimum.is_null() {
            set_error("null output argument".into());
            return GcStatus::NullPointer;
        }
        let matrix = match matrix_from_masks(row_masks, n_rows) {
            Ok(m) => m,
            Err(status) => return status,
        };
        match oracle_min_partition(&matrix, max_m) {
            Ok(n) => {
                *minimum = n;
                GcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn blocks_from_parts(
    ptrs: *const *const u8,
    lens: *const usize,
    n: usize,
) -> Result<Vec<TransportBlock>, GcStatus> {
    if n > 0 && (ptrs.is_null() || lens.is_null()) {
        set_error("null block array".into());
        return Err(GcStatus::NullPointer);
    }
    let ptrs = slice::from_raw_parts(ptrs, n);
    let lens = slice::from_raw_parts(lens, n);
    let mut blocks = Vec::with_capacity(n);
    for (i, (&p, &len)) in ptrs.iter().zip(lens).enumerate() {
        if p.is_null() {
            set_error(format!("null block pointer at index {i}"));
            return Err(GcStatus::NullPointer);
        }
        blocks.push(TransportBlock {
            id: i as u64,
            group: 0,
            payload: slice::from_raw_parts(p, len).to_vec(),
        });
    }
    Ok(blocks)
}

/// XOR-combines `n` blocks into `out`, zero-padding shorter blocks.
///
/// `out` must hold `max(lens)` bytes; that length is written to `out_len`.
///
/// # Safety
/// `blocks`/`lens` must describe `n` readable buffers; `out` must hold the
/// longest block; `out_len` must be a valid destination.
#[no_mangle]
pub unsafe extern "C" fn gc_xor_encode(
    blocks: *const *const u8,
    lens: *const usize,
    n: usize,
    out: *mut u8,
    out_len: *mut usize,
) -> GcStatus {
    guarded(|| {
        if out.is_null() || out_len.is_null() {
            set_error("null output argument".into());
            return GcStatus::NullPointer;
        }
        let owned = match blocks_from_parts(blocks, lens, n) {
            Ok(b) => b,
            Err(status) => return status,
        };
        let refs: Vec<&TransportBlock> = owned.iter().collect();
        match xor_encode(&refs) {
            Ok(coded) => {
                let dst = slice::from_raw_parts_mut(out, coded.bytes.len());
                dst.copy_from_slice(&coded.bytes);
                *out_len = coded.bytes.len();
                GcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Recovers the block at `missing_index` from a combination and the other
/// component blocks (in component order, skipping the missing one).
///
/// `lens` lists all `n` component lengths; `out` must hold
/// `lens[missing_index]` bytes.
///
/// # Safety
/// All arrays must match the documented lengths and be readable; `out`
/// must hold the missing block.
#[no_mangle]
pub unsafe extern "C" fn gc_xor_decode(
    coded: *const u8,
    coded_len: usize,
    lens: *const usize,
    n: usize,
    missing_index: usize,
    side_blocks: *const *const u8,
    out: *mut u8,
) -> GcStatus {
    guarded(|| {
        if coded.is_null() || lens.is_null() || out.is_null() {
            set_error("null argument".into());
            return GcStatus::NullPointer;
        }
        if missing_index >= n {
            set_error(format!("missing index {missing_index} out of {n} components"));
            return GcStatus::Failed;
        }
        let lens = slice::from_raw_parts(lens, n);
        let ptrs: &[*const u8] = if n > 1 {
            if side_blocks.is_null() {
                set_error("null side-block array".into());
                return GcStatus::NullPointer;
            }
            slice::from_raw_parts(side_blocks, n - 1)
        } else {
            &[]
        };
        let mut side = Vec::with_capacity(n.saturating_sub(1));
        let mut k = 0usize;
        for (i, &len) in lens.iter().enumerate() {
            if i == missing_index {
                continue;
            }
            let p = ptrs[k];
            k += 1;
            if p.is_null() {
                set_error(format!("null side block for component {i}"));
                return GcStatus::NullPointer;
            }
            side.push(TransportBlock {
                id: i as u64,
                group: 0,
                payload: slice::from_raw_parts(p, len).to_vec(),
            });
        }
        let coded_tb = groupcast::index_coding::CodedTb {
            group: 0,
            components: lens
                .iter()
                .enumerate()
                .map(|(i, &len)| (i as u64, len))
                .collect(),
            bytes: slice::from_raw_parts(coded, coded_len).to_vec(),
        };
        let refs: Vec<&TransportBlock> = side.iter().collect();
        match xor_decode(&coded_tb, &refs) {
            Ok(block) => {
                let dst = slice::from_raw_parts_mut(out, block.payload.len());
                dst.copy_from_slice(&block.payload);
                GcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
