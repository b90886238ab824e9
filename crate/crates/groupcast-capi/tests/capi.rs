//! Drives the C entry points the way a foreign caller would: raw pointers,
//! NUL-terminated strings, and status codes, with every handle freed.

use groupcast_capi::*;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(gc_last_error_message())
            .to_str()
            .unwrap()
            .to_string()
    }
}

/// Takes ownership of a library-allocated string.
unsafe fn take_string(s: *mut c_char) -> String {
    assert!(!s.is_null(), "expected a string, got null: {}", last_error());
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    gc_string_free(s);
    out
}

/// A configuration small enough to simulate in milliseconds.
unsafe fn fast_config() -> *mut GcConfig {
    let cfg = gc_config_new();
    assert!(!cfg.is_null());
    for (key, value) in [
        ("strategy", "sc-ptm-ic"),
        ("group_size", "4"),
        ("channel.frozen_sinr_db", "12"),
        ("sim.warmup_sf", "40"),
        ("sim.measured_sf", "400"),
    ] {
        let (k, v) = (c(key), c(value));
        assert_eq!(gc_config_set(cfg, k.as_ptr(), v.as_ptr()), GcStatus::Ok);
    }
    cfg
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(gc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_round_trips_through_dump_and_load() {
    unsafe {
        let cfg = gc_config_new();
        let (k, v) = (c("seed"), c("7"));
        assert_eq!(gc_config_set(cfg, k.as_ptr(), v.as_ptr()), GcStatus::Ok);
        let dump = take_string(gc_config_dump(cfg));
        assert!(dump.contains("seed = 7\n"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.txt");
        std::fs::write(&path, &dump).unwrap();
        let p = c(path.to_str().unwrap());
        let loaded = gc_config_load(p.as_ptr());
        assert!(!loaded.is_null(), "{}", last_error());
        assert_eq!(take_string(gc_config_dump(loaded)), dump);

        gc_config_free(loaded);
        gc_config_free(cfg);
    }
}

#[test]
fn bad_keys_files_and_encodings_are_reported() {
    unsafe {
        let cfg = gc_config_new();

        let (k, v) = (c("no.such.key"), c("1"));
        assert_eq!(gc_config_set(cfg, k.as_ptr(), v.as_ptr()), GcStatus::Failed);
        assert!(last_error().contains("unknown config key"), "{}", last_error());

        let missing = c("/nonexistent/config.txt");
        assert!(gc_config_load(missing.as_ptr()).is_null());
        assert!(last_error().contains("i/o error"), "{}", last_error());

        let invalid = CString::new([0xffu8, 0xfe].as_slice()).unwrap();
        let v = c("1");
        assert_eq!(
            gc_config_set(cfg, invalid.as_ptr(), v.as_ptr()),
            GcStatus::InvalidUtf8
        );

        gc_config_free(cfg);
    }
}

#[test]
fn null_handles_are_rejected_not_dereferenced() {
    unsafe {
        let (k, v) = (c("seed"), c("1"));
        assert_eq!(
            gc_config_set(ptr::null_mut(), k.as_ptr(), v.as_ptr()),
            GcStatus::NullPointer
        );
        assert!(gc_config_dump(ptr::null()).is_null());
        assert!(gc_run(ptr::null()).is_null());

        let mut value = 0.0;
        let name = c("allocations");
        assert_eq!(
            gc_run_metric(ptr::null(), name.as_ptr(), &mut value),
            GcStatus::NullPointer
        );

        // Freeing null is a no-op, as in free(3).
        gc_config_free(ptr::null_mut());
        gc_run_free(ptr::null_mut());
        gc_string_free(ptr::null_mut());
    }
}

#[test]
fn run_exposes_metrics_and_writes_artifacts() {
    unsafe {
        let cfg = fast_config();
        let run = gc_run(cfg);
        assert!(!run.is_null(), "{}", last_error());

        let mut residual = f64::NAN;
        let name = c("residual_undelivered");
        assert_eq!(
            gc_run_metric(run, name.as_ptr(), &mut residual),
            GcStatus::Ok
        );
        assert_eq!(residual, 0.0);

        let mut allocs = f64::NAN;
        let name = c("allocations");
        assert_eq!(gc_run_metric(run, name.as_ptr(), &mut allocs), GcStatus::Ok);
        assert!(allocs > 0.0);
        assert!(gc_run_packet_count(run) > 0);

        let mut value = 0.0;
        let name = c("no_such_metric");
        assert_eq!(
            gc_run_metric(run, name.as_ptr(), &mut value),
            GcStatus::Failed
        );
        assert!(last_error().contains("unknown metric"), "{}", last_error());

        let dir = tempfile::tempdir().unwrap();
        type Writer = unsafe extern "C" fn(*const GcRun, *const c_char) -> GcStatus;
        let writers: [(&str, Writer); 4] = [
            ("report.csv", gc_run_write_report),
            ("trace.csv", gc_run_write_trace),
            ("delivery.csv", gc_run_write_delivery),
            ("config.txt", gc_run_write_config),
        ];
        for (file, write) in writers {
            let path = dir.path().join(file);
            let p = c(path.to_str().unwrap());
            assert_eq!(write(run, p.as_ptr()), GcStatus::Ok, "{file}: {}", last_error());
            assert!(std::fs::metadata(&path).unwrap().len() > 0, "{file} is empty");
        }
        let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert!(report.contains("residual_undelivered,0\n"));

        gc_run_free(run);
        gc_config_free(cfg);
    }
}

#[test]
fn undefined_metrics_fail_with_a_message() {
    unsafe {
        let cfg = gc_config_new();
        let (k, v) = (c("groups"), c("0"));
        assert_eq!(gc_config_set(cfg, k.as_ptr(), v.as_ptr()), GcStatus::Ok);
        let run = gc_run(cfg);
        assert!(!run.is_null(), "{}", last_error());

        let mut value = 0.0;
        let name = c("mean_units_per_packet");
        assert_eq!(
            gc_run_metric(run, name.as_ptr(), &mut value),
            GcStatus::Failed
        );
        assert!(last_error().contains("undefined"), "{}", last_error());

        gc_run_free(run);
        gc_config_free(cfg);
    }
}

#[test]
fn planner_groups_disjoint_rows_and_matches_the_oracle() {
    unsafe {
        // Rows 0 and 2 miss receiver 0, row 1 misses receiver 1: rows 0 and 1
        // combine, row 2 needs its own slot.
        let masks = [0b01u64, 0b10, 0b01];
        let mut plan_of_row = [usize::MAX; 3];
        let mut plan_count = 0usize;
        assert_eq!(
            gc_plan_combinations(
                masks.as_ptr(),
                masks.len(),
                2,
                plan_of_row.as_mut_ptr(),
                &mut plan_count,
            ),
            GcStatus::Ok
        );
        assert_eq!(plan_count, 2);
        assert_eq!(plan_of_row, [0, 0, 1]);

        let mut minimum = 0usize;
        assert_eq!(
            gc_oracle_min_partition(masks.as_ptr(), masks.len(), 2, &mut minimum),
            GcStatus::Ok
        );
        assert_eq!(minimum, 2);

        // Forbidding combinations degenerates to one slot per row.
        assert_eq!(
            gc_plan_combinations(
                masks.as_ptr(),
                masks.len(),
                1,
                plan_of_row.as_mut_ptr(),
                &mut plan_count,
            ),
            GcStatus::Ok
        );
        assert_eq!(plan_count, 3);
        assert_eq!(
            gc_oracle_min_partition(masks.as_ptr(), masks.len(), 1, &mut minimum),
            GcStatus::Ok
        );
        assert_eq!(minimum, 3);

        // A row with no missing receivers has nothing to retransmit.
        let empty = [0u64];
        assert_eq!(
            gc_plan_combinations(empty.as_ptr(), 1, 2, plan_of_row.as_mut_ptr(), &mut plan_count),
            GcStatus::Failed
        );
        assert!(last_error().contains("empty NACK"), "{}", last_error());
    }
}

#[test]
fn xor_combination_recovers_a_missing_block() {
    unsafe {
        let blocks: [&[u8]; 3] = [b"alpha", b"bee", b"gamma-long"];
        let ptrs: Vec<*const u8> = blocks.iter().map(|b| b.as_ptr()).collect();
        let lens: Vec<usize> = blocks.iter().map(|b| b.len()).collect();

        let mut coded = vec![0u8; 10];
        let mut coded_len = 0usize;
        assert_eq!(
            gc_xor_encode(ptrs.as_ptr(), lens.as_ptr(), 3, coded.as_mut_ptr(), &mut coded_len),
            GcStatus::Ok
        );
        assert_eq!(coded_len, 10);

        // Recover the middle block from the combination and the other two.
        let side = [ptrs[0], ptrs[2]];
        let mut out = vec![0u8; lens[1]];
        assert_eq!(
            gc_xor_decode(
                coded.as_ptr(),
                coded_len,
                lens.as_ptr(),
                3,
                1,
                side.as_ptr(),
                out.as_mut_ptr(),
            ),
            GcStatus::Ok
        );
        assert_eq!(out, blocks[1]);

        let bad = gc_xor_decode(
            coded.as_ptr(),
            coded_len,
            lens.as_ptr(),
            3,
            7,
            side.as_ptr(),
            out.as_mut_ptr(),
        );
        assert_eq!(bad, GcStatus::Failed);
        assert!(last_error().contains("missing index"), "{}", last_error());
    }
}
