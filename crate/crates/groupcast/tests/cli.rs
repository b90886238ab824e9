//! End-to-end checks of the command-line binary: artifact layout,
//! byte-level determinism, replay auditing, and error reporting.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_groupcast"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn groupcast");
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn groupcast");
    assert_eq!(out.status.code(), Some(1), "command {args:?} should fail");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).expect("read artifact")
}

/// Short frozen-channel run so the binary tests stay quick.
const FAST: &[&str] = &[
    "--set",
    "sim.warmup_sf=40",
    "--set",
    "sim.measured_sf=400",
    "--set",
    "channel.frozen_sinr_db=12",
    "--group-size",
    "4",
];

fn fast_run(dir: &Path) {
    let mut args = vec!["run"];
    args.extend_from_slice(FAST);
    args.extend_from_slice(&["--out", dir.to_str().unwrap()]);
    run_ok(&args);
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fast_run(dir.path());
    for name in ["config.txt", "trace.csv", "report.csv", "delivery.csv"] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    let report = String::from_utf8(read(dir.path(), "report.csv")).unwrap();
    assert!(report.contains("residual_undelivered,0"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    fast_run(a.path());
    fast_run(b.path());
    for name in ["config.txt", "trace.csv", "report.csv", "delivery.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs");
    }
}

#[test]
fn replay_verifies_and_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    fast_run(dir.path());
    run_ok(&["replay", "--out", dir.path().to_str().unwrap()]);

    let report = dir.path().join("report.csv");
    let mut text = std::fs::read_to_string(&report).unwrap();
    text.push_str("tampered,1\n");
    std::fs::write(&report, text).unwrap();
    let stderr = run_err(&["replay", "--out", dir.path().to_str().unwrap()]);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
    assert!(stderr.contains("replay mismatch"), "stderr: {stderr}");
}

#[test]
fn replay_rebuilds_missing_reports() {
    let dir = tempfile::tempdir().unwrap();
    fast_run(dir.path());
    let report = read(dir.path(), "report.csv");
    let delivery = read(dir.path(), "delivery.csv");
    std::fs::remove_file(dir.path().join("report.csv")).unwrap();
    std::fs::remove_file(dir.path().join("delivery.csv")).unwrap();
    run_ok(&["replay", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(read(dir.path(), "report.csv"), report);
    assert_eq!(read(dir.path(), "delivery.csv"), delivery);
}

#[test]
fn validate_prints_ok_and_rejects_unknown_keys() {
    let out = run_ok(&["validate"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "ok\n");
    let stderr = run_err(&["validate", "--set", "bogus.key=1"]);
    assert!(stderr.contains("unknown config key"), "stderr: {stderr}");
}

#[test]
fn printed_config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(&["validate", "--print-config", "--seed", "9"]);
    let path = dir.path().join("saved.txt");
    std::fs::write(&path, &out.stdout).unwrap();
    let again = run_ok(&[
        "validate",
        "--print-config",
        "--config",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn dedicated_flags_override_set_pairs() {
    let out = run_ok(&[
        "validate",
        "--print-config",
        "--set",
        "group_size=8",
        "--group-size",
        "4",
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("group_size = 4\n"), "config: {text}");
}

#[test]
fn sweep_writes_run_and_summary_rows() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "sweep",
        "--set",
        "sim.warmup_sf=40",
        "--set",
        "sim.measured_sf=400",
        "--set",
        "channel.frozen_sinr_db=12",
        "--set",
        "sweep.group_sizes=2,4",
        "--set",
        "sweep.seeds=1,2",
        "--set",
        "sweep.strategies=sc-ptm,sc-ptm-ic",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let text = String::from_utf8(read(dir.path(), "sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("kind,strategy,group_size"));
    let runs = text.lines().filter(|l| l.starts_with("run,")).count();
    let summaries = text.lines().filter(|l| l.starts_with("summary,")).count();
    assert_eq!(runs, 2 * 2 * 2);
    assert_eq!(summaries, 2 * 2);
}
