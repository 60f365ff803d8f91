//! End-to-end behavior of the `oqkd` binary.

use std::path::Path;
use std::process::{Command, Output};

fn oqkd(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oqkd"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn invalid_setting_names_the_key_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = oqkd(&["horizon", "--set", "traffic.alpha=1.5"], dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("traffic.alpha"), "{err}");

    let o = oqkd(&["horizon", "--set", "traffic.colour=blue"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("traffic.colour"));
}

#[test]
fn zero_threshold_horizon_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&oqkd(&["horizon", "--b0-dku", "0"], dir.path()));
    assert!(out.contains("horizon.t0_hours: 0\n"), "{out}");
}

#[test]
fn artifact_replays_its_own_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let args = [
        "buffer",
        "--category",
        "2",
        "--days",
        "1",
        "--seed",
        "11",
        "--b0-dku",
        "0.3",
    ];
    let report = stdout(&oqkd(&args, &first));
    let trace = std::fs::read_to_string(first.join("buffer_trace.csv")).unwrap();
    assert!(trace.starts_with("# oqkd-provenance "));

    let second = dir.path().join("second");
    let config = first.join("buffer_trace.csv");
    let replay = stdout(&oqkd(
        &["buffer", "--config", config.to_str().unwrap()],
        &second,
    ));
    assert_eq!(replay, report);
    assert_eq!(
        std::fs::read_to_string(second.join("buffer_trace.csv")).unwrap(),
        trace.replace(
            &format!("output.directory={}", first.display()),
            &format!("output.directory={}", second.display()),
        )
    );
}

#[test]
fn formats_select_the_written_files() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&oqkd(
        &["traffic", "--days", "0.5", "--set", "output.formats=report"],
        dir.path(),
    ));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, vec!["traffic_report.txt".to_string()]);
}
