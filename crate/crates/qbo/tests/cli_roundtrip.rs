//! End-to-end CLI checks: run → files on disk → summarize/plot round trips,
//! plus exit-code contracts.

use std::path::Path;
use std::process::Command;

fn qbo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qbo"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("experiment.conf");
    std::fs::write(
        &path,
        "# tiny smoke experiment\n\
         mode = discrete2\n\
         sigma = 0.1\n\
         budget = 1000\n\
         seeds = 1\n\
         n_conditions = 1\n\
         rff_features = 64\n",
    )
    .unwrap();
    path
}

#[test]
fn run_produces_expected_files_and_tools_read_them() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let out_dir = tmp.path().join("out");

    let status = qbo()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--jobs", "1", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());

    // One trace per (method, condition, seed) cell plus the fixed artifacts.
    for name in [
        "trace_qbo_c0_s1.csv",
        "trace_classic_c0_s1.csv",
        "summary.csv",
        "manifest.txt",
        "regret.svg",
        "mae.svg",
    ] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }

    let trace = std::fs::read_to_string(out_dir.join("trace_qbo_c0_s1.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "query_index,stage,method,charged_regret,cumulative_regret,incumbent_mae,epsilon_s,queries_in_stage"
    );
    let first = lines.next().unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields.len(), 8);
    assert_eq!(fields[0], "0");
    assert_eq!(fields[2], "qbo");
    assert!(!trace.contains('\r'), "traces must be LF-only");

    // summarize recomputes the persisted summary from traces alone.
    let out = qbo().args(["summarize", "--in"]).arg(&out_dir).output().unwrap();
    assert!(out.status.success());
    let recomputed = String::from_utf8(out.stdout).unwrap();
    let persisted = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(recomputed, persisted);

    // plot re-renders from traces.
    for (kind, name) in [("regret", "regret2.svg"), ("mae", "mae2.svg")] {
        let dest = tmp.path().join(name);
        let status = qbo()
            .args(["plot", "--in"])
            .arg(&out_dir)
            .args(["--kind", kind, "--out"])
            .arg(&dest)
            .status()
            .unwrap();
        assert!(status.success());
        let svg = std::fs::read_to_string(&dest).unwrap();
        assert!(svg.starts_with("<svg"), "{kind} plot is not an SVG");
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.conf");
    std::fs::write(&bad, "mode = discrete2\nsigma = -1\n").unwrap();
    let out = qbo()
        .args(["run", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sigma"), "error should name the field: {stderr}");

    let missing = tmp.path().join("nope.conf");
    let out = qbo().args(["run", "--config"]).arg(&missing).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    // Valid config semantics, but summarize over an empty directory is a
    // runtime failure.
    let out = qbo().args(["summarize", "--in"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn queries_subcommand_prints_both_counts() {
    let out = qbo()
        .args(["queries", "--sigma", "0.1", "--epsilon", "0.01", "--delta", "0.05"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("2000"), "missing chebyshev count: {text}");
    assert!(text.contains("1267"), "missing qmc count: {text}");
}
