//! End-to-end checks of the `tcd-npe` binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tcd-npe"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn tiny_model_produces_both_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports");
    let result = run(&[
        "--model",
        "4:10:5:3",
        "--batch",
        "1",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    assert!(out.join("report.json").exists());
    assert!(out.join("report.csv").exists());

    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    // Header plus one row per dataflow.
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("4:10:5:3,os-tcd,1,"));
}

#[test]
fn same_seed_gives_byte_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let result = run(&[
            "--model",
            "13:10:3",
            "--batch",
            "2",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
    }
    for name in ["report.json", "report.csv"] {
        let fa = std::fs::read(a.join(name)).unwrap();
        let fb = std::fs::read(b.join(name)).unwrap();
        assert_eq!(fa, fb, "{name} differs between identical runs");
    }
}

#[test]
fn bad_topology_fails_with_diagnostic() {
    let result = run(&["--model", "x:3"]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("\"x\""), "stderr: {stderr}");
}

#[test]
fn selftest_passes() {
    let result = run(&["--selftest"]);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(result.status.success(), "stdout: {stdout}");
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn ppa_file_and_env_var_are_honored() {
    let dir = tempfile::tempdir().unwrap();
    let ppa = dir.path().join("ppa.txt");
    // Slow the conventional baseline: os-conv exec time must grow.
    std::fs::write(&ppa, "conv.delay_ns = 100.0\n").unwrap();

    let out_default = dir.path().join("default");
    let out_tuned = dir.path().join("tuned");
    assert!(run(&[
        "--model",
        "13:10:3",
        "--dataflow",
        "os-conv",
        "--out",
        out_default.to_str().unwrap(),
    ])
    .status
    .success());
    let result = bin()
        .args([
            "--model",
            "13:10:3",
            "--dataflow",
            "os-conv",
            "--out",
            out_tuned.to_str().unwrap(),
        ])
        .env("TCDNPE_PPA", &ppa)
        .output()
        .unwrap();
    assert!(result.status.success());

    let exec_ns = |p: &Path| -> f64 {
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(p.join("report.json")).unwrap()).unwrap();
        json["runs"][0]["exec_ns"].as_f64().unwrap()
    };
    assert!(exec_ns(&out_tuned) > exec_ns(&out_default));
}

#[test]
fn unknown_dataflow_rejected() {
    let result = run(&["--model", "13:10:3", "--dataflow", "sideways"]);
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("sideways"));
}
