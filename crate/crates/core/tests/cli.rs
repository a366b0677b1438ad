use std::process::Command;

use sawb_core::solver::{self, SolveConfig};

fn sawb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sawb"))
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cert = solver::solve(&SolveConfig::flagship()).unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, cert.to_json()).unwrap();
    let mut bad_cert = cert.clone();
    bad_cert.l += 1;
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, bad_cert.to_json()).unwrap();

    let ok = sawb().args(["verify", "--certificate", good.to_str().unwrap()]).output().unwrap();
    assert!(ok.status.success());
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["valid"], true);

    let fail = sawb().args(["verify", "--certificate", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(fail.status.code(), Some(1));
}

#[test]
fn rejected_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"group": {"model": "sl2", "level": 0}}"#).unwrap();
    let out = sawb().args(["--config", cfg.to_str().unwrap(), "solve"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn enumerate_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    std::fs::write(&cfg, r#"{"model": "sl2", "level": 1}"#).unwrap();
    let out = sawb().args(["enumerate", "--group-config", cfg.to_str().unwrap(), "--T", "3"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("c1,c2,c3,c4"));
    assert!(lines.all(|l| l.split(',').count() == 4));
}
