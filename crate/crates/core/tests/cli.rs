use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_plap-sim");
const MINIMAL: &str = r#"{"model": {"p": 2, "eps": 0.1, "T": 1, "M": 100, "n_cells": 64, "length": 1}}"#;

fn config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--set")
        .arg(format!("output.dir={}", out.display()))
        .output()
        .unwrap()
}

#[test]
fn estimate_cp_identity_case() {
    let o = Command::new(BIN).args(["estimate-cp", "--p", "2"]).output().unwrap();
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), "1.0");
    let o = Command::new(BIN).args(["estimate-cp", "--p", "1.5"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_on_defaults_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let o = run(&["verify"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("verify-s0.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    for c in report["checks"].as_array().unwrap() {
        for key in ["property", "passed", "measured", "bound", "slack"] {
            assert!(c.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn silent_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let read = || std::fs::read(out.join("run-s0.csv")).unwrap();
    assert!(run(&["run", "--set", "noise.sigma=0"], &cfg, &out).status.success());
    let first = read();
    assert!(run(&["run", "--set", "noise.sigma=0"], &cfg, &out).status.success());
    assert_eq!(first, read());

    let text = String::from_utf8(first).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# base_seed=0"));
    let header = lines.iter().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("t,u1,u2,"));
    assert!(header.ends_with(",u64"));
    assert_eq!(lines.iter().filter(|l| !l.starts_with('#')).count(), 1 + 101);
    assert!(!text.contains('\r'));
}

#[test]
fn thin_mode_and_tag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let o = run(&["run", "--set", "output.mode=thin", "--set", "output.tag=demo"], &cfg, &out);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("run-demo.csv")).unwrap();
    assert!(text.lines().any(|l| l == "t,l2_norm,v_norm_p,constraint_violation"));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (text, needle) in [
        (MINIMAL.replace("\"p\": 2", "\"p\": 1.5"), "model.p"),
        (MINIMAL.replace("\"eps\": 0.1", "\"eps\": -1"), "model.eps"),
        (MINIMAL.replace("}}", "}, \"nosie\": {}}"), "nosie"),
        ("{\"model\": ".to_string(), "malformed"),
    ] {
        let cfg = config(dir.path(), &text);
        let o = run(&["run"], &cfg, &out);
        assert_eq!(o.status.code(), Some(1));
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert!(stderr.contains(needle), "{needle}: {stderr}");
    }
    let o = run(&["run"], &dir.path().join("absent.json"), &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let o = run(&["run", "--set", "solver.max_newton=1", "--set", "source.preset=constant", "--set", "source.params={\"value\": 3}"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eps_study_and_mc_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let common = ["--set", "model.M=20", "--set", "model.n_cells=16", "--set", "experiment.n_paths=4"];
    let mut args = vec!["eps-study"];
    args.extend(common);
    assert!(run(&args, &cfg, &out).status.success());
    let table = std::fs::read_to_string(out.join("eps-study-s0.csv")).unwrap();
    assert!(table.contains("# seed_policy="));
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 4);
    args[0] = "mc";
    assert!(run(&args, &cfg, &out).status.success());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("mc-s0.json")).unwrap()).unwrap();
    assert_eq!(summary["n_paths"], 4);
    assert_eq!(summary["times"].as_array().unwrap().len(), 21);
}
