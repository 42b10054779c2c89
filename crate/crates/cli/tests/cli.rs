use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
    "run_id": "tiny",
    "graph": {"n": 2, "edges": [[1, 2, 1.0]]},
    "objective": {"kind": "least_squares", "params": {"a": 1.0, "dim": 2}},
    "data": {"source": "generator", "weights": [1.5], "per_agent": 5},
    "epsilon": 0.3,
    "integrator": {"step": 0.05, "max_steps": 400000, "vf_tol": 1e-7, "record_every": 1000},
    "init": {"x": [0, 1], "lambda": [3, 5]},
    "validation_size": 500,
    "sweep": {"sizes": [1, 2], "runs": 3},
    "validate": {"x": [1.5, 0.0]}
}"#;

fn ddro(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddro"))
        .args(args)
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("cfg.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_prints_one_json_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = ddro(&["run"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    let summary: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(summary["stop_reason"], "converged");
    assert_eq!(summary["mode"], "run");
    let run_dir = dir.path().join("out/tiny");
    for f in ["trajectory.csv", "summary.json", "config_echo.json"] {
        assert!(run_dir.join(f).exists(), "missing {f}");
    }
}

#[test]
fn every_subcommand_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    for sub in ["oracle", "sweep", "validate"] {
        let out = ddro(&[sub, "--quiet"], &cfg, &dir.path().join(sub));
        assert_eq!(out.status.code(), Some(0), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
    assert!(dir.path().join("sweep/tiny/sweep.csv").exists());
}

#[test]
fn step_limit_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("\"max_steps\": 400000", "\"max_steps\": 10"));
    let out = ddro(&["run"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["stop_reason"], "max_steps");
}

#[test]
fn divergence_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("\"step\": 0.05", "\"step\": 5.0"));
    let out = ddro(&["run"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["stop_reason"], "diverged");
}

#[test]
fn missing_epsilon_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("\"epsilon\": 0.3,", ""));
    let out = ddro(&["run"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}

#[test]
fn unknown_key_exits_with_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("\"epsilon\"", "\"epsilonn\": 1, \"epsilon\""));
    let out = ddro(&["oracle"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilonn"));
}

#[test]
fn missing_config_file_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddro(&["run"], &dir.path().join("absent.json"), &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ddro(&["run", "--quiet"], &cfg, &a);
    ddro(&["run", "--quiet"], &cfg, &b);
    for f in ["trajectory.csv", "summary.json"] {
        assert_eq!(fs::read(a.join("tiny").join(f)).unwrap(), fs::read(b.join("tiny").join(f)).unwrap());
    }
}
