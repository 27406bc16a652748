use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fockstab::RunConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fockstab"));
    c.env_remove("FOCKSTAB_WORKERS");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).arg("--out-dir").arg(dir).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"{"trajectories": 6, "steps": 12, "master_seed": 3, "record_stride": 4, "trajectory_file": "traj.csv"}"#;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden").join(name)
}

#[test]
fn simulate_writes_golden_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    let out = run(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for name in ["stats.csv", "traj.csv"] {
        let got = std::fs::read_to_string(dir.path().join(name)).unwrap();
        if std::env::var_os("FOCKSTAB_BLESS").is_some() {
            std::fs::create_dir_all(golden("")).unwrap();
            std::fs::write(golden(name), &got).unwrap();
        }
        let want = std::fs::read_to_string(golden(name)).unwrap();
        assert_eq!(got, want, "{name} differs from golden file");
    }
}

#[test]
fn output_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    assert_eq!(run(&["simulate", cfg.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let mut lines = stats.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,mean_V,se_V,mean_fidelity,conv_fraction,fock_fraction,mean_leakage"
    );
    let steps: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["0", "4", "8", "12"]);
    let traj = std::fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(
        lines.next().unwrap(),
        "traj_id,step,outcome,p_g,alpha,v_before,v_half,v_after,fidelity,leakage"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 10);
    assert!(first[2] == "g" || first[2] == "e");
    // 17 significant digits
    let mantissa = first[3].split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
}

#[test]
fn effective_config_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    assert_eq!(run(&["simulate", cfg.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let emitted = std::fs::read_to_string(dir.path().join("effective_config.json")).unwrap();
    let reloaded = RunConfig::from_json(&emitted).unwrap();
    assert_eq!(reloaded.to_json(), emitted);
    assert_eq!(reloaded.theta, 0.25);
    assert_eq!(reloaded.trajectories, 6);
}

#[test]
fn validation_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"phi": 1.5707963267948966}"#, "colliding levels (0, 2)"),
        (r#"{"n_bar": 1}"#, "n_bar >= 2"),
        (r#"{"delta": 0.5}"#, "delta"),
        (r#"{"n_max": 3}"#, "n_bar + 2 <= n_max"),
        (r#"{"thetaa": 0.1}"#, "thetaa"),
        ("not json", "config"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.json"), text);
        let out = run(&["simulate", cfg.to_str().unwrap()], dir.path());
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(stderr(&out).contains(needle), "{text}: {}", stderr(&out));
    }
    let missing = run(&["simulate", "/nonexistent/c.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn leakage_abort_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"trajectories": 4, "steps": 3, "leakage_budget": 1e-300}"#,
    );
    let out = run(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("aborted"));
}

#[test]
fn verify_default_passes_and_tampering_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", "{}");
    let out = run(&["verify", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let report = stdout(&out);
    for name in [
        "sigma_identity",
        "k2_closed_form",
        "f1_finite_difference",
        "f2_finite_difference",
        "displacement_oracle",
        "supermartingale",
    ] {
        assert!(report.contains(&format!("PASS {name}")), "{report}");
    }
    assert!(dir.path().join("verify_report.json").exists());

    let out = run(&["verify", cfg.to_str().unwrap(), "--tamper-sigma", "20"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let report = stdout(&out);
    let line = report.lines().find(|l| l.contains("sigma_identity")).unwrap();
    assert!(line.starts_with("FAIL"));
    assert!(line.contains("n = 20"), "{line}");

    let big = write(dir.path(), "big.json", r#"{"delta": 0.2}"#);
    assert_eq!(run(&["verify", big.to_str().unwrap()], dir.path()).status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    let base = write(dir.path(), "base.json", r#"{"trajectories": 4, "steps": 10, "master_seed": 1}"#);
    let other = write(dir.path(), "other.json", r#"{"trajectories": 4, "steps": 10, "master_seed": 99}"#);
    assert_eq!(run(&["simulate", base.to_str().unwrap(), "--seed", "99"], &a).status.code(), Some(0));
    assert_eq!(run(&["simulate", other.to_str().unwrap()], &b).status.code(), Some(0));
    assert_eq!(run(&["simulate", base.to_str().unwrap()], &c).status.code(), Some(0));
    let read = |d: &Path| std::fs::read(d.join("stats.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn worker_env_used_only_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"trajectories": 4, "steps": 5}"#);
    let env_bad = bin()
        .args(["simulate", cfg.to_str().unwrap(), "--out-dir"])
        .arg(dir.path())
        .env("FOCKSTAB_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(env_bad.status.code(), Some(2));
    let flag_wins = bin()
        .args(["simulate", cfg.to_str().unwrap(), "--workers", "2", "--out-dir"])
        .arg(dir.path())
        .env("FOCKSTAB_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(flag_wins.status.code(), Some(0), "{}", stderr(&flag_wins));
    let env_ok = bin()
        .args(["simulate", cfg.to_str().unwrap(), "--out-dir"])
        .arg(dir.path())
        .env("FOCKSTAB_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(env_ok.status.code(), Some(0));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn sweep_single_cell_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"{"trajectories": 8, "steps": 15, "master_seed": 5}"#;
    let cfg = write(dir.path(), "c.json", base);
    let spec = write(dir.path(), "s.json", &format!(r#"{{"base": {base}}}"#));
    assert_eq!(run(&["simulate", cfg.to_str().unwrap()], dir.path()).status.code(), Some(0));
    assert_eq!(run(&["sweep", spec.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let stats = csv_rows(&dir.path().join("stats.csv"));
    let sweep = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(sweep.len(), 1);
    assert_eq!(sweep[0][5], "ok");
    // step through mean_leakage match the last stats row
    assert_eq!(sweep[0][6..13], stats.last().unwrap()[..]);
}

#[test]
fn sweep_over_alpha_bar() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "s.json",
        r#"{"base": {"trajectories": 200, "steps": 60, "master_seed": 11}, "alpha_bar": [0.0, 0.1, 0.2]}"#,
    );
    let out = run(&["sweep", spec.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 3);
    let col = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    let alphas: Vec<f64> = rows.iter().map(|r| col(r, 2)).collect();
    assert_eq!(alphas, [0.0, 0.1, 0.2]);
    // pure measurement: target mass stays at the initial target population
    let p0 = col(&rows[0], 13);
    let mass0 = col(&rows[0], 14);
    let se = (p0 * (1.0 - p0) / 200.0).sqrt();
    assert!((mass0 - p0).abs() <= 4.0 * se, "{mass0} vs {p0}");
    assert!(col(&rows[2], 14) > mass0 + 0.3);
}

#[test]
fn sweep_marks_invalid_delta_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "s.json",
        r#"{"base": {"trajectories": 2, "steps": 3}, "delta": [0.01, 0.5, "auto"], "n_max": [3, 20]}"#,
    );
    let out = run(&["sweep", spec.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    let status: Vec<(&str, &str, &str)> = rows
        .iter()
        .map(|r| (r[1].as_str(), r[3].as_str(), r[5].as_str()))
        .collect();
    assert_eq!(
        status,
        [
            ("0.01", "3", "skipped"),
            ("0.01", "20", "ok"),
            ("0.5", "3", "skipped"),
            ("0.5", "20", "skipped"),
            ("auto", "3", "skipped"),
            ("auto", "20", "ok"),
        ]
    );
    assert!(rows[3][15].contains("delta"));
}

#[test]
fn oversize_sweep_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "s.json",
        r#"{"alpha_bar": [0.1, 0.2, 0.3], "steps": [1, 2, 3], "max_cells": 8}"#,
    );
    let out = run(&["sweep", spec.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("9 cells"));
    assert!(!dir.path().join("sweep.csv").exists());
}
