// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

fn spinfb(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinfb"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Shipped scenario with edits applied, written into `dir`.
fn edited(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v = read_json(&scenario(name));
    edit(&mut v);
    let path = dir.join(format!("{name}-edited.json"));
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

fn rho_columns(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    let header = lines.next().unwrap();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| header[i].starts_with("rho_"))
        .collect();
    lines
        .map(|row| keep.iter().map(|&i| row[i].clone()).collect())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("single-spin");
    let o = spinfb(&["simulate", s(&cfg)], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "single-spin.csv",
        "single-spin_trace.csv",
        "single-spin_fid.csv",
        "single-spin_summary.json",
        "single-spin_plot.py",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }

    let trace = dir.path().join("single-spin_trace.csv");
    let o = spinfb(&["replay", s(&cfg), s(&trace), "--quiet"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    // The replay is compared with the exact reference orbit, so only the
    // state columns are expected to agree bit for bit.
    let a = rho_columns(&dir.path().join("single-spin.csv"));
    let b = rho_columns(&dir.path().join("single-spin_replay.csv"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let summary = read_json(&dir.path().join("single-spin_replay_summary.json"));
    assert_eq!(summary["resampled"], Value::Bool(false));
}

#[test]
fn check_and_span_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("two-spin");
    let o = spinfb(&["check", s(&cfg), "--quiet"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read_json(&dir.path().join("two-spin_check.json")).is_object());
    let o = spinfb(&["span", s(&cfg), "--depth", "6"], dir.path());
    assert_eq!(code(&o), 0);
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed, read_json(&dir.path().join("two-spin_span.json")));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("gain.json");
    std::fs::write(
        &sweep,
        r#"{"parameter": "feedback.gain", "values": [1.0, 2.0, 4.0], "metrics": ["final_v"]}"#,
    )
    .unwrap();
    let o = spinfb(
        &["sweep", s(&scenario("single-spin")), s(&sweep), "--quiet"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("single-spin_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn seed_flag_makes_random_starts_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "single-spin", |v| {
        v["initial"] = serde_json::json!({"random": {"pure": true}});
        v["integrator"]["t_final"] = serde_json::json!(1.0);
    });
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = spinfb(&["simulate", s(&cfg), "--seed", seed, "--quiet"], &out);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("single-spin.csv")).unwrap()
    };
    assert_eq!(run("7", "a"), run("7", "b"));
    assert_ne!(run("7", "a"), run("8", "c"));
}

#[test]
fn renormalize_flag_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinfb(
        &[
            "simulate",
            s(&scenario("single-spin")),
            "--renormalize",
            "--quiet",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let summary = read_json(&dir.path().join("single-spin_summary.json"));
    assert_eq!(summary["renormalized"], Value::Bool(true));
}

#[test]
fn configuration_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&spinfb(&["simulate", s(&missing)], dir.path())), 2);

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    assert_eq!(code(&spinfb(&["check", s(&broken)], dir.path())), 2);

    let bad_grid = edited(dir.path(), "single-spin", |v| {
        v["integrator"]["t_final"] = serde_json::json!(0.0123);
    });
    assert_eq!(code(&spinfb(&["simulate", s(&bad_grid)], dir.path())), 2);

    let sweep = dir.path().join("sweep.json");
    std::fs::write(
        &sweep,
        r#"{"parameter": "feedback.speed", "values": [1.0]}"#,
    )
    .unwrap();
    let o = spinfb(
        &["sweep", s(&scenario("single-spin")), s(&sweep)],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("feedback.speed"));
}

#[test]
fn unstable_step_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "single-spin", |v| {
        v["integrator"]["dt"] = serde_json::json!(0.5);
    });
    let o = spinfb(&["simulate", s(&cfg)], dir.path());
    assert_eq!(code(&o), 3);
    assert!(!dir.path().join("single-spin.csv").exists());
}
