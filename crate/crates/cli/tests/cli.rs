//! End-to-end runs of the `agora` binary.

use std::path::Path;
use std::process::{Command, Output};

fn agora(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agora"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SMALL_ARENA: &str = r#"{
  "kind": "arena_grid",
  "episodes_per_condition": 4,
  "seed_base": 500,
  "full_logs": true,
  "conditions": [
    { "name": "villagers_only", "villager_attribution": true },
    { "name": "baseline" }
  ]
}"#;

#[test]
fn arena_run_writes_a_report_that_replays_and_reaggregates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("arena.json");
    write(&cfg, SMALL_ARENA);
    let out_dir = dir.path().join("out");
    let out = agora(&[
        "--quiet",
        "run-arena",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stderr.is_empty());
    let json = stdout_json(&out);
    let names: Vec<_> = json["report"]["arena"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["name"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(names, ["baseline", "villagers_only"]);
    for f in ["summary.json", "metrics.csv", "episodes.jsonl"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }

    let log = out_dir.join("logs/baseline/500.jsonl");
    let out = agora(&["replay", "--verify", log.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["status"], "log verified");
    assert!(String::from_utf8_lossy(&out.stderr).contains("log verified"));

    let out = agora(&["replay", log.to_str().unwrap()]);
    assert_eq!(stdout_json(&out)["seed"], 500);

    let out = agora(&["report", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["matches_summary"], true);
}

#[test]
fn seed_override_changes_the_episode_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("arena.json");
    write(&cfg, SMALL_ARENA);
    let out_dir = dir.path().join("o");
    let out = agora(&[
        "--quiet",
        "run-arena",
        cfg.to_str().unwrap(),
        "--seed",
        "9000",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let seeds = &stdout_json(&out)["report"]["arena"][0]["seeds"];
    assert_eq!(seeds, &serde_json::json!([9000, 9001, 9002, 9003]));
}

#[test]
fn tampered_log_fails_verification_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("arena.json");
    write(&cfg, SMALL_ARENA);
    let out_dir = dir.path().join("out");
    assert!(agora(&[
        "--quiet",
        "run-arena",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap()
    ])
    .status
    .success());
    let log = out_dir.join("logs/villagers_only/501.jsonl");
    let text = std::fs::read_to_string(&log).unwrap();
    let tampered = text.replacen("\"amount\":1", "\"amount\":3", 1);
    assert_ne!(text, tampered);
    write(&log, &tampered);
    assert_eq!(
        agora(&["replay", "--verify", log.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn asat_run_with_acceptance_and_store_inspection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("asat.json");
    write(
        &cfg,
        r#"{ "kind": "asat_grid", "episodes_per_condition": 20, "seed_base": 77, "acceptance": true,
        "asat": { "growth": { "gain_rate": 0.7806104007478165, "spillover_rate": 0.0, "cold_start_penalty": 0.48290843988782806, "noise_sd": 0.05 } } }"#,
    );
    let out_dir = dir.path().join("out");
    let out = agora(&[
        "--quiet",
        "run-asat",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = stdout_json(&out);
    assert!(json["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));

    let store = out_dir.join("stores/weakest_first-77");
    let out = agora(&["inspect-store", store.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    assert_eq!(json["consistent"], true);
    assert_eq!(json["sessions"], 21);
}

#[test]
fn failed_embedded_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("asat.json");
    // without training there is no separation between the schedules
    write(
        &cfg,
        r#"{ "kind": "asat_grid", "episodes_per_condition": 2, "acceptance": true,
        "asat": { "weakest_first_sessions": 0, "uniform_sessions": 0, "cold_start_sessions": 0, "maintenance_sessions": 0 } }"#,
    );
    let out = agora(&[
        "--quiet",
        "run-asat",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed assertions"));
}

#[test]
fn calibrate_reproduces_the_pinned_growth_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("targets.json");
    write(
        &cfg,
        r#"{ "initial_score": 80.9, "weakest_first_final": 96.9, "weakest_first_sessions": 16,
        "uniform_final": 90.4, "uniform_sessions": 16, "cold_start_final": 83.3, "cold_start_sessions": 4 }"#,
    );
    let out = agora(&["--quiet", "calibrate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    let gain = json["growth"]["gain_rate"].as_f64().unwrap();
    assert!((gain - agora_core::asat::GrowthModel::CALIBRATED.gain_rate).abs() < 1e-9);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(agora(&[]).status.code(), Some(2));
    assert_eq!(agora(&["run-arena", "--bogus", "x"]).status.code(), Some(2));
    assert_eq!(agora(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        agora(&["run-arena", "/definitely/missing.json"])
            .status
            .code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    write(
        &cfg,
        r#"{ "kind": "asat_grid", "episodes_per_condition": 0 }"#,
    );
    assert_eq!(
        agora(&["run-asat", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(
        agora(&["run-arena", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let out = agora(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}
