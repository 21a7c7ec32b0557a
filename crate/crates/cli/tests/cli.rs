use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_overtake-mc"))
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("overtake-mc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn plan_prints_action_table() {
    let snap = scratch("plan.txt", "lane=L; fv=14; ov=24; lcc=0\n");
    let out = bin().args(["plan", "--snapshot"]).arg(&snap).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("mode: final"), "{text}");
    assert!(text.contains("RightLaneChange"));
    assert!(text.trim_end().ends_with("lcc=2"), "{text}");
}

#[test]
fn plan_without_path_exits_2() {
    let snap = scratch("nopath.txt", "lane=L; fv=14; ov=24; lcc=0\n");
    let out = bin()
        .args(["plan", "--mode", "final", "--max-lane-changes", "0", "--snapshot"])
        .arg(&snap)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).starts_with("no plan"));
}

#[test]
fn bad_snapshot_is_an_error() {
    let snap = scratch("bad.txt", "lane=Q\n");
    let out = bin().args(["plan", "--snapshot"]).arg(&snap).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn emit_matches_golden() {
    let snap = scratch("emit.txt", "lane=L; fv=14; ov=24; lcc=0\n");
    let out = bin().args(["emit", "--snapshot"]).arg(&snap).output().unwrap();
    assert!(out.status.success());
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/golden/final_left_fv14_ov24.pml");
    assert_eq!(stdout(&out), std::fs::read_to_string(golden).unwrap());
}

#[test]
fn parse_trail_lists_actions() {
    let trail = scratch(
        "trail.txt",
        "      ACTION: RightLaneChange\n  12:\tproc  0 (av:1) line 40\n      ACTION: Drive\n",
    );
    let out = bin().arg("parse-trail").arg(&trail).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out), "RightLaneChange\nDrive\n");
}

#[test]
fn simulate_writes_logs_and_metrics() {
    let events = scratch("events.jsonl", "");
    let out = bin()
        .args(["simulate", "--seed", "5", "--events"])
        .arg(&events)
        .output()
        .unwrap();
    assert!(out.status.success());
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["seed"], 5);
    assert_eq!(metrics["failure_cause"], "ManualStop");
    let log = std::fs::read_to_string(&events).unwrap();
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(last["event"], "stop");
}

#[test]
fn batch_prints_summary() {
    let cfg = scratch("batch.toml", "seed = 2\n[limits]\nmax_distance_km = 0.5\n");
    let json = cfg.with_file_name("summary.json");
    let out = bin()
        .args(["batch", "--runs", "3", "--config"])
        .arg(&cfg)
        .arg("--json")
        .arg(&json)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("Vehicles overtaken"));
    assert!(text.contains("ManualStop: 3"), "{text}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 3);
}

#[test]
fn default_config_parses_back() {
    let out = bin().arg("default-config").output().unwrap();
    assert!(stdout(&out).starts_with("schema_version = 1"));
    let cfg = scratch("default.toml", &stdout(&out));
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
}
