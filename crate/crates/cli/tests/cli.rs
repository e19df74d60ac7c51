use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn unitychain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unitychain")).args(args).output().unwrap()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_into(dir: &Path) -> PathBuf {
    let out = unitychain(&[
        "run",
        "--scenario",
        scenario("honest.toml").to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir.join("events.jsonl")
}

#[test]
fn run_writes_log_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let log = run_into(dir.path());
    assert!(log.exists());
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert!(dir.path().join("summary.toml").exists());
}

#[test]
fn replay_verifies_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let log = run_into(dir.path());
    let ok = unitychain(&["replay", "--log", log.to_str().unwrap(), "--verify"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));

    let text = std::fs::read_to_string(&log).unwrap();
    let line = text.lines().position(|l| l.contains("\"kind\":\"cycle_block\"")).unwrap();
    let tampered: String = text
        .lines()
        .enumerate()
        .map(|(i, l)| if i == line { l.replacen("\"tick\":", "\"tick\":9", 1) } else { l.to_string() } + "\n")
        .collect();
    let bad = dir.path().join("tampered.jsonl");
    std::fs::write(&bad, tampered).unwrap();
    let out = unitychain(&["replay", "--log", bad.to_str().unwrap(), "--verify"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(&format!("line {}", line + 1)), "{}", stderr(&out));
}

#[test]
fn invalid_scenario_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "node_count = 2\nhorizon = 10\nbogus = 1\nworkload = \"sometimes\"\n").unwrap();
    let out = unitychain(&["run", "--scenario", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    for needle in ["bogus", "workload", "node_count"] {
        assert!(err.contains(needle), "missing {needle} in {err}");
    }

    let missing = unitychain(&["run", "--scenario", "/nonexistent.toml", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&missing), 1);
}

#[test]
fn metrics_for_a_coalition() {
    let dir = tempfile::tempdir().unwrap();
    let log = run_into(dir.path());
    let out = unitychain(&["metrics", "--log", log.to_str().unwrap(), "--coalition", "0,1,2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: toml::Table = String::from_utf8(out.stdout).unwrap().parse().unwrap();
    let members = summary["coalition"]["members"].as_array().unwrap();
    assert_eq!(members.len(), 3);

    let out = unitychain(&["metrics", "--log", log.to_str().unwrap(), "--coalition", "0,99"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sweep_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = unitychain(&[
        "sweep",
        "--scenario",
        scenario("coalition.toml").to_str().unwrap(),
        "--seeds",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("median max_leader_streak"));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
