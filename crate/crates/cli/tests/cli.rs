use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deputy_core::mutate::MutationKind;
use deputy_core::snapshot::{load, save};
use tempfile::TempDir;

fn deputy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deputy")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_to(dir: &Path, name: &str, n: &str, stages: &str, schedule: &str) -> PathBuf {
    let path = dir.join(name);
    let out = deputy(&["run", "--n", n, "--stages", stages, "--schedule", schedule, "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn run_then_verify_is_clean() {
    let dir = TempDir::new().unwrap();
    let s = run_to(dir.path(), "s.json", "1", "20000", "canonical");
    let out = deputy(&["verify", "--in", s.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).is_empty());
}

#[test]
fn verify_names_the_violation_in_a_mutated_snapshot() {
    let dir = TempDir::new().unwrap();
    let s = run_to(dir.path(), "s.json", "1", "3000", "canonical");
    let mut state = load(&std::fs::read(&s).unwrap()).unwrap();
    MutationKind::DeltaConsistency.apply(&mut state).expect("site exists");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, save(&state)).unwrap();
    let out = deputy(&["verify", "--in", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("delta-consistent"), "{}", stdout(&out));
    // The mutated state no longer matches its configuration.
    assert_eq!(code(&deputy(&["replay", "--in", bad.to_str().unwrap()])), 1);
}

#[test]
fn checks_can_be_selected() {
    let dir = TempDir::new().unwrap();
    let s = run_to(dir.path(), "s.json", "2", "2000", "canonical");
    let out = deputy(&["verify", "--in", s.to_str().unwrap(), "--checks", "tables,replication", "--paranoid"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("clean: tables, replication"));
}

#[test]
fn replay_matches_a_saved_run() {
    let dir = TempDir::new().unwrap();
    let s = run_to(dir.path(), "s.json", "2", "3000", "focused::2");
    assert_eq!(code(&deputy(&["replay", "--in", s.to_str().unwrap()])), 0);
}

#[test]
fn usage_and_malformed_input_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&deputy(&["run", "--n", "1"])), 2);
    assert_eq!(code(&deputy(&["run", "--n", "1", "--stages", "5", "--schedule", "spiral"])), 2);
    let s = run_to(dir.path(), "s.json", "1", "500", "canonical");
    assert_eq!(code(&deputy(&["verify", "--in", s.to_str().unwrap(), "--checks", "bogus"])), 2);
    let bytes = std::fs::read(&s).unwrap();
    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &bytes[..bytes.len() / 3]).unwrap();
    let out = deputy(&["verify", "--in", cut.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed snapshot"));
    assert_eq!(code(&deputy(&["verify", "--in", dir.path().join("missing.json").to_str().unwrap()])), 2);
}

#[test]
fn query_sample_and_export() {
    let dir = TempDir::new().unwrap();
    let s = run_to(dir.path(), "s.json", "2", "4000", "focused::2");
    let s = s.to_str().unwrap();

    let out = deputy(&["query", "--in", s, "gamma", ""]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["value"], "");

    let out = deputy(&["query", "--in", s, "active", "1"]);
    assert_eq!(code(&out), 0);
    assert!(serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()["constraints"].is_array());

    let out = deputy(&["sample", "--in", s, "--oscillation", ""]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["witness"].is_object(), "{v}");

    let out = deputy(&["sample", "--in", s, "--length", "6", "--limit", "0", "0"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["limit"]["verdict"].is_object(), "{v}");

    let dot = dir.path().join("d.dot");
    let out = deputy(&["export", "--in", s, "--view", "deputies", "--out", dot.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.starts_with("digraph deputies {") && text.contains("class=\"deputy\""));
}
