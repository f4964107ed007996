use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn rlin(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rlin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).expect("report is JSON")
}

#[test]
fn php_pipeline_checks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(rlin(d, &["gen", "--family", "php", "--n", "1", "--out", "php.jsonl"]).0, 0);
    assert_eq!(rlin(d, &["refute", "--in", "php.jsonl", "--out", "ref.jsonl"]).0, 0);
    let (code, out) = rlin(d, &["check", "--in", "ref.jsonl", "--json"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["assertions"][0]["pass"], true);
}

#[test]
fn reduce_width_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    rlin(d, &["gen", "--family", "php", "--n", "2", "--out", "php.jsonl"]);
    rlin(d, &["refute", "--in", "php.jsonl", "--out", "ref.jsonl"]);
    for out in ["a.jsonl", "b.jsonl"] {
        let (code, _) = rlin(d, &["reduce-width", "--in", "ref.jsonl", "--w", "3", "--seed", "7", "--out", out]);
        assert_eq!(code, 0);
    }
    let a = std::fs::read(d.join("a.jsonl")).unwrap();
    let b = std::fs::read(d.join("b.jsonl")).unwrap();
    assert_eq!(a, b);
    let first: Value = serde_json::from_slice(a.split(|&c| c == b'\n').next().unwrap()).unwrap();
    assert_eq!(first["seed"], 7);
    assert_eq!(first["reduction"]["w"], 3);
    assert_eq!(rlin(d, &["check", "--in", "a.jsonl"]).0, 0);
}

#[test]
fn exhaustive_simulation_of_exact_protocol_has_no_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    rlin(d, &["gen", "--family", "clique-color", "--n0", "4", "--omega", "3", "--xi", "2", "--out", "cc.jsonl"]);
    rlin(d, &["refute", "--in", "cc.jsonl", "--out", "ref.jsonl"]);
    assert_eq!(rlin(d, &["interpolate", "--in", "ref.jsonl", "--engine", "exact", "--out", "p.json"]).0, 0);
    let (code, out) = rlin(d, &["simulate", "--protocol", "p.json", "--pairs", "exhaustive", "--json"]);
    assert_eq!(code, 0);
    let r = json(&out);
    assert_eq!(r["error_rate"], 0.0);
    assert_eq!(r["trials"], 28);
    assert_eq!(r["config"]["seed"], 0);
}

#[test]
fn clo_commands_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    rlin(d, &["gen", "--family", "clique-color", "--n0", "4", "--omega", "3", "--xi", "2", "--out", "cc.jsonl"]);
    rlin(d, &["refute", "--in", "cc.jsonl", "--out", "ref.jsonl"]);
    rlin(d, &["interpolate", "--in", "ref.jsonl", "--engine", "randomized", "--w", "4", "--out", "p.json"]);
    assert_eq!(rlin(d, &["clo-from-protocol", "--protocol", "p.json", "--samples", "2", "--out", "c.json"]).0, 0);
    assert_eq!(rlin(d, &["clo-verify", "--in", "c.json"]).0, 0);
    assert_eq!(rlin(d, &["clo-to-protocol", "--in", "c.json"]).0, 0);
    assert_eq!(rlin(d, &["clo-to-protocol", "--in", "c.json", "--three-valued"]).0, 0);
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(rlin(d, &["check", "--in", "missing.jsonl"]).0, 2);
    std::fs::write(d.join("junk.jsonl"), "{not json").unwrap();
    assert_eq!(rlin(d, &["check", "--in", "junk.jsonl"]).0, 2);
    assert_eq!(rlin(d, &["gen", "--family", "php", "--out", "x.jsonl"]).0, 2);
    assert_eq!(rlin(d, &["no-such-command"]).0, 2);
}

#[test]
fn unrefuted_file_fails_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    rlin(d, &["gen", "--family", "php", "--n", "1", "--out", "php.jsonl"]);
    assert_eq!(rlin(d, &["check", "--in", "php.jsonl"]).0, 1);
}

#[test]
fn small_dichotomy_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = rlin(dir.path(), &["dichotomy", "--n0", "7", "--omega", "5", "--xi", "4", "--trials", "10", "--json"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["assertions"][0]["pass"], true);
}
