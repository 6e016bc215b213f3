use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tierroute"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn error_kind(out: &Output) -> String {
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default().to_string();
    let record: serde_json::Value = serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line}"));
    record["error"]["kind"].as_str().unwrap().to_string()
}

fn synth_workspace(dir: &Path) -> PathBuf {
    let ws = dir.join("ws");
    ok(&["--seed", "1", "synth", "--out", ws.to_str().unwrap()]);
    ws.join("config.toml")
}

fn case_study() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/case_study/config.toml")
}

#[test]
fn eval_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_workspace(dir.path());
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        ok(&["--config", cfg, "--limit", "100", "--seed", "7", "eval", "--router", "uniform", "--out", out.to_str().unwrap()]);
    }
    let (ra, rb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!ra.is_empty());
    assert_eq!(ra, rb);
    let count: serde_json::Value = serde_json::from_str(std::str::from_utf8(&ra).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(count["value"], 100.0);
}

#[test]
fn stage_two_without_profiles_fails_with_missing_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_workspace(dir.path());
    let out = run(&["--config", cfg.to_str().unwrap(), "--stage", "2", "train"]);
    assert_eq!(error_kind(&out), "MissingProfile");
}

#[test]
fn profile_then_train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_workspace(dir.path());
    let cfg = cfg.to_str().unwrap();
    ok(&["--config", cfg, "profile"]);
    let summary: serde_json::Value = serde_json::from_str(&ok(&["--config", cfg, "--stage", "1", "train"])).unwrap();
    assert_eq!(summary["steps"], 80);
    let ck = dir.path().join("ws/checkpoints/final.json");
    let table = ok(&["--config", cfg, "eval", "--policy", ck.to_str().unwrap()]);
    assert!(table.starts_with("slice"));
}

#[test]
fn simulate_case_study_shows_two_searches_then_answer() {
    let cfg = case_study();
    let stdout = ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--question",
        "antonine",
        "--route",
        "HippoRAG2:LLaMA-3.1-70B-Instruct,RAPTOR:LLaMA-3.1-70B-Instruct",
    ]);
    let tags: Vec<&str> = stdout
        .lines()
        .filter_map(|l| l.strip_prefix('<').and_then(|r| r.split_once('>')).map(|(t, _)| t))
        .filter(|t| matches!(*t, "search" | "answer"))
        .collect();
    assert_eq!(tags, vec!["search", "search", "answer"]);
    let summary: serde_json::Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
    assert_eq!(summary["search_turns"], 2);
    assert_eq!(summary["em"], 1.0);
    assert_eq!(summary["actions"][1]["graphrag_id"], "RAPTOR");
}

#[test]
fn registry_extension_keeps_checkpoints_usable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_workspace(dir.path());
    let cfg = cfg.to_str().unwrap();
    ok(&["--config", cfg, "profile"]);
    ok(&["--config", cfg, "--stage", "1", "train"]);
    ok(&["--config", cfg, "registry", "add", "graphrag", "LightRAG"]);
    ok(&["--config", cfg, "registry", "add", "llm", "Qwen2.5-72B-Instruct", "--tier", "large"]);
    let dup = run(&["--config", cfg, "registry", "add", "graphrag", "LightRAG"]);
    assert_eq!(error_kind(&dup), "DuplicateCandidate");
    let ck = dir.path().join("ws/checkpoints/final.json");
    ok(&["--config", cfg, "eval", "--policy", ck.to_str().unwrap()]);
}

#[test]
fn validate_trace_reports_rules() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.txt");
    std::fs::write(&file, "<llm>GPT-X</llm><search>q:GPT-X;HippoRAG2</search><answer>a</answer>").unwrap();
    let report: serde_json::Value = serde_json::from_str(&ok(&["validate-trace", file.to_str().unwrap()])).unwrap();
    assert_eq!(report["clean"], false);
    let fired: Vec<&str> = report["report"]["fired"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(fired.contains(&"llm-before-graphrag"));
    assert_eq!(report["report"]["penalty"], 1.0);
}

#[test]
fn failures_emit_json_error_records() {
    assert_eq!(error_kind(&run(&["eval", "--router", "uniform"])), "Config");
    assert_eq!(error_kind(&run(&["no-such-command"])), "Usage");
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    assert_eq!(error_kind(&run(&["validate-trace", missing.to_str().unwrap()])), "Io");
}
