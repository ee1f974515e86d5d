//! End-to-end CLI pipeline: gen-tasks, search, eval, replay, explain.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_supernet"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("run binary");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = dir.path().join("tasks.jsonl");
    let run_dir = dir.path().join("run");

    // gen-tasks with domains matching the default operator tags
    let out = run_ok(bin().args([
        "gen-tasks",
        "--out",
        tasks.to_str().unwrap(),
        "--count",
        "40",
        "--seed",
        "3",
        "--mean-complexity",
        "2.0",
        "--spread",
        "1.0",
        "--domain",
        "math:0.6:cot",
        "--domain",
        "code:0.4:refine",
        "--tiers",
        "standard,premium",
    ]));
    assert!(out.contains("wrote 40 tasks"));

    // deterministic generation
    let first = std::fs::read_to_string(&tasks).unwrap();
    run_ok(bin().args([
        "gen-tasks",
        "--out",
        tasks.to_str().unwrap(),
        "--count",
        "40",
        "--seed",
        "3",
        "--mean-complexity",
        "2.0",
        "--spread",
        "1.0",
        "--domain",
        "math:0.6:cot",
        "--domain",
        "code:0.4:refine",
        "--tiers",
        "standard,premium",
    ]));
    assert_eq!(first, std::fs::read_to_string(&tasks).unwrap());

    // search over the stream
    let out = run_ok(bin().args([
        "search",
        "--tasks",
        tasks.to_str().unwrap(),
        "--out-dir",
        run_dir.to_str().unwrap(),
        "--window",
        "20",
        "--master-seed",
        "7",
    ]));
    assert!(out.contains("\"queries\": 40"));
    assert!(run_dir.join("events.ndjson").exists());
    assert!(run_dir.join("snapshot.json").exists());
    assert!(run_dir.join("metrics.json").exists());

    // eval the snapshot
    let out = run_ok(bin().args([
        "eval",
        "--snapshot",
        run_dir.join("snapshot.json").to_str().unwrap(),
        "--tasks",
        tasks.to_str().unwrap(),
        "--window",
        "20",
        "--seed",
        "5",
    ]));
    assert!(out.contains("mean_utility"));
    assert!(out.contains("per_complexity"));

    // replay verifies the log and reconstructs the snapshot
    let replayed = dir.path().join("replayed.json");
    let out = run_ok(bin().args([
        "replay",
        "--log",
        run_dir.join("events.ndjson").to_str().unwrap(),
        "--out",
        replayed.to_str().unwrap(),
    ]));
    assert!(out.contains("40 queries"));
    assert_eq!(
        std::fs::read_to_string(run_dir.join("snapshot.json")).unwrap(),
        std::fs::read_to_string(&replayed).unwrap()
    );

    // explain a logged query in both formats
    let out = run_ok(bin().args([
        "explain",
        "--log",
        run_dir.join("events.ndjson").to_str().unwrap(),
        "q000017",
        "--samples",
        "50",
    ]));
    assert!(out.contains("Query Analysis: domain="));
    assert!(out.contains("Selection Rationale:"));
    let out = run_ok(bin().args([
        "explain",
        "--log",
        run_dir.join("events.ndjson").to_str().unwrap(),
        "q000017",
        "--samples",
        "50",
        "--format",
        "structured",
    ]));
    assert!(serde_json::from_str::<serde_json::Value>(&out).is_ok());
}

#[test]
fn invalid_config_fails_with_named_key() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = dir.path().join("tasks.jsonl");
    run_ok(bin().args(["gen-tasks", "--out", tasks.to_str().unwrap(), "--count", "1"]));
    let out = bin()
        .args([
            "search",
            "--tasks",
            tasks.to_str().unwrap(),
            "--out-dir",
            dir.path().join("r").to_str().unwrap(),
            "--mu",
            "1.5",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mu"), "stderr: {stderr}");
}

#[test]
fn corrupt_log_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.ndjson");
    std::fs::write(&log, "{\"seq\":5,\"t\":0.0,\"event\":{\"kind\":\"warning\",\"message\":\"x\"}}\n").unwrap();
    let out = bin().args(["replay", "--log", log.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sequence"), "stderr: {stderr}");
}

#[test]
fn example_config_loads_and_searches() {
    let config = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/example.json");
    let dir = tempfile::tempdir().unwrap();
    let tasks = dir.path().join("tasks.jsonl");
    run_ok(bin().args([
        "gen-tasks",
        "--out",
        tasks.to_str().unwrap(),
        "--count",
        "10",
        "--domain",
        "math:0.5:cot",
        "--domain",
        "code:0.5:refine",
        "--tiers",
        "standard,premium",
    ]));
    let out = run_ok(bin().args([
        "search",
        "--config",
        config.to_str().unwrap(),
        "--tasks",
        tasks.to_str().unwrap(),
        "--out-dir",
        dir.path().join("run").to_str().unwrap(),
    ]));
    assert!(out.contains("\"queries\": 10"));
}
