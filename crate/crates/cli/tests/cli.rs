//! End-to-end CLI flow: synth -> run -> report -> answer (with grid cache).

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ldp-range"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

#[test]
fn synth_run_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.txt");
    let results = dir.path().join("results.json");
    let config = dir.path().join("config.json");

    run_ok(bin().args([
        "synth",
        "--dist",
        "normal",
        "--n",
        "3000",
        "--d",
        "3",
        "--c",
        "16",
        "--covariance",
        "0.8",
        "--seed",
        "7",
        "--out",
        data.to_str().unwrap(),
    ]));
    let first_line = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .to_string();
    assert_eq!(first_line.split(',').count(), 3);

    std::fs::write(
        &config,
        serde_json::json!({
            "dataset": {"kind": "records", "path": data.to_str().unwrap(), "c": 16},
            "approaches": ["hdg", "uni"],
            "epsilons": [1.0],
            "lambdas": [1, 2],
            "omega": 0.5,
            "query_count": 15,
            "repeats": 2,
            "seed": 3
        })
        .to_string(),
    )
    .unwrap();

    run_ok(bin().args([
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
        "--threads",
        "2",
    ]));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&results).unwrap()).unwrap();
    assert_eq!(parsed["cells"].as_array().unwrap().len(), 2 * 2);

    let table = run_ok(bin().args([
        "report",
        "--results",
        results.to_str().unwrap(),
        "--format",
        "table",
    ]));
    assert!(table.contains("approach"));
    assert!(table.contains("hdg"));

    let csv = run_ok(bin().args([
        "report",
        "--results",
        results.to_str().unwrap(),
        "--format",
        "csv",
    ]));
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn answer_builds_then_reuses_grid_cache() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.txt");
    let cache = dir.path().join("grids.json");

    run_ok(bin().args([
        "synth", "--n", "4000", "--d", "2", "--c", "16", "--seed", "11", "--out",
        data.to_str().unwrap(),
    ]));

    let args = [
        "answer",
        "--dataset",
        data.to_str().unwrap(),
        "--c",
        "16",
        "--approach",
        "hdg",
        "--epsilon",
        "1.0",
        "--seed",
        "4",
        "--query",
        "1:3-10;2:1-8",
        "--grids",
        cache.to_str().unwrap(),
    ];
    let first = run_ok(bin().args(args));
    assert!(cache.exists(), "cache file written");
    let second = run_ok(bin().args(args));
    let v1: serde_json::Value = serde_json::from_str(&first).unwrap();
    let v2: serde_json::Value = serde_json::from_str(&second).unwrap();
    assert_eq!(v1["estimate"], v2["estimate"], "cached answer must match");
    assert!(v1["truth"].as_f64().unwrap() > 0.0);
}

#[test]
fn answer_rejects_mismatched_cache() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.txt");
    let cache = dir.path().join("grids.json");
    run_ok(bin().args([
        "synth", "--n", "2000", "--d", "2", "--c", "8", "--seed", "1", "--out",
        data.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "answer",
        "--dataset",
        data.to_str().unwrap(),
        "--c",
        "8",
        "--approach",
        "tdg",
        "--epsilon",
        "1.0",
        "--seed",
        "4",
        "--query",
        "1:1-4",
        "--grids",
        cache.to_str().unwrap(),
    ]));
    // Same cache, different epsilon: refuse rather than silently rebuild.
    let out = bin()
        .args([
            "answer",
            "--dataset",
            data.to_str().unwrap(),
            "--c",
            "8",
            "--approach",
            "tdg",
            "--epsilon",
            "2.0",
            "--seed",
            "4",
            "--query",
            "1:1-4",
            "--grids",
            cache.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
