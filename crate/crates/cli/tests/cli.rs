use std::path::Path;
use std::process::{Command, Output};

fn pripl(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_pripl")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "pripl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn answer(out: &Output) -> f64 {
    String::from_utf8_lossy(&out.stdout).trim().parse().unwrap()
}

#[test]
fn generate_build_and_query() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.bin");
    pripl(&["gen-data", "--kind", "gaussian", "--n", "20000", "--dims", "2", "--domain", "64", "--cov", "0.5", "--seed", "1", "--out", s(&data)]);

    let tree = dir.path().join("tree.json");
    pripl(&["build-1d", "--data", s(&data), "--attr", "1", "--epsilon", "1.0", "--out", s(&tree)]);
    let full = answer(&pripl(&["query", "--model", s(&tree), "--range", "0:1:64"]));
    assert!((full - 1.0).abs() < 1e-9);

    let model = dir.path().join("model");
    pripl(&["build-md", "--data", s(&data), "--epsilon", "1.0", "--eta", "0.04", "--seed", "2", "--out", s(&model)]);
    let both = answer(&pripl(&["query", "--model", s(&model), "--range", "0:1:64", "--range", "1:1:64"]));
    assert!((both - 1.0).abs() < 1e-6);
    let part = answer(&pripl(&["query", "--model", s(&model), "--range", "0:1:32", "--range", "1:10:40"]));
    assert!((0.0..=1.0).contains(&part));
}

#[test]
fn bench_writes_reports_and_config_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"data": {"kind": "zipf", "n": 5000, "m": 1, "d": 32, "seed": 3}, "repeats": 2, "queries": 25}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    pripl(&["bench", "--config", s(&cfg), "--epsilon", "0.5,2", "--repeats", "9", "--baseline", "--out", s(&out)]);

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["repeats"], 2);
    assert_eq!(report["config"]["data"]["kind"], "zipf");
    assert_eq!(report["reports"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    assert!(out.join("timings.json").exists());
}

#[test]
fn bad_range_is_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_pripl"))
        .args(["query", "--model", "/nonexistent", "--range", "1-2"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("attr:l:r"));
}
