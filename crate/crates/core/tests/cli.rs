use std::fs;
use std::process::Command;

use gradnet::experiment::ErrorRecord;

fn gradnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gradnet"))
}

fn tiny_config(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let json = r#"{
        "kind": "function-approx",
        "target": "polynomial",
        "d": 2,
        "sample_counts": [20, 40],
        "enhancement_levels": [0, 100],
        "seeds": [3],
        "n_test": 300,
        "train": { "epochs": 30, "width": 16 }
    }"#;
    fs::write(&path, json).unwrap();
    path
}

#[test]
fn approx_writes_records_histories_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = gradnet()
        .args(["approx", "--config"])
        .arg(tiny_config(dir.path()))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let mut reader = csv::Reader::from_path(out.join("records.csv")).unwrap();
    let records: Vec<ErrorRecord> = reader.deserialize().map(Result::unwrap).collect();
    assert_eq!(records.len(), 4);
    let hash = &records[0].config_hash;
    for r in &records {
        assert_eq!(&r.config_hash, hash);
        assert_eq!(r.seed, 3);
        assert!(r.rel_l2_error.unwrap() >= 0.0);
        let history = fs::read_to_string(out.join(&r.loss_file)).unwrap();
        assert_eq!(history.lines().count(), 31);
        assert!(history.starts_with("epoch,J,L_n,L'_n,lr"));
    }
    assert_eq!(records[1].n_gradient, 20);
    assert_eq!(records[3].n_gradient, 40);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config_hash"].as_str().unwrap(), hash);
    assert_eq!(report["medians"].as_array().unwrap().len(), 4);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    for name in ["a", "b"] {
        let status = gradnet().args(["approx", "--config"]).arg(&config).arg("--out").arg(dir.path().join(name)).status().unwrap();
        assert!(status.success());
    }
    for file in ["records.csv", "report.json", "loss_n40_x100_s3.csv"] {
        let read = |run: &str| fs::read_to_string(dir.path().join(run).join(file)).unwrap();
        assert_eq!(read("a"), read("b"), "{file} differs");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = gradnet()
        .args(["approx", "--seed", "11", "--config"])
        .arg(tiny_config(dir.path()))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let records = fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(records.lines().skip(1).all(|l| l.contains(",11,")));
}

#[test]
fn empty_theory_battery_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("theory.json");
    fs::write(&config, r#"{"kind":"theory-check","battery":[]}"#).unwrap();
    let status = gradnet().args(["theory", "--config"]).arg(&config).arg("--out").arg(dir.path()).status().unwrap();
    assert!(status.success());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["all_passed"], true);
}

#[test]
fn failing_theory_check_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("theory.json");
    // the posterior bound is undefined for d = 1
    let json = r#"{"kind":"theory-check","train":{"epochs":5,"width":4},
        "battery":[{"check":"generalization-gap","d":1,"n":10,"beta":1.0,"delta":0.05,"n_test":100,"seed":0},
                   {"check":"rademacher-value","d":2,"n":50,"q":1.0,"seed":0}]}"#;
    fs::write(&config, json).unwrap();
    let output = gradnet().args(["theory", "--config"]).arg(&config).output().unwrap();
    assert!(!output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("generalization-gap") && stdout.contains("FAIL"));
    assert!(stdout.contains("rademacher-value") && stdout.contains("PASS"));
}

#[test]
fn solve_pde_prints_qoi_and_gradient() {
    let output = gradnet().args(["solve-pde", "--grid", "15", "--y", "0.1,-0.2,0.3"]).output().unwrap();
    assert!(output.status.success());
    let v: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert!(v["q"].as_f64().unwrap() > 0.0);
    assert_eq!(v["q_grad"].as_array().unwrap().len(), 3);

    let cg = gradnet().args(["solve-pde", "--cg", "--grid", "15", "--y", "0.1,-0.2,0.3"]).output().unwrap();
    let w: serde_json::Value = serde_json::from_slice(&cg.stdout).unwrap();
    assert!((v["q"].as_f64().unwrap() - w["q"].as_f64().unwrap()).abs() < 1e-9);

    let even = gradnet().args(["solve-pde", "--grid", "16", "--y", "0.1"]).output().unwrap();
    assert!(!even.status.success());
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"seeds":[1,1]}"#).unwrap();
    let status = gradnet().args(["approx", "--config"]).arg(&config).status().unwrap();
    assert!(!status.success());
}
