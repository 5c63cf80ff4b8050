use std::path::Path;
use std::process::{Command, Output};

fn bco(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bco"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

const SMALL: &str = r#"{
  "domain": { "kind": "ball", "radius": 1.0, "dim": 2 },
  "algorithm": {
    "mode": "smooth", "d": 2, "horizon": 256, "seed": 4,
    "overrides": { "c_rho": 1e-5, "c_lambda0": 1e-5, "c_eta": 100.0 }
  },
  "environment": { "family": "quadratic", "schedule": { "kind": "constant", "sigma": 1.0 }, "seed": 2 }
}"#;

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        SMALL.replace("\"seed\": 4", "\"sede\": 4"),
    )
    .unwrap();
    let out = bco(
        &["run", "--config", "bad.json", "--out", "x.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("algorithm"));
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bco(&["validate", "--config", "nope.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), SMALL).unwrap();
    let out = bco(
        &["validate", "--config", "c.json", "--trials", "30"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let props = v["barrier"]["properties"].as_array().unwrap();
    assert!(props.iter().all(|p| p["failures"] == 0));
    assert!(props[0].get("worst_violation").is_some());
}

#[test]
fn sweep_then_fit_exponent() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), SMALL).unwrap();
    let out = bco(
        &[
            "sweep",
            "--config",
            "c.json",
            "--seeds",
            "3",
            "--out-dir",
            "runs",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("runs/summary.json").exists());
    let out = bco(
        &[
            "fit-exponent",
            "--csv",
            "runs/seed_4.csv",
            "runs/seed_5.csv",
            "runs/seed_6.csv",
            "--min-t",
            "16",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["files"], 3);
    assert_eq!(v["points"].as_array().unwrap().len(), 5);
    assert!(v["fit"]["slope"].as_f64().unwrap().is_finite());
}

#[test]
fn unsolvable_tuning_is_a_config_error_with_marker_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL
        .replace("\"seed\": 4", "\"seed\": 4, \"beta\": 5.0")
        .replace(
            "\"kind\": \"constant\", \"sigma\": 1.0",
            "\"kind\": \"zero\"",
        )
        .replace("\"c_lambda0\": 1e-5", "\"c_lambda0\": 1e-9")
        .replace("\"c_rho\": 1e-5", "\"c_rho\": 1e-9");
    std::fs::write(dir.path().join("c.json"), cfg).unwrap();
    let out = bco(&["run", "--config", "c.json", "--out", "r.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# error:"));
}
