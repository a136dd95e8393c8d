use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn multidiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multidiv"))
        .args(args)
        .env_remove("MULTIDIV_SEED")
        .output()
        .expect("binary runs")
}

fn run_config(sub: &str, path: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    multidiv(&args)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn write_config(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn radial_divergence_is_three_everywhere() {
    let out = run_config("div", &config("div-radial.json"), &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    let rows = report["tasks"][0]["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 27);
    for row in rows {
        assert!((row["components"][0].as_f64().unwrap() - 3.0).abs() < 1e-14);
    }
}

#[test]
fn default_check_passes_at_tight_tolerance() {
    let out = run_config("check", &config("default.json"), &["--tol", "1e-8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    let ids = report["tasks"][0]["result"]["identities"].as_array().unwrap();
    assert_eq!(ids.len(), 5);
    for id in ids {
        assert_eq!(id["tolerance"].as_f64(), Some(1e-8));
    }
}

#[test]
fn corrupted_candidate_exits_one_with_witness() {
    let out = run_config("weakdiv", &config("corrupted.json"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out);
    let result = &report["tasks"][0]["result"];
    assert!(result["relative"].as_f64().unwrap() > 1e-3);
    assert_eq!(result["corrupted"], Value::Bool(true));
    assert_eq!(result["witness"]["center"].as_array().unwrap().len(), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}

#[test]
fn empty_task_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(&dir, "empty.json", r#"{"dimension": 1, "domain": {"lower": [0], "upper": [1]}, "tasks": []}"#);
    let out = run_config("run", &path, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no tasks"));
}

#[test]
fn subcommand_without_matching_tasks_is_a_config_error() {
    let out = run_config("surface", &config("div-radial.json"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no tasks"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "undeclared.json",
            r#"{"dimension": 2, "domain": {"lower": [0, 0], "upper": [1, 1]}, "tasks": [{"task": "div", "field": "Q"}]}"#,
            "undeclared",
        ),
        (
            "unknown-key.json",
            r#"{"dimension": 2, "domain": {"lower": [0, 0], "upper": [1, 1]}, "colour": 1, "tasks": []}"#,
            "unknown field",
        ),
        (
            "bad-expr.json",
            r#"{"dimension": 2, "domain": {"lower": [0, 0], "upper": [1, 1]}, "fields": {"X": ["x0 +", "1"]}, "tasks": [{"task": "div", "field": "X"}]}"#,
            "field X",
        ),
        (
            "negative-density.json",
            r#"{"dimension": 1, "domain": {"lower": [-1], "upper": [1]}, "density": "x0", "fields": {"X": ["1"]}, "tasks": [{"task": "div", "field": "X"}]}"#,
            "not positive",
        ),
    ];
    for (name, body, needle) in cases {
        let out = run_config("run", &write_config(&dir, name, body), &[]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{name}: {err}");
    }
    let out = run_config("run", Path::new("/nonexistent/config.json"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_commuting_system_is_rejected_before_measuring() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
      "dimension": 3,
      "domain": {"lower": [-1, -1, -1], "upper": [1, 1, 1]},
      "fields": {"Y1": ["0", "1", "0"], "Y2": ["0", "x1", "1"]},
      "surface": {
        "forward": ["x0", "x1", "x2"], "inverse": ["x0", "x1", "x2"], "codimension": 2,
        "chart": {"lower": [-1, -1, -1], "upper": [1, 1, 1]},
        "parameters": {"lower": [-1], "upper": [1], "margin": 0.2},
        "transversal": ["Y1", "Y2"], "floor": 0.1
      },
      "tasks": [{"task": "surface"}]
    }"#;
    let out = run_config("run", &write_config(&dir, "bracket.json", body), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("do not commute"));
}

#[test]
fn gaussian_circle_surface_table_converges() {
    let out = run_config("surface", &config("gaussian-circle.json"), &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    let r = &report["tasks"][0]["result"]["report"];
    let values: Vec<f64> = r["tube_values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["value"].as_f64().unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[0] < w[1]));
    let sigma = (-0.5f64).exp();
    assert!((r["extrapolated"]["value"].as_f64().unwrap() - sigma).abs() < 1e-8);
}

#[test]
fn reports_are_byte_identical() {
    for name in ["default.json", "gaussian-circle.json"] {
        let a = run_config("run", &config(name), &["--seed", "11"]);
        let b = run_config("run", &config(name), &["--seed", "11"]);
        assert_eq!(a.status.code(), Some(0));
        assert_eq!(a.stdout, b.stdout, "{name}");
    }
}

#[test]
fn seed_flag_and_environment() {
    let path = config("default.json");
    let flag = json(&run_config("check", &path, &["--seed", "5"]));
    assert_eq!(flag["seed"].as_u64(), Some(5));
    let env = Command::new(env!("CARGO_BIN_EXE_multidiv"))
        .args(["check", "--config", path.to_str().unwrap()])
        .env("MULTIDIV_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(env.stdout, run_config("check", &path, &["--seed", "5"]).stdout);
    let default = json(&run_config("check", &path, &[]));
    assert_eq!(default["seed"].as_u64(), Some(20240601));
    assert_ne!(default["config_digest"], flag["config_digest"]);
}

#[test]
fn csv_output_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.csv");
    let out = run_config(
        "run",
        &config("flat-segment.json"),
        &["--format", "csv", "--out", out_path.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("task,row,column,value,bound"));
    assert!(text.contains("0:surface,limit,extrapolated,2"));
    assert!(lines.all(|l| l.split(',').count() == 5));
}

#[test]
fn surface_bundles_pass() {
    for name in ["flat-segment.json", "product-plane.json"] {
        let out = run_config("run", &config(name), &[]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
