use std::path::Path;
use std::process::{Command, Output};

use ddrmpc_core::sim::SimulationPlan;

const SMALL_PLAN: &str = r#"
parallel = false

[train]
kind = "synthetic"
seed = 1
start = "2016-05-01"
months = 6

[test]
kind = "synthetic"
seed = 2
start = "2017-05-01"
months = 1

[[controllers]]
name = "rule"
type = "rule-based"
threshold = 33.0
dose = 3.0

[[controllers]]
name = "open"
type = "open-loop"
a = 0.07
b = 6.4

[[controllers]]
name = "cempc"
type = "cempc"
"#;

fn ddrmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddrmpc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn text(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn init_plan_prints_a_loadable_plan() {
    let out = ddrmpc(&["init-plan", "--train-seed", "5", "--test-seed", "6"]);
    assert!(out.status.success());
    let plan = SimulationPlan::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(plan.controllers.len(), 4);
    assert_eq!(plan, SimulationPlan::synthetic_default(5, 6));
}

#[test]
fn synth_then_train_emits_a_calibrated_model() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("weather.csv");
    let model = dir.path().join("model.json");
    let out = ddrmpc(&["synth", "--seed", "3", "--months", "6", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(text(&csv).lines().count(), 1 + 736);
    let out = ddrmpc(&["train", "--data", csv.to_str().unwrap(), "--out", model.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&text(&model)).unwrap();
    assert_eq!(v["report"]["n_windows"], 729);
    assert_eq!(v["report"]["n_calib"], 392);
    assert_eq!(v["report"]["guarantee_met"], true);
    assert_eq!(v["model"]["lifted_second_moment"].as_array().unwrap().len(), 25);
}

#[test]
fn simulate_writes_outputs_and_report_renders_them() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    std::fs::write(&plan, SMALL_PLAN).unwrap();
    let run = dir.path().join("run");
    let out = ddrmpc(&["simulate", "--plan", plan.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.json", "report.md", "irrigation.csv", "loss.csv", "violation.csv", "trace_rule.csv"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("Irrigation amounts (mm)"));

    let tables = dir.path().join("tables");
    let metrics = run.join("metrics.json");
    let out = ddrmpc(&["report", "--metrics", metrics.to_str().unwrap(), "--format", "csv", "--out", tables.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(text(&tables.join("violation.csv")), text(&run.join("violation.csv")));
    let out = ddrmpc(&["report", "--metrics", metrics.to_str().unwrap()]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), text(&run.join("report.md")).trim());
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    std::fs::write(&plan, SMALL_PLAN).unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = ddrmpc(&[
        "sweep", "--plan", plan.to_str().unwrap(), "--family", "rule-based", "--x", "30,33", "--y", "2,3", "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(text(&csv).lines().count(), 5);
}

#[test]
fn missing_plan_is_an_error() {
    let out = ddrmpc(&["simulate", "--plan", "/nonexistent/plan.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("plan"));
}
