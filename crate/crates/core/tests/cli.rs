use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("models")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmdp-gp")).args(args).output().unwrap()
}

fn with_model(cmd: &str, model: &str, spec: &Path, extra: &[&str]) -> Output {
    let model = models().join(model);
    let mut args = vec![cmd, "--model", model.to_str().unwrap(), "--specs", spec.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn optimize_prints_json() {
    let out = with_model("optimize", "ky_die.pm", &models().join("ky_die_optimize.spec"), &["--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "optimized");
    assert!(v["objective"].as_f64().unwrap() > 0.2);
}

#[test]
fn unsafe_region_exits_one() {
    let out = with_model("region", "ky_die.pm", &models().join("ky_die_unsafe.spec"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Unsafe"));
}

#[test]
fn repair_writes_trace_and_dump() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.csv");
    let dump = dir.path().join("gp.txt");
    let out = with_model(
        "repair",
        "ky_die_fair.pm",
        &models().join("ky_die_repair.spec"),
        &["--trace", trace.to_str().unwrap(), "--dump-gp", dump.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.lines().count() >= 2);
    assert!(fs::read_to_string(&dump).unwrap().starts_with("minimize"));
}

#[test]
fn infeasible_repair_exits_one() {
    let out = with_model("repair", "ky_die_fair.pm", &models().join("ky_die_repair.spec"), &["--cost-bound", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_input_exits_two() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("bad.spec");
    fs::write(&spec, "reach <= 0.5 label nowhere\n").unwrap();
    assert_eq!(with_model("feasible", "ky_die.pm", &spec, &[]).status.code(), Some(2));
    let missing = dir.path().join("missing.spec");
    assert_eq!(with_model("feasible", "ky_die.pm", &missing, &[]).status.code(), Some(2));
    assert_eq!(run(&["feasible"]).status.code(), Some(2));
}

#[test]
fn example_output_parses_back() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("dice.pm");
    let out = run(&["example", "multi-dice", "--params", "4"]);
    assert_eq!(out.status.code(), Some(0));
    fs::write(&model, &out.stdout).unwrap();
    let spec = dir.path().join("s.spec");
    fs::write(&spec, "reach <= 0.3 label sum10\n").unwrap();
    let out = run(&["feasible", "--model", model.to_str().unwrap(), "--specs", spec.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["specs"][0]["value"].as_f64().unwrap() <= 0.3);
}
