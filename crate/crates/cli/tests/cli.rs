use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use splitstep::oracle::analytic_constant_convection;
use splitstep::{distance, sample_function, Expr, Field, GridSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splitstep"))
}

fn write_config(dir: &Path, config: &Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn run(config: &Value, out: &Path, extra: &[&str]) -> Output {
    let dir = out.parent().unwrap();
    let path = write_config(dir, config);
    bin()
        .arg("run")
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn minimal() -> Value {
    json!({
        "equation": "convection",
        "d": 1,
        "n": [5],
        "T": 1.0,
        "L": 32,
        "coefficients": ["1"],
        "initial": "sin(2*pi*x1)"
    })
}

fn two_axis(experiment: &str) -> Value {
    json!({
        "equation": "convection",
        "d": 2,
        "n": [4, 4],
        "T": 1.0,
        "L": 64,
        "coefficients": ["1+0.5*sin(2*pi*x2)", "1+0.5*cos(2*pi*x1)"],
        "initial": "exp(sin(2*pi*x1)+cos(2*pi*x2))",
        "experiment": experiment,
        "Ls": [8, 16, 32, 64, 128]
    })
}

#[test]
fn solve_matches_the_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut config = minimal();
    config["initial"] = json!("exp(sin(2*pi*x1))");
    config["T"] = json!(0.37);
    config["p"] = json!(2);
    let o = run(&config, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let grid = GridSpec::new(vec![5]).unwrap();
    let text = std::fs::read(out.join("final_state.csv")).unwrap();
    let got = Field::read_csv(grid.clone(), text.as_slice(), 0.37).unwrap();
    let f0 = sample_function(&grid, &Expr::parse("exp(sin(2*pi*x1))", 1).unwrap(), 0.0).unwrap();
    let want = analytic_constant_convection(&f0, &[1.0], 2, 0.37).unwrap();
    assert!(distance(&got, &want, false).unwrap() < 1e-12);

    let r = report(&out);
    assert_eq!(r["status"], "ok");
    assert_eq!(r["config"]["formula"], "standard");
    assert_eq!(r["config"]["observables"], json!(["mean", "scaled-norm"]));
    assert_eq!(r["outputs"]["observables"][1]["name"], "scaled-norm");
}

#[test]
fn trotter_scan_fits_first_order() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&two_axis("trotter-scan"), &out, &["--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let slope = report(&out)["outputs"]["fit"]["slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() < 0.15, "{slope}");
    let csv = std::fs::read_to_string(out.join("trotter_scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with(
        "experiment,kind,formula,p,n1,n2,L,T,error,bound_vector,bound_operator,prefactor,slope,r2\n"
    ));
}

#[test]
fn resources_emit_the_walsh_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut config = two_axis("resources");
    config["tolerances"] = json!([0.01, 0.0001]);
    let o = run(&config, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("resources.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "axis,tolerance,retained_terms,sup_error,rotations,entangling,qft_gates"
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let config = two_axis("bounds");
    assert_eq!(run(&config, &a, &[]).status.code(), Some(0));
    assert_eq!(run(&config, &b, &[]).status.code(), Some(0));
    let read = |p: &Path| std::fs::read(p.join("bounds.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn validation_errors_exit_two_and_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut config = minimal();
    config["coefficients"] = json!(["1+0.5*sin(2*pi*x1)"]);
    let o = run(&config, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["kind"], "validation");
    assert!(r["error"]["message"].as_str().unwrap().contains("axis 1"));
    assert_eq!(r["config"]["coefficients"][0], "1+0.5*sin(2*pi*x1)");
}

#[test]
fn unknown_keys_and_bad_json_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = minimal();
    config["steps"] = json!(3);
    let o = run(&config, &tmp.path().join("a"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("steps"));

    let path = tmp.path().join("broken.json");
    std::fs::write(&path, "{\n  \"d\": 1,\n  oops\n}").unwrap();
    let out = tmp.path().join("b");
    let o = bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let msg = report(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn numerical_contract_failures_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut config = two_axis("bounds");
    config["Ls"] = json!([1, 2, 4]);
    let o = run(&config, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(report(&out)["error"]["kind"], "numerical-contract");
}

#[test]
fn overrides_replace_config_entries() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        &minimal(),
        &out,
        &["--override", "T=0.5", "--override", "formula=generalized"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["config"]["T"], 0.5);
    assert_eq!(r["config"]["formula"], "generalized");
}

#[test]
fn validate_and_stencil_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &minimal());
    let o = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(0));

    let o = bin()
        .args(["validate", "--config"])
        .arg(&path)
        .args(["--override", "d=2"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = bin().args(["stencil", "--p", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "offset,weight\n-1,-0.5\n0,0.0\n1,0.5\n");
}
