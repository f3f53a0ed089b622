use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};

use splitstep::analysis::{
    bound_prefactors, convergence_rows, operator_norm_bound, prefactor_trajectory, resolution_scan,
    scaling_rows, spatial_convergence, trotter_error_scan, trotter_rows, verify_bound, write_rows_csv,
    BoundStatus, ExperimentRow, Problem,
};
use splitstep::walsh::{estimate_step_resources, write_resources_csv};
use splitstep::{evolve, sample_function, EvolutionPlan, Field, GridSpec, Observable, ObservableValue};

use crate::config::{Experiment, RunConfig};

/// Exit statuses of `run`.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// A failed run: the exit status and a message for the report.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            kind: "validation",
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            kind: "internal",
            message: message.into(),
        }
    }
}

impl From<splitstep::Error> for Failure {
    fn from(e: splitstep::Error) -> Self {
        use splitstep::Error as E;
        let (code, kind) = if e.is_numerical_contract() {
            (EXIT_NUMERICAL, "numerical-contract")
        } else {
            match e {
                E::Io(_) | E::Csv(_) => (EXIT_INTERNAL, "internal"),
                _ => (EXIT_VALIDATION, "validation"),
            }
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

/// Files produced by an experiment, written together at the end.
#[derive(Default)]
struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn names(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.display().to_string()).collect()
    }
}

struct Outcome {
    outputs: Value,
    artifacts: Artifacts,
    /// A numerical contract that failed after all outputs were computed.
    failure: Option<Failure>,
}

fn problem(config: &RunConfig) -> Result<Problem, Failure> {
    Ok(Problem {
        coefficients: config.coefficient_set()?,
        initial: config.initial_expr()?,
        p: config.p,
        horizon: config.horizon,
        formula: config.formula,
    })
}

fn grid(config: &RunConfig) -> Result<GridSpec, Failure> {
    let n = config
        .n
        .clone()
        .ok_or_else(|| Failure::validation("n is required"))?;
    Ok(GridSpec::with_limit(n, config.max_qubits)?)
}

fn csv_bytes(rows: &[ExperimentRow]) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write_rows_csv(&mut buf, rows)?;
    Ok(buf)
}

fn field_bytes(field: &Field) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    field.write_csv(&mut buf)?;
    Ok(buf)
}

fn observable_json(value: ObservableValue) -> Value {
    match value {
        ObservableValue::Real(v) => json!(v),
        ObservableValue::Complex(z) => json!({ "re": z.re, "im": z.im }),
    }
}

fn solve(config: &RunConfig) -> Result<Outcome, Failure> {
    let grid = grid(config)?;
    let steps = config.steps.ok_or_else(|| Failure::validation("L is required"))?;
    let plan = EvolutionPlan::new(
        config.coefficient_set()?,
        config.formula,
        config.p,
        grid.clone(),
        config.horizon,
        steps,
    )?
    .with_trajectory(config.trajectory);
    let initial = sample_function(&grid, &config.initial_expr()?, 0.0)?;
    let run = evolve(&plan, &initial)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("final_state.csv", field_bytes(&run.final_state)?);
    for (i, f) in run.trajectory.iter().enumerate() {
        artifacts.add(format!("trajectory/step_{i:06}.csv"), field_bytes(f)?);
    }
    let mut observables = Vec::new();
    for text in &config.observables {
        let obs = Observable::parse(text, &grid)?;
        observables.push(json!({
            "name": text,
            "value": observable_json(run.final_state.measure(&obs)?),
        }));
    }
    let last = run.reports.last();
    Ok(Outcome {
        outputs: json!({
            "observables": observables,
            "final_time": run.final_state.time(),
            "initial_scaled_norm": initial.scaled_norm(),
            "final_scaled_norm": run.final_state.scaled_norm(),
            "steps": steps,
            "substeps": last.map(|r| r.substeps).unwrap_or(0),
            "step_seconds": last.map(|r| r.wall_seconds).unwrap_or(0.0),
        }),
        artifacts,
        failure: None,
    })
}

fn trotter(config: &RunConfig, with_check: bool) -> Result<Outcome, Failure> {
    let grid = grid(config)?;
    let problem = problem(config)?;
    let ls = config
        .step_list
        .clone()
        .ok_or_else(|| Failure::validation("Ls is required"))?;
    let scan = trotter_error_scan(&problem, &grid, &ls, config.reference_steps)?;
    let trajectory = prefactor_trajectory(&problem, &grid, config.reference_steps)?;
    let plan = problem.plan(&grid, 1)?;
    let prefactors = bound_prefactors(&plan, &trajectory)?;
    let t2 = problem.horizon * problem.horizon;
    let vector = prefactors.for_formula(problem.formula) * t2;
    // With L = 1 the operator bound is T² Σ_{j<m} ‖H_j‖ ‖H_m‖.
    let operator = operator_norm_bound(&plan)?;
    let name = config.experiment.to_string();
    let rows = trotter_rows(&name, &scan, Some(vector), Some(operator));
    let mut artifacts = Artifacts::default();
    artifacts.add(format!("{}.csv", name.replace('-', "_")), csv_bytes(&rows)?);
    let mut outputs = json!({
        "curve": scan.curve,
        "fit": scan.fit,
        "reference_steps": scan.reference_steps,
        "reference_shift": scan.reference_shift,
        "prefactors": prefactors,
        "operator_prefactor": operator,
    });
    let mut failure = None;
    if with_check {
        let check = verify_bound(&scan.curve, &prefactors, problem.horizon, problem.formula)?;
        if check.status == BoundStatus::Violated {
            failure = Some(Failure {
                code: EXIT_NUMERICAL,
                kind: "numerical-contract",
                message: format!(
                    "bound violated at L = {}: E·L/(T² a) = {:.4}",
                    check.steps,
                    check.tightness.unwrap_or(f64::NAN)
                ),
            });
        }
        outputs["bound_check"] = serde_json::to_value(&check).map_err(|e| Failure::internal(e.to_string()))?;
    }
    Ok(Outcome {
        outputs,
        artifacts,
        failure,
    })
}

fn resolution(config: &RunConfig) -> Result<Outcome, Failure> {
    let problem = problem(config)?;
    let steps = config.steps.ok_or_else(|| Failure::validation("L is required"))?;
    let ns = config
        .qubit_list
        .clone()
        .ok_or_else(|| Failure::validation("ns is required"))?;
    let grids = ns
        .iter()
        .map(|&n| GridSpec::with_limit(vec![n; config.d], config.max_qubits))
        .collect::<splitstep::Result<Vec<_>>>()?;
    let report = resolution_scan(&problem, &grids, steps, config.reference_steps)?;
    let mut artifacts = Artifacts::default();
    artifacts.add(
        "resolution_scan.csv",
        csv_bytes(&scaling_rows("resolution-scan", &report))?,
    );
    Ok(Outcome {
        outputs: json!({ "scaling": report }),
        artifacts,
        failure: None,
    })
}

fn convergence(config: &RunConfig) -> Result<Outcome, Failure> {
    let problem = problem(config)?;
    let ns = config
        .qubit_list
        .clone()
        .ok_or_else(|| Failure::validation("ns is required"))?;
    let report = spatial_convergence(&problem, &ns)?;
    let mut artifacts = Artifacts::default();
    artifacts.add(
        "convergence.csv",
        csv_bytes(&convergence_rows("convergence", &report))?,
    );
    Ok(Outcome {
        outputs: json!({ "convergence": report }),
        artifacts,
        failure: None,
    })
}

fn resources(config: &RunConfig) -> Result<Outcome, Failure> {
    let grid = grid(config)?;
    let steps = config.steps.ok_or_else(|| Failure::validation("L is required"))?;
    let plan = EvolutionPlan::new(
        config.coefficient_set()?,
        config.formula,
        config.p,
        grid.clone(),
        config.horizon,
        steps,
    )?;
    let tolerances = config.tolerance_list();
    let mut rows = Vec::new();
    for axis in 1..=grid.dim() {
        rows.extend(estimate_step_resources(&plan, 0.0, axis, &tolerances)?);
    }
    let mut buf = Vec::new();
    write_resources_csv(&mut buf, &rows)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("resources.csv", buf);
    Ok(Outcome {
        outputs: json!({ "step_size": plan.step_size(), "rows": rows }),
        artifacts,
        failure: None,
    })
}

fn execute(config: &RunConfig) -> Result<Outcome, Failure> {
    match config.experiment {
        Experiment::Solve => solve(config),
        Experiment::TrotterScan => trotter(config, false),
        Experiment::Bounds => trotter(config, true),
        Experiment::ResolutionScan => resolution(config),
        Experiment::Convergence => convergence(config),
        Experiment::Resources => resources(config),
    }
}

#[derive(Serialize)]
struct ErrorInfo<'a> {
    kind: &'a str,
    message: &'a str,
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    status: &'static str,
    exit_code: i32,
    experiment: Option<String>,
    config: Value,
    error: Option<ErrorInfo<'a>>,
    outputs: Value,
    artifacts: Vec<String>,
    threads: usize,
    timings: Value,
}

/// Writes `report.json` and returns the exit status.
pub fn write_report(
    out: &Path,
    config: Value,
    experiment: Option<String>,
    result: Result<(Value, Vec<String>), &Failure>,
    seconds: f64,
) -> anyhow::Result<i32> {
    let (status, code, error, outputs, artifacts) = match &result {
        Ok((outputs, artifacts)) => ("ok", EXIT_OK, None, outputs.clone(), artifacts.clone()),
        Err(f) => (
            "error",
            f.code,
            Some(ErrorInfo {
                kind: f.kind,
                message: &f.message,
            }),
            Value::Null,
            Vec::new(),
        ),
    };
    let report = Report {
        tool: "splitstep",
        version: env!("CARGO_PKG_VERSION"),
        status,
        exit_code: code,
        experiment,
        config,
        error,
        outputs,
        artifacts,
        threads: rayon::current_num_threads(),
        timings: json!({ "total_seconds": seconds }),
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("report.json");
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(code)
}

/// Runs a validated config, writes every artifact and the report, and
/// returns the exit status.
pub fn run(config: &RunConfig, out: &Path) -> anyhow::Result<i32> {
    let start = Instant::now();
    let echo = serde_json::to_value(config)?;
    let name = Some(config.experiment.to_string());
    match execute(config) {
        Ok(outcome) => {
            let names = outcome.artifacts.names();
            for (rel, bytes) in &outcome.artifacts.files {
                let path = out.join(rel);
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
                std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            }
            let seconds = start.elapsed().as_secs_f64();
            match outcome.failure {
                None => write_report(out, echo, name, Ok((outcome.outputs, names)), seconds),
                Some(f) => {
                    // Keep the computed outputs next to the failure.
                    let code = write_report(out, echo, name, Err(&f), seconds)?;
                    let path = out.join("report.json");
                    let mut report: Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
                    report["outputs"] = outcome.outputs;
                    report["artifacts"] = json!(names);
                    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
                    eprintln!("error: {}", f.message);
                    Ok(code)
                }
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            write_report(out, echo, name, Err(&f), start.elapsed().as_secs_f64())
        }
    }
}
