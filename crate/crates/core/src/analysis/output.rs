use std::io::Write;

use serde::Serialize;

use super::{ConvergenceReport, ScalingReport, TrotterScan};
use crate::coeffs::EquationKind;
use crate::error::Result;
use crate::evolve::Formula;

/// One line of an experiment CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub kind: EquationKind,
    pub formula: Formula,
    pub p: usize,
    pub qubits: Vec<u32>,
    pub steps: Option<usize>,
    pub horizon: f64,
    pub error: f64,
    pub bound_vector: Option<f64>,
    pub bound_operator: Option<f64>,
    pub prefactor: Option<f64>,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
}

/// Rows of a Trotter scan. `vector_prefactor` is `a_α T²` and
/// `operator_prefactor` is `T² Σ_{j<m} ‖H_j‖‖H_m‖`; both are divided by
/// `L` per row.
pub fn trotter_rows(
    experiment: &str,
    scan: &TrotterScan,
    vector_prefactor: Option<f64>,
    operator_prefactor: Option<f64>,
) -> Vec<ExperimentRow> {
    let s = &scan.curve.summary;
    scan.curve
        .points
        .iter()
        .map(|&(l, e)| ExperimentRow {
            experiment: experiment.into(),
            kind: s.kind,
            formula: s.formula,
            p: s.p,
            qubits: s.qubits.clone(),
            steps: Some(l as usize),
            horizon: s.horizon,
            error: e,
            bound_vector: vector_prefactor.map(|a| a / l),
            bound_operator: operator_prefactor.map(|a| a / l),
            prefactor: Some(l * e),
            slope: scan.fit.as_ref().map(|f| f.slope),
            r2: scan.fit.as_ref().map(|f| f.r2),
        })
        .collect()
}

pub fn scaling_rows(experiment: &str, report: &ScalingReport) -> Vec<ExperimentRow> {
    let l = report.steps as f64;
    report
        .rows
        .iter()
        .map(|r| ExperimentRow {
            experiment: experiment.into(),
            kind: report.kind,
            formula: report.formula,
            p: report.p,
            qubits: r.qubits.clone(),
            steps: Some(report.steps),
            horizon: report.horizon,
            error: r.error,
            bound_vector: Some(r.vector_prefactor / l),
            bound_operator: Some(r.operator_prefactor / l),
            prefactor: Some(r.prefactor),
            slope: None,
            r2: None,
        })
        .collect()
}

pub fn convergence_rows(experiment: &str, report: &ConvergenceReport) -> Vec<ExperimentRow> {
    let s = &report.curve.summary;
    let dim = s.qubits.len();
    report
        .curve
        .points
        .iter()
        .map(|&(dx, e)| ExperimentRow {
            experiment: experiment.into(),
            kind: s.kind,
            formula: s.formula,
            p: s.p,
            qubits: vec![(-dx.log2()).round() as u32; dim],
            steps: Some(1),
            horizon: s.horizon,
            error: e,
            bound_vector: None,
            bound_operator: None,
            prefactor: None,
            slope: Some(report.fit.slope),
            r2: Some(report.fit.r2),
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes rows with the header
/// `experiment,kind,formula,p,n1..nd,L,T,error,bound_vector,bound_operator,prefactor,slope,r2`,
/// where `d` is the largest dimension among the rows. Missing values are
/// empty fields.
pub fn write_rows_csv<W: Write>(writer: W, rows: &[ExperimentRow]) -> Result<()> {
    let dim = rows.iter().map(|r| r.qubits.len()).max().unwrap_or(1);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["experiment", "kind", "formula", "p"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=dim).map(|j| format!("n{j}")));
    header.extend(
        ["L", "T", "error", "bound_vector", "bound_operator", "prefactor", "slope", "r2"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.experiment.clone(),
            r.kind.to_string(),
            r.formula.to_string(),
            r.p.to_string(),
        ];
        rec.extend((0..dim).map(|j| opt(r.qubits.get(j))));
        rec.push(opt(r.steps));
        rec.push(r.horizon.to_string());
        rec.push(r.error.to_string());
        rec.push(opt(r.bound_vector));
        rec.push(opt(r.bound_operator));
        rec.push(opt(r.prefactor));
        rec.push(opt(r.slope));
        rec.push(opt(r.r2));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let row = ExperimentRow {
            experiment: "trotter-scan".into(),
            kind: EquationKind::Convection,
            formula: Formula::Generalized,
            p: 2,
            qubits: vec![5, 5],
            steps: Some(64),
            horizon: 1.0,
            error: 0.25,
            bound_vector: Some(0.5),
            bound_operator: None,
            prefactor: Some(16.0),
            slope: Some(-1.0),
            r2: None,
        };
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "experiment,kind,formula,p,n1,n2,L,T,error,bound_vector,bound_operator,prefactor,slope,r2"
        );
        assert_eq!(
            lines.next().unwrap(),
            "trotter-scan,convection,generalized,2,5,5,64,1,0.25,0.5,,16,-1,"
        );
    }
}
