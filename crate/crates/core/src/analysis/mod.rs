//! Error experiments: Trotter error against step count, prefactor against
//! resolution, spatial convergence, and the vector-norm bound prefactors.

mod bounds;
mod output;

use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::{CoefficientSet, EquationKind, Expr};
use crate::error::{Error, Result};
use crate::evolve::{evolve, EvolutionPlan, Formula};
use crate::field::{distance, sample_function, Field, GridSpec};
use crate::oracle::{pde_constant_diffusion, pde_translation, ReferenceEvolution};

pub use bounds::{
    bound_prefactors, operator_norm_bound, prefactor_trajectory, verify_bound, BoundCheck,
    BoundPrefactors, BoundStatus, Ingredient, PREFACTOR_SNAPSHOTS,
};
pub use output::{
    convergence_rows, scaling_rows, trotter_rows, write_rows_csv, ExperimentRow,
};

/// Errors at or below this are treated as double-precision noise.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Points must exceed this to enter a fit.
pub const FIT_FLOOR: f64 = 10.0 * ROUNDOFF_FLOOR;

/// Largest relative change of any error when the reference step count is
/// doubled.
pub const REFERENCE_TOLERANCE: f64 = 0.01;

/// A PDE problem independent of resolution and step count.
#[derive(Debug, Clone)]
pub struct Problem {
    pub coefficients: CoefficientSet,
    pub initial: Expr,
    pub p: usize,
    pub horizon: f64,
    pub formula: Formula,
}

impl Problem {
    pub fn kind(&self) -> EquationKind {
        self.coefficients.kind()
    }

    pub fn plan(&self, grid: &GridSpec, steps: usize) -> Result<EvolutionPlan> {
        EvolutionPlan::new(
            self.coefficients.clone(),
            self.formula,
            self.p,
            grid.clone(),
            self.horizon,
            steps,
        )
    }

    /// Initial samples rescaled to unit scaled norm.
    pub fn initial_field(&self, grid: &GridSpec) -> Result<Field> {
        sample_function(grid, &self.initial, 0.0)?.normalize()
    }

    pub fn reference(&self, grid: &GridSpec, steps: usize) -> Result<ReferenceEvolution> {
        ReferenceEvolution::new(
            grid.clone(),
            self.coefficients.clone(),
            self.p,
            self.horizon,
            steps,
        )
    }

    /// Reference step count used when none is given: the exact single
    /// step for time-independent generators, else `max(64, 4 L_max)`.
    pub fn default_reference_steps(&self, max_steps: usize) -> usize {
        if self.coefficients.depends_on_time() {
            (4 * max_steps).max(64)
        } else {
            1
        }
    }

    /// Trotter error measure: plain distance for convection, distance of
    /// normalized states for diffusion.
    pub fn error_between(&self, a: &Field, b: &Field) -> Result<f64> {
        distance(a, b, self.kind() == EquationKind::Diffusion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Abscissa {
    Steps,
    Qubits,
    Spacing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSummary {
    pub kind: EquationKind,
    pub formula: Formula,
    pub p: usize,
    pub qubits: Vec<u32>,
    pub horizon: f64,
}

impl PlanSummary {
    fn of(problem: &Problem, grid: &GridSpec) -> Self {
        Self {
            kind: problem.kind(),
            formula: problem.formula,
            p: problem.p,
            qubits: grid.qubits().to_vec(),
            horizon: problem.horizon,
        }
    }
}

/// Measured error against a strictly increasing parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub abscissa: Abscissa,
    pub points: Vec<(f64, f64)>,
    pub summary: PlanSummary,
}

impl ErrorCurve {
    pub fn new(abscissa: Abscissa, points: Vec<(f64, f64)>, summary: PlanSummary) -> Result<Self> {
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidArgument(format!(
                    "abscissa not strictly increasing at {} -> {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(p) = points
            .iter()
            .find(|(x, e)| !x.is_finite() || !e.is_finite() || *e < 0.0 || *x <= 0.0)
        {
            return Err(Error::InvalidArgument(format!("invalid curve point {p:?}")));
        }
        Ok(Self {
            abscissa,
            points,
            summary,
        })
    }

    pub fn max_error(&self) -> f64 {
        self.points.iter().fold(0.0, |m, p| m.max(p.1))
    }
}

/// Least-squares line through `(log x, log error)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub used: usize,
    /// Abscissae of points dropped for sitting at the roundoff floor.
    pub excluded: Vec<f64>,
}

pub fn order_fit(curve: &ErrorCurve) -> Result<Fit> {
    let (used, floor): (Vec<&(f64, f64)>, Vec<&(f64, f64)>) =
        curve.points.iter().partition(|(_, e)| *e > FIT_FLOOR);
    let excluded: Vec<f64> = floor.iter().map(|p| p.0).collect();
    if used.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "{} usable points; points at the roundoff floor: {excluded:?}",
            used.len()
        )));
    }
    let xs: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy <= f64::EPSILON * n { 1.0 } else { 1.0 - ss_res / syy };
    Ok(Fit {
        slope,
        intercept,
        r2,
        used: used.len(),
        excluded,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrotterScan {
    pub curve: ErrorCurve,
    /// `None` when too few points lie above the roundoff floor.
    pub fit: Option<Fit>,
    pub reference_steps: usize,
    /// Distance between the references with `M` and `2M` steps; zero when
    /// the generator is time-independent and the reference is exact.
    pub reference_shift: f64,
}

/// Reference at `T` with `2M` steps, plus the `M`-step one for the
/// doubling check when the generator depends on time.
fn converged_reference(
    problem: &Problem,
    grid: &GridSpec,
    initial: &Field,
    steps: usize,
) -> Result<(Field, Option<Field>)> {
    let reference = problem.reference(grid, steps)?;
    if reference.is_autonomous() {
        return Ok((reference.run(initial)?, None));
    }
    let doubled = reference.with_steps(2 * steps)?;
    let (a, b) = rayon::join(|| reference.run(initial), || doubled.run(initial));
    Ok((b?, Some(a?)))
}

/// `E(L)` against the midpoint reference for every `L` in `steps`.
pub fn trotter_error_scan(
    problem: &Problem,
    grid: &GridSpec,
    steps: &[usize],
    reference_steps: Option<usize>,
) -> Result<TrotterScan> {
    let mut ls = steps.to_vec();
    ls.sort_unstable();
    ls.dedup();
    if ls.is_empty() || ls[0] == 0 {
        return Err(Error::InvalidArgument("step counts must be positive".into()));
    }
    let m = reference_steps.unwrap_or_else(|| problem.default_reference_steps(*ls.last().unwrap()));
    let initial = problem.initial_field(grid)?;
    let (reference, coarse) = converged_reference(problem, grid, &initial, m)?;
    let errors = ls
        .par_iter()
        .map(|&l| {
            let plan = problem.plan(grid, l)?;
            let out = evolve(&plan, &initial)?.final_state;
            Ok((problem.error_between(&out, &reference)?, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut shift = 0.0;
    if let Some(coarse) = coarse {
        shift = problem.error_between(&coarse, &reference)?;
        for (&l, (e, out)) in ls.iter().zip(&errors) {
            if *e <= FIT_FLOOR {
                continue;
            }
            let e_coarse = problem.error_between(out, &coarse)?;
            let change = (e_coarse - e).abs() / e;
            if change > REFERENCE_TOLERANCE {
                return Err(Error::ReferenceNotConverged(format!(
                    "doubling the reference from {m} to {} steps moved E(L={l}) by {:.2}%",
                    2 * m,
                    100.0 * change
                )));
            }
        }
    }
    let points = ls
        .iter()
        .zip(&errors)
        .map(|(&l, (e, _))| (l as f64, *e))
        .collect();
    let curve = ErrorCurve::new(Abscissa::Steps, points, PlanSummary::of(problem, grid))?;
    let fit = order_fit(&curve).ok();
    Ok(TrotterScan {
        curve,
        fit,
        reference_steps: if problem.coefficients.depends_on_time() { 2 * m } else { m },
        reference_shift: shift,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub qubits: Vec<u32>,
    pub steps: usize,
    pub error: f64,
    /// `Ĉ(n) = L · E(L, n)`.
    pub prefactor: f64,
    /// `a_α T²`.
    pub vector_prefactor: f64,
    /// `T² Σ_{j<m} ‖H_j‖ ‖H_m‖`.
    pub operator_prefactor: f64,
    pub vector_ratio: Option<f64>,
    pub operator_ratio: f64,
    pub prefactors: BoundPrefactors,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub kind: EquationKind,
    pub formula: Formula,
    pub p: usize,
    pub horizon: f64,
    pub steps: usize,
    pub rows: Vec<ScalingRow>,
    /// `max Ĉ / min Ĉ` over the rows.
    pub prefactor_spread: f64,
    /// Operator-norm column growth between consecutive rows, per unit
    /// increase of qubits per axis.
    pub operator_growth: Vec<f64>,
}

/// Measured prefactor `L · E(L, n)` and both bound columns for each grid.
pub fn resolution_scan(
    problem: &Problem,
    grids: &[GridSpec],
    steps: usize,
    reference_steps: Option<usize>,
) -> Result<ScalingReport> {
    if grids.is_empty() {
        return Err(Error::InvalidArgument("no resolutions given".into()));
    }
    let t = problem.horizon;
    let mut rows = Vec::with_capacity(grids.len());
    for grid in grids {
        let grid = grid.clone();
        let scan = trotter_error_scan(problem, &grid, &[steps], reference_steps)?;
        let error = scan.curve.points[0].1;
        let plan = problem.plan(&grid, steps)?;
        let traj = prefactor_trajectory(problem, &grid, reference_steps)?;
        let prefactors = bound_prefactors(&plan, &traj)?;
        let a = prefactors.for_formula(problem.formula);
        let vector_prefactor = a * t * t;
        let operator_prefactor = operator_norm_bound(&plan)? * steps as f64;
        let prefactor = steps as f64 * error;
        rows.push(ScalingRow {
            qubits: grid.qubits().to_vec(),
            steps,
            error,
            prefactor,
            vector_prefactor,
            operator_prefactor,
            vector_ratio: (vector_prefactor > 0.0).then(|| prefactor / vector_prefactor),
            operator_ratio: if operator_prefactor > 0.0 {
                prefactor / operator_prefactor
            } else {
                0.0
            },
            prefactors,
        });
    }
    let max = rows.iter().fold(0.0f64, |m, r| m.max(r.prefactor));
    let min = rows.iter().fold(f64::INFINITY, |m, r| m.min(r.prefactor));
    let prefactor_spread = if min > 0.0 { max / min } else { f64::INFINITY };
    let operator_growth = rows
        .windows(2)
        .map(|w| {
            let dq: f64 = w[1]
                .qubits
                .iter()
                .zip(&w[0].qubits)
                .map(|(a, b)| *a as f64 - *b as f64)
                .sum::<f64>()
                / w[0].qubits.len() as f64;
            let ratio = w[1].operator_prefactor / w[0].operator_prefactor;
            if dq > 0.0 {
                ratio.powf(1.0 / dq)
            } else {
                ratio
            }
        })
        .collect();
    Ok(ScalingReport {
        kind: problem.kind(),
        formula: problem.formula,
        p: problem.p,
        horizon: t,
        steps,
        rows,
        prefactor_spread,
        operator_growth,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub curve: ErrorCurve,
    pub fit: Fit,
    /// `exp(intercept) / (T Σ_j ‖c_j‖)`: the constant of the observed
    /// `T K Σ ‖c_j‖ Δx^{2p}` law, not a proven bound.
    pub empirical_constant: f64,
}

/// Space discretization error of constant-coefficient problems against the
/// exact PDE solution, with the fitted order in `Δx`.
///
/// Every axis uses the same qubit count `n`; for constant coefficients the
/// split factors commute and a single step solves the semi-discrete system
/// exactly, so the measured error is purely spatial.
pub fn spatial_convergence(
    problem: &Problem,
    qubits: &[u32],
) -> Result<ConvergenceReport> {
    let constants = problem.coefficients.constant_values().ok_or_else(|| {
        Error::InvalidArgument("spatial convergence needs constant coefficients".into())
    })?;
    let dim = problem.coefficients.dim();
    let mut ns = qubits.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let max_n = *ns.last().ok_or_else(|| Error::InvalidArgument("no resolutions given".into()))?;
    let fine = (max_n + 3).max(12).min(crate::field::DEFAULT_MAX_QUBITS / dim as u32).max(max_n);
    let errors = ns
        .par_iter()
        .map(|&n| {
            let grid = GridSpec::new(vec![n; dim])?;
            let initial = sample_function(&grid, &problem.initial, 0.0)?;
            let plan = problem.plan(&grid, 1)?;
            let computed = evolve(&plan, &initial)?.final_state;
            let exact = match problem.kind() {
                EquationKind::Convection => {
                    pde_translation(&grid, &problem.initial, &constants, problem.horizon)?
                }
                EquationKind::Diffusion => pde_constant_diffusion(
                    &grid,
                    &problem.initial,
                    &constants,
                    problem.horizon,
                    fine,
                )?,
            };
            problem.error_between(&computed, &exact)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut points: Vec<(f64, f64)> = ns
        .iter()
        .zip(&errors)
        .map(|(&n, &e)| ((-(n as f64)).exp2(), e))
        .collect();
    points.reverse();
    let summary = PlanSummary {
        kind: problem.kind(),
        formula: problem.formula,
        p: problem.p,
        qubits: vec![max_n; dim],
        horizon: problem.horizon,
    };
    let curve = ErrorCurve::new(Abscissa::Spacing, points, summary)?;
    let fit = order_fit(&curve)?;
    let speed: f64 = constants.iter().map(|c| c.abs()).sum();
    let empirical_constant = if speed > 0.0 && problem.horizon > 0.0 {
        fit.intercept.exp() / (problem.horizon * speed)
    } else {
        0.0
    };
    Ok(ConvergenceReport {
        curve,
        fit,
        empirical_constant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QubitCount {
    pub qubits: u32,
    /// True when `T K ‖c_j‖ / ε ≤ 1`, so any resolution meets the target.
    pub degenerate: bool,
}

/// `n_j = ⌈(1/2p) log₂(T K ‖c_j‖ / ε)⌉` per axis.
pub fn qubit_budget(
    epsilon: f64,
    horizon: f64,
    p: usize,
    sup_norms: &[f64],
    constant: f64,
) -> Result<Vec<QubitCount>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {epsilon}")));
    }
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::InvalidArgument(format!("constant must be positive, got {constant}")));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("order must be positive".into()));
    }
    sup_norms
        .iter()
        .map(|&c| {
            let arg = horizon * constant * c / epsilon;
            if !arg.is_finite() || arg < 0.0 {
                return Err(Error::InvalidArgument(format!("invalid budget argument {arg}")));
            }
            if arg <= 1.0 {
                return Ok(QubitCount {
                    qubits: 0,
                    degenerate: true,
                });
            }
            let n = (arg.log2() / (2 * p) as f64).ceil();
            Ok(QubitCount {
                qubits: n as u32,
                degenerate: false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary() -> PlanSummary {
        PlanSummary {
            kind: EquationKind::Convection,
            formula: Formula::Standard,
            p: 1,
            qubits: vec![3],
            horizon: 1.0,
        }
    }

    fn curve(points: Vec<(f64, f64)>) -> ErrorCurve {
        ErrorCurve::new(Abscissa::Steps, points, summary()).unwrap()
    }

    pub(crate) fn problem(kind: EquationKind, c: &[&str], f0: &str, t: f64) -> Problem {
        let coefficients = CoefficientSet::parse(kind, c).unwrap();
        let initial = Expr::parse(f0, c.len()).unwrap();
        Problem {
            coefficients,
            initial,
            p: 1,
            horizon: t,
            formula: Formula::Standard,
        }
    }

    #[test]
    fn fit_examples() {
        let sq = curve((1..=5).map(|x| (x as f64, (x * x) as f64)).collect());
        let f = order_fit(&sq).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);

        let flat = curve((1..=4).map(|x| (x as f64, 0.5)).collect());
        assert!(order_fit(&flat).unwrap().slope.abs() < 1e-12);

        let inv = curve((1..=4).map(|x| (x as f64, 3.0 / x as f64)).collect());
        let f = order_fit(&inv).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fit_excludes_floor_points() {
        let c = curve(vec![(1.0, 1e-3), (2.0, 1e-5), (3.0, 1e-14), (4.0, 1e-15)]);
        match order_fit(&c) {
            Err(Error::DegenerateFit(msg)) => assert!(msg.contains("3.0") || msg.contains('3')),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn curve_rejects_unordered_points() {
        assert!(ErrorCurve::new(Abscissa::Steps, vec![(2.0, 1.0), (1.0, 1.0)], summary()).is_err());
        assert!(ErrorCurve::new(Abscissa::Steps, vec![(1.0, -1.0)], summary()).is_err());
    }

    #[test]
    fn budget_examples() {
        let b = qubit_budget(1.0, 1.0, 1, &[16.0], 1.0).unwrap();
        assert_eq!(b[0], QubitCount { qubits: 2, degenerate: false });
        let b = qubit_budget(1.0, 1.0, 2, &[16.0], 1.0).unwrap();
        assert_eq!(b[0].qubits, 1);
        let b = qubit_budget(2.0, 1.0, 1, &[1.5], 1.0).unwrap();
        assert_eq!(b[0], QubitCount { qubits: 0, degenerate: true });
        assert!(qubit_budget(0.0, 1.0, 1, &[1.0], 1.0).is_err());
    }

    #[test]
    fn constant_coefficients_split_exactly() {
        let pr = problem(
            EquationKind::Convection,
            &["1", "-0.5"],
            "exp(sin(2*pi*x1)+cos(2*pi*x2))",
            1.0,
        );
        let grid = GridSpec::new(vec![4, 4]).unwrap();
        let scan = trotter_error_scan(&pr, &grid, &[1, 4, 16], None).unwrap();
        for (_, e) in &scan.curve.points {
            assert!(*e < 1e-11, "{e}");
        }
        assert!(scan.fit.is_none());
    }

    #[test]
    fn variable_convection_is_first_order() {
        let pr = problem(
            EquationKind::Convection,
            &["1+0.5*sin(2*pi*x2)", "1+0.5*cos(2*pi*x1)"],
            "exp(sin(2*pi*x1)+cos(2*pi*x2))",
            1.0,
        );
        let grid = GridSpec::new(vec![4, 4]).unwrap();
        let scan = trotter_error_scan(&pr, &grid, &[32, 64, 128], None).unwrap();
        let p = &scan.curve.points;
        let r = p[2].1 / p[1].1;
        assert!((0.4..=0.6).contains(&r), "{p:?}");
    }

    #[test]
    fn time_dependent_reference_is_checked() {
        let pr = problem(
            EquationKind::Convection,
            &["1+0.5*sin(2*pi*x2)*cos(2*pi*t)", "1"],
            "exp(sin(2*pi*x1)+cos(2*pi*x2))",
            1.0,
        );
        let grid = GridSpec::new(vec![3, 3]).unwrap();
        let scan = trotter_error_scan(&pr, &grid, &[8, 16], None).unwrap();
        assert_eq!(scan.reference_steps, 128);
        assert!(scan.reference_shift > 0.0);
        // A single reference step is far from converged.
        assert!(matches!(
            trotter_error_scan(&pr, &grid, &[8, 16], Some(1)),
            Err(Error::ReferenceNotConverged(_))
        ));
    }

    #[test]
    fn spatial_order_for_translation() {
        let mut pr = problem(EquationKind::Convection, &["1"], "exp(sin(2*pi*x1))", 1.0);
        for p in [1usize, 2] {
            pr.p = p;
            let rep = spatial_convergence(&pr, &[5, 6, 7, 8]).unwrap();
            assert!((rep.fit.slope - 2.0 * p as f64).abs() < 0.3, "p={p} {:?}", rep.fit);
            assert!(rep.empirical_constant > 0.0);
        }
    }

    #[test]
    fn spatial_order_for_heat() {
        let mut pr = problem(EquationKind::Diffusion, &["0.5"], "1+exp(sin(2*pi*x1))", 0.05);
        pr.p = 1;
        let rep = spatial_convergence(&pr, &[5, 6, 7, 8]).unwrap();
        assert!((rep.fit.slope - 2.0).abs() < 0.3, "{:?}", rep);
    }
}
