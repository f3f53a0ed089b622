use serde::Serialize;

use super::{ErrorCurve, Problem, FIT_FLOOR};
use crate::coeffs::{
    partial_sup_norm, sup_norm, time_derivative_sup_norm, EquationKind, DEFAULT_OVERSAMPLE,
};
use crate::error::{Error, Result};
use crate::evolve::{EvolutionPlan, Formula};
use crate::field::{Field, GridSpec};

/// Snapshots recorded for the maxima over time; every other one is dropped
/// to check that the maxima are resolved.
pub const PREFACTOR_SNAPSHOTS: usize = 65;

const MIN_SNAPSHOTS: usize = 33;
const SNAPSHOT_TOLERANCE: f64 = 0.01;
const BOUND_SLACK: f64 = 0.1;
const REGIME_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ingredient {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundPrefactors {
    pub kind: EquationKind,
    pub a_g: f64,
    pub a_s: f64,
    pub ingredients: Vec<Ingredient>,
    /// `‖f_0‖` for convection, `‖φ̃_T‖` for diffusion.
    pub denominator: f64,
    /// `|mean(φ_0)|`, the lower bound on `‖φ̃_T‖` from mean conservation.
    pub mean_lower_bound: Option<f64>,
    pub snapshots: usize,
    /// Largest relative change of a time maximum when every other snapshot
    /// is dropped.
    pub snapshot_change: Option<f64>,
    pub warnings: Vec<String>,
}

impl BoundPrefactors {
    pub fn for_formula(&self, formula: Formula) -> f64 {
        match formula {
            Formula::Standard => self.a_s,
            Formula::Generalized => self.a_g,
        }
    }

    pub fn ingredient(&self, name: &str) -> Option<f64> {
        self.ingredients.iter().find(|i| i.name == name).map(|i| i.value)
    }
}

/// Reference trajectory with [`PREFACTOR_SNAPSHOTS`] equispaced states.
pub fn prefactor_trajectory(
    problem: &Problem,
    grid: &GridSpec,
    reference_steps: Option<usize>,
) -> Result<Vec<Field>> {
    let intervals = PREFACTOR_SNAPSHOTS - 1;
    let wanted = if problem.coefficients.depends_on_time() {
        reference_steps.unwrap_or(4 * intervals)
    } else {
        intervals
    };
    let steps = wanted.div_ceil(intervals).max(1) * intervals;
    let initial = problem.initial_field(grid)?;
    problem
        .reference(grid, steps)?
        .trajectory(&initial, PREFACTOR_SNAPSHOTS)
}

fn derivative_norms(trajectory: &[Field], axis: usize, order: u32) -> Result<Vec<f64>> {
    trajectory
        .iter()
        .map(|f| Ok(f.spectral_derivative(axis, order)?.scaled_norm()))
        .collect()
}

fn max_of<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    values.fold(0.0, |m, v| m.max(*v))
}

/// The vector-norm Trotter bound prefactors `a_g`, `a_s` (or their
/// diffusion analogues) with every ingredient.
///
/// Maxima over time are taken over the equispaced `trajectory`, which must
/// start at `t = 0`, end at `t = T`, and hold at least 33 states.
pub fn bound_prefactors(plan: &EvolutionPlan, trajectory: &[Field]) -> Result<BoundPrefactors> {
    if trajectory.len() < MIN_SNAPSHOTS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SNAPSHOTS} snapshots, got {}",
            trajectory.len()
        )));
    }
    let grid = plan.grid();
    for f in trajectory {
        grid.ensure_same(f.grid())?;
    }
    let kind = plan.kind();
    let order = match kind {
        EquationKind::Convection => 1,
        EquationKind::Diffusion => 2,
    };
    let dim = grid.dim();
    let window = (0.0, plan.horizon());
    let set = plan.coefficients();
    let mut ingredients = Vec::new();
    let mut warnings = Vec::new();
    let sym = if order == 1 { "c" } else { "κ" };
    let dx = if order == 1 { "∂" } else { "∂²" };

    let mut sup = Vec::with_capacity(dim);
    let mut dt = Vec::with_capacity(dim);
    for j in 1..=dim {
        let e = set.axis(j);
        let s = sup_norm(e, grid, window, DEFAULT_OVERSAMPLE)?;
        let d = time_derivative_sup_norm(e, grid, window)?;
        ingredients.push(Ingredient {
            name: format!("sup|{sym}{j}|"),
            value: s,
        });
        ingredients.push(Ingredient {
            name: format!("sup|∂t {sym}{j}|"),
            value: d,
        });
        sup.push(s);
        dt.push(d);
    }
    // cross[j][m] = ‖∂^order_{x_j} c_m‖
    let mut cross = vec![vec![0.0; dim]; dim];
    for j in 1..=dim {
        for m in 1..=dim {
            if j == m {
                continue;
            }
            let v = partial_sup_norm(set.axis(m), j, order, grid, window)?;
            ingredients.push(Ingredient {
                name: format!("sup|{dx}x{j} {sym}{m}|"),
                value: v,
            });
            cross[j - 1][m - 1] = v;
        }
    }

    let first = &trajectory[0];
    let last = trajectory.last().expect("nonempty trajectory");
    let mut mean_lower_bound = None;
    let denominator = match kind {
        EquationKind::Convection => first.scaled_norm(),
        EquationKind::Diffusion => {
            let mean = first.mean().norm();
            if mean <= 1e-12 * first.scaled_norm() {
                warnings.push(
                    "initial mean is zero: the mean-conservation lower bound on ‖φ̃_T‖ is unavailable"
                        .into(),
                );
            } else {
                mean_lower_bound = Some(mean);
            }
            last.scaled_norm()
        }
    };
    if !(denominator > 0.0) {
        return Err(Error::DegenerateState("zero state norm in prefactor denominator".into()));
    }

    let halvable = (trajectory.len() - 1) % 2 == 0 && (trajectory.len() - 1) / 2 + 1 >= MIN_SNAPSHOTS;
    let mut growth = Vec::with_capacity(dim);
    let mut snapshot_change: Option<f64> = None;
    for m in 1..=dim {
        let norms = derivative_norms(trajectory, m, order)?;
        let full = max_of(norms.iter()) / denominator;
        if halvable {
            let half = max_of(norms.iter().step_by(2)) / denominator;
            if full > 0.0 {
                let change = (full - half) / full;
                snapshot_change = Some(snapshot_change.unwrap_or(0.0).max(change));
            }
        }
        ingredients.push(Ingredient {
            name: format!("max_t ‖{dx}x{m} f‖/denominator"),
            value: full,
        });
        growth.push(full);
    }
    if let Some(change) = snapshot_change {
        if change > SNAPSHOT_TOLERANCE {
            return Err(Error::ReferenceNotConverged(format!(
                "time maxima changed by {:.2}% when halving the snapshots",
                100.0 * change
            )));
        }
    }

    let mut a_g = 0.0;
    for j in 0..dim {
        for m in j + 1..dim {
            a_g += sup[j] * cross[j][m] * growth[m] + sup[m] * cross[m][j] * growth[j];
        }
    }
    a_g *= 0.5;
    let a_s = a_g + 0.5 * (0..dim).map(|j| dt[j] * growth[j]).sum::<f64>();
    Ok(BoundPrefactors {
        kind,
        a_g,
        a_s,
        ingredients,
        denominator,
        mean_lower_bound,
        snapshots: trajectory.len(),
        snapshot_change,
        warnings,
    })
}

/// Operator-norm comparison bound on `E(L)`:
/// `(T²/L) Σ_{j<m} ‖H_j‖ ‖H_m‖` with `‖H_j‖ = max|c_j| · max_k |d_k|`
/// (or `max|κ_j| · max_k d_k²`).
pub fn operator_norm_bound(plan: &EvolutionPlan) -> Result<f64> {
    let grid = plan.grid();
    let window = (0.0, plan.horizon());
    let norms = (1..=grid.dim())
        .map(|j| {
            let c = sup_norm(plan.coefficients().axis(j), grid, window, 1)?;
            let d = plan.symbol(j).max_abs();
            Ok(match plan.kind() {
                EquationKind::Convection => c * d,
                EquationKind::Diffusion => c * d * d,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut pairs = 0.0;
    for j in 0..norms.len() {
        for m in j + 1..norms.len() {
            pairs += norms[j] * norms[m];
        }
    }
    let t = plan.horizon();
    Ok(t * t / plan.steps() as f64 * pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundStatus {
    /// All errors sit at the roundoff floor.
    Trivial,
    Satisfied,
    Violated,
    /// `a_α = 0`: the measured error is higher order and not covered.
    RDominated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub formula: Formula,
    pub steps: usize,
    pub error: f64,
    pub prefactor: f64,
    /// `E L / (a_α T²)`.
    pub tightness: Option<f64>,
    pub status: BoundStatus,
    pub notice: Option<String>,
}

impl BoundCheck {
    pub fn passed(&self) -> bool {
        self.status != BoundStatus::Violated
    }
}

/// Checks `E(L) L / T² ≤ (1 + 0.1) a_α` at the largest `L` whose error
/// ratio to the previous point is within 10% of first-order behavior.
pub fn verify_bound(
    curve: &ErrorCurve,
    prefactors: &BoundPrefactors,
    horizon: f64,
    formula: Formula,
) -> Result<BoundCheck> {
    let a = prefactors.for_formula(formula);
    let pts = &curve.points;
    let (l_last, e_last) = *pts
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty error curve".into()))?;
    if curve.max_error() <= FIT_FLOOR {
        return Ok(BoundCheck {
            formula,
            steps: l_last as usize,
            error: e_last,
            prefactor: a,
            tightness: (a > 0.0).then(|| e_last * l_last / (a * horizon * horizon)),
            status: BoundStatus::Trivial,
            notice: Some("all errors at the roundoff floor".into()),
        });
    }
    if a == 0.0 {
        return Ok(BoundCheck {
            formula,
            steps: l_last as usize,
            error: e_last,
            prefactor: a,
            tightness: None,
            status: BoundStatus::RDominated,
            notice: Some(
                "prefactor is zero: the error is dominated by higher-order terms, bound check skipped"
                    .into(),
            ),
        });
    }
    let in_regime = |i: usize| {
        let (l0, e0) = pts[i - 1];
        let (l1, e1) = pts[i];
        let expected = l0 / l1;
        e0 > FIT_FLOOR && ((e1 / e0) - expected).abs() <= REGIME_TOLERANCE * expected
    };
    let i = (1..pts.len()).rev().find(|&i| in_regime(i)).ok_or_else(|| {
        Error::RegimeNotReached(format!(
            "no consecutive error ratio within {}% of first order: {pts:?}",
            100.0 * REGIME_TOLERANCE
        ))
    })?;
    let (l, e) = pts[i];
    let tightness = e * l / (a * horizon * horizon);
    Ok(BoundCheck {
        formula,
        steps: l as usize,
        error: e,
        prefactor: a,
        tightness: Some(tightness),
        status: if tightness <= 1.0 + BOUND_SLACK {
            BoundStatus::Satisfied
        } else {
            BoundStatus::Violated
        },
        notice: None,
    })
}
