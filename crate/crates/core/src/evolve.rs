//! First-order split-step evolution.
//!
//! Each step applies, for `j = 1, …, d` in that order, one factor that is
//! diagonal in the mixed basis (Fourier along axis `j`, position along the
//! others). The factor for axis `j` multiplies Fourier mode `k_j` by
//! `exp(-i w(x_other) d(k_j))` for convection and `exp(-w(x_other) d(k_j)²)`
//! for diffusion, where `w` is `h·e_j(x, t+h)` (standard formula) or
//! `∫_t^{t+h} e_j(x, s) ds` (generalized formula).

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coeffs::{validate_independence, window_times, CoefficientSet, EquationKind, TIME_SAMPLES};
use crate::error::{Error, Result};
use crate::field::{fft_axis_in_place, for_each_line, Direction, Field, GridSpec};
use crate::stencil::{derivative_symbol, stencil_coefficients, DerivativeSymbol, StencilCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formula {
    /// Coefficients evaluated at the end of the step.
    Standard,
    /// Coefficients integrated over the step.
    Generalized,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formula::Standard => "standard",
            Formula::Generalized => "generalized",
        })
    }
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Formula::Standard),
            "generalized" => Ok(Formula::Generalized),
            other => Err(Error::InvalidArgument(format!("unknown formula '{other}'"))),
        }
    }
}

/// How a diagonal weight becomes a multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    /// `exp(-i w)`.
    Unitary,
    /// `exp(-w)`.
    Damping,
}

impl From<EquationKind> for PhaseMode {
    fn from(kind: EquationKind) -> Self {
        match kind {
            EquationKind::Convection => PhaseMode::Unitary,
            EquationKind::Diffusion => PhaseMode::Damping,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionPlan {
    formula: Formula,
    stencil: StencilCoefficients,
    grid: GridSpec,
    coefficients: CoefficientSet,
    horizon: f64,
    steps: usize,
    record_trajectory: bool,
    symbols: Vec<DerivativeSymbol>,
}

impl EvolutionPlan {
    pub fn new(
        coefficients: CoefficientSet,
        formula: Formula,
        p: usize,
        grid: GridSpec,
        horizon: f64,
        steps: usize,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("step count must be positive".into()));
        }
        if grid.dim() != coefficients.dim() {
            return Err(Error::GridMismatch(format!(
                "{}-d coefficients on a {}-d grid",
                coefficients.dim(),
                grid.dim()
            )));
        }
        let stencil = stencil_coefficients(p)?;
        let symbols = grid
            .qubits()
            .iter()
            .map(|&n| derivative_symbol(&stencil, n))
            .collect::<Result<Vec<_>>>()?;
        let times = if coefficients.depends_on_time() {
            window_times((0.0, horizon), TIME_SAMPLES)
        } else {
            vec![0.0]
        };
        let report = validate_independence(&coefficients, &grid, &times)?;
        if !report.passed() {
            return Err(Error::InvalidCoefficient(format!(
                "coefficient of axis {:?} depends on its own coordinate",
                report.failing_axes()
            )));
        }
        if coefficients.kind() == EquationKind::Diffusion {
            coefficients.check_nonnegative(&grid, &times)?;
        }
        Ok(Self {
            formula,
            stencil,
            grid,
            coefficients,
            horizon,
            steps,
            record_trajectory: false,
            symbols,
        })
    }

    pub fn with_trajectory(mut self, record: bool) -> Self {
        self.record_trajectory = record;
        self
    }

    /// Same plan with a different step count.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("step count must be positive".into()));
        }
        let mut out = self.clone();
        out.steps = steps;
        Ok(out)
    }

    /// Same plan with a different formula.
    pub fn with_formula(&self, formula: Formula) -> Self {
        let mut out = self.clone();
        out.formula = formula;
        out
    }

    pub fn kind(&self) -> EquationKind {
        self.coefficients.kind()
    }

    pub fn formula(&self) -> Formula {
        self.formula
    }

    pub fn stencil(&self) -> &StencilCoefficients {
        &self.stencil
    }

    pub fn order(&self) -> usize {
        self.stencil.order()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coefficients
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn records_trajectory(&self) -> bool {
        self.record_trajectory
    }

    /// Derivative symbol of a 1-based axis.
    pub fn symbol(&self, axis: usize) -> &DerivativeSymbol {
        &self.symbols[axis - 1]
    }

    /// Step weight `w(x)` of axis `j` for the step `[t, t+h]`, evaluated on
    /// the line base points (`k_j = 0`) and broadcast along axis `j`.
    fn coefficient_weights(&self, axis: usize, t: f64, h: f64) -> Result<Vec<f64>> {
        let grid = &self.grid;
        let expr = self.coefficients.axis(axis);
        let len = grid.points(axis);
        let stride = grid.stride(axis);
        let mut out = vec![0.0; grid.len()];
        for base in (0..grid.len()).filter(|f| (f / stride) % len == 0) {
            let x = grid.position(base);
            let w = match self.formula {
                Formula::Standard => h * expr.eval(&x, t + h)?,
                Formula::Generalized => expr.integrate_time(&x, t, h)?,
            };
            if self.kind() == EquationKind::Diffusion && w < 0.0 {
                return Err(Error::InvalidCoefficient(format!(
                    "negative diffusion weight {w} on axis {axis} at x = {x:?}, t = {t}"
                )));
            }
            for k in 0..len {
                out[base + k * stride] = w;
            }
        }
        Ok(out)
    }

    /// Full mixed-basis weights of the axis-`j` factor for `[t, t+h]`.
    pub fn axis_weights(&self, axis: usize, t: f64, h: f64) -> Result<Vec<f64>> {
        self.grid.axis_index(axis)?;
        let mut w = self.coefficient_weights(axis, t, h)?;
        let sym = self.symbol(axis).values();
        let len = self.grid.points(axis);
        let stride = self.grid.stride(axis);
        let squared = self.kind() == EquationKind::Diffusion;
        for (flat, v) in w.iter_mut().enumerate() {
            let d = sym[(flat / stride) % len];
            *v *= if squared { d * d } else { d };
        }
        Ok(w)
    }
}

/// `F_j^{-1} · diag(multiplier(weights)) · F_j` applied to a field.
///
/// `weights` are indexed like the field, with the axis-`j` coordinate
/// read as a Fourier index.
pub fn axis_phase_substep(
    field: &Field,
    axis: usize,
    weights: &[f64],
    mode: PhaseMode,
) -> Result<Field> {
    let grid = field.grid().clone();
    let axis0 = grid.axis_index(axis)?;
    if weights.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} weights for a grid of {} points",
            weights.len(),
            grid.len()
        )));
    }
    if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::NonFinite(format!("weight at flat index {i}")));
    }
    let mut out = field.clone();
    let data = out.amplitudes_mut();
    fft_axis_in_place(data, &grid, axis0, Direction::Forward);
    let stride = grid.stride(axis);
    for_each_line(data, &grid, axis0, |line, start| {
        for (k, v) in line.iter_mut().enumerate() {
            let w = weights[start + k * stride];
            *v *= match mode {
                PhaseMode::Unitary => Complex64::from_polar(1.0, -w),
                PhaseMode::Damping => Complex64::new((-w).exp(), 0.0),
            };
        }
    });
    fft_axis_in_place(data, &grid, axis0, Direction::Inverse);
    Ok(out)
}

fn step(field: &Field, t: f64, h: f64, plan: &EvolutionPlan) -> Result<Field> {
    plan.grid.ensure_same(field.grid())?;
    let mode = PhaseMode::from(plan.kind());
    let mut state = field.clone();
    for axis in 1..=plan.grid.dim() {
        let w = plan.axis_weights(axis, t, h)?;
        state = axis_phase_substep(&state, axis, &w, mode)?;
    }
    Ok(state.with_time(t + h))
}

/// One convection step over `[t, t+h]`.
pub fn convection_step(field: &Field, t: f64, h: f64, plan: &EvolutionPlan) -> Result<Field> {
    if plan.kind() != EquationKind::Convection {
        return Err(Error::InvalidArgument("convection step on a diffusion plan".into()));
    }
    step(field, t, h, plan)
}

/// One diffusion step over `[t, t+h]`.
pub fn diffusion_step(field: &Field, t: f64, h: f64, plan: &EvolutionPlan) -> Result<Field> {
    if plan.kind() != EquationKind::Diffusion {
        return Err(Error::InvalidArgument("diffusion step on a convection plan".into()));
    }
    step(field, t, h, plan)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub scaled_norm: f64,
    pub wall_seconds: f64,
    /// Diagonal substeps applied so far.
    pub substeps: usize,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub final_state: Field,
    /// `L + 1` snapshots when the plan records a trajectory, else empty.
    pub trajectory: Vec<Field>,
    pub reports: Vec<StepReport>,
}

/// Applies the `L` steps of a plan, chronologically, to `initial`.
pub fn evolve(plan: &EvolutionPlan, initial: &Field) -> Result<Evolution> {
    plan.grid.ensure_same(initial.grid())?;
    let h = plan.step_size();
    let start = Instant::now();
    let mut state = initial.clone().with_time(0.0);
    let mut trajectory = Vec::new();
    if plan.record_trajectory {
        trajectory.push(state.clone());
    }
    let mut reports = Vec::with_capacity(plan.steps);
    for l in 1..=plan.steps {
        let t = (l - 1) as f64 * plan.horizon / plan.steps as f64;
        state = step(&state, t, h, plan)?;
        let time = if l == plan.steps {
            plan.horizon
        } else {
            l as f64 * plan.horizon / plan.steps as f64
        };
        state = state.with_time(time);
        let scaled_norm = state.scaled_norm();
        if !scaled_norm.is_finite() {
            return Err(Error::NonFinite(format!("state norm after step {l}")));
        }
        reports.push(StepReport {
            step: l,
            time,
            scaled_norm,
            wall_seconds: start.elapsed().as_secs_f64(),
            substeps: l * plan.grid.dim(),
        });
        if plan.record_trajectory {
            trajectory.push(state.clone());
        }
    }
    Ok(Evolution {
        final_state: state,
        trajectory,
        reports,
    })
}

/// Writes `step_{l}.csv` for every snapshot into `dir`.
pub fn write_trajectory(dir: &Path, trajectory: &[Field]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (l, f) in trajectory.iter().enumerate() {
        let file = std::fs::File::create(dir.join(format!("step_{l}.csv")))?;
        f.write_csv(std::io::BufWriter::new(file))?;
    }
    Ok(())
}
