//! Coefficient fields `c_j(x, t)` / `κ_j(x, t)` and initial conditions,
//! written in a small arithmetic-expression language.
//!
//! Besides parsing and evaluation this module provides the sampled
//! quantities the error analysis needs: sup-norms, sup-norms of partial
//! derivatives, and time integrals over a step.

mod expr;
mod parser;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridSpec;

pub use expr::{
    BinOp, EvalError, Expr, Func, Node, ParseError, Var, MAX_DEPTH, MAX_SOURCE_LEN,
};

/// Default per-axis refinement factor for sup-norm sampling.
pub const DEFAULT_OVERSAMPLE: usize = 4;

/// Number of equispaced time samples used by sup-norms over a window.
pub const TIME_SAMPLES: usize = 33;

/// Step of the finite-difference time derivative.
pub const TIME_DERIVATIVE_STEP: f64 = 1.0 / 4096.0;

/// Variation along `x_j` below which `e_j` counts as independent of `x_j`.
pub const INDEPENDENCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquationKind {
    Convection,
    Diffusion,
}

impl fmt::Display for EquationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EquationKind::Convection => "convection",
            EquationKind::Diffusion => "diffusion",
        })
    }
}

impl FromStr for EquationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convection" => Ok(EquationKind::Convection),
            "diffusion" => Ok(EquationKind::Diffusion),
            other => Err(Error::InvalidArgument(format!(
                "unknown equation kind '{other}'"
            ))),
        }
    }
}

/// Per-axis coefficient expressions `e_1..e_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    kind: EquationKind,
    exprs: Vec<Expr>,
}

impl CoefficientSet {
    pub fn new(kind: EquationKind, exprs: Vec<Expr>) -> Result<Self> {
        let dim = exprs.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "need 1 to 3 coefficient expressions, got {dim}"
            )));
        }
        if let Some(e) = exprs.iter().find(|e| e.dim() != dim) {
            return Err(Error::InvalidArgument(format!(
                "expression '{e}' was parsed for dimension {}, expected {dim}",
                e.dim()
            )));
        }
        Ok(Self { kind, exprs })
    }

    /// Parses one expression per axis.
    pub fn parse<S: AsRef<str>>(kind: EquationKind, texts: &[S]) -> Result<Self> {
        let dim = texts.len();
        let exprs = texts
            .iter()
            .map(|s| Expr::parse(s.as_ref(), dim))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(kind, exprs)
    }

    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.exprs.len()
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    /// Expression of a 1-based axis.
    pub fn axis(&self, axis: usize) -> &Expr {
        &self.exprs[axis - 1]
    }

    pub fn depends_on_time(&self) -> bool {
        self.exprs.iter().any(Expr::depends_on_time)
    }

    /// Constant values when no expression depends on space or time.
    pub fn constant_values(&self) -> Option<Vec<f64>> {
        let dim = self.dim();
        if self.depends_on_time()
            || self
                .exprs
                .iter()
                .any(|e| (1..=dim).any(|a| e.depends_on_axis(a)))
        {
            return None;
        }
        let origin = vec![0.0; dim];
        self.exprs.iter().map(|e| e.eval(&origin, 0.0).ok()).collect()
    }

    /// Checks `κ_j ≥ 0` on every grid point at the given times.
    pub fn check_nonnegative(&self, grid: &GridSpec, times: &[f64]) -> Result<()> {
        for (j, e) in self.exprs.iter().enumerate() {
            for &t in times {
                for flat in 0..grid.len() {
                    let x = grid.position(flat);
                    let v = e.eval(&x, t)?;
                    if v < 0.0 {
                        return Err(Error::InvalidCoefficient(format!(
                            "coefficient {} is negative ({v}) at x = {x:?}, t = {t}",
                            j + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Result of the numerical independence check for one axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisIndependence {
    pub axis: usize,
    pub passed: bool,
    /// Largest `max - min` of `e_j` along a line parallel to axis `j`.
    pub max_variation: f64,
    pub worst_point: Vec<f64>,
    pub worst_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub axes: Vec<AxisIndependence>,
}

impl IndependenceReport {
    pub fn passed(&self) -> bool {
        self.axes.iter().all(|a| a.passed)
    }

    pub fn failing_axes(&self) -> Vec<usize> {
        self.axes.iter().filter(|a| !a.passed).map(|a| a.axis).collect()
    }
}

/// Checks numerically that `e_j` does not vary along `x_j`.
pub fn validate_independence(
    set: &CoefficientSet,
    grid: &GridSpec,
    times: &[f64],
) -> Result<IndependenceReport> {
    if grid.dim() != set.dim() {
        return Err(Error::GridMismatch(format!(
            "{}-d coefficients on a {}-d grid",
            set.dim(),
            grid.dim()
        )));
    }
    let times: Vec<f64> = if times.is_empty() { vec![0.0] } else { times.to_vec() };
    let mut axes = Vec::with_capacity(set.dim());
    for axis in 1..=set.dim() {
        let e = set.axis(axis);
        let len = grid.points(axis);
        let stride = grid.stride(axis);
        let mut worst = (0.0f64, vec![0.0; set.dim()], times[0]);
        for &t in &times {
            for base in (0..grid.len()).filter(|f| (f / stride) % len == 0) {
                let first = e.eval(&grid.position(base), t)?;
                let (mut lo, mut hi) = (first, first);
                let mut far = (0.0f64, base);
                for k in 1..len {
                    let flat = base + k * stride;
                    let v = e.eval(&grid.position(flat), t)?;
                    lo = lo.min(v);
                    hi = hi.max(v);
                    if (v - first).abs() > far.0 {
                        far = ((v - first).abs(), flat);
                    }
                }
                if hi - lo > worst.0 {
                    worst = (hi - lo, grid.position(far.1), t);
                }
            }
        }
        axes.push(AxisIndependence {
            axis,
            passed: worst.0 < INDEPENDENCE_TOLERANCE,
            max_variation: worst.0,
            worst_point: worst.1,
            worst_time: worst.2,
        });
    }
    Ok(IndependenceReport { axes })
}

/// Equispaced sample times over a closed window.
pub fn window_times(window: (f64, f64), count: usize) -> Vec<f64> {
    let (t0, t1) = window;
    if t1 <= t0 || count < 2 {
        return vec![t0];
    }
    (0..count)
        .map(|i| t0 + (t1 - t0) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Visits every point of the grid refined by `oversample` per axis, skipping
/// axes the expression does not depend on.
fn for_each_refined<F>(expr: &Expr, grid: &GridSpec, oversample: usize, mut f: F) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<()>,
{
    let dim = grid.dim();
    let counts: Vec<usize> = (1..=dim)
        .map(|a| {
            if expr.depends_on_axis(a) {
                grid.points(a) * oversample
            } else {
                1
            }
        })
        .collect();
    let total: usize = counts.iter().product();
    let mut x = vec![0.0; dim];
    for mut idx in 0..total {
        for a in (0..dim).rev() {
            x[a] = (idx % counts[a]) as f64 / counts[a] as f64;
            idx /= counts[a];
        }
        f(&x)?;
    }
    Ok(())
}

fn times_for(expr: &Expr, window: (f64, f64)) -> Vec<f64> {
    if expr.depends_on_time() {
        window_times(window, TIME_SAMPLES)
    } else {
        vec![window.0]
    }
}

/// `max |e|` over the refined grid and sampled times in `window`.
///
/// This is a sampled maximum and therefore a lower bound on the true
/// sup-norm.
pub fn sup_norm(expr: &Expr, grid: &GridSpec, window: (f64, f64), oversample: usize) -> Result<f64> {
    if oversample == 0 {
        return Err(Error::InvalidArgument("oversample must be at least 1".into()));
    }
    let mut best = 0.0f64;
    for t in times_for(expr, window) {
        for_each_refined(expr, grid, oversample, |x| {
            best = best.max(expr.eval(x, t)?.abs());
            Ok(())
        })?;
    }
    Ok(best)
}

/// Central difference of order 1 or 2 with one Richardson extrapolation.
fn richardson<F>(f: F, step: f64, order: u32) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let diff = |h: f64| -> Result<f64> {
        Ok(match order {
            1 => (f(h)? - f(-h)?) / (2.0 * h),
            _ => (f(h)? - 2.0 * f(0.0)? + f(-h)?) / (h * h),
        })
    };
    let coarse = diff(step)?;
    let fine = diff(step / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Sup-norm of `∂^order e / ∂x_axis^order`, by central differences with step
/// `2^{-(n_axis + 4)}` extrapolated once.
pub fn partial_sup_norm(
    expr: &Expr,
    axis: usize,
    order: u32,
    grid: &GridSpec,
    window: (f64, f64),
) -> Result<f64> {
    let a0 = grid.axis_index(axis)?;
    if order != 1 && order != 2 {
        return Err(Error::InvalidArgument(format!(
            "derivative order must be 1 or 2, got {order}"
        )));
    }
    if !expr.depends_on_axis(axis) {
        return Ok(0.0);
    }
    let step = (-((grid.qubits()[a0] + 4) as f64)).exp2();
    let mut best = 0.0f64;
    for t in times_for(expr, window) {
        for_each_refined(expr, grid, DEFAULT_OVERSAMPLE, |x| {
            let d = richardson(
                |dx| {
                    let mut y = x.to_vec();
                    y[a0] = x[a0] + dx;
                    Ok(expr.eval(&y, t)?)
                },
                step,
                order,
            )?;
            best = best.max(d.abs());
            Ok(())
        })?;
    }
    Ok(best)
}

/// Sup-norm of `∂_t e` over the refined grid and window, by central
/// differences with step [`TIME_DERIVATIVE_STEP`] extrapolated once.
pub fn time_derivative_sup_norm(expr: &Expr, grid: &GridSpec, window: (f64, f64)) -> Result<f64> {
    if !expr.depends_on_time() {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for t in window_times(window, TIME_SAMPLES) {
        for_each_refined(expr, grid, DEFAULT_OVERSAMPLE, |x| {
            let d = richardson(|dt| Ok(expr.eval(x, t + dt)?), TIME_DERIVATIVE_STEP, 1)?;
            best = best.max(d.abs());
            Ok(())
        })?;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn grid(q: &[u32]) -> GridSpec {
        GridSpec::new(q.to_vec()).unwrap()
    }

    fn e(s: &str, d: usize) -> Expr {
        Expr::parse(s, d).unwrap()
    }

    #[test]
    fn independence_examples() {
        let g = grid(&[4, 4]);
        let set = CoefficientSet::parse(
            EquationKind::Convection,
            &["1+0.5*sin(2*pi*x2)", "cos(2*pi*x1)*t"],
        )
        .unwrap();
        let rep = validate_independence(&set, &g, &[0.0, 0.5, 1.0]).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.axes[0].max_variation, 0.0);

        let bad = CoefficientSet::parse(EquationKind::Convection, &["x1", "1"]).unwrap();
        let rep = validate_independence(&bad, &g, &[0.0]).unwrap();
        assert!(!rep.passed());
        assert_eq!(rep.failing_axes(), vec![1]);
        assert!((rep.axes[0].max_variation - (1.0 - 1.0 / 16.0)).abs() < 1e-15);
        assert_eq!(rep.axes[0].worst_point[0], 15.0 / 16.0);
    }

    #[test]
    fn indirect_dependence_is_caught() {
        // Syntactically contains x1 but the dependence cancels.
        let g = grid(&[3, 3]);
        let set =
            CoefficientSet::parse(EquationKind::Convection, &["x1 - x1 + x2", "2"]).unwrap();
        assert!(validate_independence(&set, &g, &[0.0]).unwrap().passed());
    }

    #[test]
    fn nonnegativity_check() {
        let g = grid(&[3]);
        let ok = CoefficientSet::parse(EquationKind::Diffusion, &["1+0.5*sin(2*pi*t)"]).unwrap();
        assert!(ok.check_nonnegative(&g, &[0.0, 0.75]).is_ok());
        let bad = CoefficientSet::parse(EquationKind::Diffusion, &["sin(2*pi*t)"]).unwrap();
        assert!(matches!(
            bad.check_nonnegative(&g, &[0.75]),
            Err(Error::InvalidCoefficient(_))
        ));
    }

    #[test]
    fn sup_norm_examples() {
        let g = grid(&[3]);
        assert_eq!(sup_norm(&e("1", 1), &g, (0.0, 1.0), 1).unwrap(), 1.0);
        let s = sup_norm(&e("sin(2*pi*x1)", 1), &g, (0.0, 1.0), 4).unwrap();
        assert_eq!(s, 1.0);
        let s3 = sup_norm(&e("sin(2*pi*x1)", 1), &grid(&[3]), (0.0, 0.0), 3).unwrap();
        assert!((s3 - 1.0).abs() < 1e-2 && s3 <= 1.0);
        let tt = sup_norm(&e("2+cos(2*pi*t)", 1), &g, (0.0, 1.0), 1).unwrap();
        assert_eq!(tt, 3.0);
        assert!(sup_norm(&e("1", 1), &g, (0.0, 1.0), 0).is_err());
    }

    #[test]
    fn partial_sup_norm_examples() {
        let g = grid(&[5, 5]);
        assert_eq!(
            partial_sup_norm(&e("3", 2), 1, 1, &g, (0.0, 1.0)).unwrap(),
            0.0
        );
        let s = e("sin(2*pi*x2)", 2);
        let d1 = partial_sup_norm(&s, 2, 1, &g, (0.0, 0.0)).unwrap();
        assert!((d1 - 2.0 * PI).abs() < 1e-6, "{d1}");
        let d2 = partial_sup_norm(&s, 2, 2, &g, (0.0, 0.0)).unwrap();
        assert!((d2 - 4.0 * PI * PI).abs() < 1e-4, "{d2}");
        assert_eq!(partial_sup_norm(&s, 1, 1, &g, (0.0, 0.0)).unwrap(), 0.0);
        assert!(partial_sup_norm(&s, 3, 1, &g, (0.0, 0.0)).is_err());
    }

    #[test]
    fn time_derivative_examples() {
        let g = grid(&[3]);
        assert_eq!(
            time_derivative_sup_norm(&e("x1", 1), &g, (0.0, 1.0)).unwrap(),
            0.0
        );
        let d = time_derivative_sup_norm(&e("1+0.5*sin(2*pi*t)", 1), &g, (0.0, 1.0)).unwrap();
        assert!((d - PI).abs() < 1e-8, "{d}");
    }

    #[test]
    fn constant_values_detected() {
        let c = CoefficientSet::parse(EquationKind::Convection, &["1", "2*pi"]).unwrap();
        assert_eq!(c.constant_values(), Some(vec![1.0, 2.0 * PI]));
        let v = CoefficientSet::parse(EquationKind::Convection, &["x2", "1"]).unwrap();
        assert_eq!(v.constant_values(), None);
    }
}
