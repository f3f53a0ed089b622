//! Non-split midpoint reference for the semi-discrete systems.
//!
//! Each step applies `exp(-i h H(t_m + h/2))` (or `exp(-h A(t_m + h/2))`)
//! to the state with the full generator, never a split product. The action
//! of the exponential is computed matrix-free: the generator is applied
//! through per-axis Fourier transforms and the exponential by a Taylor
//! series on substeps of unit generator norm. This keeps the reference
//! usable above the dense size guard.

use num_complex::Complex64;

use crate::coeffs::{validate_independence, window_times, CoefficientSet, EquationKind, TIME_SAMPLES};
use crate::error::{Error, Result};
use crate::field::{fft_axis_in_place, for_each_line, Direction, Field, GridSpec};
use crate::stencil::{derivative_symbol, stencil_coefficients, DerivativeSymbol};

const TAYLOR_TOLERANCE: f64 = 1e-17;
const MAX_TAYLOR_TERMS: usize = 60;

#[derive(Debug, Clone)]
pub struct ReferenceEvolution {
    grid: GridSpec,
    coefficients: CoefficientSet,
    order: usize,
    horizon: f64,
    steps: usize,
    symbols: Vec<DerivativeSymbol>,
}

impl ReferenceEvolution {
    pub fn new(
        grid: GridSpec,
        coefficients: CoefficientSet,
        p: usize,
        horizon: f64,
        steps: usize,
    ) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be nonnegative and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("reference needs at least one step".into()));
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
            grid,
            coefficients,
            order: p,
            horizon,
            steps,
            symbols,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coefficients
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("reference needs at least one step".into()));
        }
        Ok(Self {
            steps,
            ..self.clone()
        })
    }

    /// True when the generator does not change in time, so the result is
    /// exact for any step count.
    pub fn is_autonomous(&self) -> bool {
        !self.coefficients.depends_on_time()
    }

    fn coefficient_values(&self, t: f64) -> Result<Vec<Vec<f64>>> {
        (1..=self.grid.dim())
            .map(|axis| {
                let expr = self.coefficients.axis(axis);
                (0..self.grid.len())
                    .map(|flat| Ok(expr.eval(&self.grid.position(flat), t)?))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect()
    }

    /// `K v` where `K = -i H(t)` or `K = -A(t)`.
    fn apply_generator(&self, v: &[Complex64], coeffs: &[Vec<f64>]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        let diffusion = self.coefficients.kind() == EquationKind::Diffusion;
        for (axis0, c) in coeffs.iter().enumerate() {
            let mut w = v.to_vec();
            fft_axis_in_place(&mut w, &self.grid, axis0, Direction::Forward);
            let sym = self.symbols[axis0].values();
            for_each_line(&mut w, &self.grid, axis0, |line, _| {
                for (k, z) in line.iter_mut().enumerate() {
                    let d = sym[k];
                    *z *= if diffusion { d * d } else { d };
                }
            });
            fft_axis_in_place(&mut w, &self.grid, axis0, Direction::Inverse);
            for ((o, z), &cv) in out.iter_mut().zip(&w).zip(c) {
                *o += if diffusion {
                    -z * cv
                } else {
                    Complex64::new(0.0, -1.0) * z * cv
                };
            }
        }
        out
    }

    /// Upper bound on `‖K‖₂` for the given coefficient samples.
    fn generator_bound(&self, coeffs: &[Vec<f64>]) -> f64 {
        let diffusion = self.coefficients.kind() == EquationKind::Diffusion;
        coeffs
            .iter()
            .zip(&self.symbols)
            .map(|(c, s)| {
                let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let dmax = s.max_abs();
                cmax * if diffusion { dmax * dmax } else { dmax }
            })
            .sum()
    }

    /// `exp(h K) v` with `K` frozen at the given coefficient samples.
    fn exp_action(&self, v: &[Complex64], coeffs: &[Vec<f64>], h: f64) -> Result<Vec<Complex64>> {
        let bound = h * self.generator_bound(coeffs);
        let substeps = bound.ceil().max(1.0) as usize;
        let tau = h / substeps as f64;
        let mut state = v.to_vec();
        for _ in 0..substeps {
            let mut sum = state.clone();
            let mut term = state;
            let mut converged = false;
            for k in 1..=MAX_TAYLOR_TERMS {
                term = self.apply_generator(&term, coeffs);
                let f = tau / k as f64;
                for z in term.iter_mut() {
                    *z *= f;
                }
                for (s, z) in sum.iter_mut().zip(&term) {
                    *s += z;
                }
                let tn = norm(&term);
                if tn <= TAYLOR_TOLERANCE * norm(&sum).max(f64::MIN_POSITIVE) || tn == 0.0 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::ReferenceNotConverged(
                    "Taylor series of the reference step did not converge".into(),
                ));
            }
            state = sum;
        }
        if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("reference state".into()));
        }
        Ok(state)
    }

    fn advance(&self, state: Vec<Complex64>, first: usize, count: usize) -> Result<Vec<Complex64>> {
        let h = self.horizon / self.steps as f64;
        let mut state = state;
        let frozen = if self.is_autonomous() {
            Some(self.coefficient_values(0.0)?)
        } else {
            None
        };
        for m in first..first + count {
            state = match &frozen {
                Some(c) => self.exp_action(&state, c, h)?,
                None => {
                    let mid = (m as f64 + 0.5) * h;
                    self.exp_action(&state, &self.coefficient_values(mid)?, h)?
                }
            };
        }
        Ok(state)
    }

    /// State at the horizon.
    pub fn run(&self, initial: &Field) -> Result<Field> {
        self.grid.ensure_same(initial.grid())?;
        if self.horizon == 0.0 {
            return Ok(initial.clone().with_time(0.0));
        }
        let out = self.advance(initial.amplitudes().to_vec(), 0, self.steps)?;
        Field::new(self.grid.clone(), out, self.horizon)
    }

    /// `snapshots` equispaced states from `t = 0` to `t = T` inclusive.
    ///
    /// The step count must be a multiple of `snapshots - 1`.
    pub fn trajectory(&self, initial: &Field, snapshots: usize) -> Result<Vec<Field>> {
        self.grid.ensure_same(initial.grid())?;
        if snapshots < 2 {
            return Err(Error::InvalidArgument("need at least two snapshots".into()));
        }
        let intervals = snapshots - 1;
        if self.steps % intervals != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} reference steps cannot be split into {intervals} equal intervals",
                self.steps
            )));
        }
        let per = self.steps / intervals;
        let mut out = Vec::with_capacity(snapshots);
        let mut state = initial.amplitudes().to_vec();
        out.push(initial.clone().with_time(0.0));
        for i in 0..intervals {
            state = self.advance(state, i * per, per)?;
            let t = if i + 1 == intervals {
                self.horizon
            } else {
                (i + 1) as f64 * self.horizon / intervals as f64
            };
            out.push(Field::new(self.grid.clone(), state.clone(), t)?);
        }
        Ok(out)
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Midpoint reference solution at `T` with `steps` steps.
pub fn reference_evolution(
    grid: &GridSpec,
    coefficients: &CoefficientSet,
    p: usize,
    horizon: f64,
    steps: usize,
    initial: &Field,
) -> Result<Field> {
    ReferenceEvolution::new(grid.clone(), coefficients.clone(), p, horizon, steps)?.run(initial)
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;
    use crate::coeffs::Expr;
    use crate::field::{distance, sample_function};
    use crate::oracle::{
        analytic_constant_convection, analytic_constant_diffusion, dense_generator,
        matrix_exponential,
    };

    fn grid(q: &[u32]) -> GridSpec {
        GridSpec::new(q.to_vec()).unwrap()
    }

    fn initial(g: &GridSpec, text: &str) -> Field {
        sample_function(g, &Expr::parse(text, g.dim()).unwrap(), 0.0).unwrap()
    }

    fn dense_midpoint(
        g: &GridSpec,
        set: &CoefficientSet,
        p: usize,
        horizon: f64,
        steps: usize,
        f0: &Field,
    ) -> Field {
        let h = horizon / steps as f64;
        let scale = match set.kind() {
            EquationKind::Convection => Complex64::new(0.0, -h),
            EquationKind::Diffusion => Complex64::new(-h, 0.0),
        };
        let mut state = f0.clone();
        for m in 0..steps {
            let gen = dense_generator(g, set, p, (m as f64 + 0.5) * h).unwrap();
            state = matrix_exponential(&gen, scale).unwrap().apply(&state).unwrap();
        }
        state
    }

    #[test]
    fn matches_dense_midpoint_product() {
        let g = grid(&[3, 3]);
        let f0 = initial(&g, "exp(sin(2*pi*x1))*cos(2*pi*x2)+0.3");
        let conv = CoefficientSet::parse(
            EquationKind::Convection,
            &["1+0.5*sin(2*pi*x2)*t", "1+0.5*cos(2*pi*x1)"],
        )
        .unwrap();
        let a = reference_evolution(&g, &conv, 2, 0.6, 7, &f0).unwrap();
        let b = dense_midpoint(&g, &conv, 2, 0.6, 7, &f0);
        assert!(distance(&a, &b, false).unwrap() < 1e-12);

        let diff = CoefficientSet::parse(
            EquationKind::Diffusion,
            &["1+0.5*sin(2*pi*x2)", "1+0.5*cos(2*pi*x1)*(1+t)"],
        )
        .unwrap();
        let a = reference_evolution(&g, &diff, 1, 0.01, 5, &f0).unwrap();
        let b = dense_midpoint(&g, &diff, 1, 0.01, 5, &f0);
        assert!(distance(&a, &b, false).unwrap() < 1e-12);
    }

    #[test]
    fn autonomous_result_independent_of_steps() {
        let g = grid(&[4, 3]);
        let f0 = initial(&g, "sin(2*pi*x1)+cos(4*pi*x2)*x1");
        let set = CoefficientSet::parse(
            EquationKind::Convection,
            &["1+0.5*sin(2*pi*x2)", "1+0.5*cos(2*pi*x1)"],
        )
        .unwrap();
        let a = reference_evolution(&g, &set, 1, 1.0, 1, &f0).unwrap();
        let b = reference_evolution(&g, &set, 1, 1.0, 16, &f0).unwrap();
        assert!(distance(&a, &b, false).unwrap() < 1e-12);
    }

    #[test]
    fn convection_preserves_norm() {
        let g = grid(&[5, 5]);
        let f0 = initial(&g, "exp(cos(2*pi*x1)+sin(2*pi*x2))");
        let set = CoefficientSet::parse(
            EquationKind::Convection,
            &["1+0.5*sin(2*pi*x2)", "1+0.5*cos(2*pi*x1)+0.2*t"],
        )
        .unwrap();
        let out = reference_evolution(&g, &set, 2, 1.0, 20, &f0).unwrap();
        assert!((out.scaled_norm() - f0.scaled_norm()).abs() < 1e-12 * f0.scaled_norm());
    }

    #[test]
    fn agrees_with_closed_forms() {
        let g = grid(&[4, 3]);
        let f0 = initial(&g, "exp(sin(2*pi*x1)) + cos(2*pi*x2)");
        let conv = CoefficientSet::parse(EquationKind::Convection, &["0.7", "-1.3"]).unwrap();
        let a = reference_evolution(&g, &conv, 2, 1.0, 3, &f0).unwrap();
        let b = analytic_constant_convection(&f0, &[0.7, -1.3], 2, 1.0).unwrap();
        assert!(distance(&a, &b, false).unwrap() < 1e-10);

        let heat = CoefficientSet::parse(EquationKind::Diffusion, &["0.7", "1.3"]).unwrap();
        let a = reference_evolution(&g, &heat, 1, 0.05, 3, &f0).unwrap();
        let b = analytic_constant_diffusion(&f0, &[0.7, 1.3], 1, 0.05).unwrap();
        assert!(distance(&a, &b, false).unwrap() < 1e-10);
    }

    #[test]
    fn second_order_in_steps() {
        let g = grid(&[4, 4]);
        let f0 = initial(&g, "exp(sin(2*pi*x1)+cos(2*pi*x2))");
        let set = CoefficientSet::parse(
            EquationKind::Convection,
            &["1+0.5*sin(2*pi*x2)*cos(3*t)", "1+0.5*cos(2*pi*x1)*sin(2*t)"],
        )
        .unwrap();
        let r = ReferenceEvolution::new(g, set, 1, 1.0, 8).unwrap();
        let fine = r.with_steps(512).unwrap().run(&f0).unwrap();
        let e1 = distance(&r.run(&f0).unwrap(), &fine, false).unwrap();
        let e2 = distance(&r.with_steps(16).unwrap().run(&f0).unwrap(), &fine, false).unwrap();
        let e3 = distance(&r.with_steps(32).unwrap().run(&f0).unwrap(), &fine, false).unwrap();
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!((o2 - 2.0).abs() < 0.3, "orders {o1} {o2}");
    }

    #[test]
    fn trajectory_endpoints() {
        let g = grid(&[3]);
        let f0 = initial(&g, "sin(2*pi*x1)");
        let set = CoefficientSet::parse(EquationKind::Convection, &["1"]).unwrap();
        let r = ReferenceEvolution::new(g, set, 1, 1.0, 8).unwrap();
        let traj = r.trajectory(&f0, 5).unwrap();
        assert_eq!(traj.len(), 5);
        assert_eq!(traj[4].time(), 1.0);
        assert!(distance(&traj[4], &r.run(&f0).unwrap(), false).unwrap() < 1e-13);
        assert!(r.trajectory(&f0, 4).is_err());
    }
}
