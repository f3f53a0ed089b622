//! Closed-form solutions for constant coefficients.
//!
//! The `analytic_*` functions solve the semi-discrete systems exactly (mode
//! by mode through the derivative symbol). The `pde_*` functions sample the
//! solution of the continuous equation, for measuring space discretization
//! error.

use num_complex::Complex64;

use crate::coeffs::Expr;
use crate::error::{Error, Result};
use crate::field::{fft_axis_in_place, for_each_line, signed_frequency, Direction, Field, GridSpec};
use crate::stencil::{derivative_symbol, stencil_coefficients};

fn check_len(grid: &GridSpec, values: &[f64], what: &str) -> Result<()> {
    if values.len() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "{} {what} values for a {}-d grid",
            values.len(),
            grid.dim()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} value {v}")));
    }
    Ok(())
}

/// Multiplies each axis-`j` Fourier mode by `multiplier(j, k)`.
fn per_mode<F>(initial: &Field, multiplier: F) -> Field
where
    F: Fn(usize, usize) -> Complex64 + Sync,
{
    let grid = initial.grid().clone();
    let mut data = initial.amplitudes().to_vec();
    for axis0 in 0..grid.dim() {
        fft_axis_in_place(&mut data, &grid, axis0, Direction::Forward);
        for_each_line(&mut data, &grid, axis0, |line, _| {
            for (k, z) in line.iter_mut().enumerate() {
                *z *= multiplier(axis0, k);
            }
        });
        fft_axis_in_place(&mut data, &grid, axis0, Direction::Inverse);
    }
    Field::new(grid, data, initial.time()).expect("mode multipliers keep the field finite")
}

fn symbols(grid: &GridSpec, p: usize) -> Result<Vec<Vec<f64>>> {
    let stencil = stencil_coefficients(p)?;
    grid.qubits()
        .iter()
        .map(|&n| Ok(derivative_symbol(&stencil, n)?.values().to_vec()))
        .collect()
}

/// Exact solution of the semi-discrete convection system with constant
/// velocities: mode `k` picks up `exp(-i T Σ_j c_j d(k_j))`.
pub fn analytic_constant_convection(initial: &Field, c: &[f64], p: usize, horizon: f64) -> Result<Field> {
    let grid = initial.grid();
    check_len(grid, c, "velocity")?;
    let syms = symbols(grid, p)?;
    let out = per_mode(initial, |j, k| Complex64::from_polar(1.0, -horizon * c[j] * syms[j][k]));
    Ok(out.with_time(initial.time() + horizon))
}

/// Exact solution of the semi-discrete diffusion system with constant
/// diffusivities: mode `k` decays by `exp(-T Σ_j κ_j d(k_j)²)`.
pub fn analytic_constant_diffusion(
    initial: &Field,
    kappa: &[f64],
    p: usize,
    horizon: f64,
) -> Result<Field> {
    let grid = initial.grid();
    check_len(grid, kappa, "diffusivity")?;
    if let Some(k) = kappa.iter().find(|k| **k < 0.0) {
        return Err(Error::InvalidCoefficient(format!("negative diffusivity {k}")));
    }
    let syms = symbols(grid, p)?;
    let out = per_mode(initial, |j, k| {
        let d = syms[j][k];
        Complex64::new((-horizon * kappa[j] * d * d).exp(), 0.0)
    });
    Ok(out.with_time(initial.time() + horizon))
}

/// Samples of `f0(x - c T mod 1)`, the exact solution of the constant
/// velocity convection equation.
pub fn pde_translation(grid: &GridSpec, f0: &Expr, c: &[f64], horizon: f64) -> Result<Field> {
    check_len(grid, c, "velocity")?;
    let values = (0..grid.len())
        .map(|flat| {
            let x: Vec<f64> = grid
                .position(flat)
                .iter()
                .zip(c)
                .map(|(x, c)| (x - c * horizon).rem_euclid(1.0))
                .collect();
            Ok(f0.eval(&x, 0.0)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Field::from_real(grid.clone(), &values, horizon)
}

/// Samples of the exact constant-diffusivity heat solution.
///
/// `f0` is resolved on a grid with at least `fine_qubits` per axis, where
/// its discrete Fourier coefficients match the continuous ones to spectral
/// accuracy; each mode `m` decays by `exp(-T Σ_j κ_j (2π m_j)²)` and the
/// result is read back at the points of `grid`.
pub fn pde_constant_diffusion(
    grid: &GridSpec,
    f0: &Expr,
    kappa: &[f64],
    horizon: f64,
    fine_qubits: u32,
) -> Result<Field> {
    check_len(grid, kappa, "diffusivity")?;
    if let Some(k) = kappa.iter().find(|k| **k < 0.0) {
        return Err(Error::InvalidCoefficient(format!("negative diffusivity {k}")));
    }
    let fine_q: Vec<u32> = grid.qubits().iter().map(|&n| n.max(fine_qubits)).collect();
    let fine = GridSpec::new(fine_q.clone())?;
    let sampled = crate::field::sample_function(&fine, f0, 0.0)?;
    let lens: Vec<usize> = (1..=fine.dim()).map(|a| fine.points(a)).collect();
    let decayed = per_mode(&sampled, |j, k| {
        let m = signed_frequency(k, lens[j]) as f64;
        let w = 2.0 * std::f64::consts::PI * m;
        Complex64::new((-horizon * kappa[j] * w * w).exp(), 0.0)
    });
    let amps = (0..grid.len())
        .map(|flat| {
            let coarse = grid.coords(flat);
            let fine_coords: Vec<usize> = coarse
                .iter()
                .zip(grid.qubits().iter().zip(&fine_q))
                .map(|(&k, (&n, &nf))| k << (nf - n))
                .collect();
            decayed.amplitudes()[fine.flat_index(&fine_coords)]
        })
        .collect();
    Field::new(grid.clone(), amps, horizon)
}
