//! Independent reference solvers.
//!
//! Dense operators are built entry by entry from the stencil weights, never
//! through the Fourier symbol, so that they can check the split-step code.

mod analytic;
mod expm;
mod reference;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coeffs::{validate_independence, window_times, CoefficientSet, EquationKind, TIME_SAMPLES};
use crate::error::{Error, Result};
use crate::field::{Field, GridSpec};
use crate::stencil::stencil_coefficients;

pub use analytic::{
    analytic_constant_convection, analytic_constant_diffusion, pde_constant_diffusion,
    pde_translation,
};
pub use expm::{matrix_exponential, matrix_exponential_hermitian};
pub use reference::{reference_evolution, ReferenceEvolution};

/// Largest dense operator dimension.
pub const DENSE_LIMIT: usize = 4096;

/// An explicit `N x N` complex matrix acting on fields of one grid.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DMatrix<Complex64>,
    grid: GridSpec,
    label: String,
}

fn guard(grid: &GridSpec) -> Result<usize> {
    let n = grid.len();
    if n > DENSE_LIMIT {
        return Err(Error::DenseTooLarge {
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    Ok(n)
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<Complex64>, grid: GridSpec, label: impl Into<String>) -> Result<Self> {
        let n = guard(&grid)?;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::GridMismatch(format!(
                "{}x{} matrix for a grid of {n} points",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("dense operator entry".into()));
        }
        Ok(Self {
            matrix,
            grid,
            label: label.into(),
        })
    }

    pub fn identity(grid: &GridSpec) -> Result<Self> {
        let n = guard(grid)?;
        Self::new(DMatrix::identity(n, n), grid.clone(), "I")
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, field: &Field) -> Result<Field> {
        self.grid.ensure_same(field.grid())?;
        let v = nalgebra::DVector::from_column_slice(field.amplitudes());
        let out = &self.matrix * v;
        Field::new(self.grid.clone(), out.as_slice().to_vec(), field.time())
    }

    /// `self · rhs`.
    pub fn compose(&self, rhs: &DenseOperator) -> Result<DenseOperator> {
        self.grid.ensure_same(&rhs.grid)?;
        Ok(DenseOperator {
            matrix: &self.matrix * &rhs.matrix,
            grid: self.grid.clone(),
            label: format!("{}·{}", self.label, rhs.label),
        })
    }

    pub fn add(&self, rhs: &DenseOperator) -> Result<DenseOperator> {
        self.grid.ensure_same(&rhs.grid)?;
        Ok(DenseOperator {
            matrix: &self.matrix + &rhs.matrix,
            grid: self.grid.clone(),
            label: format!("{}+{}", self.label, rhs.label),
        })
    }

    /// Multiplies every row by a real diagonal.
    pub fn left_diagonal(&self, diag: &[f64], label: &str) -> DenseOperator {
        let mut m = self.matrix.clone();
        for (r, &d) in diag.iter().enumerate() {
            m.row_mut(r).scale_mut(d);
        }
        DenseOperator {
            matrix: m,
            grid: self.grid.clone(),
            label: format!("{label}·{}", self.label),
        }
    }

    /// `max |M - M^H|`.
    pub fn hermitian_defect(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Largest entrywise difference to another operator.
    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        (&self.matrix - &other.matrix)
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Eigenvalues of the Hermitian part `(M + M^H)/2`.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        sym.symmetric_eigenvalues().iter().copied().collect()
    }
}

/// Periodic shift along a 1-based axis: `(S^k f)(x) = f(x + k Δx_j)`.
pub fn dense_shift(grid: &GridSpec, axis: usize, offset: i64) -> Result<DenseOperator> {
    let n = guard(grid)?;
    grid.axis_index(axis)?;
    let mut m = DMatrix::zeros(n, n);
    for row in 0..n {
        m[(row, shifted(grid, axis, row, offset))] = Complex64::new(1.0, 0.0);
    }
    DenseOperator::new(m, grid.clone(), format!("S{axis}^{offset}"))
}

fn shifted(grid: &GridSpec, axis: usize, flat: usize, offset: i64) -> usize {
    let len = grid.points(axis) as i64;
    let stride = grid.stride(axis);
    let k = ((flat / stride) as i64) % len;
    let target = (k + offset).rem_euclid(len);
    (flat as i64 + (target - k) * stride as i64) as usize
}

/// `D_j = -i Σ_k a_k S_j^k / Δx_j`.
pub fn dense_derivative(grid: &GridSpec, axis: usize, p: usize) -> Result<DenseOperator> {
    let n = guard(grid)?;
    grid.axis_index(axis)?;
    let stencil = stencil_coefficients(p)?;
    let qubits = grid.qubits()[axis - 1];
    if grid.points(axis) <= 2 * p {
        return Err(Error::GridTooCoarse { n: qubits, p });
    }
    let scale = 1.0 / grid.spacing(axis);
    let mut m = DMatrix::zeros(n, n);
    for row in 0..n {
        for (k, a) in stencil.iter() {
            if a != 0.0 {
                m[(row, shifted(grid, axis, row, k))] += Complex64::new(0.0, -a * scale);
            }
        }
    }
    DenseOperator::new(m, grid.clone(), format!("D{axis}"))
}

/// Generator of the semi-discrete system at time `t`:
/// `H(t) = Σ_j c_j(t) D_j` (convection) or `A(t) = Σ_j κ_j(t) D_j²`
/// (diffusion).
pub fn dense_generator(
    grid: &GridSpec,
    coeffs: &CoefficientSet,
    p: usize,
    t: f64,
) -> Result<DenseOperator> {
    guard(grid)?;
    if grid.dim() != coeffs.dim() {
        return Err(Error::GridMismatch(format!(
            "{}-d coefficients on a {}-d grid",
            coeffs.dim(),
            grid.dim()
        )));
    }
    let times = if coeffs.depends_on_time() {
        window_times((t, t), TIME_SAMPLES)
    } else {
        vec![0.0]
    };
    let report = validate_independence(coeffs, grid, &times)?;
    if !report.passed() {
        return Err(Error::InvalidCoefficient(format!(
            "coefficient of axis {:?} depends on its own coordinate",
            report.failing_axes()
        )));
    }
    let mut total: Option<DenseOperator> = None;
    for axis in 1..=grid.dim() {
        let d = dense_derivative(grid, axis, p)?;
        let d = match coeffs.kind() {
            EquationKind::Convection => d,
            EquationKind::Diffusion => d.compose(&d)?,
        };
        let diag = (0..grid.len())
            .map(|flat| coeffs.axis(axis).eval(&grid.position(flat), t))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let term = d.left_diagonal(&diag, &format!("c{axis}"));
        total = Some(match total {
            None => term,
            Some(acc) => acc.add(&term)?,
        });
    }
    let mut g = total.expect("at least one axis");
    g.label = match coeffs.kind() {
        EquationKind::Convection => format!("H({t})"),
        EquationKind::Diffusion => format!("A({t})"),
    };
    Ok(g)
}
