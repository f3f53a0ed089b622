use nalgebra::DMatrix;
use num_complex::Complex64;

use super::DenseOperator;
use crate::error::{Error, Result};

const THETA_13: f64 = 5.371920351148152;

const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_finite(m: &DMatrix<Complex64>, what: &str) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Degree-13 Padé approximant with scaling and squaring.
fn pade13(a: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    let norm = one_norm(&a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * real(0.5f64.powi(s));
    let b = &PADE_13;
    let id = DMatrix::<Complex64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * real(b[13]) + &a4 * real(b[11]) + &a2 * real(b[9]))
        + &a6 * real(b[7])
        + &a4 * real(b[5])
        + &a2 * real(b[3])
        + &id * real(b[1]);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * real(b[12]) + &a4 * real(b[10]) + &a2 * real(b[8]))
        + &a6 * real(b[6])
        + &a4 * real(b[4])
        + &a2 * real(b[2])
        + &id * real(b[0]);
    let lu = (&v - &u).lu();
    let mut r = lu
        .solve(&(&v + &u))
        .ok_or_else(|| Error::NonFinite("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    check_finite(&r, "matrix exponential")?;
    Ok(r)
}

/// `exp(scale · M)` by scaling and squaring with a degree-13 Padé approximant.
pub fn matrix_exponential(m: &DenseOperator, scale: Complex64) -> Result<DenseOperator> {
    if !scale.re.is_finite() || !scale.im.is_finite() {
        return Err(Error::NonFinite(format!("exponential scale {scale}")));
    }
    let r = pade13(m.matrix() * scale)?;
    DenseOperator::new(r, m.grid().clone(), format!("exp({scale}·{})", m.label()))
}

/// `exp(scale · M)` through the eigendecomposition of the Hermitian part of `M`.
///
/// Only meaningful when `M` is Hermitian; the defect is checked against `1e-10`.
pub fn matrix_exponential_hermitian(m: &DenseOperator, scale: Complex64) -> Result<DenseOperator> {
    let defect = m.hermitian_defect();
    let size = one_norm(m.matrix()).max(1.0);
    if defect > 1e-10 * size {
        return Err(Error::InvalidArgument(format!(
            "operator is not Hermitian (defect {defect:e})"
        )));
    }
    let sym = (m.matrix() + m.matrix().adjoint()) * real(0.5);
    let eig = sym.symmetric_eigen();
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let f = (scale * lambda).exp();
        for v in scaled.column_mut(j).iter_mut() {
            *v *= f;
        }
    }
    let r = scaled * q.adjoint();
    check_finite(&r, "matrix exponential")?;
    DenseOperator::new(r, m.grid().clone(), format!("exp({scale}·{})", m.label()))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::coeffs::{CoefficientSet, EquationKind};
    use crate::field::GridSpec;
    use crate::oracle::{dense_derivative, dense_generator};

    fn grid(q: &[u32]) -> GridSpec {
        GridSpec::new(q.to_vec()).unwrap()
    }

    fn taylor(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = m.nrows();
        let mut sum = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..80 {
            term = &term * m * real(1.0 / k as f64);
            sum += &term;
        }
        sum
    }

    #[test]
    fn zero_gives_identity() {
        let g = grid(&[3]);
        let z = DenseOperator::new(DMatrix::zeros(8, 8), g.clone(), "0").unwrap();
        let e = matrix_exponential(&z, real(1.0)).unwrap();
        assert_eq!(e.max_abs_diff(&DenseOperator::identity(&g).unwrap()), 0.0);
    }

    #[test]
    fn inverse_pair() {
        let g = grid(&[4]);
        let d = dense_derivative(&g, 1, 2).unwrap();
        let a = matrix_exponential(&d, Complex64::new(0.0, -PI)).unwrap();
        let b = matrix_exponential(&d, Complex64::new(0.0, PI)).unwrap();
        let prod = a.compose(&b).unwrap();
        assert!(prod.max_abs_diff(&DenseOperator::identity(&g).unwrap()) < 1e-11);
    }

    #[test]
    fn diagonal_is_elementwise() {
        let g = grid(&[2]);
        let vals = [0.3, -1.7, 4.0, 12.5];
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            4,
            vals.iter().map(|&v| real(v)),
        ));
        let op = DenseOperator::new(m, g, "diag").unwrap();
        let e = matrix_exponential(&op, real(-0.5)).unwrap();
        for (i, v) in vals.iter().enumerate() {
            let want = (-0.5 * v).exp();
            assert!((e.matrix()[(i, i)].re - want).abs() < 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn matches_taylor_on_small_norm() {
        let g = grid(&[3]);
        let d = dense_derivative(&g, 1, 1).unwrap();
        let e = matrix_exponential(&d, Complex64::new(0.0, -0.01)).unwrap();
        let t = taylor(&(d.matrix() * Complex64::new(0.0, -0.01)));
        let diff = (e.matrix() - t).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(diff < 1e-14, "{diff}");
    }

    #[test]
    fn hermitian_path_agrees() {
        let g = grid(&[3, 3]);
        let conv = CoefficientSet::parse(
            EquationKind::Convection,
            &["1+0.5*sin(2*pi*x2)", "1+0.5*cos(2*pi*x1)"],
        )
        .unwrap();
        let h = dense_generator(&g, &conv, 2, 0.0).unwrap();
        for scale in [Complex64::new(0.0, -0.01), Complex64::new(0.0, -0.7)] {
            let a = matrix_exponential(&h, scale).unwrap();
            let b = matrix_exponential_hermitian(&h, scale).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-10, "{}", a.max_abs_diff(&b));
        }
        let heat = CoefficientSet::parse(EquationKind::Diffusion, &["1", "0.5"]).unwrap();
        let a = dense_generator(&g, &heat, 1, 0.0).unwrap();
        let x = matrix_exponential(&a, real(-1e-3)).unwrap();
        let y = matrix_exponential_hermitian(&a, real(-1e-3)).unwrap();
        assert!(x.max_abs_diff(&y) < 1e-10);
    }

    #[test]
    fn unitary_for_hermitian_generator() {
        let g = grid(&[4]);
        let d = dense_derivative(&g, 1, 3).unwrap();
        let u = matrix_exponential(&d, Complex64::new(0.0, -2.3)).unwrap();
        let uu = u.matrix().adjoint() * u.matrix();
        let dev = (uu - DMatrix::<Complex64>::identity(16, 16))
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(dev < 1e-12, "{dev}");
    }

    #[test]
    fn non_hermitian_rejected_by_eigen_path() {
        let g = grid(&[1]);
        let m = DMatrix::from_row_slice(2, 2, &[real(0.0), real(1.0), real(0.0), real(0.0)]);
        let op = DenseOperator::new(m, g, "N").unwrap();
        assert!(matrix_exponential_hermitian(&op, real(1.0)).is_err());
        let e = matrix_exponential(&op, real(1.0)).unwrap();
        assert!((e.matrix()[(0, 1)].re - 1.0).abs() < 1e-15);
    }
}
