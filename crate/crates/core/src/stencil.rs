//! Centered finite-difference weights and the Fourier symbol of the
//! periodic first-derivative operator they define.
//!
//! The weights `a_k`, `k = -p..=p`, satisfy the moment conditions
//! `Σ a_k k^j = δ_{j,1}` for `j = 0..=2p`. They are available both in closed
//! form and as the exact solution of the moment system; the two must agree.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Largest supported stencil half-width.
pub const MAX_ORDER: usize = 8;

/// Centered stencil weights `a_{-p..=p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilCoefficients {
    order: usize,
    /// `weights[k + p] = a_k`.
    weights: Vec<f64>,
}

impl StencilCoefficients {
    /// Half-width `p` of the stencil.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Weight `a_k` for an offset in `-p..=p`; zero outside the stencil.
    pub fn weight(&self, offset: i64) -> f64 {
        let p = self.order as i64;
        if offset.abs() > p {
            0.0
        } else {
            self.weights[(offset + p) as usize]
        }
    }

    /// All weights, ordered from offset `-p` to `+p`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Iterator over `(offset, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let p = self.order as i64;
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (i as i64 - p, w))
    }

    /// Largest violation of the moment conditions, evaluated on the nodes
    /// rescaled to `[-1, 1]`: `max_j |Σ a_k (k/p)^j - δ_{j,1}/p|`.
    ///
    /// The rescaling keeps every term bounded by `|a_k|`, so the residual
    /// measures the weights and not the cancellation error of `8^16`-sized
    /// powers.
    pub fn moment_residual(&self) -> f64 {
        let p = self.order as f64;
        (0..=2 * self.order)
            .map(|j| {
                let sum: f64 = self
                    .iter()
                    .map(|(k, a)| a * (k as f64 / p).powi(j as i32))
                    .sum();
                let target = if j == 1 { 1.0 / p } else { 0.0 };
                (sum - target).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest antisymmetry defect `|a_{-k} + a_k|` (zero for valid weights).
    pub fn antisymmetry_defect(&self) -> f64 {
        let p = self.order as i64;
        (0..=p)
            .map(|k| (self.weight(-k) + self.weight(k)).abs())
            .fold(0.0, f64::max)
    }
}

fn check_order(p: usize) -> Result<()> {
    if p == 0 || p > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "stencil order p = {p} outside 1..={MAX_ORDER}"
        )));
    }
    Ok(())
}

fn factorial(n: u64) -> u128 {
    (1..=n as u128).product()
}

/// Closed-form weights `a_k = (-1)^{k+1} (p!)^2 / (k (p-k)! (p+k)!)`.
pub fn closed_form(p: usize) -> Result<StencilCoefficients> {
    check_order(p)?;
    let pf = factorial(p as u64);
    let numer = pf * pf;
    let mut weights = vec![0.0; 2 * p + 1];
    for k in 1..=p {
        let denom = k as u128 * factorial((p - k) as u64) * factorial((p + k) as u64);
        let ratio = BigRational::new(BigInt::from(numer), BigInt::from(denom));
        let mag = ratio.to_f64().expect("finite ratio");
        let a = if k % 2 == 1 { mag } else { -mag };
        weights[p + k] = a;
        weights[p - k] = -a;
    }
    Ok(StencilCoefficients { order: p, weights })
}

/// Weights from the `(2p+1) x (2p+1)` moment system `Σ a_k k^j = δ_{j,1}`,
/// solved by Gaussian elimination with partial pivoting in exact rational
/// arithmetic and rounded once at the end.
pub fn solve_moment_system(p: usize) -> Result<StencilCoefficients> {
    check_order(p)?;
    let size = 2 * p + 1;
    let offsets: Vec<i64> = (-(p as i64)..=p as i64).collect();

    // Augmented matrix [A | b], A[j][i] = offsets[i]^j.
    let mut rows: Vec<Vec<BigRational>> = (0..size)
        .map(|j| {
            let mut row: Vec<BigRational> = offsets
                .iter()
                .map(|&k| BigRational::from_integer(BigInt::from(k).pow(j as u32)))
                .collect();
            row.push(if j == 1 {
                BigRational::one()
            } else {
                BigRational::zero()
            });
            row
        })
        .collect();

    for col in 0..size {
        let pivot = (col..size)
            .max_by(|&a, &b| {
                rows[a][col]
                    .abs()
                    .partial_cmp(&rows[b][col].abs())
                    .expect("rationals are totally ordered")
            })
            .expect("non-empty pivot range");
        if rows[pivot][col].is_zero() {
            return Err(Error::InvalidArgument(format!(
                "moment system for p = {p} is singular"
            )));
        }
        rows.swap(col, pivot);
        let head = rows[col].clone();
        for r in (col + 1)..size {
            if rows[r][col].is_zero() {
                continue;
            }
            let factor = &rows[r][col] / &head[col];
            for c in col..=size {
                let delta = &factor * &head[c];
                rows[r][c] -= delta;
            }
        }
    }

    let mut solution = vec![BigRational::zero(); size];
    for r in (0..size).rev() {
        let mut acc = rows[r][size].clone();
        for c in (r + 1)..size {
            acc -= &rows[r][c] * &solution[c];
        }
        solution[r] = acc / &rows[r][r];
    }

    let weights = solution
        .iter()
        .map(|q| q.to_f64().expect("finite weight"))
        .collect();
    Ok(StencilCoefficients { order: p, weights })
}

/// Stencil weights of half-width `p` (closed form).
///
/// The closed form is cross-checked against the exact moment-system
/// solution in the test suite; see [`max_route_disagreement`].
pub fn stencil_coefficients(p: usize) -> Result<StencilCoefficients> {
    closed_form(p)
}

/// `max_k |a_k(closed form) - a_k(moment system)|`.
pub fn max_route_disagreement(p: usize) -> Result<f64> {
    let a = closed_form(p)?;
    let b = solve_moment_system(p)?;
    Ok(a.weights
        .iter()
        .zip(&b.weights)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// `sin(2π m / len)` with the argument reduced to the first half-period, so
/// that `m = 0`, `len/4`, `len/2`, `3len/4` are exact and the result is
/// exactly odd under `m -> len - m`.
pub(crate) fn sin_two_pi_frac(m: usize, len: usize) -> f64 {
    let m = m % len;
    if m == 0 || 2 * m == len {
        return 0.0;
    }
    if 2 * m > len {
        return -sin_two_pi_frac(len - m, len);
    }
    if 4 * m == len {
        return 1.0;
    }
    // m in (0, len/2): fold the second quarter onto the first.
    let m = if 4 * m > len && len % 2 == 0 { len / 2 - m } else { m };
    (2.0 * PI * m as f64 / len as f64).sin()
}

/// Eigenvalues of the periodic discrete derivative on `2^n` points.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSymbol {
    qubits: u32,
    values: Vec<f64>,
}

impl DerivativeSymbol {
    pub fn qubits(&self) -> u32 {
        self.qubits
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `d_k` for `k = 0..2^n`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `d_k = (2/Δx) Σ_{q=1}^{p} a_q sin(2π q k / 2^n)` with `Δx = 2^{-n}`.
///
/// With the shift convention `(S f)(x) = f(x + Δx)` this is the eigenvalue
/// of `-i Σ a_k S^k / Δx` on the sampled plane wave `exp(2πi k x)`.
pub fn derivative_symbol(coeffs: &StencilCoefficients, n: u32) -> Result<DerivativeSymbol> {
    let p = coeffs.order();
    if n >= usize::BITS || (1usize << n) <= 2 * p {
        return Err(Error::GridTooCoarse { n, p });
    }
    let len = 1usize << n;
    let inv_dx = len as f64;
    let mut values = vec![0.0; len];
    for k in 1..=len / 2 {
        let s: f64 = (1..=p)
            .map(|q| coeffs.weight(q as i64) * sin_two_pi_frac(q * k, len))
            .sum();
        values[k] = 2.0 * inv_dx * s;
    }
    for k in (len / 2 + 1)..len {
        values[k] = -values[len - k];
    }
    Ok(DerivativeSymbol { qubits: n, values })
}

/// Maximum deviation between the symbol and the spectrum of the dense
/// circulant derivative matrix built by the oracle module.
pub fn verify_symbol_against_dense(coeffs: &StencilCoefficients, n: u32) -> Result<f64> {
    if n > 10 {
        return Err(Error::InvalidArgument(format!(
            "dense symbol check limited to n <= 10, got {n}"
        )));
    }
    let symbol = derivative_symbol(coeffs, n)?;
    let grid = crate::field::GridSpec::new(vec![n])?;
    let dense = crate::oracle::dense_derivative(&grid, 1, coeffs.order())?;
    let mut eig = dense.hermitian_eigenvalues();
    let mut sym = symbol.values().to_vec();
    eig.sort_by(f64::total_cmp);
    sym.sort_by(f64::total_cmp);
    Ok(eig
        .iter()
        .zip(&sym)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
