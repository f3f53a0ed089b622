//! Walsh–Hadamard decomposition of the diagonal phase factors, sparse
//! truncation with a certified sup-norm error, and gate counts.
//!
//! Cost model: each retained coefficient with mask `w ≠ 0` costs one
//! single-qubit rotation plus `2 (popcount(w) - 1)` entangling gates (a
//! CNOT ladder on each side); mask 0 is a global phase and is free. A QFT
//! on `n` qubits counts `n (n + 1) / 2` gates.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::EvolutionPlan;

pub const MAX_BITS: u32 = 24;

/// Truncation tolerances used by [`estimate_step_resources`].
pub const RESOURCE_TOLERANCES: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Coefficients `c_w = 2^{-m} Σ_x v[x] (-1)^{popcount(w & x)}` in natural
/// (Hadamard) order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalshSeries {
    bits: u32,
    coefficients: Vec<f64>,
}

fn butterfly(data: &mut [f64]) {
    let n = data.len();
    let mut h = 1;
    while h < n {
        for block in data.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

fn bits_of(len: usize) -> Result<u32> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "Walsh transform length must be a power of two, got {len}"
        )));
    }
    let bits = len.trailing_zeros();
    if bits > MAX_BITS {
        return Err(Error::InvalidArgument(format!(
            "Walsh transform limited to {MAX_BITS} bits, got {bits}"
        )));
    }
    Ok(bits)
}

/// Forward transform with `2^{-m}` scaling, so coefficient 0 is the mean.
pub fn fwht(values: &[f64]) -> Result<WalshSeries> {
    let bits = bits_of(values.len())?;
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("Walsh input {v}")));
    }
    let mut c = values.to_vec();
    butterfly(&mut c);
    let scale = 1.0 / values.len() as f64;
    for v in c.iter_mut() {
        *v *= scale;
    }
    Ok(WalshSeries {
        bits,
        coefficients: c,
    })
}

/// Unscaled transform: the inverse of [`fwht`].
pub fn inverse_fwht(coefficients: &[f64]) -> Result<Vec<f64>> {
    bits_of(coefficients.len())?;
    let mut v = coefficients.to_vec();
    butterfly(&mut v);
    Ok(v)
}

impl WalshSeries {
    pub fn from_coefficients(coefficients: Vec<f64>) -> Result<Self> {
        let bits = bits_of(coefficients.len())?;
        Ok(Self { bits, coefficients })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        inverse_fwht(&self.coefficients).expect("length checked at construction")
    }

    /// Masks with a nonzero coefficient, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&w| self.coefficients[w] != 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Budget {
    /// Keep at most this many terms.
    Terms(usize),
    /// Keep the fewest terms whose certified error is at most this.
    Tolerance(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truncation {
    pub series: WalshSeries,
    pub retained: usize,
    /// `max_x |Σ_{w dropped} c_w (-1)^{popcount(w & x)}|`.
    pub sup_error: f64,
}

/// Nonzero masks in retention order: mask 0 first, then by decreasing
/// magnitude, ties to the smaller mask.
fn retention_order(series: &WalshSeries) -> Vec<usize> {
    let c = &series.coefficients;
    let mut order: Vec<usize> = series.support().into_iter().filter(|&w| w != 0).collect();
    order.sort_by(|&a, &b| c[b].abs().total_cmp(&c[a].abs()).then(a.cmp(&b)));
    if c[0] != 0.0 {
        order.insert(0, 0);
    }
    order
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Sup errors of every prefix of `order`, evaluated incrementally, stopping
/// after `limit` terms or once `stop` holds.
fn prefix_errors(
    series: &WalshSeries,
    order: &[usize],
    limit: usize,
    stop: impl Fn(f64) -> bool,
) -> Vec<f64> {
    let mut residual = series.reconstruct();
    let mut errors = vec![sup(&residual)];
    let limit = limit.min(order.len());
    for (k, &w) in order.iter().take(limit).enumerate() {
        if stop(errors[k]) {
            break;
        }
        if k + 1 == order.len() {
            // Nothing dropped: exact zero.
            errors.push(0.0);
            break;
        }
        let c = series.coefficients[w];
        for (x, r) in residual.iter_mut().enumerate() {
            if (w & x).count_ones() % 2 == 0 {
                *r -= c;
            } else {
                *r += c;
            }
        }
        errors.push(sup(&residual));
    }
    errors
}

/// Sparse truncation of a series.
///
/// Candidates are the prefixes of the retention order; among those within
/// the budget the one with the smallest certified error is kept (ties to
/// fewer terms). This makes the error nonincreasing in the budget even when
/// a single extra term would raise the sup-norm.
pub fn sparsify(series: &WalshSeries, budget: Budget) -> Result<Truncation> {
    let order = retention_order(series);
    let (k, sup_error) = match budget {
        Budget::Terms(s) => {
            let errors = prefix_errors(series, &order, s, |_| false);
            let mut best = 0;
            for (k, e) in errors.iter().enumerate() {
                if *e < errors[best] {
                    best = k;
                }
            }
            (best, errors[best])
        }
        Budget::Tolerance(eps) => {
            if !(eps >= 0.0) {
                return Err(Error::InvalidArgument(format!("tolerance must be nonnegative, got {eps}")));
            }
            let errors = prefix_errors(series, &order, order.len(), |e| e <= eps);
            let k = errors
                .iter()
                .position(|e| *e <= eps)
                .unwrap_or(errors.len() - 1);
            (k, errors[k])
        }
    };
    let mut kept = vec![0.0; series.coefficients.len()];
    for &w in &order[..k] {
        kept[w] = series.coefficients[w];
    }
    Ok(Truncation {
        series: WalshSeries {
            bits: series.bits,
            coefficients: kept,
        },
        retained: k,
        sup_error,
    })
}

/// Certified error of `sparsify(series, Budget::Terms(b))` for every
/// `b = 0..=2^m`, from a single incremental pass.
pub fn error_profile(series: &WalshSeries) -> Vec<f64> {
    let order = retention_order(series);
    let errors = prefix_errors(series, &order, order.len(), |_| false);
    let mut best = f64::INFINITY;
    (0..=series.coefficients.len())
        .map(|b| {
            best = best.min(errors[b.min(errors.len() - 1)]);
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GateCount {
    pub rotations: usize,
    pub entangling: usize,
    pub total: usize,
}

impl std::ops::Add for GateCount {
    type Output = GateCount;
    fn add(self, o: GateCount) -> GateCount {
        GateCount {
            rotations: self.rotations + o.rotations,
            entangling: self.entangling + o.entangling,
            total: self.total + o.total,
        }
    }
}

/// Gates for the nonzero masks of a series.
pub fn gate_count(series: &WalshSeries) -> GateCount {
    mask_gate_count(series.support())
}

/// Gates for an explicit set of masks.
pub fn mask_gate_count(masks: impl IntoIterator<Item = usize>) -> GateCount {
    let mut g = GateCount::default();
    for w in masks {
        if w == 0 {
            continue;
        }
        g.rotations += 1;
        g.entangling += 2 * (w.count_ones() as usize - 1);
    }
    g.total = g.rotations + g.entangling;
    g
}

/// Gates of one textbook QFT on `n` qubits.
pub fn qft_gate_count(n: u32) -> usize {
    (n as usize * (n as usize + 1)) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceRow {
    pub axis: usize,
    pub tolerance: f64,
    pub retained_terms: usize,
    pub sup_error: f64,
    pub rotations: usize,
    pub entangling: usize,
    /// Forward plus inverse QFT on the axis.
    pub qft_gates: usize,
}

/// Walsh cost of the axis-`j` factor of the step starting at `t`, one row
/// per sup-norm tolerance.
///
/// The phase is sampled on the full register in the mixed basis (Fourier
/// index along `j`, position elsewhere).
pub fn estimate_step_resources(
    plan: &EvolutionPlan,
    t: f64,
    axis: usize,
    tolerances: &[f64],
) -> Result<Vec<ResourceRow>> {
    let grid = plan.grid();
    if grid.total_qubits() > MAX_BITS {
        return Err(Error::GridTooLarge {
            total_qubits: grid.total_qubits(),
            limit: MAX_BITS,
        });
    }
    let phase = plan.axis_weights(axis, t, plan.step_size())?;
    let series = fwht(&phase)?;
    let n = grid.qubits()[grid.axis_index(axis)?];
    tolerances
        .iter()
        .map(|&tol| {
            let tr = sparsify(&series, Budget::Tolerance(tol))?;
            let g = gate_count(&tr.series);
            Ok(ResourceRow {
                axis,
                tolerance: tol,
                retained_terms: tr.retained,
                sup_error: tr.sup_error,
                rotations: g.rotations,
                entangling: g.entangling,
                qft_gates: 2 * qft_gate_count(n),
            })
        })
        .collect()
}

/// Writes `axis,tolerance,retained_terms,sup_error,rotations,entangling,qft_gates`.
pub fn write_resources_csv<W: Write>(writer: W, rows: &[ResourceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{CoefficientSet, EquationKind};
    use crate::evolve::Formula;
    use crate::field::GridSpec;

    fn walsh_fn(w: usize, m: u32) -> Vec<f64> {
        (0..1usize << m)
            .map(|x| if (w & x).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
            .collect()
    }

    #[test]
    fn constant_and_single_walsh_inputs() {
        let s = fwht(&[2.5; 16]).unwrap();
        assert_eq!(s.coefficients()[0], 2.5);
        assert!(s.coefficients()[1..].iter().all(|c| *c == 0.0));
        let s = fwht(&walsh_fn(0b1011, 5)).unwrap();
        assert_eq!(s.support(), vec![0b1011]);
        assert_eq!(s.coefficients()[0b1011], 1.0);
    }

    #[test]
    fn linear_phase_has_single_bit_support() {
        let m = 6;
        let beta = [0.3, -1.2, 0.7, 2.0, -0.1, 0.9];
        let v: Vec<f64> = (0..1usize << m)
            .map(|k| (0..m).map(|i| beta[i] * ((k >> i) & 1) as f64).sum())
            .collect();
        let s = fwht(&v).unwrap();
        // Direct summation oracle.
        for w in 0..1usize << m {
            let direct: f64 = v
                .iter()
                .enumerate()
                .map(|(x, vx)| if (w & x).count_ones() % 2 == 0 { *vx } else { -vx })
                .sum::<f64>()
                / 64.0;
            assert!((direct - s.coefficients()[w]).abs() < 1e-12);
            if w != 0 && w.count_ones() != 1 {
                assert!(s.coefficients()[w].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn length_errors() {
        assert!(fwht(&[]).is_err());
        assert!(fwht(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn budget_extremes() {
        let v: Vec<f64> = (0..32).map(|i| 1.0 + ((i * 7) % 5) as f64 * 0.1).collect();
        let s = fwht(&v).unwrap();
        let full = sparsify(&s, Budget::Terms(32)).unwrap();
        assert_eq!(full.sup_error, 0.0);
        let none = sparsify(&s, Budget::Terms(0)).unwrap();
        assert!((none.sup_error - sup(&v)).abs() < 1e-12);
        let mean = v.iter().sum::<f64>() / 32.0;
        let one = sparsify(&s, Budget::Terms(1)).unwrap();
        let want = v.iter().fold(0.0f64, |m, x| m.max((x - mean).abs()));
        assert!((one.sup_error - want).abs() < 1e-12);
        assert_eq!(one.series.support(), vec![0]);
    }

    #[test]
    fn certificate_matches_reconstruction() {
        let v: Vec<f64> = (0..64).map(|i| ((i as f64) * 0.37).sin() + 0.2).collect();
        let s = fwht(&v).unwrap();
        for b in [0, 1, 3, 10, 40, 64] {
            let tr = sparsify(&s, Budget::Terms(b)).unwrap();
            let rec = tr.series.reconstruct();
            let err = v.iter().zip(&rec).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!((err - tr.sup_error).abs() < 1e-12, "budget {b}");
        }
    }

    #[test]
    fn tolerance_budget() {
        let v: Vec<f64> = (0..64).map(|i| ((i as f64) * 0.1).cos()).collect();
        let s = fwht(&v).unwrap();
        let mut prev = 0;
        for tol in [1e-1, 1e-2, 1e-3, 1e-4] {
            let tr = sparsify(&s, Budget::Tolerance(tol)).unwrap();
            assert!(tr.sup_error <= tol);
            assert!(tr.retained >= prev);
            prev = tr.retained;
        }
    }

    #[test]
    fn gate_formula_examples() {
        assert_eq!(mask_gate_count([]), GateCount::default());
        assert_eq!(
            mask_gate_count([0b100]),
            GateCount {
                rotations: 1,
                entangling: 0,
                total: 1
            }
        );
        let g = mask_gate_count([0b011, 0b111]);
        assert_eq!((g.rotations, g.entangling), (2, 6));
        assert_eq!(mask_gate_count([0]).total, 0);
        assert_eq!(
            mask_gate_count([0b011, 0b111]) + mask_gate_count([0b1, 0b1000]),
            mask_gate_count([0b011, 0b111, 0b1, 0b1000])
        );
        assert_eq!(qft_gate_count(5), 15);
    }

    fn plan(kind: EquationKind, c: &[&str], q: &[u32]) -> EvolutionPlan {
        EvolutionPlan::new(
            CoefficientSet::parse(kind, c).unwrap(),
            Formula::Standard,
            1,
            GridSpec::new(q.to_vec()).unwrap(),
            1.0,
            64,
        )
        .unwrap()
    }

    #[test]
    fn resources_ignore_padding_axes() {
        let a = estimate_step_resources(&plan(EquationKind::Convection, &["1.3"], &[5]), 0.0, 1, &RESOURCE_TOLERANCES).unwrap();
        let b = estimate_step_resources(&plan(EquationKind::Convection, &["1.3", "1"], &[5, 3]), 0.0, 1, &RESOURCE_TOLERANCES)
            .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(
                (x.retained_terms, x.rotations, x.entangling),
                (y.retained_terms, y.rotations, y.entangling)
            );
        }
    }

    #[test]
    fn zero_diffusion_costs_nothing() {
        let rows = estimate_step_resources(&plan(EquationKind::Diffusion, &["0"], &[4]), 0.0, 1, &RESOURCE_TOLERANCES).unwrap();
        for r in rows {
            assert_eq!((r.retained_terms, r.rotations, r.entangling), (0, 0, 0));
            assert_eq!(r.sup_error, 0.0);
        }
    }

    #[test]
    fn variable_phase_counts_decrease_with_tolerance() {
        let p = plan(EquationKind::Convection, &["1+0.5*sin(2*pi*x2)", "1"], &[5, 5]);
        let rows = estimate_step_resources(&p, 0.0, 1, &RESOURCE_TOLERANCES).unwrap();
        for w in rows.windows(2) {
            assert!(w[0].retained_terms <= w[1].retained_terms);
            assert!(w[0].rotations + w[0].entangling <= w[1].rotations + w[1].entangling);
        }
        for r in &rows {
            assert!(r.sup_error <= r.tolerance);
            assert_eq!(r.qft_gates, 30);
        }
        let mut buf = Vec::new();
        write_resources_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "axis,tolerance,retained_terms,sup_error,rotations,entangling,qft_gates\n"
        ));
    }

    #[test]
    fn profile_matches_sparsify() {
        let v: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let s = fwht(&v).unwrap();
        let profile = error_profile(&s);
        assert_eq!(profile.len(), 65);
        for (b, e) in profile.iter().enumerate() {
            assert_eq!(*e, sparsify(&s, Budget::Terms(b)).unwrap().sup_error);
        }
    }
}
