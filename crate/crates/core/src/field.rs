//! Sampled solution fields on the periodic unit box.
//!
//! A [`Field`] stores one complex amplitude per grid point in row-major
//! order with axis 1 slowest. It plays the role of the unnormalized qubit
//! state; normalized views are produced on demand.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::coeffs::Expr;
use crate::error::{Error, Result};

/// Default cap on the total number of qubits `n_1 + … + n_d`.
pub const DEFAULT_MAX_QUBITS: u32 = 24;

/// Grids at least this large run their per-line transforms on the rayon pool.
const PARALLEL_THRESHOLD: usize = 1 << 12;

/// Qubits per axis of a `d`-dimensional power-of-two grid, `d ∈ {1,2,3}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridSpec {
    qubits: Vec<u32>,
}

impl GridSpec {
    pub fn new(qubits: Vec<u32>) -> Result<Self> {
        Self::with_limit(qubits, DEFAULT_MAX_QUBITS)
    }

    /// Like [`GridSpec::new`] with an explicit cap on the total qubit count.
    pub fn with_limit(qubits: Vec<u32>, limit: u32) -> Result<Self> {
        if qubits.is_empty() || qubits.len() > 3 {
            return Err(Error::InvalidArgument(format!(
                "grid dimension must be 1, 2 or 3, got {}",
                qubits.len()
            )));
        }
        if let Some(axis) = qubits.iter().position(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!(
                "axis {} has zero qubits",
                axis + 1
            )));
        }
        let total: u32 = qubits.iter().sum();
        if total > limit || total >= usize::BITS {
            return Err(Error::GridTooLarge {
                total_qubits: total,
                limit,
            });
        }
        Ok(Self { qubits })
    }

    pub fn dim(&self) -> usize {
        self.qubits.len()
    }

    pub fn qubits(&self) -> &[u32] {
        &self.qubits
    }

    pub fn total_qubits(&self) -> u32 {
        self.qubits.iter().sum()
    }

    /// Total number of grid points `N`.
    pub fn len(&self) -> usize {
        1usize << self.total_qubits()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Validates a 1-based axis and returns it 0-based.
    pub fn axis_index(&self, axis: usize) -> Result<usize> {
        if axis == 0 || axis > self.dim() {
            Err(Error::InvalidAxis {
                axis,
                dim: self.dim(),
            })
        } else {
            Ok(axis - 1)
        }
    }

    /// Points along a 1-based axis.
    pub fn points(&self, axis: usize) -> usize {
        1usize << self.qubits[axis - 1]
    }

    /// Spacing `Δx_j = 2^{-n_j}` along a 1-based axis.
    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.points(axis) as f64
    }

    /// Flat-index stride of a 1-based axis.
    pub fn stride(&self, axis: usize) -> usize {
        1usize << self.qubits[axis..].iter().sum::<u32>()
    }

    /// Per-axis integer coordinates of a flat index.
    pub fn coords(&self, flat: usize) -> Vec<usize> {
        (1..=self.dim())
            .map(|axis| (flat / self.stride(axis)) % self.points(axis))
            .collect()
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .enumerate()
            .map(|(i, &k)| k * self.stride(i + 1))
            .sum()
    }

    /// Position `x_j = k_j / N_j` of every axis for a flat index.
    pub fn position(&self, flat: usize) -> Vec<f64> {
        self.coords(flat)
            .iter()
            .enumerate()
            .map(|(i, &k)| k as f64 / self.points(i + 1) as f64)
            .collect()
    }

    /// Fails unless two grids are identical.
    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.qubits, other.qubits
            )));
        }
        Ok(())
    }
}

/// Direction of a per-axis discrete Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `F[k] = N^{-1/2} Σ_x f[x] e^{-2πi k x / N}`.
    Forward,
    Inverse,
}

fn fft_plan(len: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, Direction), Arc<dyn Fft<f64>>>>> =
        OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = plans.lock().expect("fft plan cache poisoned");
    guard
        .entry((len, direction))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            match direction {
                Direction::Forward => planner.plan_fft_forward(len),
                Direction::Inverse => planner.plan_fft_inverse(len),
            }
        })
        .clone()
}

/// Applies `op` to every 1-D line along a 0-based axis.
///
/// `op` receives the line (gathered into contiguous scratch) and the flat
/// index of the line's first element.
pub(crate) fn for_each_line<F>(data: &mut [Complex64], grid: &GridSpec, axis0: usize, op: F)
where
    F: Fn(&mut [Complex64], usize) + Sync,
{
    let len = 1usize << grid.qubits()[axis0];
    let inner = grid.stride(axis0 + 1);
    let block = len * inner;
    let work = |(b, chunk): (usize, &mut [Complex64])| {
        let base = b * block;
        if inner == 1 {
            op(chunk, base);
            return;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        for i in 0..inner {
            for (k, v) in line.iter_mut().enumerate() {
                *v = chunk[k * inner + i];
            }
            op(&mut line, base + i);
            for (k, v) in line.iter().enumerate() {
                chunk[k * inner + i] = *v;
            }
        }
    };
    if data.len() >= PARALLEL_THRESHOLD {
        data.par_chunks_mut(block).enumerate().for_each(work);
    } else {
        data.chunks_mut(block).enumerate().for_each(work);
    }
}

/// Unitary DFT along a 0-based axis, in place.
pub(crate) fn fft_axis_in_place(
    data: &mut [Complex64],
    grid: &GridSpec,
    axis0: usize,
    direction: Direction,
) {
    let len = 1usize << grid.qubits()[axis0];
    let plan = fft_plan(len, direction);
    let scale = 1.0 / (len as f64).sqrt();
    for_each_line(data, grid, axis0, |line, _| {
        plan.process(line);
        for v in line.iter_mut() {
            *v *= scale;
        }
    });
}

/// Signed frequency of DFT index `k` on `len` points, in `(-len/2, len/2]`.
pub fn signed_frequency(k: usize, len: usize) -> i64 {
    if 2 * k <= len {
        k as i64
    } else {
        k as i64 - len as i64
    }
}

/// Complex amplitudes on a grid at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    amplitudes: Vec<Complex64>,
    time: f64,
}

impl Field {
    pub fn new(grid: GridSpec, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.len()
            )));
        }
        if let Some(i) = amplitudes
            .iter()
            .position(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(Error::NonFinite(format!("amplitude at flat index {i}")));
        }
        Ok(Self {
            grid,
            amplitudes,
            time,
        })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let len = grid.len();
        Self {
            grid,
            amplitudes: vec![Complex64::new(0.0, 0.0); len],
            time: 0.0,
        }
    }

    /// Field built from real samples.
    pub fn from_real(grid: GridSpec, values: &[f64], time: f64) -> Result<Self> {
        Self::new(
            grid,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            time,
        )
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// `sqrt((1/N) Σ |a|²)`, the discrete L² norm on the torus.
    pub fn scaled_norm(&self) -> f64 {
        let sum: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        (sum / self.amplitudes.len() as f64).sqrt()
    }

    /// `(1/N) Σ a`.
    pub fn mean(&self) -> Complex64 {
        let sum: Complex64 = self.amplitudes.iter().sum();
        sum / self.amplitudes.len() as f64
    }

    pub fn max_imag(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |m, a| m.max(a.im.abs()))
    }

    /// Copy rescaled to unit scaled norm.
    pub fn normalize(&self) -> Result<Field> {
        let norm = self.scaled_norm();
        if norm == 0.0 {
            return Err(Error::DegenerateState("cannot normalize a zero field".into()));
        }
        Ok(self.scale(1.0 / norm))
    }

    pub fn scale(&self, factor: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
            time: self.time,
        }
    }

    /// Unitary discrete Fourier transform along a 1-based axis.
    pub fn axis_fourier(&self, axis: usize, direction: Direction) -> Result<Field> {
        let axis0 = self.grid.axis_index(axis)?;
        let mut out = self.clone();
        fft_axis_in_place(&mut out.amplitudes, &self.grid, axis0, direction);
        Ok(out)
    }

    /// Exact trigonometric derivative of order 1 or 2 along a 1-based axis.
    ///
    /// Mode `m ∈ (-N/2, N/2]` is multiplied by `(2πi m)^order`; the Nyquist
    /// mode gets weight 0 for the first derivative so real fields stay real.
    pub fn spectral_derivative(&self, axis: usize, order: u32) -> Result<Field> {
        let axis0 = self.grid.axis_index(axis)?;
        if order != 1 && order != 2 {
            return Err(Error::InvalidArgument(format!(
                "spectral derivative order must be 1 or 2, got {order}"
            )));
        }
        let len = self.grid.points(axis);
        let multipliers: Vec<Complex64> = (0..len)
            .map(|k| {
                let m = signed_frequency(k, len);
                let w = 2.0 * PI * m as f64;
                match order {
                    1 if 2 * k == len => Complex64::new(0.0, 0.0),
                    1 => Complex64::new(0.0, w),
                    _ => Complex64::new(-w * w, 0.0),
                }
            })
            .collect();
        let mut out = self.clone();
        let plan_f = fft_plan(len, Direction::Forward);
        let plan_i = fft_plan(len, Direction::Inverse);
        let scale = 1.0 / len as f64;
        for_each_line(&mut out.amplitudes, &self.grid, axis0, |line, _| {
            plan_f.process(line);
            for (v, m) in line.iter_mut().zip(&multipliers) {
                *v *= m * scale;
            }
            plan_i.process(line);
        });
        Ok(out)
    }

    /// Value of an observable on this field.
    pub fn measure(&self, obs: &Observable) -> Result<ObservableValue> {
        match obs {
            Observable::PointValue(coords) => {
                if coords.len() != self.grid.dim()
                    || coords
                        .iter()
                        .enumerate()
                        .any(|(i, &k)| k >= self.grid.points(i + 1))
                {
                    return Err(Error::InvalidArgument(format!(
                        "point {coords:?} is not on the grid"
                    )));
                }
                Ok(ObservableValue::Complex(
                    self.amplitudes[self.grid.flat_index(coords)],
                ))
            }
            Observable::Mean => Ok(ObservableValue::Complex(self.mean())),
            Observable::AxisMoment { axis, order } => {
                self.grid.axis_index(*axis)?;
                let total: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
                if total == 0.0 {
                    return Err(Error::DegenerateState(
                        "moment of a zero field is undefined".into(),
                    ));
                }
                let len = self.grid.points(*axis);
                let stride = self.grid.stride(*axis);
                let weighted: f64 = self
                    .amplitudes
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let x = ((i / stride) % len) as f64 / len as f64;
                        x.powi(*order as i32) * a.norm_sqr()
                    })
                    .sum();
                Ok(ObservableValue::Real(weighted / total))
            }
            Observable::ScaledNorm => Ok(ObservableValue::Real(self.scaled_norm())),
        }
    }

    /// Writes the field as CSV with columns `i1..id, re, im`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.grid.dim()).map(|j| format!("i{j}")).collect();
        header.push("re".into());
        header.push("im".into());
        w.write_record(&header)?;
        for (flat, a) in self.amplitudes.iter().enumerate() {
            let mut rec: Vec<String> = self
                .grid
                .coords(flat)
                .iter()
                .map(|k| k.to_string())
                .collect();
            rec.push(format!("{:?}", a.re));
            rec.push(format!("{:?}", a.im));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a field written by [`Field::write_csv`] onto `grid`.
    pub fn read_csv<R: Read>(grid: GridSpec, reader: R, time: f64) -> Result<Field> {
        let mut r = csv::Reader::from_reader(reader);
        let dim = grid.dim();
        if r.headers()?.len() != dim + 2 {
            return Err(Error::GridMismatch(format!(
                "expected {} columns for a {dim}-d field",
                dim + 2
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut seen = 0usize;
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<&str> {
                rec.get(i)
                    .ok_or_else(|| Error::InvalidArgument("short csv record".into()))
            };
            let mut coords = Vec::with_capacity(dim);
            for (i, _) in (0..dim).enumerate() {
                let k: usize = parse(i)?
                    .parse()
                    .map_err(|e| Error::InvalidArgument(format!("bad index: {e}")))?;
                if k >= grid.points(i + 1) {
                    return Err(Error::GridMismatch(format!("index {k} off grid on axis {}", i + 1)));
                }
                coords.push(k);
            }
            let re: f64 = parse(dim)?
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("bad re: {e}")))?;
            let im: f64 = parse(dim + 1)?
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("bad im: {e}")))?;
            amps[grid.flat_index(&coords)] = Complex64::new(re, im);
            seen += 1;
        }
        if seen != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{seen} records for a grid of {} points",
                grid.len()
            )));
        }
        Field::new(grid, amps, time)
    }
}

/// Samples an expression at `x_j = k_j / N_j` and time `t`.
pub fn sample_function(grid: &GridSpec, expr: &Expr, t: f64) -> Result<Field> {
    let values = (0..grid.len())
        .map(|flat| expr.eval(&grid.position(flat), t))
        .collect::<std::result::Result<Vec<f64>, _>>()?;
    Field::from_real(grid.clone(), &values, t)
}

/// `‖a - b‖_{2,N}`, optionally after normalizing both inputs.
pub fn distance(a: &Field, b: &Field, normalized: bool) -> Result<f64> {
    a.grid.ensure_same(&b.grid)?;
    let (a, b) = if normalized {
        (a.normalize()?, b.normalize()?)
    } else {
        (a.clone(), b.clone())
    };
    let sum: f64 = a
        .amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    Ok((sum / a.amplitudes.len() as f64).sqrt())
}

/// Quantities extracted from a final state.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// Amplitude at the given integer grid coordinates.
    PointValue(Vec<usize>),
    Mean,
    /// `Σ x_j^q |a|² / Σ |a|²` along a 1-based axis.
    AxisMoment { axis: usize, order: u32 },
    ScaledNorm,
}

impl Observable {
    /// Point observable at physical coordinates that must lie on the grid.
    pub fn point_at(grid: &GridSpec, x: &[f64]) -> Result<Observable> {
        if x.len() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates for a {}-d grid",
                x.len(),
                grid.dim()
            )));
        }
        let coords = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                let n = grid.points(i + 1) as f64;
                let k = xi * n;
                if !(0.0..1.0).contains(&xi) || (k - k.round()).abs() > 1e-9 {
                    Err(Error::InvalidArgument(format!(
                        "coordinate {xi} is not a grid point on axis {}",
                        i + 1
                    )))
                } else {
                    Ok(k.round() as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Observable::PointValue(coords))
    }

    /// Parses `mean`, `scaled-norm`, `point:x1,x2,…` or `moment:axis:order`.
    pub fn parse(text: &str, grid: &GridSpec) -> Result<Observable> {
        let bad = || Error::InvalidArgument(format!("unknown observable '{text}'"));
        match text.trim() {
            "mean" => Ok(Observable::Mean),
            "scaled-norm" => Ok(Observable::ScaledNorm),
            other => {
                if let Some(rest) = other.strip_prefix("point:") {
                    let x = rest
                        .split(',')
                        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?;
                    Observable::point_at(grid, &x)
                } else if let Some(rest) = other.strip_prefix("moment:") {
                    let mut parts = rest.split(':');
                    let axis: usize = parts
                        .next()
                        .and_then(|s| s.trim().parse().ok())
                        .ok_or_else(bad)?;
                    let order: u32 = parts
                        .next()
                        .and_then(|s| s.trim().parse().ok())
                        .ok_or_else(bad)?;
                    if parts.next().is_some() {
                        return Err(bad());
                    }
                    grid.axis_index(axis)?;
                    Ok(Observable::AxisMoment { axis, order })
                } else {
                    Err(bad())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservableValue {
    Real(f64),
    Complex(Complex64),
}
