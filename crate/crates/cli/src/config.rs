use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use splitstep::coeffs::validate_independence;
use splitstep::field::DEFAULT_MAX_QUBITS;
use splitstep::walsh::RESOURCE_TOLERANCES;
use splitstep::{CoefficientSet, EquationKind, Expr, Formula, GridSpec, Observable};

/// Largest accepted config file.
pub const MAX_CONFIG_BYTES: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Solve,
    TrotterScan,
    ResolutionScan,
    Convergence,
    Bounds,
    Resources,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Solve => "solve",
            Experiment::TrotterScan => "trotter-scan",
            Experiment::ResolutionScan => "resolution-scan",
            Experiment::Convergence => "convergence",
            Experiment::Bounds => "bounds",
            Experiment::Resources => "resources",
        })
    }
}

fn default_p() -> usize {
    1
}

fn default_formula() -> Formula {
    Formula::Standard
}

fn default_observables() -> Vec<String> {
    vec!["mean".into(), "scaled-norm".into()]
}

fn default_experiment() -> Experiment {
    Experiment::Solve
}

fn default_max_qubits() -> u32 {
    DEFAULT_MAX_QUBITS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub equation: EquationKind,
    pub d: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Qubits per axis.
    #[serde(default)]
    pub n: Option<Vec<u32>>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "L", default)]
    pub steps: Option<usize>,
    #[serde(default = "default_formula")]
    pub formula: Formula,
    pub coefficients: Vec<String>,
    pub initial: String,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    #[serde(default = "default_experiment")]
    pub experiment: Experiment,
    /// Step counts of the Trotter scans.
    #[serde(rename = "Ls", default)]
    pub step_list: Option<Vec<usize>>,
    /// Qubits per axis of the resolution scans, applied to every axis.
    #[serde(rename = "ns", default)]
    pub qubit_list: Option<Vec<u32>>,
    #[serde(default)]
    pub tolerances: Option<Vec<f64>>,
    /// Midpoint reference steps; chosen automatically when absent.
    #[serde(default)]
    pub reference_steps: Option<usize>,
    /// Record every step of a solve as a CSV snapshot.
    #[serde(default)]
    pub trajectory: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Limit on the total qubits of any grid.
    #[serde(default = "default_max_qubits")]
    pub max_qubits: u32,
}

/// Why a config could not be used.
#[derive(Debug)]
pub enum ConfigError {
    Read(String),
    /// Invalid JSON or a field of the wrong type.
    Syntax(String),
    /// Every violated constraint.
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read(m) | ConfigError::Syntax(m) => f.write_str(m),
            ConfigError::Invalid(v) => {
                write!(f, "{} validation error(s):", v.len())?;
                for m in v {
                    write!(f, "\n  - {m}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// Reads a config file into a JSON value, enforcing the size limit.
pub fn read_value(path: &Path) -> Result<Value, ConfigError> {
    let meta = std::fs::metadata(path)
        .map_err(|e| ConfigError::Read(format!("cannot read {}: {e}", path.display())))?;
    if meta.len() > MAX_CONFIG_BYTES {
        return Err(ConfigError::Read(format!(
            "{} is {} bytes, above the {MAX_CONFIG_BYTES}-byte limit",
            path.display(),
            meta.len()
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Read(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        ConfigError::Syntax(format!(
            "{}: invalid JSON at line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// Applies `key=value` overrides. Keys are dotted paths (`n.0`, `T`);
/// values are parsed as JSON and fall back to plain strings.
pub fn apply_overrides(value: &mut Value, overrides: &[String]) -> Result<(), ConfigError> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax(format!("override '{item}' is not key=value")))?;
        let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
        let mut slot = &mut *value;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let last = i + 1 == parts.len();
            slot = match slot {
                Value::Object(map) => {
                    if last {
                        map.insert(part.to_string(), Value::Null);
                    }
                    map.get_mut(*part).ok_or_else(|| {
                        ConfigError::Syntax(format!("override path '{key}' does not exist"))
                    })?
                }
                Value::Array(items) => {
                    let idx: usize = part.parse().map_err(|_| {
                        ConfigError::Syntax(format!("override path '{key}': '{part}' is not an index"))
                    })?;
                    items.get_mut(idx).ok_or_else(|| {
                        ConfigError::Syntax(format!("override path '{key}': index {idx} out of range"))
                    })?
                }
                _ => {
                    return Err(ConfigError::Syntax(format!(
                        "override path '{key}' goes through a scalar"
                    )))
                }
            };
        }
        *slot = new;
    }
    Ok(())
}

/// Strict deserialization; errors carry the offending key path.
pub fn from_value(value: Value) -> Result<RunConfig, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Syntax(format!("at '{path}': {}", e.into_inner()))
    })
}

impl RunConfig {
    pub fn grid(&self) -> Option<GridSpec> {
        let n = self.n.as_ref()?;
        GridSpec::with_limit(n.clone(), self.max_qubits).ok()
    }

    pub fn coefficient_set(&self) -> splitstep::Result<CoefficientSet> {
        CoefficientSet::parse(self.equation, &self.coefficients)
    }

    pub fn initial_expr(&self) -> splitstep::Result<Expr> {
        Ok(Expr::parse(&self.initial, self.d)?)
    }

    pub fn tolerance_list(&self) -> Vec<f64> {
        self.tolerances.clone().unwrap_or_else(|| RESOURCE_TOLERANCES.to_vec())
    }

    /// Every violated constraint, or `Ok` when the config can run.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        let d = self.d;
        if d == 0 {
            v.push("d must be at least 1".to_string());
        }
        if self.p == 0 {
            v.push("p must be at least 1".to_string());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            v.push(format!("T must be positive and finite, got {}", self.horizon));
        }
        if self.coefficients.len() != d {
            v.push(format!(
                "coefficients has {} entries but d = {d}",
                self.coefficients.len()
            ));
        }
        if self.max_qubits == 0 {
            v.push("max_qubits must be at least 1".to_string());
        }

        let exp = self.experiment;
        let needs_n = !matches!(exp, Experiment::ResolutionScan | Experiment::Convergence);
        let needs_l = matches!(
            exp,
            Experiment::Solve | Experiment::ResolutionScan | Experiment::Resources
        );
        let needs_ls = matches!(exp, Experiment::TrotterScan | Experiment::Bounds);
        let needs_ns = matches!(exp, Experiment::ResolutionScan | Experiment::Convergence);

        match &self.n {
            Some(n) => {
                if n.len() != d {
                    v.push(format!("n has {} entries but d = {d}", n.len()));
                }
                if let Err(e) = GridSpec::with_limit(n.clone(), self.max_qubits) {
                    v.push(format!("n: {e}"));
                } else if let Some(&q) = n.iter().find(|&&q| q < 32 && (1usize << q) <= 2 * self.p) {
                    v.push(format!("n: {q} qubits cannot hold a stencil of order p = {}", self.p));
                }
            }
            None if needs_n => v.push(format!("n is required by experiment '{exp}'")),
            None => {}
        }
        match self.steps {
            Some(0) => v.push("L must be at least 1".to_string()),
            None if needs_l => v.push(format!("L is required by experiment '{exp}'")),
            _ => {}
        }
        match &self.step_list {
            Some(ls) if ls.is_empty() || ls.contains(&0) => {
                v.push("Ls must be a nonempty list of positive step counts".to_string())
            }
            Some(ls) if needs_ls && ls.len() < 3 => {
                v.push("Ls needs at least 3 entries for a fit".to_string())
            }
            None if needs_ls => v.push(format!("Ls is required by experiment '{exp}'")),
            _ => {}
        }
        match &self.qubit_list {
            Some(ns) if ns.is_empty() => v.push("ns must be nonempty".to_string()),
            Some(ns) => {
                for &q in ns {
                    let total = q as u64 * d as u64;
                    if q == 0 || total > self.max_qubits as u64 {
                        v.push(format!(
                            "ns: {q} qubits per axis gives {total} total, outside 1..={}",
                            self.max_qubits
                        ));
                    } else if q < 32 && (1usize << q) <= 2 * self.p {
                        v.push(format!("ns: {q} qubits cannot hold a stencil of order p = {}", self.p));
                    }
                }
                if exp == Experiment::Convergence && ns.len() < 3 {
                    v.push("ns needs at least 3 entries for a fit".to_string());
                }
            }
            None if needs_ns => v.push(format!("ns is required by experiment '{exp}'")),
            None => {}
        }
        if let Some(tol) = &self.tolerances {
            if tol.is_empty() || tol.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                v.push("tolerances must be a nonempty list of nonnegative numbers".to_string());
            }
        }
        if self.reference_steps == Some(0) {
            v.push("reference_steps must be at least 1".to_string());
        }

        if let Err(e) = Expr::parse(&self.initial, d.max(1)) {
            v.push(format!("initial: {e}"));
        }
        let mut exprs = Vec::new();
        for (i, text) in self.coefficients.iter().enumerate() {
            match Expr::parse(text, d.max(1)) {
                Ok(e) => exprs.push(e),
                Err(e) => v.push(format!("coefficients[{i}] (axis {}): {e}", i + 1)),
            }
        }
        if exprs.len() == d && d > 0 {
            let set = CoefficientSet::new(self.equation, exprs);
            match set {
                Ok(set) => self.check_coefficients(&set, &mut v),
                Err(e) => v.push(format!("coefficients: {e}")),
            }
        }
        if exp == Experiment::Convergence {
            if let Ok(set) = self.coefficient_set() {
                if set.constant_values().is_none() {
                    v.push("convergence needs constant coefficients".to_string());
                }
            }
        }

        for obs in &self.observables {
            if let Some(grid) = self.grid() {
                if let Err(e) = Observable::parse(obs, &grid) {
                    v.push(format!("observables: {e}"));
                }
            }
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    fn check_coefficients(&self, set: &CoefficientSet, v: &mut Vec<String>) {
        // A coarse probe grid is enough to catch a dependence on the own
        // coordinate; the plan repeats the check on the run grid.
        let probe = self
            .grid()
            .filter(|g| g.total_qubits() <= 16)
            .unwrap_or_else(|| GridSpec::new(vec![(16 / self.d.max(1) as u32).clamp(1, 6); self.d]).unwrap());
        let times = splitstep::coeffs::window_times((0.0, self.horizon.max(0.0)), 9);
        match validate_independence(set, &probe, &times) {
            Ok(report) => {
                for a in report.axes.iter().filter(|a| !a.passed) {
                    v.push(format!(
                        "coefficients[{}] (axis {}) depends on x{}: varies by {:.3e} at x = {:?}, t = {}",
                        a.axis - 1,
                        a.axis,
                        a.axis,
                        a.max_variation,
                        a.worst_point,
                        a.worst_time
                    ));
                }
            }
            Err(e) => v.push(format!("coefficients: {e}")),
        }
        if self.equation == EquationKind::Diffusion {
            if let Err(e) = set.check_nonnegative(&probe, &times) {
                v.push(format!("coefficients: {e}"));
            }
        }
    }
}
