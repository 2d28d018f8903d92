//! Problem and sweep configuration files.
//!
//! TOML is the primary encoding; a file ending in `.json` is read as JSON
//! with the same field names. Top-level keys describe the market and the
//! evaluation scheme, `[solver]` and `[mc]` tune the numerics:
//!
//! ```toml
//! utility = "power"          # or "log"
//! n = 2
//! mu = [0.1, 0.15]
//! sigma = [0.2, 0.0, 0.0, 0.25]   # row-major n x n
//! r = 0.12
//! tau = 1.0
//! gamma = 0.8
//! alpha = 0.5                # power only
//! delta = 0.3
//! x0 = 0.5
//!
//! [solver]
//! tol_root = 1e-12
//! tol_fixed_point = 1e-11
//! quad_order = 64
//!
//! [mc]
//! n_paths = 100000
//! n_periods = "auto"         # or a positive integer
//! seed = 0
//! antithetic = false
//! ```
//!
//! A sweep file holds a single `[sweep]` table:
//!
//! ```toml
//! [sweep]
//! parameter = "mu_2"         # mu_i, sigma_ij (1-based), alpha, gamma, tau, x0, delta
//! grid = [0.10, 0.11, 0.12]  # or start / stop / step
//! outputs = ["a_star", "value"]
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use periodic_eval::{EvaluationSpec, MarketModel, SimulationConfig, SolverSettings};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Utility {
    Power,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub tol_root: f64,
    pub tol_fixed_point: f64,
    pub quad_order: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self { tol_root: s.tol_root, tol_fixed_point: s.tol_fixed_point, quad_order: s.quad_order }
    }
}

/// Number of simulated periods: a fixed count or chosen from the tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "PeriodsRepr", into = "PeriodsRepr")]
pub enum Periods {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PeriodsRepr {
    Count(usize),
    Word(String),
}

impl TryFrom<PeriodsRepr> for Periods {
    type Error = String;
    fn try_from(r: PeriodsRepr) -> Result<Self, String> {
        match r {
            PeriodsRepr::Count(0) => Err("n_periods must be positive".into()),
            PeriodsRepr::Count(n) => Ok(Periods::Fixed(n)),
            PeriodsRepr::Word(w) if w == "auto" => Ok(Periods::Auto),
            PeriodsRepr::Word(w) => Err(format!("n_periods must be \"auto\" or an integer, got {w:?}")),
        }
    }
}

impl From<Periods> for PeriodsRepr {
    fn from(p: Periods) -> Self {
        match p {
            Periods::Auto => PeriodsRepr::Word("auto".into()),
            Periods::Fixed(n) => PeriodsRepr::Count(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McBlock {
    pub n_paths: usize,
    pub n_periods: Periods,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for McBlock {
    fn default() -> Self {
        let d = SimulationConfig::default();
        Self { n_paths: d.n_paths, n_periods: Periods::Auto, seed: d.seed, antithetic: d.antithetic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub utility: Utility,
    pub n: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub r: f64,
    pub tau: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub delta: f64,
    pub x0: f64,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub mc: McBlock,
}

/// Validated numerical objects behind a [`ProblemConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub market: MarketModel,
    pub eval: EvaluationSpec,
    pub settings: SolverSettings,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

impl ProblemConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        let cfg = if is_json(path) {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            Self::from_str(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
                other => other,
            })?
        };
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// Structural checks that do not need the solvers.
    pub fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.mu.len() != self.n {
            return bad(format!("mu has {} entries, expected n = {}", self.mu.len(), self.n));
        }
        if self.sigma.len() != self.n * self.n {
            return bad(format!("sigma has {} entries, expected n^2 = {}", self.sigma.len(), self.n * self.n));
        }
        match (self.utility, self.alpha) {
            (Utility::Power, None) => return bad("alpha is required for power utility".into()),
            (Utility::Log, Some(_)) => return bad("alpha is only meaningful for power utility".into()),
            (Utility::Power, Some(a)) if !(a < 1.0 && a != 0.0 && a.is_finite()) => {
                return bad(format!("alpha must lie in (-inf, 0) or (0, 1), got {a}"))
            }
            _ => {}
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return bad(format!("x0 must be positive, got {}", self.x0));
        }
        if self.mc.n_paths == 0 {
            return bad("mc.n_paths must be positive".into());
        }
        Ok(())
    }

    /// Builds the market and evaluation spec. A nonpositive discount rate is
    /// reported as an assumption violation rather than a bad parameter.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        self.check()?;
        if !(self.delta > 0.0) {
            return Err(periodic_eval::Error::AssumptionViolated { margin: self.delta }.into());
        }
        let market = MarketModel::new(self.mu.clone(), self.sigma.clone(), self.r)?;
        let eval = EvaluationSpec::new(self.tau, self.gamma, self.delta)?;
        let settings = SolverSettings {
            tol_root: self.solver.tol_root,
            tol_fixed_point: self.solver.tol_fixed_point,
            quad_order: self.solver.quad_order,
            ..SolverSettings::default()
        };
        Ok(Resolved { market, eval, settings })
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            n_paths: self.mc.n_paths,
            n_periods: match self.mc.n_periods {
                Periods::Auto => None,
                Periods::Fixed(n) => Some(n),
            },
            seed: self.mc.seed,
            antithetic: self.mc.antithetic,
        }
    }

    /// Applies `PP_QUAD_ORDER` when set.
    pub fn apply_env(&mut self) -> Result<(), CliError> {
        match std::env::var("PP_QUAD_ORDER") {
            Ok(v) => {
                self.solver.quad_order = v
                    .trim()
                    .parse()
                    .ok()
                    .filter(|&n: &usize| n > 0)
                    .ok_or_else(|| CliError::Config(format!("PP_QUAD_ORDER must be a positive integer, got {v:?}")))?;
                Ok(())
            }
            Err(std::env::VarError::NotPresent) => Ok(()),
            Err(e) => Err(CliError::Config(format!("PP_QUAD_ORDER: {e}"))),
        }
    }
}

impl FromStr for ProblemConfig {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// A parameter that a sweep can vary. Indices are zero-based internally and
/// one-based in names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Mu(usize),
    Sigma(usize, usize),
    Alpha,
    Gamma,
    Tau,
    X0,
    Delta,
}

impl FromStr for SweepParameter {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("unknown sweep parameter {s:?}"));
        let index = |d: &str| d.parse::<usize>().ok().filter(|&i| i > 0).map(|i| i - 1);
        Ok(match s {
            "alpha" => Self::Alpha,
            "gamma" => Self::Gamma,
            "tau" => Self::Tau,
            "x0" => Self::X0,
            "delta" => Self::Delta,
            _ => {
                if let Some(i) = s.strip_prefix("mu_") {
                    Self::Mu(index(i).ok_or_else(bad)?)
                } else if let Some(ij) = s.strip_prefix("sigma_") {
                    // "sigma_12" for small n, "sigma_1_2" in general
                    let (i, j) = match ij.split_once('_') {
                        Some((i, j)) => (i, j),
                        None if ij.len() == 2 && ij.is_ascii() => ij.split_at(1),
                        None => return Err(bad()),
                    };
                    Self::Sigma(index(i).ok_or_else(bad)?, index(j).ok_or_else(bad)?)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mu(i) => write!(f, "mu_{}", i + 1),
            Self::Sigma(i, j) if *i < 9 && *j < 9 => write!(f, "sigma_{}{}", i + 1, j + 1),
            Self::Sigma(i, j) => write!(f, "sigma_{}_{}", i + 1, j + 1),
            Self::Alpha => f.write_str("alpha"),
            Self::Gamma => f.write_str("gamma"),
            Self::Tau => f.write_str("tau"),
            Self::X0 => f.write_str("x0"),
            Self::Delta => f.write_str("delta"),
        }
    }
}

impl SweepParameter {
    /// Copy of `base` with this parameter set to `v`.
    pub fn apply(&self, base: &ProblemConfig, v: f64) -> Result<ProblemConfig, CliError> {
        let mut c = base.clone();
        let n = c.n;
        let out_of_range = || CliError::Config(format!("sweep parameter {self} exceeds n = {n}"));
        match *self {
            Self::Mu(i) => *c.mu.get_mut(i).ok_or_else(out_of_range)? = v,
            Self::Sigma(i, j) => {
                if i >= n || j >= n {
                    return Err(out_of_range());
                }
                c.sigma[i * n + j] = v;
            }
            Self::Alpha => {
                if c.utility == Utility::Log {
                    return Err(CliError::Config("alpha cannot be swept for log utility".into()));
                }
                c.alpha = Some(v);
            }
            Self::Gamma => c.gamma = v,
            Self::Tau => c.tau = v,
            Self::X0 => c.x0 = v,
            Self::Delta => c.delta = v,
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepTable {
    parameter: String,
    #[serde(default)]
    grid: Option<Vec<f64>>,
    #[serde(default)]
    start: Option<f64>,
    #[serde(default)]
    stop: Option<f64>,
    #[serde(default)]
    step: Option<f64>,
    outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    sweep: SweepTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub outputs: Vec<String>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        let file: SweepFile = if is_json(path) {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        Self::from_table(file.sweep)
    }

    pub fn new(parameter: &str, grid: Vec<f64>, outputs: Vec<String>) -> Result<Self, CliError> {
        Self::from_table(SweepTable {
            parameter: parameter.into(),
            grid: Some(grid),
            start: None,
            stop: None,
            step: None,
            outputs,
        })
    }

    fn from_table(t: SweepTable) -> Result<Self, CliError> {
        let parameter = t.parameter.parse()?;
        let grid = match (t.grid, t.start, t.stop, t.step) {
            (Some(g), None, None, None) => g,
            (None, Some(a), Some(b), Some(h)) => range(a, b, h)?,
            _ => {
                return Err(CliError::Config(
                    "sweep needs either `grid` or all of `start`, `stop`, `step`".into(),
                ))
            }
        };
        if grid.is_empty() {
            return Err(CliError::Config("sweep grid is empty".into()));
        }
        if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Config("sweep grid must be finite and strictly increasing".into()));
        }
        if t.outputs.is_empty() {
            return Err(CliError::Config("sweep needs at least one output".into()));
        }
        Ok(Self { parameter, grid, outputs: t.outputs })
    }
}

/// `start, start + step, ...` up to `stop`, with points computed by
/// multiplication so the endpoint is hit without drift.
fn range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && stop >= start && (stop - start) / step < 1e7) {
        return Err(CliError::Config(format!("invalid sweep range {start}..{stop} step {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}
