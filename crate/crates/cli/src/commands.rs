//! The four workflows behind the subcommands. Each writes a report to the
//! given sink and returns an error carrying the process exit code.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use periodic_eval::log_utility::{unconstrained_log, value_log};
use periodic_eval::mc::{compare, estimate_log_objective, estimate_power_objective};
use periodic_eval::periodicity::{
    power_scaled_objective, tau_log_scaled, tau_log_value, tau_power_scaled,
    log_scaled_objective, log_value_objective,
};
use periodic_eval::{
    check_assumption, sharpe_ratio, solve_cone, solve_log, zeta, ConstrainedSharpe, EvaluationSpec,
    ObjectiveEstimate, ObjectiveKind, PowerProblem, PowerSolution, TauSearchResult,
};
use periodic_eval::roots::golden_section_max;
use rayon::prelude::*;

use crate::config::{ProblemConfig, Resolved, SweepSpec, Utility};
use crate::error::CliError;

/// Confidence multiplier for the Monte Carlo verdict.
pub const K_SIGMA: f64 = 3.0;
const CURVE_POINTS: usize = 200;
const SUPREMUM_GRID: usize = 40;
const TAU_RTOL: f64 = 1e-8;

/// Fixed-width scientific notation with 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|&x| fmt_num(x)).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "unavailable".to_string(), fmt_num)
}

/// Ordered `key: value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn num(&mut self, key: &str, x: f64) {
        self.push(key, fmt_num(x));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Numeric value of `key`, if present and parseable.
    pub fn number(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}: {v}");
        }
        s
    }
}

/// The market and cone projection shared by every workflow.
struct Prepared {
    cfg: ProblemConfig,
    res: Resolved,
    cs: ConstrainedSharpe,
}

fn prepare(cfg: &ProblemConfig) -> Result<Prepared, CliError> {
    let res = cfg.resolve()?;
    let xi = sharpe_ratio(&res.market)?;
    let cs = solve_cone(&xi, &res.market.sigma_inv()?)?;
    let report = check_assumption(&res.market, &res.eval, cfg.alpha, cs.xi_tilde_norm_sq());
    if !report.satisfied {
        return Err(periodic_eval::Error::AssumptionViolated { margin: report.margin }.into());
    }
    Ok(Prepared { cfg: cfg.clone(), res, cs })
}

impl Prepared {
    fn alpha(&self) -> f64 {
        self.cfg.alpha.expect("checked: power configs carry alpha")
    }

    fn power_problem(&self) -> Result<PowerProblem, CliError> {
        Ok(PowerProblem::with_constrained(
            self.res.market.clone(),
            self.res.eval,
            self.alpha(),
            self.cs.clone(),
            self.res.settings,
        )?)
    }

    fn power_at(&self, eval: EvaluationSpec) -> Result<(PowerProblem, PowerSolution), CliError> {
        let p = PowerProblem::with_constrained(
            self.res.market.clone(),
            eval,
            self.alpha(),
            self.cs.clone(),
            self.res.settings,
        )?;
        let sol = p.fixed_point()?;
        Ok((p, sol))
    }

    fn market_lines(&self, r: &mut Report) {
        let margin = check_assumption(&self.res.market, &self.res.eval, self.cfg.alpha, self.cs.xi_tilde_norm_sq()).margin;
        r.num("assumption_1_margin", margin);
        r.push("xi", fmt_vec(&self.cs.xi));
        r.push("pi_tilde_star", fmt_vec(&self.cs.pi_tilde_star));
        r.push("xi_tilde", fmt_vec(&self.cs.xi_tilde));
        r.num("xi_tilde_norm_sq", self.cs.xi_tilde_norm_sq());
    }
}

/// Solution report for a configuration.
pub fn solve_report(cfg: &ProblemConfig) -> Result<Report, CliError> {
    let p = prepare(cfg)?;
    let mut r = Report::default();
    r.push("utility", match cfg.utility {
        Utility::Power => "power",
        Utility::Log => "log",
    });
    p.market_lines(&mut r);
    match cfg.utility {
        Utility::Power => {
            let prob = p.power_problem()?;
            let sol = prob.fixed_point()?;
            r.num("a_star", sol.a_star);
            r.num("y_star", sol.y_star);
            r.push("lower_bound", fmt_opt(sol.lower_bound));
            r.push("upper_bound", fmt_opt(sol.upper_bound));
            r.num("contraction_modulus", sol.contraction_modulus);
            r.num("lipschitz_modulus", sol.lipschitz_modulus);
            r.push("iterations", sol.iterations.to_string());
            r.num("residual", sol.residual);
            r.push("quad_order", prob.quad_order().to_string());
            r.num("value_x0", sol.value(cfg.x0)?);
        }
        Utility::Log => {
            let s = solve_log(&p.res.market, &p.res.eval, &p.cs)?;
            let (_, unconstrained) = unconstrained_log(&p.res.market, &p.res.eval)?;
            r.num("a_star", s.a_star);
            r.num("c_star", s.c_star);
            r.num("value_x0", value_log(&s, cfg.x0)?);
            r.push("feedback_fractions", fmt_vec(&s.feedback_fractions));
            r.num("a_unconstrained", s.a_unconstrained);
            r.push("unconstrained_fractions", fmt_vec(&unconstrained));
            r.num("constraint_cost", s.constraint_cost);
        }
    }
    Ok(r)
}

/// `solve`: writes the report, and the effective configuration to
/// `emit_config` when given.
pub fn cmd_solve(cfg: &ProblemConfig, emit_config: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let r = solve_report(cfg)?;
    out.write_all(r.render().as_bytes())?;
    if let Some(path) = emit_config {
        std::fs::write(path, cfg.to_toml())?;
    }
    Ok(())
}

/// Estimate, analytic value and verdict. The verdict is in the report; the
/// caller decides how to treat a mismatch.
pub fn simulate_report(cfg: &ProblemConfig, analytic_override: Option<f64>) -> Result<(Report, bool), CliError> {
    let p = prepare(cfg)?;
    let sim = cfg.simulation();
    let (est, analytic): (ObjectiveEstimate, f64) = match cfg.utility {
        Utility::Power => {
            let prob = p.power_problem()?;
            let sol = prob.fixed_point()?;
            (estimate_power_objective(&sol, &prob, cfg.x0, &sim)?, sol.value(cfg.x0)?)
        }
        Utility::Log => {
            let s = solve_log(&p.res.market, &p.res.eval, &p.cs)?;
            (estimate_log_objective(&s, &p.res.market, &p.res.eval, cfg.x0, &sim)?, value_log(&s, cfg.x0)?)
        }
    };
    let analytic = analytic_override.unwrap_or(analytic);
    let pass = compare(&est, analytic, K_SIGMA);
    let mut r = Report::default();
    r.num("mean", est.mean);
    r.num("std_error", est.std_error);
    r.push("n_effective", est.n_effective.to_string());
    r.num("truncation_bound", est.truncation_bound);
    r.num("analytic", analytic);
    r.num("deviation", est.mean - analytic);
    r.num("k_sigma", K_SIGMA);
    r.push("seed", cfg.mc.seed.to_string());
    r.push("verdict", if pass { "pass" } else { "fail" });
    Ok((r, pass))
}

pub fn cmd_simulate(cfg: &ProblemConfig, analytic_override: Option<f64>, out: &mut dyn Write) -> Result<(), CliError> {
    let (r, pass) = simulate_report(cfg, analytic_override)?;
    out.write_all(r.render().as_bytes())?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Mismatch(format!(
            "mean {} vs analytic {}, allowed {} standard errors plus truncation",
            r.get("mean").unwrap_or("?"),
            r.get("analytic").unwrap_or("?"),
            K_SIGMA
        )))
    }
}

const POWER_OUTPUTS: &[&str] = &[
    "a_star",
    "y_star",
    "value",
    "lower_bound",
    "upper_bound",
    "contraction_modulus",
    "lipschitz_modulus",
    "xi_tilde_norm_sq",
];
const LOG_OUTPUTS: &[&str] =
    &["a_star", "c_star", "value", "xi_tilde_norm_sq", "a_unconstrained", "constraint_cost"];

/// Checks an output column name against the utility; `fraction_<i>` is the
/// log feedback fraction of asset `i` (one-based).
fn check_output(utility: Utility, n: usize, name: &str) -> Result<(), CliError> {
    let known = match utility {
        Utility::Power => POWER_OUTPUTS.contains(&name),
        Utility::Log => {
            LOG_OUTPUTS.contains(&name)
                || name
                    .strip_prefix("fraction_")
                    .and_then(|i| i.parse::<usize>().ok())
                    .is_some_and(|i| (1..=n).contains(&i))
        }
    };
    if known {
        Ok(())
    } else {
        Err(CliError::Config(format!("output {name:?} is not available for this utility")))
    }
}

/// Requested outputs at one configuration, from a fresh solve.
pub fn evaluate_point(cfg: &ProblemConfig, outputs: &[String]) -> Result<Vec<f64>, CliError> {
    let p = prepare(cfg)?;
    let nan = f64::NAN;
    match cfg.utility {
        Utility::Power => {
            let (_, sol) = p.power_at(p.res.eval)?;
            outputs
                .iter()
                .map(|o| {
                    Ok(match o.as_str() {
                        "a_star" => sol.a_star,
                        "y_star" => sol.y_star,
                        "value" => sol.value(cfg.x0)?,
                        "lower_bound" => sol.lower_bound.unwrap_or(nan),
                        "upper_bound" => sol.upper_bound.unwrap_or(nan),
                        "contraction_modulus" => sol.contraction_modulus,
                        "lipschitz_modulus" => sol.lipschitz_modulus,
                        "xi_tilde_norm_sq" => p.cs.xi_tilde_norm_sq(),
                        other => return Err(CliError::Config(format!("unknown output {other:?}"))),
                    })
                })
                .collect()
        }
        Utility::Log => {
            let s = solve_log(&p.res.market, &p.res.eval, &p.cs)?;
            outputs
                .iter()
                .map(|o| {
                    Ok(match o.as_str() {
                        "a_star" => s.a_star,
                        "c_star" => s.c_star,
                        "value" => value_log(&s, cfg.x0)?,
                        "xi_tilde_norm_sq" => s.xi_tilde_norm_sq,
                        "a_unconstrained" => s.a_unconstrained,
                        "constraint_cost" => s.constraint_cost,
                        other => {
                            let i = other
                                .strip_prefix("fraction_")
                                .and_then(|i| i.parse::<usize>().ok())
                                .ok_or_else(|| CliError::Config(format!("unknown output {other:?}")))?;
                            s.feedback_fractions[i - 1]
                        }
                    })
                })
                .collect()
        }
    }
}

/// Rows `[grid value, outputs...]` in grid order. Points run in parallel;
/// the first failing point in grid order is reported.
pub fn run_sweep(cfg: &ProblemConfig, spec: &SweepSpec) -> Result<Vec<Vec<f64>>, CliError> {
    cfg.check()?;
    for o in &spec.outputs {
        check_output(cfg.utility, cfg.n, o)?;
    }
    let results: Vec<Result<Vec<f64>, CliError>> = spec
        .grid
        .par_iter()
        .map(|&v| {
            let point = spec.parameter.apply(cfg, v)?;
            let mut row = vec![v];
            row.extend(evaluate_point(&point, &spec.outputs)?);
            Ok(row)
        })
        .collect();
    results
        .into_iter()
        .zip(&spec.grid)
        .map(|(r, &v)| {
            r.map_err(|e| CliError::GridPoint {
                parameter: spec.parameter.to_string(),
                value: v,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn render_csv(spec: &SweepSpec, rows: &[Vec<f64>]) -> String {
    let mut s = spec.parameter.to_string();
    for o in &spec.outputs {
        s.push(',');
        s.push_str(o);
    }
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// `sweep`: writes the CSV to `out_path` and a one-line summary to `out`.
pub fn cmd_sweep(cfg: &ProblemConfig, spec: &SweepSpec, out_path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let rows = run_sweep(cfg, spec)?;
    std::fs::write(out_path, render_csv(spec, &rows))?;
    let mut r = Report::default();
    r.push("parameter", spec.parameter.to_string());
    r.push("rows", rows.len().to_string());
    r.push("csv", out_path.display().to_string());
    out.write_all(r.render().as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Value,
    Scaled,
}

impl Objective {
    fn kind(self) -> ObjectiveKind {
        match self {
            Objective::Value => ObjectiveKind::Value,
            Objective::Scaled => ObjectiveKind::ScaledValue,
        }
    }
}

/// Objective as a function of `tau`, all other inputs held fixed.
fn tau_objective(p: &Prepared, objective: Objective) -> Box<dyn Fn(f64) -> Result<f64, periodic_eval::Error> + Sync + '_> {
    let (r, q, x0) = (p.res.market.r, p.cs.xi_tilde_norm_sq(), p.cfg.x0);
    let (gamma, delta) = (p.res.eval.gamma, p.res.eval.delta);
    match (p.cfg.utility, objective) {
        (Utility::Log, Objective::Value) => Box::new(move |t| log_value_objective(r, q, gamma, delta, x0, t)),
        (Utility::Log, Objective::Scaled) => Box::new(move |t| log_scaled_objective(r, q, gamma, delta, x0, t)),
        (Utility::Power, Objective::Scaled) if gamma == 1.0 => {
            let za = zeta(p.alpha(), r, q).unwrap_or(f64::NAN);
            Box::new(move |t| Ok(power_scaled_objective(za, delta, t)))
        }
        (Utility::Power, obj) => Box::new(move |t| {
            let eval = EvaluationSpec::new(t, gamma, delta)?;
            let (_, sol) = p.power_at(eval).map_err(|e| match e {
                CliError::Solver(s) => s,
                other => periodic_eval::Error::NumericalFault(other.to_string()),
            })?;
            let v = sol.value(x0)?;
            Ok(if obj == Objective::Scaled { t * v } else { v })
        }),
    }
}

/// Dispatches to the applicable sufficient condition, or to a capped
/// supremum when none applies.
pub fn opt_tau(cfg: &ProblemConfig, objective: Objective, cap: Option<f64>) -> Result<TauSearchResult, CliError> {
    let p = prepare(cfg)?;
    let (m, e, cs, x0) = (&p.res.market, &p.res.eval, &p.cs, cfg.x0);
    Ok(match (cfg.utility, objective) {
        (Utility::Log, Objective::Scaled) => tau_log_scaled(m, e, cs, x0, cap)?,
        (Utility::Log, Objective::Value) => tau_log_value(m, e, cs, x0, cap)?,
        (Utility::Power, Objective::Scaled) if e.gamma == 1.0 => tau_power_scaled(m, p.alpha(), e.delta, cs, cap)?,
        (Utility::Power, obj) => {
            let cap = cap.ok_or_else(|| {
                CliError::NoProposition(format!("power utility, gamma = {}, objective {}", e.gamma, obj.kind().name()))
            })?;
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(CliError::Config(format!("--tau-cap must be positive, got {cap}")));
            }
            grid_supremum(&tau_objective(&p, obj), obj.kind(), cap)?
        }
    })
}

/// Supremum of a solver-backed objective over `[cap / n, cap]`: the best
/// point of a uniform grid, refined by golden section between its
/// neighbours. The grid keeps `tau` away from zero, where the fixed-point
/// modulus tends to one and each evaluation would need unbounded iterations.
fn grid_supremum(
    f: &(dyn Fn(f64) -> Result<f64, periodic_eval::Error> + Sync),
    kind: ObjectiveKind,
    cap: f64,
) -> Result<TauSearchResult, CliError> {
    let lo = cap / SUPREMUM_GRID as f64;
    let taus: Vec<f64> = (1..=SUPREMUM_GRID).map(|k| cap * k as f64 / SUPREMUM_GRID as f64).collect();
    let values = taus.par_iter().map(|&t| f(t)).collect::<Result<Vec<f64>, _>>()?;
    let best = (0..values.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    let last = taus.len() - 1;
    let (tau, value) = if best == 0 || best == last {
        (taus[best], values[best])
    } else {
        let (t, v) = golden_section_max(f, taus[best - 1], taus[best + 1], TAU_RTOL, 500)?;
        if v >= values[best] { (t, v) } else { (taus[best], values[best]) }
    };
    let detail = if best == 0 {
        format!("no sufficient condition applies; objective still rising toward the grid start tau = {lo:e}")
    } else {
        format!("no sufficient condition applies; supremum over [{lo:e}, {cap:e}]")
    };
    Ok(TauSearchResult {
        condition_holds: false,
        condition_detail: detail,
        tau_star: Some(tau),
        objective_at_star: Some(value),
        objective_kind: kind,
        limit_at_zero: None,
        at_cap: best == last,
    })
}

/// `(tau, objective)` samples on a uniform grid reaching past `tau*`.
pub fn tau_curve(
    cfg: &ProblemConfig,
    objective: Objective,
    result: &TauSearchResult,
    cap: Option<f64>,
) -> Result<Vec<(f64, f64)>, CliError> {
    let p = prepare(cfg)?;
    let delta = p.res.eval.delta;
    let end = cap.unwrap_or_else(|| result.tau_star.map_or(10.0 / delta, |t| (3.0 * t).max(5.0 / delta)));
    let f = tau_objective(&p, objective);
    let taus: Vec<f64> = (1..=CURVE_POINTS).map(|k| end * k as f64 / CURVE_POINTS as f64).collect();
    let values: Vec<Result<f64, periodic_eval::Error>> = taus.par_iter().map(|&t| f(t)).collect();
    taus.into_iter().zip(values).map(|(t, v)| Ok((t, v?))).collect()
}

pub fn tau_report(result: &TauSearchResult) -> Report {
    let mut r = Report::default();
    r.push("objective", result.objective_kind.name());
    r.push("condition_holds", result.condition_holds.to_string());
    r.push("condition_detail", result.condition_detail.clone());
    if let Some(t) = result.tau_star {
        r.num("tau_star", t);
    }
    if let Some(v) = result.objective_at_star {
        r.num("objective_at_star", v);
    }
    if let Some(l) = result.limit_at_zero {
        r.num("limit_at_zero", l);
    }
    r.push("at_cap", result.at_cap.to_string());
    r
}

/// `opt-tau`: prints the search result and optionally writes the curve.
pub fn cmd_opt_tau(
    cfg: &ProblemConfig,
    objective: Objective,
    cap: Option<f64>,
    curve_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let result = opt_tau(cfg, objective, cap)?;
    out.write_all(tau_report(&result).render().as_bytes())?;
    if let Some(path) = curve_path {
        let mut s = String::from("tau,objective\n");
        for (t, v) in tau_curve(cfg, objective, &result, cap)? {
            let _ = writeln!(s, "{},{}", fmt_num(t), fmt_num(v));
        }
        std::fs::write(path, s)?;
    }
    Ok(())
}
