//! Choice of the evaluation period length `tau`.
//!
//! Three sufficient conditions give an interior optimum: the scaled power
//! objective `g(tau) = A*(tau) tau` with `gamma = 1`, the log value function
//! with `gamma < 1`, and the scaled log objective. Outside those conditions
//! a supremum over a user-supplied range can still be reported.

use crate::cone::ConstrainedSharpe;
use crate::error::{Error, Result};
use crate::log_utility::value_log_at;
use crate::market::{zeta, EvaluationSpec, MarketModel};
use crate::roots::golden_section_max;

const SEARCH_RTOL: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 200;
const CERTIFICATE_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Value,
    ScaledValue,
}

impl ObjectiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::Value => "value",
            ObjectiveKind::ScaledValue => "scaled_value",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauSearchResult {
    pub condition_holds: bool,
    pub condition_detail: String,
    pub tau_star: Option<f64>,
    pub objective_at_star: Option<f64>,
    pub objective_kind: ObjectiveKind,
    /// Limit of the objective as `tau -> 0+`, where it is finite.
    pub limit_at_zero: Option<f64>,
    /// True when `tau_star` is the right end of a capped range rather than
    /// an interior maximizer.
    pub at_cap: bool,
}

/// `g(tau) = e^{(zeta(alpha) - delta) tau} tau / (1 - e^{-delta tau})`.
pub fn power_scaled_objective(zeta_alpha: f64, delta: f64, tau: f64) -> f64 {
    ((zeta_alpha - delta) * tau).exp() * tau / -(-delta * tau).exp_m1()
}

/// `V(x; tau)` for log utility.
pub fn log_value_objective(r: f64, q: f64, gamma: f64, delta: f64, x: f64, tau: f64) -> Result<f64> {
    value_log_at(r, q, &EvaluationSpec { tau, gamma, delta }, x)
}

/// `tau V(x; tau)` for log utility.
pub fn log_scaled_objective(r: f64, q: f64, gamma: f64, delta: f64, x: f64, tau: f64) -> Result<f64> {
    Ok(tau * log_value_objective(r, q, gamma, delta, x, tau)?)
}

/// Maximizes a smooth objective over `tau > 0` (or `(0, cap]`).
///
/// Doubles from `1e-4 / delta` until the objective falls below the best
/// value seen, then refines by golden section on the neighbouring points.
/// Returns `(tau, value, at_cap)`.
pub fn maximize_tau<F>(mut f: F, delta: f64, cap: Option<f64>) -> Result<(f64, f64, bool)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let start = 1e-4 / delta;
    let floor = 1.0 / delta;
    let cap = cap.unwrap_or(f64::INFINITY);
    if !(cap > start) {
        return Err(Error::InvalidParameter(format!("tau cap {cap} is below the search start {start}")));
    }

    let mut taus = vec![start];
    let mut values = vec![f(start)?];
    let mut best = 0;
    loop {
        let last = *taus.last().expect("nonempty");
        if last >= cap {
            break;
        }
        if taus.len() > MAX_DOUBLINGS {
            return Err(Error::BracketFailure(format!(
                "objective still increasing at tau = {last:e}"
            )));
        }
        let next = (2.0 * last).min(cap);
        let v = f(next)?;
        taus.push(next);
        values.push(v);
        if v > values[best] {
            best = values.len() - 1;
        } else if next >= floor {
            break;
        }
    }

    let last = taus.len() - 1;
    if best == last {
        // still rising at the cap
        return Ok((taus[last], values[last], true));
    }
    let lo = if best == 0 { 0.5 * start } else { taus[best - 1] };
    let hi = taus[best + 1];
    let (tau, value) = golden_section_max(&mut f, lo, hi, SEARCH_RTOL, 500)?;
    if value >= values[best] {
        Ok((tau, value, false))
    } else {
        Ok((taus[best], values[best], false))
    }
}

/// Checks that `f` at `tau (1 +- 1e-3)` does not exceed `f(tau)`.
pub fn certify_local_max<F>(mut f: F, tau: f64) -> Result<bool>
where
    F: FnMut(f64) -> Result<f64>,
{
    let centre = f(tau)?;
    let slack = 1e-12 * centre.abs().max(1e-300);
    Ok(f(tau * (1.0 - CERTIFICATE_STEP))? <= centre + slack
        && f(tau * (1.0 + CERTIFICATE_STEP))? <= centre + slack)
}

fn search<F>(
    mut f: F,
    delta: f64,
    holds: bool,
    detail: String,
    kind: ObjectiveKind,
    limit_at_zero: Option<f64>,
    cap: Option<f64>,
) -> Result<TauSearchResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !holds && cap.is_none() {
        return Ok(TauSearchResult {
            condition_holds: false,
            condition_detail: detail,
            tau_star: None,
            objective_at_star: None,
            objective_kind: kind,
            limit_at_zero,
            at_cap: false,
        });
    }
    let (tau, value, at_cap) = maximize_tau(&mut f, delta, cap)?;
    if holds && !at_cap && !certify_local_max(&mut f, tau)? {
        return Err(Error::NumericalFault(format!("tau = {tau} failed the local-maximum check")));
    }
    Ok(TauSearchResult {
        condition_holds: holds,
        condition_detail: detail,
        tau_star: Some(tau),
        objective_at_star: Some(value),
        objective_kind: kind,
        limit_at_zero,
        at_cap,
    })
}

/// Optimal `tau` for the scaled power objective with `gamma = 1`, which
/// exists when `delta / 2 < zeta(alpha) < delta`.
pub fn tau_power_scaled(
    m: &MarketModel,
    alpha: f64,
    delta: f64,
    cs: &ConstrainedSharpe,
    cap: Option<f64>,
) -> Result<TauSearchResult> {
    if !(delta > 0.0) {
        return Err(Error::AssumptionViolated { margin: delta });
    }
    let z = zeta(alpha, m.r, cs.xi_tilde_norm_sq())?;
    let holds = 0.5 * delta < z && z < delta;
    let detail = format!(
        "delta/2 < zeta(alpha) < delta: {:.6} < {:.6} < {:.6} is {holds}",
        0.5 * delta,
        z,
        delta
    );
    search(
        |t| Ok(power_scaled_objective(z, delta, t)),
        delta,
        holds,
        detail,
        ObjectiveKind::ScaledValue,
        Some(1.0 / delta),
        cap,
    )
}

/// Optimal `tau` for the log value function `V(x; tau)`, which exists when
/// `gamma < 1` and `(r + |xi~|^2 / 2) / delta + ln x < 0`.
pub fn tau_log_value(
    m: &MarketModel,
    e: &EvaluationSpec,
    cs: &ConstrainedSharpe,
    x: f64,
    cap: Option<f64>,
) -> Result<TauSearchResult> {
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("wealth must be positive, got {x}")));
    }
    let q = cs.xi_tilde_norm_sq();
    let growth = m.r + 0.5 * q;
    let gate = growth / e.delta + x.ln();
    let holds = e.gamma < 1.0 && gate < 0.0;
    let detail = if e.gamma < 1.0 {
        format!("(r + |xi~|^2/2)/delta + ln x = {gate:.6} < 0 is {holds}")
    } else {
        "gamma = 1: V(x; tau) is decreasing in tau, no interior optimum".to_string()
    };
    search(
        |t| log_value_objective(m.r, q, e.gamma, e.delta, x, t),
        e.delta,
        holds,
        detail,
        ObjectiveKind::Value,
        None,
        cap,
    )
}

/// Optimal `tau` for the scaled log objective `tau V(x; tau)`: always for
/// `gamma = 1`, and for `gamma < 1` when
/// `(r + |xi~|^2 / 2) gamma / delta - (1 - gamma) ln x / 2 > 0`.
pub fn tau_log_scaled(
    m: &MarketModel,
    e: &EvaluationSpec,
    cs: &ConstrainedSharpe,
    x: f64,
    cap: Option<f64>,
) -> Result<TauSearchResult> {
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("wealth must be positive, got {x}")));
    }
    let q = cs.xi_tilde_norm_sq();
    let growth = m.r + 0.5 * q;
    let (holds, detail, limit) = if e.gamma == 1.0 {
        (true, "gamma = 1: interior optimum always exists".to_string(), Some(0.0))
    } else {
        let gate = growth * e.gamma / e.delta - 0.5 * (1.0 - e.gamma) * x.ln();
        let limit = (1.0 - e.gamma) * (growth / (e.delta * e.delta) + x.ln() / e.delta);
        (
            gate > 0.0,
            format!("(r + |xi~|^2/2) gamma/delta - (1 - gamma) ln x / 2 = {gate:.6} > 0 is {}", gate > 0.0),
            Some(limit),
        )
    };
    search(
        |t| log_scaled_objective(m.r, q, e.gamma, e.delta, x, t),
        e.delta,
        holds,
        detail,
        ObjectiveKind::ScaledValue,
        limit,
        cap,
    )
}

/// Supremum of an arbitrary objective over `(0, cap]`, for cases no
/// sufficient condition covers.
pub fn capped_supremum<F>(f: F, delta: f64, kind: ObjectiveKind, cap: f64) -> Result<TauSearchResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    search(f, delta, false, "no sufficient condition applies".to_string(), kind, None, Some(cap))
}
