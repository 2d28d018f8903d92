//! Logarithmic utility, where everything is explicit:
//! `V(x) = A* + C* ln x` with a linear feedback portfolio.

use nalgebra::DVector;

use crate::cone::ConstrainedSharpe;
use crate::error::{Error, Result};
use crate::market::{sharpe_ratio, EvaluationSpec, MarketModel};

/// Smallest `delta tau` for which the constants are evaluated.
pub const MIN_DELTA_TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LogSolution {
    pub a_star: f64,
    pub c_star: f64,
    pub xi_tilde_norm_sq: f64,
    /// Fractions of wealth `(sigma^T)^{-1} xi~`.
    pub feedback_fractions: DVector<f64>,
    pub a_unconstrained: f64,
    pub constraint_cost: f64,
}

/// `(e^{delta tau} - gamma) / (e^{delta tau} - 1)^2` and `e^{delta tau} - 1`.
fn discount_factors(e: &EvaluationSpec) -> Result<(f64, f64)> {
    if !(e.delta > 0.0) {
        return Err(Error::AssumptionViolated { margin: e.delta });
    }
    let dt = e.delta * e.tau;
    if dt < MIN_DELTA_TAU {
        return Err(Error::ParameterOutOfRange(format!(
            "delta * tau = {dt:e} is below {MIN_DELTA_TAU:e}"
        )));
    }
    let em1 = dt.exp_m1();
    Ok(((em1 + 1.0 - e.gamma) / (em1 * em1), em1))
}

/// `A = (e^{delta tau} - gamma) / (e^{delta tau} - 1)^2 (r + |xi|^2 / 2) tau`
/// for a market price of risk of squared norm `norm_sq`.
pub fn a_constant(r: f64, norm_sq: f64, e: &EvaluationSpec) -> Result<f64> {
    let (k, _) = discount_factors(e)?;
    Ok(k * (r + 0.5 * norm_sq) * e.tau)
}

/// `C* = (1 - gamma) / (e^{delta tau} - 1)`.
pub fn c_constant(e: &EvaluationSpec) -> Result<f64> {
    let (_, em1) = discount_factors(e)?;
    Ok((1.0 - e.gamma) / em1)
}

pub fn solve_log(m: &MarketModel, e: &EvaluationSpec, cs: &ConstrainedSharpe) -> Result<LogSolution> {
    let q = cs.xi_tilde_norm_sq();
    let a_star = a_constant(m.r, q, e)?;
    let a_unconstrained = a_constant(m.r, cs.xi_norm_sq(), e)?;
    Ok(LogSolution {
        a_star,
        c_star: c_constant(e)?,
        xi_tilde_norm_sq: q,
        // components on binding constraints are zero up to rounding
        feedback_fractions: cs.kkt_gradient.map(|g| g.max(0.0)),
        a_unconstrained,
        constraint_cost: constraint_cost(m, e, cs)?,
    })
}

pub fn value_log(s: &LogSolution, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("value function needs x > 0, got {x}")));
    }
    Ok(s.a_star + s.c_star * x.ln())
}

/// `V(x)` as a function of the evaluation spec alone, for searches over `tau`.
pub fn value_log_at(r: f64, xi_tilde_norm_sq: f64, e: &EvaluationSpec, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("value function needs x > 0, got {x}")));
    }
    Ok(a_constant(r, xi_tilde_norm_sq, e)? + c_constant(e)? * x.ln())
}

/// `V~(y) = -ln y + |xi~|^2 tau / 2 + r tau - 1`.
pub fn dual_value_log(y: f64, m: &MarketModel, e: &EvaluationSpec, cs: &ConstrainedSharpe) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::DomainError(format!("dual value needs y > 0, got {y}")));
    }
    Ok(-y.ln() + 0.5 * cs.xi_tilde_norm_sq() * e.tau + m.r * e.tau - 1.0)
}

/// Value constant and Merton fractions `(sigma sigma^T)^{-1} (mu - r 1)` when
/// short selling is allowed.
pub fn unconstrained_log(m: &MarketModel, e: &EvaluationSpec) -> Result<(f64, DVector<f64>)> {
    let xi = sharpe_ratio(m)?;
    let fractions = m.sigma_inv()?.transpose() * &xi;
    Ok((a_constant(m.r, xi.norm_squared(), e)?, fractions))
}

/// `V_n(x) - V(x) = (e^{delta tau} - gamma) / (2 (e^{delta tau} - 1)^2) (|xi|^2 - |xi~|^2) tau`.
pub fn constraint_cost(_m: &MarketModel, e: &EvaluationSpec, cs: &ConstrainedSharpe) -> Result<f64> {
    let (k, _) = discount_factors(e)?;
    let gap = (cs.xi_norm_sq() - cs.xi_tilde_norm_sq()).max(0.0);
    Ok(0.5 * k * gap * e.tau)
}
