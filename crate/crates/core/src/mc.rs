//! Monte Carlo estimates of the periodic-evaluation objective.
//!
//! Only the per-period deflator ratios matter for the optimal wealth
//! recursion, so paths are sampled at evaluation dates. Every path owns an
//! independent ChaCha stream keyed by its index, which makes the draws
//! independent of thread scheduling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::log_utility::LogSolution;
use crate::market::{EvaluationSpec, MarketModel};
use crate::power::{PowerProblem, PowerSolution};
use crate::quadrature::{expect_deflator_stable, pairwise_sum, DeflatorLaw, DEFAULT_ORDER};

/// Target for the discounted tail when the number of periods is automatic.
pub const TAIL_EPS: f64 = 1e-8;
const MAX_AUTO_PERIODS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub n_paths: usize,
    /// `None` picks the smallest count whose tail bound is below [`TAIL_EPS`].
    pub n_periods: Option<usize>,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { n_paths: 100_000, n_periods: None, seed: 0, antithetic: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Independent samples behind `std_error`: paths, or pairs when
    /// antithetic.
    pub n_effective: usize,
    /// Bound on the expected contribution of periods beyond the horizon.
    pub truncation_bound: f64,
}

/// `|mean - analytic| <= k_sigma std_error + truncation_bound`.
pub fn compare(estimate: &ObjectiveEstimate, analytic: f64, k_sigma: f64) -> bool {
    (estimate.mean - analytic).abs() <= k_sigma * estimate.std_error + estimate.truncation_bound
}

fn normals(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// An `n_paths x n_periods` matrix of i.i.d. draws from `law`. With
/// `antithetic`, odd rows mirror the normals of the row above.
pub fn simulate_deflator_ratios(
    law: &DeflatorLaw,
    n_paths: usize,
    n_periods: usize,
    seed: u64,
    antithetic: bool,
) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let (stream, sign) = if antithetic { ((i / 2) as u64, if i % 2 == 0 { 1.0 } else { -1.0 }) } else { (i as u64, 1.0) };
            normals(seed, stream, n_periods).into_iter().map(|g| law.at(sign * g)).collect()
        })
        .collect();
    DMatrix::from_fn(n_paths, n_periods, |i, j| rows[i][j])
}

/// Runs `path_value` on the normals of every path (or antithetic pair) and
/// reduces deterministically.
fn estimate_paths<F>(cfg: &SimulationConfig, n_periods: usize, path_value: F) -> Result<ObjectiveEstimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if cfg.n_paths == 0 || n_periods == 0 {
        return Err(Error::InvalidParameter("need at least one path and one period".into()));
    }
    let samples: Vec<f64> = if cfg.antithetic {
        let pairs = (cfg.n_paths / 2).max(1);
        (0..pairs)
            .into_par_iter()
            .map(|k| {
                let g = normals(cfg.seed, k as u64, n_periods);
                let mirrored: Vec<f64> = g.iter().map(|x| -x).collect();
                Ok(0.5 * (path_value(&g)? + path_value(&mirrored)?))
            })
            .collect::<Result<_>>()?
    } else {
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|k| path_value(&normals(cfg.seed, k as u64, n_periods)))
            .collect::<Result<_>>()?
    };
    let n = samples.len();
    let mean = pairwise_sum(&samples) / n as f64;
    let sq: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
    let variance = if n > 1 { pairwise_sum(&sq) / (n - 1) as f64 } else { 0.0 };
    if !mean.is_finite() {
        return Err(Error::NonFinite("Monte Carlo mean".into()));
    }
    Ok(ObjectiveEstimate { mean, std_error: (variance / n as f64).sqrt(), n_effective: n, truncation_bound: 0.0 })
}

/// Estimates `E[f(R)]` for a single deflator ratio `R`.
pub fn estimate_one_period<F>(law: &DeflatorLaw, cfg: &SimulationConfig, f: F) -> Result<ObjectiveEstimate>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    estimate_paths(cfg, 1, |g| f(law.at(g[0])))
}

/// Smallest `N` with `c q^N / (1 - q) < TAIL_EPS`.
fn periods_for_tail(c: f64, q: f64) -> Result<usize> {
    if !(q < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("tail ratio {q} is not below one")));
    }
    if c == 0.0 || q <= 0.0 {
        return Ok(1);
    }
    let n = ((TAIL_EPS * (1.0 - q) / c).ln() / q.ln()).ceil().max(1.0);
    if n > MAX_AUTO_PERIODS as f64 {
        return Err(Error::ParameterOutOfRange(format!("{n} periods needed to reach the tail target")));
    }
    Ok(n as usize)
}

/// Power-utility objective of a policy whose gross growth over each period
/// is `policy(R)` for that period's deflator ratio `R`.
pub fn estimate_power_policy<P>(
    p: &PowerProblem,
    policy: P,
    x0: f64,
    cfg: &SimulationConfig,
) -> Result<ObjectiveEstimate>
where
    P: Fn(f64) -> Result<f64> + Sync,
{
    if !(x0 > 0.0) {
        return Err(Error::DomainError(format!("initial wealth must be positive, got {x0}")));
    }
    let law = p.law();
    let (alpha, gamma) = (p.alpha, p.eval.gamma);
    let beta = alpha * (1.0 - gamma);
    let dt = p.eval.delta * p.eval.tau;

    // expected terms: e^{-delta i tau} E[g^alpha] x0^beta E[g^beta]^{i-1} / alpha
    let order = p.quad_order().max(DEFAULT_ORDER);
    let (m_alpha, _) = expect_deflator_stable(|z| Ok(policy(z)?.powf(alpha)), &law, order, 1e-10)?;
    let (m_beta, _) = expect_deflator_stable(|z| Ok(policy(z)?.powf(beta)), &law, order, 1e-10)?;
    let q = (-dt).exp() * m_beta;
    let c = ((-dt).exp() * m_alpha * x0.powf(beta) / alpha).abs();
    let n_periods = match cfg.n_periods {
        Some(n) => n,
        None => periods_for_tail(c, q)?,
    };
    let tail = if q < 1.0 { c * q.powi(n_periods as i32) / (1.0 - q) } else { f64::INFINITY };

    let sign = alpha.signum();
    let mut est = estimate_paths(cfg, n_periods, |g| {
        let mut ln_x = x0.ln();
        let mut terms = Vec::with_capacity(g.len());
        for (i, gi) in g.iter().enumerate() {
            let growth = policy(law.at(*gi))?;
            let ln_g = growth.ln();
            let ln_term = -dt * (i + 1) as f64 + alpha * ln_g + beta * ln_x - alpha.abs().ln();
            terms.push(ln_term.exp());
            ln_x += ln_g;
        }
        Ok(sign * pairwise_sum(&terms))
    })?;
    est.truncation_bound = tail;
    Ok(est)
}

/// Objective of the optimal policy `X_i = X_{i-1} x*(y* R_i)`.
pub fn estimate_power_objective(
    sol: &PowerSolution,
    p: &PowerProblem,
    x0: f64,
    cfg: &SimulationConfig,
) -> Result<ObjectiveEstimate> {
    let map = p.ratio_map(sol)?;
    estimate_power_policy(p, |r| map.period_ratio(r), x0, cfg)
}

/// Log-utility objective of a policy with per-period gross growth
/// `policy(R)`.
pub fn estimate_log_policy<P>(
    law: &DeflatorLaw,
    e: &EvaluationSpec,
    policy: P,
    x0: f64,
    cfg: &SimulationConfig,
) -> Result<ObjectiveEstimate>
where
    P: Fn(f64) -> Result<f64> + Sync,
{
    if !(x0 > 0.0) {
        return Err(Error::DomainError(format!("initial wealth must be positive, got {x0}")));
    }
    let dt = e.delta * e.tau;
    if !(dt > 0.0) {
        return Err(Error::AssumptionViolated { margin: e.delta });
    }
    let (mean_log_growth, _) =
        expect_deflator_stable(|z| Ok(policy(z)?.ln()), law, DEFAULT_ORDER, 1e-10)?;
    // E[term_i] = e^{-delta i tau} ((1 - gamma)(ln x0 + (i - 1) m) + m)
    let expected = |i: usize| {
        (-dt * i as f64).exp()
            * ((1.0 - e.gamma) * (x0.ln() + (i - 1) as f64 * mean_log_growth) + mean_log_growth)
    };
    let tail_from = |n: usize| {
        let mut total = 0.0;
        let mut i = n + 1;
        loop {
            let t = expected(i).abs();
            total += t;
            // terms eventually decay geometrically
            if (t <= 1e-20 * total.max(1e-300) && i > n + 10) || i > n + 1_000_000 {
                break total;
            }
            i += 1;
        }
    };
    let n_periods = match cfg.n_periods {
        Some(n) => n,
        None => {
            let mut n = 1;
            while tail_from(n) >= TAIL_EPS {
                n += 1;
                if n > MAX_AUTO_PERIODS {
                    return Err(Error::ParameterOutOfRange("log tail does not decay".into()));
                }
            }
            n
        }
    };
    let mut est = estimate_paths(cfg, n_periods, |g| {
        let mut ln_x = x0.ln();
        let mut terms = Vec::with_capacity(g.len());
        for (i, gi) in g.iter().enumerate() {
            let ln_g = policy(law.at(*gi))?.ln();
            terms.push((-dt * (i + 1) as f64).exp() * ((1.0 - e.gamma) * ln_x + ln_g));
            ln_x += ln_g;
        }
        Ok(pairwise_sum(&terms))
    })?;
    est.truncation_bound = tail_from(n_periods);
    Ok(est)
}

/// Objective of the optimal log policy, whose wealth grows by `1 / R` each
/// period.
pub fn estimate_log_objective(
    s: &LogSolution,
    m: &MarketModel,
    e: &EvaluationSpec,
    x0: f64,
    cfg: &SimulationConfig,
) -> Result<ObjectiveEstimate> {
    let law = DeflatorLaw::over(m.r, s.xi_tilde_norm_sq, e.tau);
    estimate_log_policy(&law, e, |r| Ok(1.0 / r), x0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_examples() {
        let est = ObjectiveEstimate { mean: 1.0, std_error: 0.01, n_effective: 10, truncation_bound: 0.0 };
        assert!(compare(&est, 1.0, 3.0));
        assert!(!compare(&est, 1.05, 3.0));
    }

    #[test]
    fn degenerate_law_is_constant() {
        let law = DeflatorLaw::over(0.12, 0.0, 1.0);
        let m = simulate_deflator_ratios(&law, 5, 4, 3, false);
        assert!(m.iter().all(|v| (*v - (-0.12f64).exp()).abs() < 1e-15));
    }

    #[test]
    fn replay_is_identical() {
        let law = DeflatorLaw::over(0.05, 0.04, 0.5);
        let a = simulate_deflator_ratios(&law, 64, 7, 11, false);
        let b = simulate_deflator_ratios(&law, 64, 7, 11, false);
        assert_eq!(a, b);
        let c = simulate_deflator_ratios(&law, 64, 7, 12, false);
        assert_ne!(a, c);
    }

    #[test]
    fn antithetic_rows_mirror() {
        let law = DeflatorLaw::over(0.05, 0.04, 0.5);
        let m = simulate_deflator_ratios(&law, 4, 3, 1, true);
        for j in 0..3 {
            // R R' = e^{2 drift}
            assert!((m[(0, j)] * m[(1, j)] - (2.0 * law.drift).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn lognormal_mean_identity() {
        let law = DeflatorLaw::over(0.12, 0.0144, 1.0);
        let cfg = SimulationConfig { n_paths: 1_000_000, n_periods: Some(1), seed: 7, antithetic: false };
        let est = estimate_one_period(&law, &cfg, |z| Ok(z * 0.12f64.exp())).unwrap();
        assert!((est.mean - 1.0).abs() < 4.0 * est.std_error);
    }

    #[test]
    fn zero_policy_log_unit_gamma_is_deterministic() {
        let law = DeflatorLaw::over(0.12, 0.0144, 1.0);
        let e = EvaluationSpec::new(1.0, 1.0, 0.3).unwrap();
        let cfg = SimulationConfig { n_paths: 10, n_periods: None, seed: 1, antithetic: false };
        let est = estimate_log_policy(&law, &e, |_| Ok(0.12f64.exp()), 0.5, &cfg).unwrap();
        let exact = 0.12 / 0.3f64.exp_m1();
        assert!(est.std_error < 1e-14);
        assert!((est.mean - exact).abs() <= est.truncation_bound + 1e-12);
        assert!((exact - 0.343).abs() < 1e-3);
    }

    #[test]
    fn periods_for_tail_is_minimal() {
        let (c, q) = (2.0, 0.7);
        let n = periods_for_tail(c, q).unwrap();
        assert!(c * q.powi(n as i32) / (1.0 - q) < TAIL_EPS);
        assert!(c * q.powi(n as i32 - 1) / (1.0 - q) >= TAIL_EPS);
    }
}
