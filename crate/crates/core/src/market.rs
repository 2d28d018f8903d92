//! Constant-coefficient market model, Sharpe ratio and the growth-rate
//! function `zeta`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower bound on the smallest eigenvalue of `sigma sigma^T`.
pub const DEFAULT_KAPPA0: f64 = 1e-10;
/// Largest accepted condition number of `sigma`.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Market with `n` risky assets driven by an `n`-dimensional Brownian motion
/// and a bond paying the constant rate `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    /// Annualized drift of each risky asset.
    pub mu: DVector<f64>,
    /// Volatility matrix, row `i` loads asset `i` on the Brownian factors.
    pub sigma: DMatrix<f64>,
    /// Risk-free rate.
    pub r: f64,
}

/// Thresholds used by [`validate_market`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationLimits {
    pub kappa0: f64,
    pub condition_cap: f64,
}

impl Default for ValidationLimits {
    fn default() -> Self {
        Self { kappa0: DEFAULT_KAPPA0, condition_cap: DEFAULT_CONDITION_CAP }
    }
}

impl MarketModel {
    /// Builds a market from a drift vector and a row-major `n x n` volatility
    /// list. The result is validated.
    pub fn new(mu: Vec<f64>, sigma_row_major: Vec<f64>, r: f64) -> Result<Self> {
        let n = mu.len();
        if sigma_row_major.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "sigma has {} entries, expected {}",
                sigma_row_major.len(),
                n * n
            )));
        }
        let m = Self {
            mu: DVector::from_vec(mu),
            sigma: DMatrix::from_row_slice(n, n, &sigma_row_major),
            r,
        };
        validate_market(&m)?;
        Ok(m)
    }

    /// Diagonal volatility shortcut.
    pub fn diagonal(mu: Vec<f64>, vols: Vec<f64>, r: f64) -> Result<Self> {
        let n = vols.len();
        let mut sigma = vec![0.0; n * n];
        for (i, v) in vols.iter().enumerate() {
            sigma[i * n + i] = *v;
        }
        Self::new(mu, sigma, r)
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// `sigma^{-1}`. Callers are expected to have validated the market.
    pub fn sigma_inv(&self) -> Result<DMatrix<f64>> {
        self.sigma
            .clone()
            .try_inverse()
            .ok_or(Error::SingularVolatility { condition: f64::INFINITY })
    }

    /// Excess drift `mu - r 1`.
    pub fn excess_drift(&self) -> DVector<f64> {
        self.mu.map(|m| m - self.r)
    }
}

/// Period length and preference parameters of the evaluation scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationSpec {
    /// Length of one evaluation period.
    pub tau: f64,
    /// Weight on the previous evaluation's wealth, in `(0, 1]`.
    pub gamma: f64,
    /// Subjective discount rate.
    pub delta: f64,
}

impl EvaluationSpec {
    pub fn new(tau: f64, gamma: f64, delta: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        Ok(Self { tau, gamma, delta })
    }
}

/// Outcome of the well-posedness check `delta > max(zeta(alpha(1 - gamma)), 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellPosednessReport {
    pub zeta_at_alpha_one_minus_gamma: f64,
    pub delta: f64,
    pub satisfied: bool,
    pub margin: f64,
}

pub fn validate_market(m: &MarketModel) -> Result<()> {
    validate_market_with(m, ValidationLimits::default())
}

pub fn validate_market_with(m: &MarketModel, limits: ValidationLimits) -> Result<()> {
    let n = m.n();
    if n == 0 {
        return Err(Error::DimensionMismatch("market needs at least one asset".into()));
    }
    if m.sigma.nrows() != n || m.sigma.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "sigma is {}x{}, expected {n}x{n}",
            m.sigma.nrows(),
            m.sigma.ncols()
        )));
    }
    if !(m.r >= 0.0 && m.r.is_finite()) {
        return Err(Error::InvalidParameter(format!("r must be nonnegative, got {}", m.r)));
    }
    if m.mu.iter().chain(m.sigma.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("market coefficients".into()));
    }

    let singular_values = m.sigma.clone().singular_values();
    let s_max = singular_values.max();
    let s_min = singular_values.min();
    if s_max == 0.0 || s_min == 0.0 {
        return Err(Error::SingularVolatility { condition: f64::INFINITY });
    }
    let condition = s_max / s_min;
    if condition > limits.condition_cap {
        return Err(Error::SingularVolatility { condition });
    }

    let gram = &m.sigma * m.sigma.transpose();
    let min_eigenvalue = gram.symmetric_eigenvalues().min();
    if min_eigenvalue < limits.kappa0 {
        return Err(Error::Degenerate { min_eigenvalue, kappa0: limits.kappa0 });
    }
    Ok(())
}

/// Market price of risk `xi` solving `sigma xi = mu - r 1`.
pub fn sharpe_ratio(m: &MarketModel) -> Result<DVector<f64>> {
    validate_market(m)?;
    let rhs = m.excess_drift();
    let lu = m.sigma.clone().lu();
    let mut xi = lu.solve(&rhs).ok_or(Error::SingularVolatility { condition: f64::INFINITY })?;
    // one step of iterative refinement
    let residual = &rhs - &m.sigma * &xi;
    if let Some(correction) = lu.solve(&residual) {
        xi += correction;
    }
    Ok(xi)
}

/// `zeta(x) = r x + x |xi~|^2 / (2 (1 - x))` for `x < 1`.
pub fn zeta(x: f64, r: f64, xi_tilde_norm_sq: f64) -> Result<f64> {
    if !(x < 1.0) {
        return Err(Error::DomainError(format!("zeta requires x < 1, got {x}")));
    }
    Ok(r * x + x * xi_tilde_norm_sq / (2.0 * (1.0 - x)))
}

/// Well-posedness check. `alpha = None` selects logarithmic utility, for
/// which only `delta > 0` is required.
pub fn check_assumption(
    m: &MarketModel,
    e: &EvaluationSpec,
    alpha: Option<f64>,
    xi_tilde_norm_sq: f64,
) -> WellPosednessReport {
    let x = alpha.map_or(0.0, |a| a * (1.0 - e.gamma));
    // alpha < 1 and gamma in (0, 1] keep x < 1
    let z = zeta(x, m.r, xi_tilde_norm_sq).unwrap_or(f64::INFINITY);
    let margin = e.delta - z.max(0.0);
    WellPosednessReport {
        zeta_at_alpha_one_minus_gamma: z,
        delta: e.delta,
        satisfied: margin > 0.0,
        margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_market() -> MarketModel {
        MarketModel::diagonal(vec![0.1, 0.15], vec![0.2, 0.25], 0.12).unwrap()
    }

    #[test]
    fn diagonal_market_validates() {
        assert!(validate_market(&reference_market()).is_ok());
    }

    #[test]
    fn zero_sigma_is_singular() {
        let m = MarketModel {
            mu: DVector::from_vec(vec![0.1, 0.2]),
            sigma: DMatrix::zeros(2, 2),
            r: 0.0,
        };
        assert!(matches!(validate_market(&m), Err(Error::SingularVolatility { .. })));
    }

    #[test]
    fn triangular_sigma_has_positive_gram_eigenvalues() {
        // characteristic polynomial of sigma sigma^T = [[0.04, 0.01], [0.01, 0.065]]
        let (a, b, d) = (0.04_f64, 0.01_f64, 0.0025_f64 + 0.0625);
        let tr = a + d;
        let det = a * d - b * b;
        let lo = 0.5 * (tr - (tr * tr - 4.0 * det).sqrt());
        assert!(lo > DEFAULT_KAPPA0);
        let m = MarketModel::new(vec![0.1, 0.15], vec![0.2, 0.0, 0.05, 0.25], 0.12).unwrap();
        let gram = &m.sigma * m.sigma.transpose();
        assert!((gram.symmetric_eigenvalues().min() - lo).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = MarketModel::new(vec![0.1, 0.15], vec![0.2, 0.0, 0.25], 0.12).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
        let m = MarketModel {
            mu: DVector::from_vec(vec![0.1, 0.2, 0.3]),
            sigma: DMatrix::identity(2, 2),
            r: 0.0,
        };
        assert!(matches!(validate_market(&m), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn nearly_degenerate_sigma_is_rejected() {
        let m = MarketModel {
            mu: DVector::from_vec(vec![0.1, 0.2]),
            sigma: DMatrix::from_row_slice(2, 2, &[1e-6, 0.0, 0.0, 0.2]),
            r: 0.0,
        };
        assert!(matches!(validate_market(&m), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn sharpe_ratio_diagonal() {
        let xi = sharpe_ratio(&reference_market()).unwrap();
        let oracle = [(0.1 - 0.12) / 0.2, (0.15 - 0.12) / 0.25];
        assert!((xi[0] - oracle[0]).abs() < 1e-15);
        assert!((xi[1] - oracle[1]).abs() < 1e-15);
    }

    #[test]
    fn sharpe_ratio_triangular_forward_substitution() {
        let m = MarketModel::new(vec![0.1, 0.15], vec![0.2, 0.0, 0.05, 0.25], 0.12).unwrap();
        let xi = sharpe_ratio(&m).unwrap();
        let x0 = (0.1 - 0.12) / 0.2;
        let x1 = ((0.15 - 0.12) - 0.05 * x0) / 0.25;
        assert!((xi[0] - x0).abs() < 1e-15 && (xi[0] + 0.10).abs() < 1e-12);
        assert!((xi[1] - x1).abs() < 1e-15 && (xi[1] - 0.14).abs() < 1e-12);
    }

    #[test]
    fn zero_excess_return_gives_zero_sharpe() {
        let m = MarketModel::diagonal(vec![0.05, 0.05], vec![0.3, 0.1], 0.05).unwrap();
        assert!(sharpe_ratio(&m).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zeta_values() {
        assert_eq!(zeta(0.0, 0.12, 0.0144).unwrap(), 0.0);
        assert!((zeta(0.5, 0.12, 0.0144).unwrap() - (0.06 + 0.5 * 0.0144 / 1.0)).abs() < 1e-15);
        assert!((zeta(0.5, 0.12, 0.0144).unwrap() - 0.0672).abs() < 1e-12);
        assert!((zeta(0.1, 0.12, 0.0144).unwrap() - 0.0128).abs() < 1e-12);
        assert!(matches!(zeta(1.0, 0.12, 0.0144), Err(Error::DomainError(_))));
    }

    #[test]
    fn zeta_blows_up_near_one() {
        let q = 0.0144;
        assert!(zeta(1.0 - 1e-8, 0.12, q).unwrap() > 1e6 * q);
    }

    #[test]
    fn zeta_increasing_and_convex_on_unit_interval() {
        let q = 0.0144;
        let h = 1e-4;
        let mut x = 0.01;
        while x < 0.99 {
            let f = |t: f64| zeta(t, 0.12, q).unwrap();
            assert!(f(x + h) > f(x));
            assert!(f(x + h) - 2.0 * f(x) + f(x - h) > 0.0);
            x += 0.01;
        }
    }

    #[test]
    fn assumption_report() {
        let m = reference_market();
        let e = EvaluationSpec::new(1.0, 0.8, 0.3).unwrap();
        let rep = check_assumption(&m, &e, Some(0.5), 0.0144);
        assert!(rep.satisfied);
        assert!((rep.margin - (0.3 - 0.0128)).abs() < 1e-12);

        let e = EvaluationSpec::new(1.0, 0.8, 0.01).unwrap();
        let rep = check_assumption(&m, &e, Some(0.5), 0.0144);
        assert!(!rep.satisfied && rep.margin < 0.0);

        let e = EvaluationSpec::new(1.0, 1.0, 1e-9).unwrap();
        let rep = check_assumption(&m, &e, Some(0.5), 0.0144);
        assert!(rep.satisfied);
        assert_eq!(rep.zeta_at_alpha_one_minus_gamma, 0.0);
    }

    #[test]
    fn evaluation_spec_rejects_bad_values() {
        assert!(EvaluationSpec::new(0.0, 0.5, 0.1).is_err());
        assert!(EvaluationSpec::new(1.0, 0.0, 0.1).is_err());
        assert!(EvaluationSpec::new(1.0, 1.1, 0.1).is_err());
        assert!(EvaluationSpec::new(1.0, 0.5, 0.0).is_err());
    }
}
