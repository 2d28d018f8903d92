//! Explicit solution when `gamma = 1`: every period is an independent
//! Merton problem on the constrained market.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::market::zeta;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitGamma {
    pub r: f64,
    pub xi_tilde_norm_sq: f64,
    pub alpha: f64,
    pub delta: f64,
    pub tau: f64,
}

impl UnitGamma {
    pub fn new(r: f64, xi_tilde_norm_sq: f64, alpha: f64, delta: f64, tau: f64) -> Result<Self> {
        super::moderated::check_alpha(alpha)?;
        if !(delta > 0.0 && tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need delta > 0 and tau > 0, got delta={delta}, tau={tau}"
            )));
        }
        Ok(Self { r, xi_tilde_norm_sq, alpha, delta, tau })
    }

    pub fn zeta_alpha(&self) -> f64 {
        zeta(self.alpha, self.r, self.xi_tilde_norm_sq).expect("alpha < 1 checked on construction")
    }

    /// `e^{(zeta(alpha) - delta) tau} / (1 - e^{-delta tau})`.
    pub fn a_star(&self) -> f64 {
        ((self.zeta_alpha() - self.delta) * self.tau).exp() / -(-self.delta * self.tau).exp_m1()
    }

    pub fn y_star(&self) -> f64 {
        (self.zeta_alpha() * self.tau).exp()
    }

    /// `H(a) = a + e^{zeta(alpha) tau}`.
    pub fn h_of_a(&self, a: f64) -> f64 {
        a + self.y_star()
    }

    pub fn value(&self) -> f64 {
        self.a_star() / self.alpha
    }

    /// `e^{zeta(alpha) tau / (alpha - 1)} R^{1 / (alpha - 1)}`.
    pub fn period_ratio(&self, deflator_ratio: f64) -> f64 {
        let e = 1.0 / (self.alpha - 1.0);
        (self.zeta_alpha() * self.tau * e).exp() * deflator_ratio.powf(e)
    }

    /// Merton fractions `(sigma^T)^{-1} xi~ / (1 - alpha)`, given
    /// `(sigma^T)^{-1} xi~`.
    pub fn fractions(&self, direction: &DVector<f64>) -> DVector<f64> {
        direction / (1.0 - self.alpha)
    }
}
