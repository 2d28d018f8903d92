//! The moderated utility `h_a(x) = x^alpha / alpha + a x^{alpha(1-gamma)} / alpha`,
//! its inverse marginal and its Legendre-Fenchel transform.

use crate::error::{Error, Result};

const MAX_NEWTON: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeratedUtility {
    pub a: f64,
    pub alpha: f64,
    pub gamma: f64,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha < 1.0 && alpha != 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (-inf, 0) or (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

impl ModeratedUtility {
    pub fn new(a: f64, alpha: f64, gamma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("a must be nonnegative, got {a}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        Ok(Self { a, alpha, gamma })
    }

    /// Exponent `alpha (1 - gamma)` of the continuation term.
    pub fn beta(&self) -> f64 {
        self.alpha * (1.0 - self.gamma)
    }

    /// Coefficient `a (1 - gamma)` of the continuation term in `h'`.
    fn slope_coefficient(&self) -> f64 {
        self.a * (1.0 - self.gamma)
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::DomainError(format!("h_a needs x > 0, got {x}")));
        }
        Ok((x.powf(self.alpha) + self.a * x.powf(self.beta())) / self.alpha)
    }

    /// `h'(x) = x^{alpha-1} + a (1 - gamma) x^{alpha(1-gamma)-1}`.
    pub fn marginal(&self, x: f64) -> f64 {
        x.powf(self.alpha - 1.0) + self.slope_coefficient() * x.powf(self.beta() - 1.0)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let b = self.beta();
        (self.alpha - 1.0) * x.powf(self.alpha - 2.0)
            + self.slope_coefficient() * (b - 1.0) * x.powf(b - 2.0)
    }

    /// The unique `x > 0` with `h'(x) = y`.
    ///
    /// Newton in `u = ln x`: `ln h'(e^u)` is a convex, decreasing log-sum-exp
    /// of two affine functions, so Newton started left of the root increases
    /// monotonically to it. Bisection guards the iterate anyway.
    pub fn marginal_inverse(&self, y: f64, tol: f64) -> Result<f64> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::DomainError(format!("inverse marginal needs y > 0, got {y}")));
        }
        let c = self.slope_coefficient();
        let e1 = self.alpha - 1.0;
        let ln_y = y.ln();
        if c == 0.0 {
            return Ok((ln_y / e1).exp());
        }
        let e2 = self.beta() - 1.0;
        let ln_c = c.ln();

        let mut lo = (ln_y / e1).max((ln_y - ln_c) / e2);
        let half = ln_y - std::f64::consts::LN_2;
        let mut hi = (half / e1).max((half - ln_c) / e2);

        let residual = |u: f64| -> (f64, f64) {
            let t1 = e1 * u;
            let t2 = ln_c + e2 * u;
            let m = t1.max(t2);
            let (w1, w2) = ((t1 - m).exp(), (t2 - m).exp());
            let lse = m + (w1 + w2).ln();
            let slope = (e1 * w1 + e2 * w2) / (w1 + w2);
            (lse - ln_y, slope)
        };

        let mut u = lo;
        for _ in 0..MAX_NEWTON {
            let (f, df) = residual(u);
            if f == 0.0 {
                return Ok(u.exp());
            }
            if f > 0.0 {
                lo = lo.max(u);
            } else {
                hi = hi.min(u);
            }
            let mut next = u - f / df;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let step = (next - u).abs();
            u = next;
            if step <= tol.max(4.0 * f64::EPSILON * u.abs().max(1.0)) || hi - lo <= tol {
                return Ok(u.exp());
            }
        }
        Err(Error::no_convergence("inverse marginal of h_a", MAX_NEWTON))
    }

    /// `Phi(y) = sup_x (h(x) - x y) = h(I(y)) - y I(y)`.
    pub fn legendre(&self, y: f64, tol: f64) -> Result<f64> {
        let x = self.marginal_inverse(y, tol)?;
        Ok(self.value(x)? - y * x)
    }
}

pub fn h(a: f64, alpha: f64, gamma: f64, x: f64) -> Result<f64> {
    ModeratedUtility::new(a, alpha, gamma)?.value(x)
}

pub fn h_marginal_inverse(a: f64, alpha: f64, gamma: f64, y: f64, tol: f64) -> Result<f64> {
    ModeratedUtility::new(a, alpha, gamma)?.marginal_inverse(y, tol)
}

pub fn legendre(a: f64, alpha: f64, gamma: f64, y: f64, tol: f64) -> Result<f64> {
    ModeratedUtility::new(a, alpha, gamma)?.legendre(y, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-14;

    #[test]
    fn h_values() {
        assert!((h(0.0, 0.5, 0.8, 4.0).unwrap() - 4.0).abs() < 1e-15);
        assert!((h(1.0, 0.5, 0.8, 1.0).unwrap() - 4.0).abs() < 1e-15);
        for a in [0.0, 0.7, 3.0] {
            let x = 2.5_f64;
            let expected = x.powf(0.3) / 0.3 + a / 0.3;
            assert!((h(a, 0.3, 1.0, x).unwrap() - expected).abs() < 1e-13);
        }
        assert!(matches!(h(1.0, 0.5, 0.8, 0.0), Err(Error::DomainError(_))));
        assert!(h(1.0, 0.0, 0.8, 1.0).is_err());
    }

    #[test]
    fn inverse_pure_power_cases() {
        for y in [0.01, 0.5, 2.0, 300.0_f64] {
            let pure = y.powf(1.0 / (0.5 - 1.0));
            let x0 = h_marginal_inverse(0.0, 0.5, 0.8, y, TOL).unwrap();
            let x1 = h_marginal_inverse(2.0, 0.5, 1.0, y, TOL).unwrap();
            assert!((x0 - pure).abs() <= 1e-13 * pure);
            assert!((x1 - pure).abs() <= 1e-13 * pure);
        }
    }

    #[test]
    fn inverse_matches_bisection_oracle() {
        // x^{-0.5} + 0.2 x^{-0.9} = 2 with a = 1, alpha = 0.5, gamma = 0.8
        let g = |x: f64| x.powf(-0.5) + 0.2 * x.powf(-0.9) - 2.0;
        let (mut lo, mut hi) = (1e-3, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let x = h_marginal_inverse(1.0, 0.5, 0.8, 2.0, TOL).unwrap();
        assert!((x - lo).abs() < 1e-12, "{x} vs {lo}");
    }

    #[test]
    fn inverse_round_trips_across_regimes() {
        for alpha in [-3.0, -0.5, 0.2, 0.9] {
            for gamma in [0.1, 0.8, 1.0] {
                for a in [0.0, 0.3, 50.0] {
                    let u = ModeratedUtility::new(a, alpha, gamma).unwrap();
                    for y in [1e-8, 1e-3, 0.7, 1.0, 42.0, 1e6] {
                        let x = u.marginal_inverse(y, TOL).unwrap();
                        let back = u.marginal(x);
                        assert!((back - y).abs() <= 1e-11 * y, "a={a} alpha={alpha} gamma={gamma} y={y}");
                    }
                }
            }
        }
    }

    #[test]
    fn legendre_closed_form_for_pure_power() {
        // Phi(y) = ((1 - alpha) / alpha) y^{alpha / (alpha - 1)}
        let alpha = 0.5;
        assert!((legendre(0.0, alpha, 0.8, 1.0, TOL).unwrap() - 1.0).abs() < 1e-14);
        for y in [0.1, 3.0_f64] {
            let closed = (1.0 - alpha) / alpha * y.powf(alpha / (alpha - 1.0));
            assert!((legendre(0.0, alpha, 0.8, y, TOL).unwrap() - closed).abs() < 1e-13 * closed);
        }
    }

    #[test]
    fn legendre_limits_and_shape() {
        let u = ModeratedUtility::new(1.0, 0.5, 0.8).unwrap();
        // the continuation term x^{0.1} makes the decay to zero slow
        assert!(u.legendre(1e30, TOL).unwrap() < 1e-2);
        assert!(u.legendre(1e80, TOL).unwrap() < 1e-7);
        assert!(u.legendre(1e-9, TOL).unwrap() > 1e6);
        let ys: Vec<f64> = (0..60).map(|k| 10f64.powf(-3.0 + k as f64 * 0.1)).collect();
        let phis: Vec<f64> = ys.iter().map(|y| u.legendre(*y, TOL).unwrap()).collect();
        for k in 1..ys.len() - 1 {
            assert!(phis[k] < phis[k - 1]);
            // convexity on the non-uniform grid
            let left = (phis[k] - phis[k - 1]) / (ys[k] - ys[k - 1]);
            let right = (phis[k + 1] - phis[k]) / (ys[k + 1] - ys[k]);
            assert!(right > left);
        }
    }
}
