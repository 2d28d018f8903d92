use std::sync::Arc;

use nalgebra::DVector;

use super::moderated::{check_alpha, ModeratedUtility};
use crate::cone::{solve_cone, ConstrainedSharpe};
use crate::error::{Error, Result};
use crate::market::{check_assumption, sharpe_ratio, zeta, EvaluationSpec, MarketModel};
use crate::quadrature::{
    expect_deflator, expect_deflator_stable, make_rule, DeflatorLaw, GaussHermiteRule,
    DEFAULT_ORDER, DEFAULT_STABILITY_TOL,
};
use crate::roots::{brent, expand_positive_bracket};

const BRACKET_FACTOR: f64 = 4.0;
const MAX_EXPANSIONS: usize = 60;
const MAX_BRENT_ITER: usize = 500;
const FRACTION_TOL: f64 = 1e-6;
const DELTA_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Tolerance on `ln y*` and on the inverse marginal, in log units.
    pub tol_root: f64,
    /// Target distance `|A_k - A*|` at termination.
    pub tol_fixed_point: f64,
    /// Starting Gauss-Hermite order; raised automatically if unstable.
    pub quad_order: usize,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol_root: 1e-12, tol_fixed_point: 1e-11, quad_order: DEFAULT_ORDER, max_iter: 10_000 }
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<()> {
        if !(self.tol_root > 0.0 && self.tol_fixed_point > 0.0) {
            return Err(Error::InvalidParameter("solver tolerances must be positive".into()));
        }
        if self.quad_order == 0 || self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "quadrature order and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A power-utility evaluation problem with its constrained market price of
/// risk and quadrature rule resolved.
#[derive(Debug, Clone)]
pub struct PowerProblem {
    pub market: MarketModel,
    pub eval: EvaluationSpec,
    pub alpha: f64,
    pub cs: ConstrainedSharpe,
    pub settings: SolverSettings,
    law: DeflatorLaw,
    rule: Arc<GaussHermiteRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub a_star: f64,
    pub y_star: f64,
    /// `e^{-(delta - zeta(alpha (1 - gamma))) tau}`.
    pub contraction_modulus: f64,
    /// Lipschitz constant of `Psi` used by the stopping rule; exceeds
    /// `contraction_modulus` when `alpha < 0`.
    pub lipschitz_modulus: f64,
    /// `None` when the corresponding bound expression has a nonpositive
    /// denominator.
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub iterations: usize,
    /// `|A* - Psi(A*)|`.
    pub residual: f64,
    /// `|A_{k+1} - A_k|` for every iteration.
    pub step_history: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl PowerSolution {
    pub fn value(&self, x: f64) -> Result<f64> {
        value_function(self, x, self.alpha, self.gamma)
    }

    pub fn within_bounds(&self, slack: f64) -> bool {
        self.lower_bound.is_none_or(|lo| self.a_star >= lo - slack)
            && self.upper_bound.is_none_or(|hi| self.a_star <= hi + slack)
    }

    /// Successive step ratios `|A_{k+1} - A_k| / |A_k - A_{k-1}|`.
    pub fn step_ratios(&self) -> Vec<f64> {
        self.step_history.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect()
    }
}

/// `V(x) = A* x^{alpha (1 - gamma)} / alpha`.
pub fn value_function(sol: &PowerSolution, x: f64, alpha: f64, gamma: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("value function needs x > 0, got {x}")));
    }
    Ok(sol.a_star * x.powf(alpha * (1.0 - gamma)) / alpha)
}

/// Lower and upper bounds on `V(x)` implied by the bracket on `A*`.
pub fn value_bounds(sol: &PowerSolution, x: f64) -> Result<(Option<f64>, Option<f64>)> {
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("value bounds need x > 0, got {x}")));
    }
    let scale = x.powf(sol.alpha * (1.0 - sol.gamma)) / sol.alpha;
    let lo = sol.lower_bound.map(|b| b * scale);
    let hi = sol.upper_bound.map(|b| b * scale);
    // dividing by a negative alpha flips the bracket
    Ok(if sol.alpha > 0.0 { (lo, hi) } else { (hi, lo) })
}

/// Gross wealth growth over one period as a function of the realized
/// deflator ratio.
#[derive(Debug, Clone)]
pub struct WealthRatioMap {
    pub a_star: f64,
    pub y_star: f64,
    pub law: DeflatorLaw,
    utility: ModeratedUtility,
    tol: f64,
    rule: Arc<GaussHermiteRule>,
}

impl WealthRatioMap {
    pub fn period_ratio(&self, deflator_ratio: f64) -> Result<f64> {
        if !(deflator_ratio > 0.0) {
            return Err(Error::DomainError(format!(
                "deflator ratio must be positive, got {deflator_ratio}"
            )));
        }
        self.utility.marginal_inverse(self.y_star * deflator_ratio, self.tol)
    }

    /// `E[R x*(y* R)]`, equal to one at the optimum.
    pub fn budget(&self) -> Result<f64> {
        expect_deflator(|z| Ok(z * self.period_ratio(z)?), &self.law, &self.rule)
    }

    pub fn utility(&self) -> &ModeratedUtility {
        &self.utility
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntraPeriodProfile {
    pub t: f64,
    pub z: f64,
    /// Wealth at `t` per unit of wealth at the period start.
    pub wealth_multiplier: f64,
    /// `1 - z m_z / m`, the scalar multiplying `(sigma^T)^{-1} xi~`.
    pub exposure: f64,
    pub fractions: DVector<f64>,
}

impl PowerProblem {
    pub fn new(
        market: MarketModel,
        eval: EvaluationSpec,
        alpha: f64,
        settings: SolverSettings,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        settings.validate()?;
        let xi = sharpe_ratio(&market)?;
        let cs = solve_cone(&xi, &market.sigma_inv()?)?;
        Self::with_constrained(market, eval, alpha, cs, settings)
    }

    /// Builds the problem from an already computed cone projection.
    pub fn with_constrained(
        market: MarketModel,
        eval: EvaluationSpec,
        alpha: f64,
        cs: ConstrainedSharpe,
        settings: SolverSettings,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        settings.validate()?;
        let report = check_assumption(&market, &eval, Some(alpha), cs.xi_tilde_norm_sq());
        if !report.satisfied {
            return Err(Error::AssumptionViolated { margin: report.margin });
        }
        let law = DeflatorLaw::over(market.r, cs.xi_tilde_norm_sq(), eval.tau);
        let rule = make_rule(settings.quad_order)?;
        let mut p = Self { market, eval, alpha, cs, settings, law, rule };
        p.rule = p.resolve_rule()?;
        Ok(p)
    }

    /// Raises the quadrature order until the budget function is stable at a
    /// few probe points around the `gamma = 1` root.
    fn resolve_rule(&self) -> Result<Arc<GaussHermiteRule>> {
        let y0 = (self.zeta(self.alpha) * self.eval.tau).exp();
        let (lo, hi) = self.bounds();
        let a_probe = match (lo, hi) {
            (Some(l), Some(h)) => l.max(h),
            (Some(b), None) | (None, Some(b)) => b,
            (None, None) => 1.0,
        };
        let mut order = self.settings.quad_order;
        for a in [0.0, a_probe] {
            let u = self.utility(a)?;
            for y in [0.5 * y0, y0, 2.0 * y0] {
                let (_, n) = expect_deflator_stable(
                    |z| Ok(z * u.marginal_inverse(y * z, self.settings.tol_root)?),
                    &self.law,
                    order,
                    DEFAULT_STABILITY_TOL,
                )?;
                order = order.max(n);
            }
        }
        make_rule(order)
    }

    pub fn quad_order(&self) -> usize {
        self.rule.order
    }

    pub fn law(&self) -> DeflatorLaw {
        self.law
    }

    pub fn xi_tilde_norm_sq(&self) -> f64 {
        self.cs.xi_tilde_norm_sq()
    }

    fn zeta(&self, x: f64) -> f64 {
        zeta(x, self.market.r, self.xi_tilde_norm_sq()).expect("argument below one")
    }

    pub fn utility(&self, a: f64) -> Result<ModeratedUtility> {
        ModeratedUtility::new(a, self.alpha, self.eval.gamma)
    }

    /// `E[Phi_{h_a}(y Z / B)]`.
    pub fn dual_value(&self, a: f64, y: f64) -> Result<f64> {
        check_y(y)?;
        let u = self.utility(a)?;
        expect_deflator(|z| u.legendre(y * z, self.settings.tol_root), &self.law, &self.rule)
    }

    /// `F(y) = E[(Z / B) I(y Z / B)]`.
    pub fn budget_function(&self, a: f64, y: f64) -> Result<f64> {
        check_y(y)?;
        let u = self.utility(a)?;
        self.budget_with(&u, y)
    }

    fn budget_with(&self, u: &ModeratedUtility, y: f64) -> Result<f64> {
        expect_deflator(
            |z| Ok(z * u.marginal_inverse(y * z, self.settings.tol_root)?),
            &self.law,
            &self.rule,
        )
    }

    /// The `y` with `F(y) = wealth`.
    pub fn solve_y(&self, a: f64, wealth: f64) -> Result<f64> {
        if !(wealth > 0.0) {
            return Err(Error::DomainError(format!("wealth must be positive, got {wealth}")));
        }
        let u = self.utility(a)?;
        let excess = |y: f64| Ok(self.budget_with(&u, y)? - wealth);
        let (lo, hi) = expand_positive_bracket(excess, 1.0, BRACKET_FACTOR, MAX_EXPANSIONS)
            .map_err(|e| match e {
                Error::BracketFailure(msg) => Error::BracketFailure(format!("budget equation: {msg}")),
                other => other,
            })?;
        if lo == hi {
            return Ok(lo);
        }
        // F is close to a power of y, so the log scale is the natural one
        let ln_y = brent(
            |v: f64| Ok(self.budget_with(&u, v.exp())? - wealth),
            lo.ln(),
            hi.ln(),
            self.settings.tol_root,
            0.0,
            MAX_BRENT_ITER,
        )?;
        Ok(ln_y.exp())
    }

    pub fn solve_y_star(&self, a: f64) -> Result<f64> {
        self.solve_y(a, 1.0)
    }

    /// Returns `(H(a), y*(a))`.
    fn h_parts(&self, a: f64) -> Result<(f64, f64)> {
        let y = self.solve_y_star(a)?;
        Ok((self.alpha * (self.dual_value(a, y)? + y), y))
    }

    /// `H(a) = alpha (V~_a(y*) + y*)`.
    pub fn h_of_a(&self, a: f64) -> Result<f64> {
        Ok(self.h_parts(a)?.0)
    }

    /// `Psi(a) = e^{-delta tau} H(a)`.
    pub fn psi(&self, a: f64) -> Result<f64> {
        Ok((-self.eval.delta * self.eval.tau).exp() * self.h_of_a(a)?)
    }

    /// `e^{-(delta - zeta(alpha (1 - gamma))) tau}`.
    pub fn contraction_modulus(&self) -> f64 {
        let x = self.alpha * (1.0 - self.eval.gamma);
        (-(self.eval.delta - self.zeta(x)) * self.eval.tau).exp()
    }

    /// Lipschitz constant of `Psi` on `[0, inf)`.
    ///
    /// `Psi'(a) = e^{-delta tau} E[X_a^beta]` with `X_a` the optimal terminal
    /// wealth and `beta = alpha (1 - gamma)`. For `alpha > 0` this is at most
    /// `e^{-delta tau} sup_X E[X^beta]`, the contraction modulus. For
    /// `alpha < 0` the supremum is infinite; `Psi'` instead decreases from
    /// its value at `a = 0`, where `X_0` is the pure power optimizer and the
    /// moment is explicit.
    pub fn lipschitz_modulus(&self) -> f64 {
        let q = self.contraction_modulus();
        if self.alpha > 0.0 || self.eval.gamma == 1.0 {
            return q;
        }
        let (alpha, beta) = (self.alpha, self.alpha * (1.0 - self.eval.gamma));
        let y0 = self.law.power_moment(alpha / (alpha - 1.0)).powf(1.0 - alpha);
        let moment = y0.powf(beta / (alpha - 1.0)) * self.law.power_moment(beta / (alpha - 1.0));
        q.max((-self.eval.delta * self.eval.tau).exp() * moment)
    }

    /// Bracket on `A*`: one end from the riskless policy, the other from
    /// the unconstrained upper bound `e^{zeta(alpha) tau}` on `H(a) - a`.
    pub fn bounds(&self) -> (Option<f64>, Option<f64>) {
        let (r, alpha, gamma) = (self.market.r, self.alpha, self.eval.gamma);
        let (delta, tau) = (self.eval.delta, self.eval.tau);
        let bound = |growth: f64, rate: f64| {
            (rate > 0.0).then(|| ((growth - delta) * tau).exp() / -(-rate * tau).exp_m1())
        };
        let riskless = bound(r * alpha, delta - r * alpha * (1.0 - gamma));
        let risky = bound(self.zeta(alpha), delta - self.zeta(alpha * (1.0 - gamma)));
        if alpha > 0.0 {
            (riskless, risky)
        } else {
            (risky, riskless)
        }
    }

    /// Iterates `Psi` from the riskless-policy bound until the a posteriori
    /// error estimate falls below `tol_fixed_point`.
    pub fn fixed_point(&self) -> Result<PowerSolution> {
        let (lower, upper) = self.bounds();
        let q = self.contraction_modulus();
        let lipschitz = self.lipschitz_modulus();
        if !(lipschitz < 1.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "Psi has Lipschitz constant {lipschitz} >= 1 on [0, inf)"
            )));
        }
        let start = if self.alpha > 0.0 { lower } else { upper };
        let mut a = start.or(lower).or(upper).unwrap_or(0.0);
        let decay = (-self.eval.delta * self.eval.tau).exp();
        let stop = self.settings.tol_fixed_point * (1.0 - lipschitz) / lipschitz;

        let mut steps = Vec::new();
        for k in 1..=self.settings.max_iter {
            let next = decay * self.h_of_a(a)?;
            if !next.is_finite() {
                return Err(Error::NonFinite(format!("Psi at iteration {k}")));
            }
            let step = (next - a).abs();
            steps.push(step);
            a = next;
            if step <= stop {
                let (h, y_star) = self.h_parts(a)?;
                return Ok(PowerSolution {
                    a_star: a,
                    y_star,
                    contraction_modulus: q,
                    lipschitz_modulus: lipschitz,
                    lower_bound: lower,
                    upper_bound: upper,
                    iterations: k,
                    residual: (a - decay * h).abs(),
                    step_history: steps,
                    alpha: self.alpha,
                    gamma: self.eval.gamma,
                });
            }
        }
        Err(Error::no_convergence("fixed point of Psi", self.settings.max_iter))
    }

    pub fn ratio_map(&self, sol: &PowerSolution) -> Result<WealthRatioMap> {
        Ok(WealthRatioMap {
            a_star: sol.a_star,
            y_star: sol.y_star,
            law: self.law,
            utility: self.utility(sol.a_star)?,
            tol: self.settings.tol_root,
            rule: self.rule.clone(),
        })
    }

    /// Wealth and portfolio at time `t` into the period, given the
    /// deflator `z = (Z_t / B_t)` relative to the period start.
    pub fn intra_period_profile(
        &self,
        sol: &PowerSolution,
        t: f64,
        z: f64,
    ) -> Result<IntraPeriodProfile> {
        let tau = self.eval.tau;
        if !(0.0..=tau).contains(&t) {
            return Err(Error::DomainError(format!("t must lie in [0, {tau}], got {t}")));
        }
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::DomainError(format!("z must be positive, got {z}")));
        }
        let u = self.utility(sol.a_star)?;
        let residual = DeflatorLaw::over(self.market.r, self.xi_tilde_norm_sq(), tau - t);
        let m = |w: f64| {
            expect_deflator(
                |rr| Ok(w * rr * u.marginal_inverse(sol.y_star * w * rr, self.settings.tol_root)?),
                &residual,
                &self.rule,
            )
        };
        let m0 = m(z)?;
        let h = DELTA_STEP * z;
        let central = |h: f64| -> Result<f64> { Ok((m(z + h)? - m(z - h)?) / (2.0 * h)) };
        let coarse = central(h)?;
        let fine = central(0.5 * h)?;
        let dm = (4.0 * fine - coarse) / 3.0;

        let exposure = 1.0 - z * dm / m0;
        let fractions = &self.cs.kkt_gradient * exposure;
        if let Some(bad) = fractions.iter().find(|f| **f < -FRACTION_TOL) {
            return Err(Error::NumericalFault(format!(
                "negative portfolio fraction {bad:e} at t={t}, z={z}"
            )));
        }
        Ok(IntraPeriodProfile { t, z, wealth_multiplier: m0 / z, exposure, fractions })
    }
}

fn check_y(y: f64) -> Result<()> {
    if y > 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainError(format!("y must be positive, got {y}")))
    }
}
