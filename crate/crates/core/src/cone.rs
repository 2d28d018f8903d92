//! Projection of the market price of risk onto the no-short-selling cone.
//!
//! The dual minimizer `pi~*` solves `min |xi + A p|^2` over `p >= 0` with
//! `A = sigma^{-1}`. We use an active-set (Lawson-Hanson) iteration, which
//! terminates in finitely many steps and leaves a KKT certificate behind.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_KKT_TOL: f64 = 1e-10;

/// Dual minimizer and the modified Sharpe ratio `xi~ = xi + sigma^{-1} pi~*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSharpe {
    /// Unconstrained Sharpe ratio the projection started from.
    pub xi: DVector<f64>,
    pub pi_tilde_star: DVector<f64>,
    pub xi_tilde: DVector<f64>,
    /// `(sigma^{-1})^T xi~`; nonnegative at the optimum.
    pub kkt_gradient: DVector<f64>,
    /// `|xi~|^2`.
    pub objective: f64,
}

impl ConstrainedSharpe {
    /// Assembles a certificate from a candidate multiplier.
    pub fn from_parts(xi: &DVector<f64>, pi_tilde: DVector<f64>, sigma_inv: &DMatrix<f64>) -> Self {
        let xi_tilde = xi + sigma_inv * &pi_tilde;
        Self::with_xi_tilde(xi.clone(), pi_tilde, xi_tilde, sigma_inv)
    }

    /// Recomputes the gradient and objective for an explicit `xi~`.
    pub fn with_xi_tilde(
        xi: DVector<f64>,
        pi_tilde: DVector<f64>,
        xi_tilde: DVector<f64>,
        sigma_inv: &DMatrix<f64>,
    ) -> Self {
        let kkt_gradient = sigma_inv.transpose() * &xi_tilde;
        let objective = xi_tilde.norm_squared();
        Self { xi, pi_tilde_star: pi_tilde, xi_tilde, kkt_gradient, objective }
    }

    pub fn xi_tilde_norm_sq(&self) -> f64 {
        self.objective
    }

    pub fn xi_norm_sq(&self) -> f64 {
        self.xi.norm_squared()
    }

    /// True when no short-sale constraint binds.
    pub fn is_unconstrained(&self) -> bool {
        self.pi_tilde_star.iter().all(|p| *p == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeOptions {
    pub tol: f64,
    /// Iteration cap per asset; the total cap is `max_iter_per_asset * n`.
    pub max_iter_per_asset: usize,
}

impl Default for ConeOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_KKT_TOL, max_iter_per_asset: 100 }
    }
}

pub fn solve_cone(xi: &DVector<f64>, sigma_inv: &DMatrix<f64>) -> Result<ConstrainedSharpe> {
    solve_cone_with(xi, sigma_inv, None, ConeOptions::default())
}

/// Active-set solve, optionally warm-started from a feasible point `start`.
pub fn solve_cone_with(
    xi: &DVector<f64>,
    sigma_inv: &DMatrix<f64>,
    start: Option<&DVector<f64>>,
    opts: ConeOptions,
) -> Result<ConstrainedSharpe> {
    let n = xi.len();
    if sigma_inv.nrows() != n || sigma_inv.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "sigma_inv is {}x{}, xi has length {n}",
            sigma_inv.nrows(),
            sigma_inv.ncols()
        )));
    }
    let a = sigma_inv;
    let target = -xi;
    let max_iter = opts.max_iter_per_asset * n.max(1);

    let mut x = match start {
        Some(s) => {
            if s.len() != n || s.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidParameter("warm start must be a nonnegative vector".into()));
            }
            s.clone()
        }
        None => DVector::zeros(n),
    };
    let mut passive: Vec<bool> = x.iter().map(|v| *v > 0.0).collect();
    let mut iterations = 0;

    // bring a warm start onto a consistent passive set first
    if passive.iter().any(|p| *p) {
        feasibility_loop(a, &target, &mut x, &mut passive, &mut iterations, max_iter)?;
    }

    loop {
        let w = a.transpose() * (&target - a * &x);
        let candidate = (0..n)
            .filter(|&i| !passive[i])
            .filter(|&i| w[i] > opts.tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(enter) = candidate else { break };
        passive[enter] = true;
        feasibility_loop(a, &target, &mut x, &mut passive, &mut iterations, max_iter)?;
    }

    let cs = ConstrainedSharpe::from_parts(xi, x, a);
    if !verify_kkt(&cs, opts.tol) {
        return Err(Error::no_convergence("cone projection (KKT check)", iterations));
    }
    Ok(cs)
}

/// Inner loop: solve the unconstrained least-squares problem on the passive
/// set, stepping back along the segment whenever a component turns negative.
fn feasibility_loop(
    a: &DMatrix<f64>,
    target: &DVector<f64>,
    x: &mut DVector<f64>,
    passive: &mut [bool],
    iterations: &mut usize,
    max_iter: usize,
) -> Result<()> {
    let n = x.len();
    loop {
        *iterations += 1;
        if *iterations > max_iter {
            return Err(Error::no_convergence("cone projection", *iterations));
        }
        let z = restricted_least_squares(a, target, passive)?;
        let infeasible: Vec<usize> = (0..n).filter(|&i| passive[i] && z[i] <= 0.0).collect();
        if infeasible.is_empty() {
            *x = z;
            return Ok(());
        }
        let (step, blocking) = infeasible
            .iter()
            .map(|&i| (x[i] / (x[i] - z[i]), i))
            .fold((f64::INFINITY, usize::MAX), |acc, c| if c.0 < acc.0 { c } else { acc });
        for i in 0..n {
            x[i] += step * (z[i] - x[i]);
        }
        x[blocking] = 0.0;
        passive[blocking] = false;
        for i in 0..n {
            if passive[i] && x[i] <= f64::EPSILON * x.amax() {
                x[i] = 0.0;
                passive[i] = false;
            }
        }
    }
}

fn restricted_least_squares(
    a: &DMatrix<f64>,
    target: &DVector<f64>,
    passive: &[bool],
) -> Result<DVector<f64>> {
    let n = passive.len();
    let cols: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
    let mut z = DVector::zeros(n);
    if cols.is_empty() {
        return Ok(z);
    }
    let sub = a.select_columns(cols.iter());
    let sol = sub
        .svd(true, true)
        .solve(target, 1e-14)
        .map_err(|e| Error::NonFinite(format!("least-squares subproblem: {e}")))?;
    for (k, &i) in cols.iter().enumerate() {
        z[i] = sol[k];
    }
    Ok(z)
}

/// Checks primal feasibility, dual feasibility and complementary slackness,
/// plus consistency of the recorded objective.
pub fn verify_kkt(c: &ConstrainedSharpe, tol: f64) -> bool {
    let primal = c.pi_tilde_star.iter().all(|p| *p >= 0.0);
    let dual = c.kkt_gradient.iter().all(|g| *g >= -tol);
    let slack = c
        .pi_tilde_star
        .iter()
        .zip(c.kkt_gradient.iter())
        .all(|(p, g)| (p * g).abs() <= tol);
    let objective = (c.objective - c.xi_tilde.norm_squared()).abs() <= tol;
    primal && dual && slack && objective
}
