//! Gauss-Hermite quadrature against the standard normal law, specialised to
//! expectations of functionals of the lognormal deflator `Z_t / B_t`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 64;
pub const MAX_ORDER: usize = 512;
pub const DEFAULT_STABILITY_TOL: f64 = 1e-10;

/// Nodes and probability weights with `sum w_k f(x_k) ~ E[f(G)]`, `G ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermiteRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermiteRule {
    /// `E[f(G)]`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let mut terms: Vec<f64> = Vec::with_capacity(self.order);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            if *w > 0.0 {
                terms.push(w * f(*x));
            }
        }
        pairwise_sum(&terms)
    }
}

/// Law of `exp(drift + s G)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflatorLaw {
    pub s: f64,
    pub drift: f64,
}

impl DeflatorLaw {
    /// Deflator `Z_h / B_h` over a horizon `h` when `Z` is driven by `xi~`.
    pub fn over(r: f64, xi_tilde_norm_sq: f64, horizon: f64) -> Self {
        Self {
            s: (xi_tilde_norm_sq * horizon).sqrt(),
            drift: -0.5 * xi_tilde_norm_sq * horizon - r * horizon,
        }
    }

    pub fn at(&self, g: f64) -> f64 {
        (self.drift + self.s * g).exp()
    }

    /// Closed-form `E[Z^p]`.
    pub fn power_moment(&self, p: f64) -> f64 {
        (p * self.drift + 0.5 * p * p * self.s * self.s).exp()
    }

    pub fn median(&self) -> f64 {
        self.drift.exp()
    }
}

static RULE_CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermiteRule>>>> = OnceLock::new();

/// Returns the (cached) rule of the given order.
pub fn make_rule(order: usize) -> Result<Arc<GaussHermiteRule>> {
    if order == 0 {
        return Err(Error::InvalidParameter("quadrature order must be at least 1".into()));
    }
    let cache = RULE_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&order) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(build_rule(order));
    cache.lock().unwrap().insert(order, rule.clone());
    Ok(rule)
}

/// Golub-Welsch on the Jacobi matrix of the orthonormal probabilists'
/// Hermite polynomials, followed by Newton polishing of each node and
/// Christoffel-function weights where they are representable.
fn build_rule(n: usize) -> GaussHermiteRule {
    if n == 1 {
        return GaussHermiteRule { order: 1, nodes: vec![0.0], weights: vec![1.0] };
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n - 1 {
        let b = ((k + 1) as f64).sqrt();
        jacobi[(k, k + 1)] = b;
        jacobi[(k + 1, k)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| (eig.eigenvalues[j], eig.eigenvectors[(0, j)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    for (x, w) in pairs.iter_mut() {
        for _ in 0..3 {
            let (pn, pn1, _) = orthonormal_hermite(n, *x);
            let dx = pn / ((n as f64).sqrt() * pn1);
            if !dx.is_finite() {
                break;
            }
            *x -= dx;
        }
        let (_, _, christoffel) = orthonormal_hermite(n, *x);
        let cw = 1.0 / christoffel;
        if cw.is_finite() && christoffel.is_finite() {
            *w = cw;
        }
    }

    // enforce the symmetry of the normal law
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for j in 0..n {
        let k = n - 1 - j;
        nodes[j] = 0.5 * (pairs[j].0 - pairs[k].0);
        weights[j] = 0.5 * (pairs[j].1 + pairs[k].1);
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total = pairwise_sum(&weights);
    weights.iter_mut().for_each(|w| *w /= total);
    GaussHermiteRule { order: n, nodes, weights }
}

/// `(p_n(x), p_{n-1}(x), sum_{k<n} p_k(x)^2)` for the orthonormal family.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sum_sq)
}

/// `sum_k w_k f(exp(drift + s x_k))`.
pub fn expect_deflator<F>(mut f: F, law: &DeflatorLaw, rule: &GaussHermiteRule) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut terms = Vec::with_capacity(rule.order);
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        if *w == 0.0 {
            continue;
        }
        let z = law.at(*x);
        let v = f(z)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("integrand at deflator value {z:e}")));
        }
        terms.push(w * v);
    }
    Ok(pairwise_sum(&terms))
}

/// Evaluates at `order` and `2 order`, doubling until the two agree to
/// `rel_tol (1 + |value|)`. Returns the higher-order value and the order at
/// which agreement was reached.
pub fn expect_deflator_stable<F>(
    mut f: F,
    law: &DeflatorLaw,
    order: usize,
    rel_tol: f64,
) -> Result<(f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut n = order.max(1);
    let mut current = expect_deflator(&mut f, law, &*make_rule(n)?)?;
    while n < MAX_ORDER {
        let doubled = expect_deflator(&mut f, law, &*make_rule(2 * n)?)?;
        if (doubled - current).abs() <= rel_tol * (1.0 + doubled.abs()) {
            return Ok((doubled, n));
        }
        n *= 2;
        current = doubled;
    }
    Err(Error::no_convergence("quadrature order escalation", n))
}

/// Pairwise (cascade) summation; the result does not depend on how the
/// terms were produced, only on their order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders() {
        let r1 = make_rule(1).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert_eq!(r1.weights, vec![1.0]);
        let r2 = make_rule(2).unwrap();
        assert!((r2.nodes[0] + 1.0).abs() < 1e-15 && (r2.nodes[1] - 1.0).abs() < 1e-15);
        assert!((r2.weights[0] - 0.5).abs() < 1e-15 && (r2.weights[1] - 0.5).abs() < 1e-15);
        assert!(make_rule(0).is_err());
    }

    #[test]
    fn moment_invariants_across_orders() {
        for order in [2, 3, 5, 8, 16, 33, 64, 128, 256, 512] {
            let r = make_rule(order).unwrap();
            let s0: f64 = r.weights.iter().sum();
            assert!((s0 - 1.0).abs() < 1e-14, "order {order}: {s0}");
            assert!(r.weights.iter().all(|w| *w >= 0.0));
            assert!(r.expect(|x| x).abs() < 1e-12, "order {order}");
            assert!((r.expect(|x| x * x) - 1.0).abs() < 1e-12, "order {order}");
        }
    }

    #[test]
    fn fourth_moment_at_order_twenty() {
        let r = make_rule(20).unwrap();
        assert!((r.expect(|x| x.powi(4)) - 3.0).abs() < 1e-10);
        // exact up to degree 2n - 1
        assert!((r.expect(|x| x.powi(10)) - 945.0).abs() < 1e-8);
    }

    #[test]
    fn lognormal_identities() {
        let rule = make_rule(DEFAULT_ORDER).unwrap();
        let s = 0.12;
        let martingale = DeflatorLaw { s, drift: -0.5 * s * s };
        assert!((expect_deflator(|z| Ok(z), &martingale, &rule).unwrap() - 1.0).abs() < 1e-10);

        let law = DeflatorLaw::over(0.12, 0.0144, 1.0);
        let log_mean = expect_deflator(|z| Ok(z.ln()), &law, &rule).unwrap();
        assert!((log_mean - law.drift).abs() < 1e-14);

        // power moment, alpha = 0.5 gives exponent alpha / (alpha - 1) = -1
        let alpha: f64 = 0.5;
        let p = alpha / (alpha - 1.0);
        let law = DeflatorLaw { s: 0.12, drift: -0.12 - 0.5 * 0.0144 };
        let closed = (p * law.drift + 0.5 * p * p * law.s * law.s).exp();
        let quad = expect_deflator(|z| Ok(z.powf(p)), &law, &rule).unwrap();
        assert!((quad - closed).abs() < 1e-12 * closed);
        assert!((law.power_moment(p) - closed).abs() < 1e-15 * closed);
    }

    #[test]
    fn unit_mean_after_discounting_on_grid() {
        let rule = make_rule(DEFAULT_ORDER).unwrap();
        for r in [0.0, 0.03, 0.12] {
            for xi in [0.0, 0.1, 0.4, 1.0] {
                for tau in [0.25, 1.0, 5.0] {
                    let law = DeflatorLaw::over(r, xi * xi, tau);
                    let m = expect_deflator(|z| Ok(z), &law, &rule).unwrap() * (r * tau).exp();
                    assert!((m - 1.0).abs() < 1e-8, "r={r} xi={xi} tau={tau}: {m}");
                }
            }
        }
    }

    #[test]
    fn escalation_for_wide_laws() {
        let law = DeflatorLaw { s: 3.0, drift: -4.5 };
        let (v, order) = expect_deflator_stable(|z| Ok(z), &law, 8, 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        assert!(order > 8);
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        let rule = make_rule(8).unwrap();
        let law = DeflatorLaw::over(0.1, 0.01, 1.0);
        assert!(matches!(
            expect_deflator(|_| Ok(f64::NAN), &law, &rule),
            Err(Error::NonFinite(_))
        ));
    }
}
