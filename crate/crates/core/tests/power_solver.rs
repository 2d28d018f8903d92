//! Fixed-point solver properties on the two-asset reference market.

use periodic_eval::power::{PowerProblem, SolverSettings, UnitGamma};
use periodic_eval::{EvaluationSpec, MarketModel};
use proptest::prelude::*;

fn market() -> MarketModel {
    MarketModel::diagonal(vec![0.1, 0.15], vec![0.2, 0.25], 0.12).unwrap()
}

fn problem(gamma: f64, alpha: f64, delta: f64) -> PowerProblem {
    let eval = EvaluationSpec::new(1.0, gamma, delta).unwrap();
    PowerProblem::new(market(), eval, alpha, SolverSettings::default()).unwrap()
}

#[test]
fn continuity_as_gamma_approaches_one() {
    let p = problem(1.0 - 1e-6, 0.5, 0.3);
    let sol = p.fixed_point().unwrap();
    let closed = UnitGamma::new(0.12, 0.0144, 0.5, 0.3, 1.0).unwrap().a_star();
    assert!((sol.a_star - closed).abs() < 1e-3);
}

#[test]
fn unit_gamma_grid_matches_closed_form() {
    for alpha in [-1.0, 0.3, 0.6] {
        for delta in [0.2, 0.5] {
            let p = problem(1.0, alpha, delta);
            let sol = p.fixed_point().unwrap();
            let u = UnitGamma::new(0.12, p.xi_tilde_norm_sq(), alpha, delta, 1.0).unwrap();
            assert!((sol.a_star - u.a_star()).abs() < 1e-8, "alpha={alpha} delta={delta}");
            assert!((sol.y_star - u.y_star()).abs() < 1e-8);
        }
    }
}

#[test]
fn negative_alpha_bracket_and_budget() {
    for gamma in [0.3, 0.8] {
        let p = problem(gamma, -1.0, 0.3);
        let sol = p.fixed_point().unwrap();
        assert!(sol.within_bounds(1e-12), "{sol:?}");
        let map = p.ratio_map(&sol).unwrap();
        assert!((map.budget().unwrap() - 1.0).abs() < 1e-8);
        // the fixed point is increasing in H, so Psi is monotone in a
        assert!(p.psi(1.0).unwrap() < p.psi(2.0).unwrap());
    }
}

#[test]
fn profile_wealth_is_a_martingale_under_the_deflator() {
    // E[R_t m(t, R_t) / R_t]-type identity: the deflated wealth at t has
    // expectation one, so averaging z X(t, z) over the law of z gives 1.
    let p = problem(0.8, 0.5, 0.3);
    let sol = p.fixed_point().unwrap();
    let t = 0.5;
    let law = periodic_eval::DeflatorLaw::over(0.12, p.xi_tilde_norm_sq(), t);
    let rule = periodic_eval::quadrature::make_rule(64).unwrap();
    let total = periodic_eval::quadrature::expect_deflator(
        |z| Ok(z * p.intra_period_profile(&sol, t, z)?.wealth_multiplier),
        &law,
        &rule,
    )
    .unwrap();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}

#[test]
fn portfolio_respects_the_short_sale_ban() {
    let p = problem(0.5, 0.7, 0.3);
    let sol = p.fixed_point().unwrap();
    for (t, z) in [(0.0, 1.0), (0.3, 0.6), (0.8, 1.7), (1.0, 1.2)] {
        let prof = p.intra_period_profile(&sol, t, z).unwrap();
        assert!(prof.fractions.iter().all(|f| *f >= 0.0));
        assert!(prof.fractions.dot(&p.cs.pi_tilde_star).abs() < 1e-12);
        assert!(prof.fractions[0] == 0.0);
    }
}

/// With `alpha < 0` the slope of `Psi` near `a = 0` exceeds
/// `e^{-(delta - zeta(alpha (1 - gamma))) tau}`.
#[test]
fn negative_alpha_slope_exceeds_the_positive_alpha_modulus() {
    let p = problem(0.6, -0.8, 0.3);
    let slope = (p.psi(1e-3).unwrap() - p.psi(0.0).unwrap()) / 1e-3;
    assert!(slope > p.contraction_modulus());
    assert!(slope <= p.lipschitz_modulus() + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn psi_is_a_contraction(u1 in 0.0..1.0f64, u2 in 0.0..1.0f64) {
        let p = problem(0.8, 0.5, 0.3);
        let hi = p.bounds().1.unwrap();
        let (a1, a2) = (2.0 * hi * u1, 2.0 * hi * u2);
        let q = p.contraction_modulus();
        let gap = (p.psi(a1).unwrap() - p.psi(a2).unwrap()).abs();
        prop_assert!(gap <= q * (a1 - a2).abs() + 1e-8);
    }

    #[test]
    fn psi_is_lipschitz_for_negative_alpha(u1 in 0.0..1.0f64, u2 in 0.0..1.0f64) {
        let p = problem(0.6, -0.8, 0.3);
        let hi = p.bounds().1.unwrap();
        let (a1, a2) = (2.0 * hi * u1, 2.0 * hi * u2);
        let q = p.lipschitz_modulus();
        prop_assert!(q < 1.0);
        let gap = (p.psi(a1).unwrap() - p.psi(a2).unwrap()).abs();
        prop_assert!(gap <= q * (a1 - a2).abs() + 1e-8);
    }
}
