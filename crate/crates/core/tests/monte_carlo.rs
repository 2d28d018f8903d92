//! Monte Carlo estimates against closed forms and solver output.

use periodic_eval::log_utility::value_log;
use periodic_eval::mc::{
    compare, estimate_log_objective, estimate_log_policy, estimate_one_period,
    estimate_power_objective, estimate_power_policy, SimulationConfig,
};
use periodic_eval::power::{value_bounds, PowerProblem, SolverSettings, UnitGamma};
use periodic_eval::{sharpe_ratio, solve_cone, solve_log, DeflatorLaw, EvaluationSpec, MarketModel};

fn market() -> MarketModel {
    MarketModel::diagonal(vec![0.1, 0.15], vec![0.2, 0.25], 0.12).unwrap()
}

fn cfg(n_paths: usize, seed: u64) -> SimulationConfig {
    SimulationConfig { n_paths, n_periods: None, seed, antithetic: false }
}

fn power(gamma: f64, alpha: f64) -> PowerProblem {
    let eval = EvaluationSpec::new(1.0, gamma, 0.3).unwrap();
    PowerProblem::new(market(), eval, alpha, SolverSettings::default()).unwrap()
}

#[test]
fn log_objective_matches_closed_form() {
    let m = market();
    let e = EvaluationSpec::new(1.0, 0.8, 0.3).unwrap();
    let cs = solve_cone(&sharpe_ratio(&m).unwrap(), &m.sigma_inv().unwrap()).unwrap();
    let s = solve_log(&m, &e, &cs).unwrap();
    let est = estimate_log_objective(&s, &m, &e, 0.5, &cfg(100_000, 1)).unwrap();
    assert!(compare(&est, value_log(&s, 0.5).unwrap(), 3.0), "{est:?}");
}

#[test]
fn log_truncation_bound_covers_the_tail() {
    let m = market();
    let e = EvaluationSpec::new(1.0, 0.8, 0.3).unwrap();
    let cs = solve_cone(&sharpe_ratio(&m).unwrap(), &m.sigma_inv().unwrap()).unwrap();
    let s = solve_log(&m, &e, &cs).unwrap();
    let growth = (m.r + 0.5 * s.xi_tilde_norm_sq) * e.tau;
    let x0: f64 = 0.5;
    for n in [5, 20, 40] {
        let c = SimulationConfig { n_paths: 2, n_periods: Some(n), seed: 0, antithetic: false };
        let est = estimate_log_objective(&s, &m, &e, x0, &c).unwrap();
        // expected discounted terms beyond n, summed far out
        let tail: f64 = (n + 1..n + 5000)
            .map(|i| {
                (-0.3 * i as f64).exp()
                    * ((1.0 - e.gamma) * (x0.ln() + (i - 1) as f64 * growth) + growth)
            })
            .sum();
        assert!(est.truncation_bound >= tail.abs() * (1.0 - 1e-12), "n={n}");
    }
}

#[test]
fn antithetic_reduces_log_error() {
    let m = market();
    let e = EvaluationSpec::new(1.0, 0.8, 0.3).unwrap();
    let cs = solve_cone(&sharpe_ratio(&m).unwrap(), &m.sigma_inv().unwrap()).unwrap();
    let s = solve_log(&m, &e, &cs).unwrap();
    let plain = estimate_log_objective(&s, &m, &e, 0.5, &cfg(20_000, 3)).unwrap();
    let anti = estimate_log_objective(
        &s,
        &m,
        &e,
        0.5,
        &SimulationConfig { antithetic: true, ..cfg(20_000, 3) },
    )
    .unwrap();
    assert_eq!(anti.n_effective, 10_000);
    assert!(anti.std_error <= plain.std_error);
}

#[test]
fn zero_policy_power_objective_is_the_riskless_bound() {
    let p = power(0.8, 0.5);
    let x0: f64 = 0.5;
    let r = 0.12f64;
    let c = SimulationConfig { n_paths: 8, n_periods: None, seed: 0, antithetic: false };
    let est = estimate_power_policy(&p, |_| Ok(r.exp()), x0, &c).unwrap();
    let beta = 0.5 * 0.2;
    let exact = ((r * 0.5 - 0.3) as f64).exp() * x0.powf(beta)
        / (1.0 - (-(0.3 - r * beta) as f64).exp())
        / 0.5;
    assert!(est.std_error < 1e-12);
    assert!((est.mean - exact).abs() <= est.truncation_bound + 1e-12);
    let sol = p.fixed_point().unwrap();
    let (lo, _) = value_bounds(&sol, x0).unwrap();
    assert!((lo.unwrap() - exact).abs() < 1e-12);
}

#[test]
fn power_unit_gamma_matches_closed_form() {
    let p = power(1.0, 0.5);
    let sol = p.fixed_point().unwrap();
    let est = estimate_power_objective(&sol, &p, 1.0, &cfg(100_000, 5)).unwrap();
    let v = UnitGamma::new(0.12, p.xi_tilde_norm_sq(), 0.5, 0.3, 1.0).unwrap().value();
    assert!(compare(&est, v, 3.0), "{est:?} vs {v}");
}

#[test]
fn power_objective_below_upper_bound() {
    let p = power(0.8, 0.5);
    let sol = p.fixed_point().unwrap();
    let x0 = 0.5;
    let est = estimate_power_objective(&sol, &p, x0, &cfg(50_000, 9)).unwrap();
    let (_, hi) = value_bounds(&sol, x0).unwrap();
    assert!(est.mean <= hi.unwrap() + 3.0 * est.std_error + est.truncation_bound);
    assert!(compare(&est, sol.value(x0).unwrap(), 3.0), "{est:?}");
}

#[test]
fn dual_value_reproduced_by_sampling() {
    // V~_1(1) = E[Phi(Z / B)] on the reference market
    let p = power(0.8, 0.5);
    let u = p.utility(1.0).unwrap();
    let est = estimate_one_period(&p.law(), &cfg(1_000_000, 2), |z| u.legendre(z, 1e-13)).unwrap();
    let exact = p.dual_value(1.0, 1.0).unwrap();
    assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
}

#[test]
fn zero_policy_log_with_flat_market_is_optimal() {
    let m = MarketModel::diagonal(vec![0.12, 0.12], vec![0.2, 0.25], 0.12).unwrap();
    let e = EvaluationSpec::new(1.0, 0.8, 0.3).unwrap();
    let cs = solve_cone(&sharpe_ratio(&m).unwrap(), &m.sigma_inv().unwrap()).unwrap();
    let s = solve_log(&m, &e, &cs).unwrap();
    let c = SimulationConfig { n_paths: 4, n_periods: Some(30), seed: 0, antithetic: false };
    let optimal = estimate_log_objective(&s, &m, &e, 0.5, &c).unwrap();
    let law = DeflatorLaw::over(m.r, 0.0, e.tau);
    let bond = estimate_log_policy(&law, &e, |_| Ok(m.r.exp()), 0.5, &c).unwrap();
    assert!((optimal.mean - bond.mean).abs() < 1e-14);
}
