//! Fixtures shared by the benchmarks.

use periodic_eval::market::{EvaluationSpec, MarketModel};
use periodic_eval::power::{PowerProblem, SolverSettings};

/// Two-asset market whose first stock is excluded by the short-sale ban.
pub fn two_asset_market() -> MarketModel {
    MarketModel::diagonal(vec![0.1, 0.15], vec![0.2, 0.25], 0.12).expect("valid market")
}

/// A correlated market with `n` assets, alternating above and below `r`.
pub fn correlated_market(n: usize) -> MarketModel {
    let mu: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.09 + 0.01 * i as f64 } else { 0.04 }).collect();
    let mut sigma = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            sigma[i * n + j] = if i == j { 0.2 + 0.01 * i as f64 } else { 0.03 };
        }
    }
    MarketModel::new(mu, sigma, 0.05).expect("valid market")
}

pub fn power_problem(gamma: f64, alpha: f64) -> PowerProblem {
    let eval = EvaluationSpec::new(1.0, gamma, 0.3).expect("valid spec");
    PowerProblem::new(two_asset_market(), eval, alpha, SolverSettings::default()).expect("well posed")
}
