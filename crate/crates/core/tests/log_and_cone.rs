//! Random-market checks of the cone projection and the log closed forms.

use periodic_eval::log_utility::{constraint_cost, unconstrained_log};
use periodic_eval::{sharpe_ratio, solve_cone, solve_log, verify_kkt, EvaluationSpec, MarketModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_market(rng: &mut ChaCha8Rng, n: usize) -> MarketModel {
    let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.25)).collect();
    let mut sigma = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            sigma[i * n + j] = if i == j { rng.random_range(0.1..0.4) } else { rng.random_range(-0.1..0.1) };
        }
    }
    MarketModel::new(mu, sigma, rng.random_range(0.0..0.1)).unwrap()
}

#[test]
fn constrained_sharpe_never_exceeds_unconstrained() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let e = EvaluationSpec::new(1.0, 0.7, 0.3).unwrap();
    for k in 0..100 {
        let m = random_market(&mut rng, 2 + k % 4);
        let cs = solve_cone(&sharpe_ratio(&m).unwrap(), &m.sigma_inv().unwrap()).unwrap();
        assert!(verify_kkt(&cs, 1e-10));
        assert!(cs.xi_tilde_norm_sq() <= cs.xi_norm_sq() + 1e-15);
        let s = solve_log(&m, &e, &cs).unwrap();
        let (a, _) = unconstrained_log(&m, &e).unwrap();
        assert!(s.constraint_cost >= 0.0);
        assert!((s.constraint_cost - (a - s.a_star)).abs() < 1e-12);
        assert!(s.feedback_fractions.iter().all(|f| *f >= 0.0));
    }
}

#[test]
fn cost_is_zero_without_binding_constraints() {
    let e = EvaluationSpec::new(1.0, 0.5, 0.3).unwrap();
    let m = MarketModel::diagonal(vec![0.08, 0.15, 0.2], vec![0.2, 0.25, 0.3], 0.05).unwrap();
    let cs = solve_cone(&sharpe_ratio(&m).unwrap(), &m.sigma_inv().unwrap()).unwrap();
    assert_eq!(constraint_cost(&m, &e, &cs).unwrap(), 0.0);
}

/// The feedback fractions maximize the one-period log growth
/// `pi^T (mu - r) - |sigma^T pi|^2 / 2` over `pi >= 0`; checked on a grid.
#[test]
fn feedback_matches_constrained_merton_by_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = EvaluationSpec::new(1.0, 0.8, 0.3).unwrap();
    for _ in 0..10 {
        let m = random_market(&mut rng, 2);
        let cs = solve_cone(&sharpe_ratio(&m).unwrap(), &m.sigma_inv().unwrap()).unwrap();
        let s = solve_log(&m, &e, &cs).unwrap();
        let excess = m.excess_drift();
        let growth = |p0: f64, p1: f64| {
            let pi = nalgebra::DVector::from_vec(vec![p0, p1]);
            pi.dot(&excess) - 0.5 * (m.sigma.transpose() * &pi).norm_squared()
        };
        let step = 0.005;
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..=800 {
            for j in 0..=800 {
                let (p0, p1) = (i as f64 * step, j as f64 * step);
                let g = growth(p0, p1);
                if g > best.0 {
                    best = (g, p0, p1);
                }
            }
        }
        let f = &s.feedback_fractions;
        if f.amax() < 4.0 {
            assert!((f[0] - best.1).abs() <= step && (f[1] - best.2).abs() <= step, "{f} vs {best:?}");
            assert!(growth(f[0], f[1]) >= best.0 - 1e-12);
        }
    }
}
