//! Optimal portfolios under periodic ratio-type performance evaluation with
//! a short-selling prohibition.
//!
//! An investor's wealth is evaluated every `tau` units of time through the
//! ratio `X_{T_i} / X_{T_{i-1}}^gamma`, and the discounted sum of utilities
//! of these ratios is maximized over long-only portfolios. The crate solves
//! the power-utility case through a contraction fixed point on a scalar, the
//! logarithmic case in closed form, analyses the choice of `tau`, and checks
//! both by Monte Carlo.

pub mod cone;
pub mod error;
pub mod log_utility;
pub mod market;
pub mod mc;
pub mod periodicity;
pub mod power;
pub mod quadrature;
pub mod roots;

pub use cone::{solve_cone, verify_kkt, ConstrainedSharpe};
pub use error::{Error, Result};
pub use log_utility::{solve_log, LogSolution};
pub use market::{
    check_assumption, sharpe_ratio, validate_market, zeta, EvaluationSpec, MarketModel,
    WellPosednessReport,
};
pub use mc::{ObjectiveEstimate, SimulationConfig};
pub use periodicity::{ObjectiveKind, TauSearchResult};
pub use power::{PowerProblem, PowerSolution, SolverSettings, WealthRatioMap};
pub use quadrature::{DeflatorLaw, GaussHermiteRule};
