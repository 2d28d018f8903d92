//! Power utility `U(x) = x^alpha / alpha`: the scalar fixed point `A*`, the
//! dual root `y*`, the value function and the optimal policy.

mod closed_form;
mod moderated;
mod solver;

pub use closed_form::UnitGamma;
pub use moderated::{h, h_marginal_inverse, legendre, ModeratedUtility};
pub use solver::{
    value_bounds, value_function, IntraPeriodProfile, PowerProblem, PowerSolution,
    SolverSettings, WealthRatioMap,
};
