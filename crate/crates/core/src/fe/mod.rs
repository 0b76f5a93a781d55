//! Fixed-effects least squares and the regression family of estimators.

mod estimators;
mod solver;

pub use estimators::{
    etwfe, saturated_window, sun_abraham, twfe_event_study, twfe_static, Etwfe, SaControl, SunAbraham,
};
pub use solver::{absorb_and_solve, RegressionProblem, Solution, DEMEAN_MAX_ITER, DEMEAN_TOL};
