//! Staggered difference-in-differences laboratory.
//!
//! One panel model ([`panel`]), a scenario-driven simulator ([`dgp`]), the
//! regression family of estimators ([`fe`]), counterfactual imputation
//! ([`impute`]), group-time contrasts and diagnostics ([`grouptime`]) and a
//! Monte Carlo harness ([`harness`]) that scores all of them against the
//! simulator's ground truth.

pub mod dgp;
pub mod error;
pub mod estimate;
pub mod fe;
pub mod grouptime;
pub mod harness;
pub mod impute;
pub mod panel;

pub use error::{Error, Result};
