//! Counterfactual imputation: additive two-way imputation and nuclear-norm
//! matrix completion.

mod control;
mod soft;

pub use control::{
    aggregate_effects, bjs, fit_control_model, impute_effects, Aggregate, AggregationWeights, CellEffect,
    CellEffects, ControlModel, Imputation, ObservationMask,
};
pub use soft::{
    cross_validate_lambda, lambda_max, mc_effects, soft_impute, svt, LambdaGrid, MatrixCompletion, McConfig,
    SoftImputeFit, WarmStart,
};
