//! Marginal cumulative incidence per treatment arm: crude, inverse probability
//! weighted, standardized over a Cox outcome model, and doubly robust, with
//! jackknife pseudo-observations and bootstrap bands.

mod dr;
mod estimate;
mod ipw;
mod pseudo;
mod standardize;

pub use dr::{doubly_robust_cuminc, doubly_robust_from_parts};
pub use estimate::{
    bootstrap_bands, default_grid, estimate_methods, quantile_sorted, resample_indices,
    AdjustedEstimate, ArmBands, Band, BootstrapSpec, EstimateOptions, Estimator, Method,
    DEFAULT_GRID_CAP, MAX_FAILED_RESAMPLE_FRACTION,
};
pub use ipw::{
    check_positivity, ipw_cuminc, ipw_weights, propensities, weights_from_propensities,
    WeightVector,
};
pub use pseudo::{pseudo_observations, pseudo_observations_naive, PseudoObservationSet};
pub use standardize::{standardized_cuminc, ArmPredictions};

/// Propensities must lie strictly inside `(POSITIVITY_EPSILON, 1 - POSITIVITY_EPSILON)`.
pub const POSITIVITY_EPSILON: f64 = 1e-6;
