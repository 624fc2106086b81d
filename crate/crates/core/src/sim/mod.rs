//! The three-scenario simulation study: data generation, the true marginal curves
//! and bias/RMSE reports over replications.

mod config;
mod generate;
mod report;
mod truth;

pub use config::ScenarioConfig;
pub use generate::{
    assign_treatment, generate_cohort, generate_covariates, generate_event_times,
    generate_replication, latent_times, replication_rng, treatment_probability, COVARIATE_NAMES,
};
pub use report::{
    curve_name, default_eval_times, run_scenario, run_scenario_with, ReplicationFailure,
    ReportCell, SimulationReport, DEFAULT_REPORT_POINTS, MAX_FAILED_REPLICATION_FRACTION,
};
pub use truth::{
    composite_normal, gauss_hermite_normal, gauss_legendre, monte_carlo_cif, true_cif,
    true_curve_set, x3_rule, Quadrature, TrueCurveSet, TrueCurves, HERMITE_NODES,
};
