//! Nuisance models: logistic propensity scores and cause-specific Cox regression.

mod cox;
mod logistic;
mod newton;

pub use cox::{
    fit_cause_specific_cox, fit_cause_specific_cox_with, predict_conditional_cif, CauseFit,
    CauseSpecificCoxModel, CoxObjective, IncrementPolicy, TreatmentTerm,
};
pub use logistic::{
    expit, fit_logistic, fit_propensity, logistic_log_likelihood, predict_propensity,
    LogisticModel,
};
pub use newton::Evaluation;

use crate::error::Result;
use crate::survival::{crude_arm_estimate, CifSet, Cohort};

/// Coefficients whose magnitude exceeds this bound are treated as diverging
/// (separation for the logistic model, a monotone partial likelihood for Cox).
pub const COEFFICIENT_BOUND: f64 = 30.0;

/// Step-halvings tried before a Newton iteration is declared stuck.
pub const MAX_STEP_HALVINGS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence is declared once `max_j |gradient_j|` falls below this value.
    pub gradient_tolerance: f64,
    /// Ridge added to the information matrix, relative to its largest diagonal
    /// entry, when the unpenalized Newton system cannot be factorized.
    pub ridge_fallback: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_tolerance: 1e-8,
            ridge_fallback: 1e-8,
        }
    }
}

/// Anything that predicts conditional cumulative incidence curves for a covariate
/// vector under a fixed treatment.
pub trait ConditionalIncidence: Sync {
    fn num_causes(&self) -> usize;

    /// Curves evaluated on `grid`; `S + sum_k I_k = 1` at every grid point.
    fn conditional_cif(&self, covariates: &[f64], z: u8, grid: &[f64]) -> Result<CifSet>;
}

impl ConditionalIncidence for CauseSpecificCoxModel {
    fn num_causes(&self) -> usize {
        self.causes.len()
    }

    fn conditional_cif(&self, covariates: &[f64], z: u8, grid: &[f64]) -> Result<CifSet> {
        self.predict(covariates, z, grid)
    }
}

/// A Cox model that predicts with [`IncrementPolicy::Saturate`].
#[derive(Debug, Clone, Copy)]
pub struct Saturating<'a>(pub &'a CauseSpecificCoxModel);

impl ConditionalIncidence for Saturating<'_> {
    fn num_causes(&self) -> usize {
        self.0.causes.len()
    }

    fn conditional_cif(&self, covariates: &[f64], z: u8, grid: &[f64]) -> Result<CifSet> {
        self.0
            .predict_with(covariates, z, grid, IncrementPolicy::Saturate)
    }
}

/// Per-arm Aalen-Johansen curves used as a covariate-free outcome model. On a cohort
/// without covariates this is the saturated model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmAalenJohansen {
    arms: [CifSet; 2],
}

impl ArmAalenJohansen {
    pub fn fit(cohort: &Cohort) -> Result<Self> {
        Ok(Self {
            arms: [crude_arm_estimate(cohort, 0)?, crude_arm_estimate(cohort, 1)?],
        })
    }
}

impl ConditionalIncidence for ArmAalenJohansen {
    fn num_causes(&self) -> usize {
        self.arms[0].num_causes()
    }

    fn conditional_cif(&self, _covariates: &[f64], z: u8, grid: &[f64]) -> Result<CifSet> {
        self.arms[usize::from(z.min(1))].on_grid(grid)
    }
}
