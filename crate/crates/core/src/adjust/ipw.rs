use serde::{Deserialize, Serialize};

use super::POSITIVITY_EPSILON;
use crate::error::{Error, Result};
use crate::models::{predict_propensity, LogisticModel};
use crate::survival::{aalen_johansen, build_risk_table, CifSet, Cohort};

/// Inverse probability of treatment weights, one per record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(index) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidWeight {
                index,
                value: weights[index],
            });
        }
        Ok(Self { weights })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Fails unless every propensity lies strictly inside `(eps, 1 - eps)`.
pub fn check_positivity(propensities: &[f64]) -> Result<()> {
    let eps = POSITIVITY_EPSILON;
    match propensities
        .iter()
        .position(|p| !(*p > eps && *p < 1.0 - eps))
    {
        Some(index) => Err(Error::Positivity {
            index,
            propensity: propensities[index],
            epsilon: eps,
        }),
        None => Ok(()),
    }
}

/// `P(Z = 1 | x_i)` for every record, after the positivity check.
pub fn propensities(model: &LogisticModel, cohort: &Cohort) -> Result<Vec<f64>> {
    let p = cohort
        .records()
        .iter()
        .map(|r| predict_propensity(model, &r.covariates))
        .collect::<Result<Vec<_>>>()?;
    check_positivity(&p)?;
    Ok(p)
}

/// `w_i = 1 / (Z_i P_i + (1 - Z_i)(1 - P_i))`.
pub fn weights_from_propensities(propensities: &[f64], treatments: &[u8]) -> Result<WeightVector> {
    if propensities.len() != treatments.len() {
        return Err(Error::WeightLength {
            expected: treatments.len(),
            got: propensities.len(),
        });
    }
    check_positivity(propensities)?;
    let w = propensities
        .iter()
        .zip(treatments)
        .map(|(&p, &z)| if z == 1 { 1.0 / p } else { 1.0 / (1.0 - p) })
        .collect();
    WeightVector::new(w)
}

pub fn ipw_weights(model: &LogisticModel, cohort: &Cohort) -> Result<WeightVector> {
    weights_from_propensities(&propensities(model, cohort)?, &cohort.treatments())
}

/// Weighted Aalen-Johansen on arm `z`.
pub fn ipw_cuminc(cohort: &Cohort, weights: &WeightVector, z: u8) -> Result<CifSet> {
    if weights.len() != cohort.len() {
        return Err(Error::WeightLength {
            expected: cohort.len(),
            got: weights.len(),
        });
    }
    let arm = cohort.arm(z)?;
    let w: Vec<f64> = cohort
        .records()
        .iter()
        .zip(weights.as_slice())
        .filter(|(r, _)| r.treatment == z)
        .map(|(_, w)| *w)
        .collect();
    Ok(aalen_johansen(&build_risk_table(&arm, Some(&w))?))
}
