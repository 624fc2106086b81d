use super::ipw::{check_positivity, propensities};
use super::pseudo::{pseudo_observations, PseudoObservationSet};
use super::standardize::ArmPredictions;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::{ConditionalIncidence, LogisticModel};
use crate::survival::{CifSet, Cohort};

/// Augmented IPW combination of pseudo-observations and outcome predictions:
///
/// `I_k^z(t) = (1/n) sum_i [y*_{i,k}(t) A_i - m_{i,k}(t) (A_i - P_i)] / P_i`
///
/// with `A_i = 1[Z_i = z]`, `P_i = P(Z_i = z | X_i)` and `m_{i,k}` the predicted
/// conditional incidence; `predicted[k]` is row-major `n x grid.len()` like the
/// pseudo-observations. Survival is `1 - sum_k I_k`. With `clamp` every value is cut
/// into `[0, 1]` afterwards.
pub fn doubly_robust_from_parts(
    pseudo: &PseudoObservationSet,
    predicted: &[&[f64]],
    propensity_treated: &[f64],
    treatments: &[u8],
    z: u8,
    clamp: bool,
) -> Result<CifSet> {
    let n = pseudo.len();
    let g = pseudo.grid().len();
    if propensity_treated.len() != n || treatments.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: propensity_treated.len().min(treatments.len()),
        });
    }
    if predicted.len() != pseudo.num_causes() {
        return Err(Error::DimensionMismatch {
            expected: pseudo.num_causes(),
            got: predicted.len(),
        });
    }
    if let Some(bad) = predicted.iter().find(|b| b.len() != n * g) {
        return Err(Error::DimensionMismatch {
            expected: n * g,
            got: bad.len(),
        });
    }
    check_positivity(propensity_treated)?;

    let mut inc = Vec::with_capacity(predicted.len());
    for (k, pred) in predicted.iter().enumerate() {
        let y = pseudo.cause(k + 1);
        let mut acc = vec![0.0; g];
        for i in 0..n {
            let a = if treatments[i] == z { 1.0 } else { 0.0 };
            let p = if z == 1 {
                propensity_treated[i]
            } else {
                1.0 - propensity_treated[i]
            };
            let (yr, mr) = (&y[i * g..(i + 1) * g], &pred[i * g..(i + 1) * g]);
            for j in 0..g {
                acc[j] += (yr[j] * a - mr[j] * (a - p)) / p;
            }
        }
        inc.push(acc.into_iter().map(|s| s / n as f64).collect::<Vec<_>>());
    }
    let mut surv: Vec<f64> = (0..g)
        .map(|j| 1.0 - inc.iter().map(|c| c[j]).sum::<f64>())
        .collect();
    if clamp {
        for v in surv.iter_mut().chain(inc.iter_mut().flatten()) {
            *v = v.clamp(0.0, 1.0);
        }
    }
    Ok(CifSet::from_grid(pseudo.grid(), surv, inc))
}

/// Doubly robust marginal incidence of arm `z`, unclamped.
pub fn doubly_robust_cuminc<M: ConditionalIncidence + ?Sized>(
    cohort: &Cohort,
    propensity: &LogisticModel,
    outcome: &M,
    grid: &[f64],
    z: u8,
) -> Result<CifSet> {
    let p = propensities(propensity, cohort)?;
    let pseudo = pseudo_observations(cohort, grid)?;
    let pred = ArmPredictions::compute(outcome, cohort, z, grid, Exec::Sequential)?;
    let blocks: Vec<&[f64]> = (1..=cohort.num_causes()).map(|k| pred.cause(k)).collect();
    doubly_robust_from_parts(&pseudo, &blocks, &p, &cohort.treatments(), z, false)
}
