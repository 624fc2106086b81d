use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::newton::{first_dependent_column, maximize, Evaluation, NewtonFailure};
use super::{FitOptions, COEFFICIENT_BOUND};
use crate::error::{Error, Result};
use crate::survival::{aj_step, validate_grid, CifSet, Cohort, StepCurve};

/// Whether the treatment indicator enters the linear predictor as a final column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreatmentTerm {
    Included,
    Excluded,
}

/// What prediction does when the hazard increments at one time sum to more than 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IncrementPolicy {
    #[default]
    Error,
    /// Rescale the increments to sum to 1: the remaining event-free mass fails at that
    /// time, split across causes in proportion to their hazards.
    Saturate,
}

/// One cause's fitted log-hazard coefficients and Breslow baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseFit {
    pub cause: usize,
    /// Covariate coefficients followed by the treatment coefficient when included.
    pub coefficients: Vec<f64>,
    /// Breslow increments at the model's pooled event times, at reference
    /// covariates 0 and treatment 0.
    pub baseline_increments: Vec<f64>,
    pub iterations: usize,
    pub log_partial_likelihood: f64,
}

/// Cause-specific Cox models sharing the pooled event-time axis of the fitting cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseSpecificCoxModel {
    pub event_times: Vec<f64>,
    pub causes: Vec<CauseFit>,
    pub covariate_names: Vec<String>,
    pub treatment: TreatmentTerm,
}

impl CauseSpecificCoxModel {
    pub fn num_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = self.covariate_names.clone();
        if self.treatment == TreatmentTerm::Included {
            names.push("treatment".into());
        }
        names
    }

    /// Breslow cumulative baseline hazard of `cause` (1-based).
    pub fn baseline_cumhaz(&self, cause: usize) -> StepCurve {
        let fit = &self.causes[cause - 1];
        let mut acc = 0.0;
        let values = fit
            .baseline_increments
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        StepCurve::new(self.event_times.clone(), values, 0.0)
    }

    fn relative_hazards(&self, x: &[f64], z: u8) -> Result<Vec<f64>> {
        if x.len() != self.num_covariates() {
            return Err(Error::DimensionMismatch {
                expected: self.num_covariates(),
                got: x.len(),
            });
        }
        Ok(self
            .causes
            .iter()
            .map(|c| {
                let mut eta: f64 = c.coefficients.iter().zip(x).map(|(b, v)| b * v).sum();
                if self.treatment == TreatmentTerm::Included {
                    eta += c.coefficients[x.len()] * f64::from(z);
                }
                eta.exp()
            })
            .collect())
    }

    /// Conditional curves for covariates `x` under treatment `z`, by the product
    /// integral `S(t_j) = prod_{u <= j} (1 - sum_k dL_k(t_u | x, z))`. Beyond the last
    /// event time the prediction stays flat. An aggregate increment above 1 is an error.
    pub fn predict(&self, x: &[f64], z: u8, grid: &[f64]) -> Result<CifSet> {
        self.predict_with(x, z, grid, IncrementPolicy::Error)
    }

    pub fn predict_with(
        &self,
        x: &[f64],
        z: u8,
        grid: &[f64],
        policy: IncrementPolicy,
    ) -> Result<CifSet> {
        validate_grid(grid)?;
        let rel = self.relative_hazards(x, z)?;
        let k = self.causes.len();
        let ends: Vec<usize> = grid
            .iter()
            .map(|&g| self.event_times.partition_point(|&t| t <= g))
            .collect();
        let last = ends.last().copied().unwrap_or(0);

        let mut surv = Vec::with_capacity(grid.len());
        let mut inc = vec![Vec::with_capacity(grid.len()); k];
        let mut s = 1.0;
        let mut cum = vec![0.0; k];
        let mut hazards = vec![0.0; k];
        let mut next = 0;
        for j in 0..=last {
            while next < ends.len() && ends[next] == j {
                surv.push(s);
                for (c, v) in inc.iter_mut().zip(&cum) {
                    c.push(*v);
                }
                next += 1;
            }
            if j == last {
                break;
            }
            let mut total = 0.0;
            for ((h, r), fit) in hazards.iter_mut().zip(&rel).zip(&self.causes) {
                *h = r * fit.baseline_increments[j];
                total += *h;
            }
            if total > 1.0 {
                if policy == IncrementPolicy::Error {
                    return Err(Error::HazardIncrement {
                        time: self.event_times[j],
                        total,
                    });
                }
                for h in hazards.iter_mut() {
                    *h /= total;
                }
            }
            aj_step(&mut s, &mut cum, &hazards);
        }
        Ok(CifSet::from_grid(grid, surv, inc))
    }
}

/// See [`CauseSpecificCoxModel::predict`].
pub fn predict_conditional_cif(
    model: &CauseSpecificCoxModel,
    x: &[f64],
    z: u8,
    grid: &[f64],
) -> Result<CifSet> {
    model.predict(x, z, grid)
}

/// Breslow partial likelihood for one cause, with other causes treated as censored.
///
/// Covariates are centered internally; the log partial likelihood, score and
/// information are invariant to that shift.
pub struct CoxObjective {
    /// Centered design rows in descending time order.
    design: Vec<f64>,
    p: usize,
    /// `[start, end)` ranges of tied times in `design`, latest time first.
    groups: Vec<(usize, usize)>,
    is_event: Vec<bool>,
    means: Vec<f64>,
    event_count: usize,
}

fn design_row(record: &crate::survival::ObservedRecord, treatment: TreatmentTerm) -> Vec<f64> {
    let mut row = record.covariates.clone();
    if treatment == TreatmentTerm::Included {
        row.push(f64::from(record.treatment));
    }
    row
}

impl CoxObjective {
    pub fn new(cohort: &Cohort, cause: usize, treatment: TreatmentTerm) -> Self {
        let mut order: Vec<usize> = (0..cohort.len()).collect();
        let recs = cohort.records();
        order.sort_by(|&a, &b| recs[b].time.total_cmp(&recs[a].time));
        let rows: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| design_row(&recs[i], treatment))
            .collect();
        let p = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let means: Vec<f64> = (0..p)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let design = rows
            .iter()
            .flat_map(|r| r.iter().zip(&means).map(|(v, m)| v - m))
            .collect();
        let is_event: Vec<bool> = order
            .iter()
            .map(|&i| recs[i].status as usize == cause)
            .collect();
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = recs[order[start]].time;
            let mut end = start + 1;
            while end < order.len() && recs[order[end]].time == t {
                end += 1;
            }
            groups.push((start, end));
            start = end;
        }
        let event_count = is_event.iter().filter(|&&e| e).count();
        Self {
            design,
            p,
            groups,
            is_event,
            means,
            event_count,
        }
    }

    pub fn dimension(&self) -> usize {
        self.p
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.p..(i + 1) * self.p]
    }

    /// Log partial likelihood, score and Hessian at `beta`.
    pub fn evaluate(&self, beta: &[f64]) -> Evaluation {
        let p = self.p;
        let mut value = 0.0;
        let mut gradient = DVector::zeros(p);
        let mut hessian = DMatrix::zeros(p, p);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        for &(start, end) in &self.groups {
            let mut d = 0.0;
            for i in start..end {
                let x = self.row(i);
                let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                let r = eta.exp();
                s0 += r;
                for a in 0..p {
                    s1[a] += r * x[a];
                    for b in 0..=a {
                        s2[a * p + b] += r * x[a] * x[b];
                    }
                }
                if self.is_event[i] {
                    d += 1.0;
                    value += eta;
                    for a in 0..p {
                        gradient[a] += x[a];
                    }
                }
            }
            if d > 0.0 {
                value -= d * s0.ln();
                for a in 0..p {
                    let ma = s1[a] / s0;
                    gradient[a] -= d * ma;
                    for b in 0..=a {
                        let mb = s1[b] / s0;
                        hessian[(a, b)] -= d * (s2[a * p + b] / s0 - ma * mb);
                    }
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hessian[(b, a)] = hessian[(a, b)];
            }
        }
        Evaluation {
            value,
            gradient,
            hessian,
        }
    }

    /// Breslow increments `d_k(t_j) / sum_{risk set} exp(beta . x_i)` on `event_times`,
    /// with `x` uncentered so that the reference is the zero covariate vector.
    fn breslow(&self, beta: &[f64], times_desc: &[f64], event_times: &[f64]) -> Vec<f64> {
        let shift: f64 = beta.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        let scale = shift.exp();
        let mut out = vec![0.0; event_times.len()];
        let mut s0 = 0.0;
        let mut slot = event_times.len();
        for &(start, end) in &self.groups {
            let mut d = 0.0;
            for i in start..end {
                let eta: f64 = self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
                s0 += eta.exp();
                if self.is_event[i] {
                    d += 1.0;
                }
            }
            let t = times_desc[start];
            // Pooled event times are a superset of this group's time whenever it matters.
            while slot > 0 && event_times[slot - 1] > t {
                slot -= 1;
            }
            if slot > 0 && event_times[slot - 1] == t && d > 0.0 {
                out[slot - 1] = d / (s0 * scale);
            }
        }
        out
    }
}

/// Cause-specific Cox models for every cause, with treatment appended to the covariates.
pub fn fit_cause_specific_cox(
    cohort: &Cohort,
    options: &FitOptions,
) -> Result<CauseSpecificCoxModel> {
    fit_cause_specific_cox_with(cohort, TreatmentTerm::Included, options)
}

pub fn fit_cause_specific_cox_with(
    cohort: &Cohort,
    treatment: TreatmentTerm,
    options: &FitOptions,
) -> Result<CauseSpecificCoxModel> {
    let recs = cohort.records();
    let mut event_times: Vec<f64> = recs.iter().filter(|r| r.is_event()).map(|r| r.time).collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    if event_times.is_empty() {
        return Err(Error::NoEvents);
    }

    let mut times_desc: Vec<f64> = recs.iter().map(|r| r.time).collect();
    times_desc.sort_by(|a, b| b.total_cmp(a));

    let mut causes = Vec::with_capacity(cohort.num_causes());
    for cause in 1..=cohort.num_causes() {
        let objective = CoxObjective::new(cohort, cause, treatment);
        if objective.event_count == 0 {
            return Err(Error::NoEventsForCause(cause));
        }
        let p = objective.dimension();
        if cause == 1 && p > 0 {
            let mut cross = DMatrix::<f64>::zeros(p, p);
            for i in 0..cohort.len() {
                let x = objective.row(i);
                for a in 0..p {
                    for b in 0..p {
                        cross[(a, b)] += x[a] * x[b];
                    }
                }
            }
            if let Some(column) = first_dependent_column(&cross) {
                return Err(Error::Collinear { column });
            }
        }
        let (beta, iterations, loglik) = if p == 0 {
            (Vec::new(), 0, objective.evaluate(&[]).value)
        } else {
            let fit = maximize(
                |b: &DVector<f64>| objective.evaluate(b.as_slice()),
                DVector::zeros(p),
                options,
                COEFFICIENT_BOUND,
            )
            .map_err(|e| match e {
                NewtonFailure::Diverged { index, value } => Error::MonotoneLikelihood {
                    cause,
                    index,
                    value,
                    bound: COEFFICIENT_BOUND,
                },
                NewtonFailure::NonConvergence {
                    iterations,
                    gradient,
                } => Error::NonConvergence {
                    model: "cause-specific Cox regression",
                    iterations,
                    gradient,
                },
                NewtonFailure::Singular => Error::Singular("cause-specific Cox regression"),
            })?;
            (fit.params.as_slice().to_vec(), fit.iterations, fit.evaluation.value)
        };
        let baseline_increments = objective.breslow(&beta, &times_desc, &event_times);
        causes.push(CauseFit {
            cause,
            coefficients: beta,
            baseline_increments,
            iterations,
            log_partial_likelihood: loglik,
        });
    }
    Ok(CauseSpecificCoxModel {
        event_times,
        causes,
        covariate_names: cohort.covariate_names().to_vec(),
        treatment,
    })
}
