use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::newton::{first_dependent_column, maximize, Evaluation, NewtonFailure};
use super::{FitOptions, COEFFICIENT_BOUND};
use crate::error::{Error, Result};
use crate::survival::Cohort;

/// Fitted propensity model `P(Z = 1 | x) = expit(intercept + coefficients . x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl LogisticModel {
    pub fn new(intercept: f64, coefficients: Vec<f64>) -> Self {
        Self {
            intercept,
            coefficients,
            iterations: 0,
            log_likelihood: f64::NAN,
        }
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                got: x.len(),
            });
        }
        Ok(self.intercept + dot(&self.coefficients, x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 / (1 + e^-eta)` without overflow for large `|eta|`.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^eta)`.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

pub fn predict_propensity(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    model.linear_predictor(x).map(expit)
}

/// Bernoulli log-likelihood, gradient and Hessian in `(intercept, coefficients)`.
pub fn logistic_log_likelihood<R: AsRef<[f64]>>(
    features: &[R],
    labels: &[u8],
    params: &[f64],
) -> Evaluation {
    let q = params.len();
    let mut value = 0.0;
    let mut gradient = DVector::zeros(q);
    let mut hessian = DMatrix::zeros(q, q);
    let mut row = vec![1.0; q];
    for (x, &y) in features.iter().zip(labels) {
        row[1..].copy_from_slice(x.as_ref());
        let eta = dot(params, &row);
        let p = expit(eta);
        value += f64::from(y) * eta - softplus(eta);
        let resid = f64::from(y) - p;
        let w = p * (1.0 - p);
        for a in 0..q {
            gradient[a] += resid * row[a];
            for b in 0..=a {
                hessian[(a, b)] -= w * row[a] * row[b];
            }
        }
    }
    for a in 0..q {
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

/// Maximum-likelihood logistic regression with an intercept, by Newton-Raphson.
pub fn fit_logistic<R: AsRef<[f64]>>(
    features: &[R],
    labels: &[u8],
    options: &FitOptions,
) -> Result<LogisticModel> {
    let n = features.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let p = features.first().map_or(0, |r| r.as_ref().len());
    if let Some(bad) = features.iter().find(|r| r.as_ref().len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: bad.as_ref().len(),
        });
    }
    if n <= p + 1 {
        return Err(Error::TooFewObservations {
            n,
            parameters: p + 1,
        });
    }
    let treated = labels.iter().filter(|&&y| y == 1).count();
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidConfig("labels must be 0 or 1".into()));
    }
    if treated == 0 || treated == n {
        return Err(Error::SingleClass);
    }

    let mut cross = DMatrix::<f64>::zeros(p + 1, p + 1);
    let mut row = vec![1.0; p + 1];
    for x in features {
        row[1..].copy_from_slice(x.as_ref());
        for a in 0..=p {
            for b in 0..=p {
                cross[(a, b)] += row[a] * row[b];
            }
        }
    }
    if let Some(column) = first_dependent_column(&cross) {
        return Err(Error::Collinear { column });
    }

    // Start from the intercept-only solution.
    let frac = treated as f64 / n as f64;
    let mut start = DVector::zeros(p + 1);
    start[0] = (frac / (1.0 - frac)).ln();

    let objective = |b: &DVector<f64>| logistic_log_likelihood(features, labels, b.as_slice());
    let fit = maximize(objective, start, options, COEFFICIENT_BOUND).map_err(|e| match e {
        NewtonFailure::Diverged { index, value } => Error::Separation {
            index,
            value,
            bound: COEFFICIENT_BOUND,
        },
        NewtonFailure::NonConvergence {
            iterations,
            gradient,
        } => Error::NonConvergence {
            model: "logistic regression",
            iterations,
            gradient,
        },
        NewtonFailure::Singular => Error::Singular("logistic regression"),
    })?;

    // Converged onto a numerically perfect fit: the likelihood has no interior maximum.
    let perfect = features.iter().zip(labels).all(|(x, &y)| {
        row[1..].copy_from_slice(x.as_ref());
        (expit(dot(fit.params.as_slice(), &row)) - f64::from(y)).abs() < 1e-6
    });
    if perfect {
        let (index, value) = fit
            .params
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, v)| (i, *v))
            .unwrap_or((0, 0.0));
        return Err(Error::Separation {
            index,
            value,
            bound: COEFFICIENT_BOUND,
        });
    }

    Ok(LogisticModel {
        intercept: fit.params[0],
        coefficients: fit.params.as_slice()[1..].to_vec(),
        iterations: fit.iterations,
        log_likelihood: fit.evaluation.value,
    })
}

/// Propensity model for treatment given all covariates of `cohort`.
pub fn fit_propensity(cohort: &Cohort, options: &FitOptions) -> Result<LogisticModel> {
    let features: Vec<&[f64]> = cohort
        .records()
        .iter()
        .map(|r| r.covariates.as_slice())
        .collect();
    fit_logistic(&features, &cohort.treatments(), options)
}
