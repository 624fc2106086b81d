use nalgebra::{DMatrix, DVector};

use super::{FitOptions, MAX_STEP_HALVINGS};

/// Log-likelihood with its gradient and Hessian at one parameter point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Evaluation {
    pub fn max_abs_gradient(&self) -> f64 {
        self.gradient.amax()
    }
}

pub(crate) struct Maximum {
    pub params: DVector<f64>,
    pub evaluation: Evaluation,
    pub iterations: usize,
    /// Log-likelihood after each accepted iterate, starting with the initial point.
    #[allow(dead_code)]
    pub trace: Vec<f64>,
}

#[derive(Debug)]
pub(crate) enum NewtonFailure {
    Diverged { index: usize, value: f64 },
    NonConvergence { iterations: usize, gradient: f64 },
    Singular,
}

/// Relative slack for "the log-likelihood did not decrease": rounding in a sum of
/// n terms, nothing more.
const ROUNDING_SLACK: f64 = 1e-12;

/// Largest Newton step still compatible with convergence, relative to `1 + max |param|`.
const STEP_TOLERANCE: f64 = 1e-6;

fn newton_direction(eval: &Evaluation, ridge: f64) -> Option<DVector<f64>> {
    let info = -&eval.hessian;
    if let Some(chol) = info.clone().cholesky() {
        return Some(chol.solve(&eval.gradient));
    }
    let scale = info.diagonal().amax().max(1.0);
    let mut damped = info;
    for j in 0..damped.nrows() {
        damped[(j, j)] += ridge * scale;
    }
    damped.cholesky().map(|c| c.solve(&eval.gradient))
}

/// Damped Newton-Raphson ascent with step-halving.
pub(crate) fn maximize<F>(
    objective: F,
    start: DVector<f64>,
    options: &FitOptions,
    bound: f64,
) -> Result<Maximum, NewtonFailure>
where
    F: Fn(&DVector<f64>) -> Evaluation,
{
    let mut params = start;
    let mut eval = objective(&params);
    let mut trace = vec![eval.value];
    for iteration in 0..=options.max_iterations {
        let direction = newton_direction(&eval, options.ridge_fallback);
        // A small gradient alone is not enough: on a monotone likelihood the
        // gradient decays while Newton steps stay of order one.
        if eval.max_abs_gradient() < options.gradient_tolerance
            && direction
                .as_ref()
                .is_none_or(|d| d.amax() <= STEP_TOLERANCE * (1.0 + params.amax()))
        {
            return Ok(Maximum {
                params,
                evaluation: eval,
                iterations: iteration,
                trace,
            });
        }
        if iteration == options.max_iterations {
            break;
        }
        let direction = direction.ok_or(NewtonFailure::Singular)?;
        let slack = ROUNDING_SLACK * (1.0 + eval.value.abs());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_STEP_HALVINGS {
            let candidate = &params + &direction * step;
            let next = objective(&candidate);
            if next.value.is_finite() && next.value >= eval.value - slack {
                accepted = Some((candidate, next));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, next)) = accepted else {
            return Err(NewtonFailure::NonConvergence {
                iterations: iteration + 1,
                gradient: eval.max_abs_gradient(),
            });
        };
        if let Some((index, value)) = candidate
            .iter()
            .enumerate()
            .find(|(_, v)| v.abs() > bound)
            .map(|(i, v)| (i, *v))
        {
            return Err(NewtonFailure::Diverged { index, value });
        }
        params = candidate;
        eval = next;
        trace.push(eval.value);
    }
    Err(NewtonFailure::NonConvergence {
        iterations: options.max_iterations,
        gradient: eval.max_abs_gradient(),
    })
}

/// Index of the first column that is (numerically) a linear combination of the
/// earlier ones, from a pivot-free Cholesky of the cross-product matrix.
pub(crate) fn first_dependent_column(cross: &DMatrix<f64>) -> Option<usize> {
    let p = cross.nrows();
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut diag = cross[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 1e-10 * cross[(j, j)].max(f64::MIN_POSITIVE) {
            return Some(j);
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..p {
            let mut v = cross[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    None
}
