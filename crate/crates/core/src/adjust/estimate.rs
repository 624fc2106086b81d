use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dr::doubly_robust_from_parts;
use super::ipw::{ipw_cuminc, propensities, weights_from_propensities};
use super::pseudo::{pseudo_observations, PseudoObservationSet};
use super::standardize::ArmPredictions;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::{
    fit_cause_specific_cox, fit_propensity, CauseSpecificCoxModel, FitOptions, IncrementPolicy,
    LogisticModel, Saturating,
};
use crate::rng::stream;
use crate::survival::{crude_arm_estimate, validate_grid, CifSet, Cohort, StepCurve};

/// Largest number of points in the default evaluation grid.
pub const DEFAULT_GRID_CAP: usize = 200;

/// A resampling run fails once more than this fraction of resamples cannot be fitted.
pub const MAX_FAILED_RESAMPLE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Crude,
    Ipw,
    OutcomeRegression,
    DoublyRobust,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Crude,
        Method::Ipw,
        Method::OutcomeRegression,
        Method::DoublyRobust,
    ];

    /// Short name used in reports and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Method::Crude => "crude",
            Method::Ipw => "ipw",
            Method::OutcomeRegression => "or",
            Method::DoublyRobust => "dr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crude" => Ok(Method::Crude),
            "ipw" => Ok(Method::Ipw),
            "or" | "outcome_regression" => Ok(Method::OutcomeRegression),
            "dr" | "doubly_robust" => Ok(Method::DoublyRobust),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub fit: FitOptions,
    /// Cut doubly robust values into `[0, 1]`.
    pub clamp_dr: bool,
    /// Handling of outcome-model hazard increments above 1. Saturating by default:
    /// tied events in resamples routinely push single Breslow increments past 1 for
    /// high-risk covariate patterns.
    pub increments: IncrementPolicy,
    pub exec: Exec,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            clamp_dr: false,
            increments: IncrementPolicy::Saturate,
            exec: Exec::default(),
        }
    }
}

/// Distinct event times of the pooled cohort, thinned to [`DEFAULT_GRID_CAP`]
/// points at evenly spaced ranks when there are more.
pub fn default_grid(cohort: &Cohort) -> Result<Vec<f64>> {
    let mut times: Vec<f64> = cohort
        .records()
        .iter()
        .filter(|r| r.is_event())
        .map(|r| r.time)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.is_empty() {
        return Err(Error::NoEvents);
    }
    if times.len() <= DEFAULT_GRID_CAP {
        return Ok(times);
    }
    let m = times.len() - 1;
    let cap = DEFAULT_GRID_CAP - 1;
    let mut grid: Vec<f64> = (0..=cap)
        .map(|j| times[(j * m + cap / 2) / cap])
        .collect();
    grid.dedup();
    Ok(grid)
}

struct PropensityFit {
    model: LogisticModel,
    propensities: Vec<f64>,
}

struct OutcomeFit {
    model: CauseSpecificCoxModel,
    arms: [ArmPredictions; 2],
}

/// Estimates for one cohort and grid, fitting each nuisance model at most once
/// across methods.
pub struct Estimator<'a> {
    cohort: &'a Cohort,
    grid: Vec<f64>,
    options: EstimateOptions,
    propensity: OnceCell<Result<PropensityFit>>,
    outcome: OnceCell<Result<OutcomeFit>>,
    pseudo: OnceCell<Result<PseudoObservationSet>>,
}

fn cached<T>(cell: &OnceCell<Result<T>>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    cell.get_or_init(init).as_ref().map_err(Clone::clone)
}

impl<'a> Estimator<'a> {
    pub fn new(cohort: &'a Cohort, grid: Vec<f64>, options: EstimateOptions) -> Result<Self> {
        validate_grid(&grid)?;
        Ok(Self {
            cohort,
            grid,
            options,
            propensity: OnceCell::new(),
            outcome: OnceCell::new(),
            pseudo: OnceCell::new(),
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn propensity_fit(&self) -> Result<&PropensityFit> {
        cached(&self.propensity, || {
            let model = fit_propensity(self.cohort, &self.options.fit)?;
            let propensities = propensities(&model, self.cohort)?;
            Ok(PropensityFit {
                model,
                propensities,
            })
        })
    }

    fn outcome_fit(&self) -> Result<&OutcomeFit> {
        cached(&self.outcome, || {
            let model = fit_cause_specific_cox(self.cohort, &self.options.fit)?;
            let (grid, exec) = (&self.grid, self.options.exec);
            let arm = |z| match self.options.increments {
                IncrementPolicy::Error => ArmPredictions::compute(&model, self.cohort, z, grid, exec),
                IncrementPolicy::Saturate => {
                    ArmPredictions::compute(&Saturating(&model), self.cohort, z, grid, exec)
                }
            };
            let arms = [arm(0)?, arm(1)?];
            Ok(OutcomeFit { model, arms })
        })
    }

    fn pseudo(&self) -> Result<&PseudoObservationSet> {
        cached(&self.pseudo, || pseudo_observations(self.cohort, &self.grid))
    }

    pub fn propensity_model(&self) -> Result<&LogisticModel> {
        self.propensity_fit().map(|f| &f.model)
    }

    pub fn outcome_model(&self) -> Result<&CauseSpecificCoxModel> {
        self.outcome_fit().map(|f| &f.model)
    }

    /// Curves for `z = 0` and `z = 1`, in that order, on the estimator's grid.
    pub fn estimate(&self, method: Method) -> Result<[CifSet; 2]> {
        let grid = &self.grid;
        let both = |f: &dyn Fn(u8) -> Result<CifSet>| -> Result<[CifSet; 2]> { Ok([f(0)?, f(1)?]) };
        match method {
            Method::Crude => both(&|z| crude_arm_estimate(self.cohort, z)?.on_grid(grid)),
            Method::Ipw => {
                let fit = self.propensity_fit()?;
                let w = weights_from_propensities(&fit.propensities, &self.cohort.treatments())?;
                both(&|z| ipw_cuminc(self.cohort, &w, z)?.on_grid(grid))
            }
            Method::OutcomeRegression => {
                let fit = self.outcome_fit()?;
                Ok([fit.arms[0].standardized(), fit.arms[1].standardized()])
            }
            Method::DoublyRobust => {
                let prop = self.propensity_fit()?;
                let out = self.outcome_fit()?;
                let pseudo = self.pseudo()?;
                let treatments = self.cohort.treatments();
                both(&|z| {
                    let arm = &out.arms[usize::from(z)];
                    let blocks: Vec<&[f64]> =
                        (1..=self.cohort.num_causes()).map(|k| arm.cause(k)).collect();
                    doubly_robust_from_parts(
                        pseudo,
                        &blocks,
                        &prop.propensities,
                        &treatments,
                        z,
                        self.options.clamp_dr,
                    )
                })
            }
        }
    }
}

/// Pointwise percentile band of one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: StepCurve,
    pub upper: StepCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmBands {
    pub survival: Band,
    pub incidences: Vec<Band>,
}

/// One method's curves for both arms, with bootstrap bands when resampling was requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedEstimate {
    pub method: Method,
    pub grid: Vec<f64>,
    /// Indexed by treatment value.
    pub per_arm: [CifSet; 2],
    pub bands: Option<[ArmBands; 2]>,
    pub bootstrap_reps: usize,
    pub failed_resamples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub seed: u64,
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn band(grid: &[f64], samples: &[&[f64]], value_at_zero: f64) -> Band {
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut col = Vec::with_capacity(samples.len());
    for j in 0..grid.len() {
        col.clear();
        col.extend(samples.iter().map(|s| s[j]));
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, 0.025));
        upper.push(quantile_sorted(&col, 0.975));
    }
    Band {
        lower: StepCurve::new(grid.to_vec(), lower, value_at_zero),
        upper: StepCurve::new(grid.to_vec(), upper, value_at_zero),
    }
}

fn arm_bands(grid: &[f64], resamples: &[&[CifSet; 2]], z: usize) -> ArmBands {
    let surv: Vec<&[f64]> = resamples.iter().map(|r| &r[z].survival.values[..]).collect();
    let k = resamples[0][z].num_causes();
    ArmBands {
        survival: band(grid, &surv, 1.0),
        incidences: (0..k)
            .map(|c| {
                let s: Vec<&[f64]> = resamples
                    .iter()
                    .map(|r| &r[z].incidences[c].values[..])
                    .collect();
                band(grid, &s, 0.0)
            })
            .collect(),
    }
}

/// Subject indices of bootstrap resample `b`.
pub fn resample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = stream(seed, b as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Point estimates for each method, with percentile bands from subject-level
/// resampling when `bootstrap` is given. Both nuisance models are refitted in every
/// resample. A resample whose fit fails is dropped and counted per method.
///
/// Results are returned per method so that one failing method leaves the others intact.
pub fn estimate_methods(
    cohort: &Cohort,
    methods: &[Method],
    grid: &[f64],
    bootstrap: Option<BootstrapSpec>,
    options: EstimateOptions,
) -> Result<Vec<Result<AdjustedEstimate>>> {
    let point = Estimator::new(cohort, grid.to_vec(), options)?;
    let points: Vec<Result<[CifSet; 2]>> = methods.iter().map(|&m| point.estimate(m)).collect();

    let reps = bootstrap.map_or(0, |b| b.replicates);
    let resampled: Vec<Vec<Result<[CifSet; 2]>>> = match bootstrap {
        Some(spec) if spec.replicates > 0 => {
            let inner = EstimateOptions {
                exec: Exec::Sequential,
                ..options
            };
            options.exec.map(spec.replicates, |b| {
                let idx = resample_indices(cohort.len(), spec.seed, b);
                let estimates = cohort
                    .resample(&idx)
                    .and_then(|c| {
                        let e = Estimator::new(&c, grid.to_vec(), inner)?;
                        Ok(methods.iter().map(|&m| e.estimate(m)).collect::<Vec<_>>())
                    });
                match estimates {
                    Ok(v) => v,
                    Err(e) => vec![Err(e); methods.len()],
                }
            })
        }
        _ => Vec::new(),
    };

    Ok(methods
        .iter()
        .zip(points)
        .enumerate()
        .map(|(mi, (&method, point))| {
            let per_arm = point?;
            let mut bands = None;
            let mut failed = 0;
            if reps > 0 {
                let ok: Vec<&[CifSet; 2]> = resampled
                    .iter()
                    .filter_map(|r| r[mi].as_ref().ok())
                    .collect();
                failed = reps - ok.len();
                if failed as f64 > MAX_FAILED_RESAMPLE_FRACTION * reps as f64 {
                    return Err(Error::BootstrapFailures {
                        method: method.name(),
                        failed,
                        total: reps,
                    });
                }
                bands = Some([arm_bands(grid, &ok, 0), arm_bands(grid, &ok, 1)]);
            }
            Ok(AdjustedEstimate {
                method,
                grid: grid.to_vec(),
                per_arm,
                bands,
                bootstrap_reps: reps,
                failed_resamples: failed,
            })
        })
        .collect())
}

/// Single-method form of [`estimate_methods`] with `replicates` resamples.
pub fn bootstrap_bands(
    cohort: &Cohort,
    method: Method,
    grid: &[f64],
    replicates: usize,
    seed: u64,
    options: EstimateOptions,
) -> Result<AdjustedEstimate> {
    if replicates == 0 {
        return Err(Error::InvalidConfig("bootstrap needs at least one resample".into()));
    }
    let spec = BootstrapSpec { replicates, seed };
    estimate_methods(cohort, &[method], grid, Some(spec), options)?
        .pop()
        .expect("one method requested")
}
