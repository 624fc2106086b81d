use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::generate::{generate_cohort, replication_rng};
use super::truth::{true_curve_set, TrueCurveSet};
use crate::adjust::{quantile_sorted, EstimateOptions, Estimator, Method};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::stream;
use crate::survival::CifSet;

/// A run is aborted once more than this fraction of replications fail.
pub const MAX_FAILED_REPLICATION_FRACTION: f64 = 0.02;

/// Number of evenly spaced default report times.
pub const DEFAULT_REPORT_POINTS: usize = 20;

/// Curve of a report cell: `"cif1"`, `"cif2"` or `"survival"`.
pub fn curve_name(cause: Option<usize>) -> String {
    match cause {
        Some(k) => format!("cif{k}"),
        None => "survival".into(),
    }
}

/// Replication-level summary of estimate minus truth at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub method: Method,
    pub arm: u8,
    pub curve: String,
    pub time: f64,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    pub p025: f64,
    pub p975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: ScenarioConfig,
    pub eval_times: Vec<f64>,
    pub truth: TrueCurveSet,
    pub replications: usize,
    pub failures: Vec<ReplicationFailure>,
    pub cells: Vec<ReportCell>,
    /// Wall-clock time per successful replication. Excluded from serialized reports so
    /// that they are reproducible byte for byte.
    #[serde(skip)]
    pub runtimes: Vec<Duration>,
}

impl SimulationReport {
    pub fn cell(&self, method: Method, arm: u8, curve: &str, time: f64) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.arm == arm && c.curve == curve && c.time == time)
    }

    /// One row per method, arm, curve and time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,arm,curve,time,truth,bias,rmse,p025,p975\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.method, c.arm, c.curve, c.time, c.truth, c.bias, c.rmse, c.p025, c.p975
            );
        }
        out
    }

    /// Bias and RMSE of every method and arm at `time`, one row per method and arm.
    pub fn summary_table(&self, time: f64) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {} (t = {time}), {} replications, {} failed",
            self.config.scenario,
            self.replications,
            self.failures.len()
        );
        let _ = writeln!(
            out,
            "{:<8} {:<9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "method", "arm", "bias cif1", "rmse cif1", "bias cif2", "rmse cif2", "bias surv", "rmse surv"
        );
        for method in Method::ALL {
            for arm in [0u8, 1] {
                let mut line = format!(
                    "{:<8} {:<9}",
                    method.name(),
                    if arm == 0 { "control" } else { "treatment" }
                );
                for curve in ["cif1", "cif2", "survival"] {
                    match self.cell(method, arm, curve, time) {
                        Some(c) => {
                            let _ = write!(line, " {:>9.5} {:>9.5}", c.bias, c.rmse);
                        }
                        None => line.push_str(&format!(" {:>9} {:>9}", "-", "-")),
                    }
                }
                let _ = writeln!(out, "{line}");
            }
        }
        out
    }
}

/// `DEFAULT_REPORT_POINTS` evenly spaced times up to the 90th percentile of a pilot
/// replication's observed event times, plus the scenario's spot time.
pub fn default_eval_times(config: &ScenarioConfig) -> Result<Vec<f64>> {
    let cohort = generate_cohort(config, &mut stream(config.seed, u64::MAX))?;
    let mut events: Vec<f64> = cohort
        .records()
        .iter()
        .filter(|r| r.is_event())
        .map(|r| r.time)
        .collect();
    if events.is_empty() {
        return Err(Error::NoEvents);
    }
    events.sort_by(f64::total_cmp);
    let p90 = quantile_sorted(&events, 0.9);
    let step = p90 / DEFAULT_REPORT_POINTS as f64;
    let mut times: Vec<f64> = (1..=DEFAULT_REPORT_POINTS).map(|j| j as f64 * step).collect();
    times.push(config.spot_time());
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

/// Estimates of every method in one replication, `[method][arm]`.
type ReplicationEstimates = Vec<[CifSet; 2]>;

fn run_replication(
    config: &ScenarioConfig,
    index: usize,
    times: &[f64],
    options: EstimateOptions,
) -> Result<(ReplicationEstimates, Duration)> {
    let start = Instant::now();
    let cohort = generate_cohort(config, &mut replication_rng(config, index as u64))?;
    let est = Estimator::new(&cohort, times.to_vec(), options)?;
    let curves = Method::ALL
        .iter()
        .map(|&m| {
            est.estimate(m).map_err(|e| Error::Replication {
                method: m.name(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((curves, start.elapsed()))
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<SimulationReport> {
    run_scenario_with(config, Exec::default())
}

/// Runs every replication of `config`, each from its own random stream, and reduces
/// them in index order so the report does not depend on `exec`.
pub fn run_scenario_with(config: &ScenarioConfig, exec: Exec) -> Result<SimulationReport> {
    config.validate()?;
    let times = match &config.eval_times {
        Some(t) => t.clone(),
        None => default_eval_times(config)?,
    };
    let truth = true_curve_set(config, &times);
    let options = EstimateOptions {
        exec: Exec::Sequential,
        ..EstimateOptions::default()
    };
    let m = config.n_replications;
    let results = exec.map(m, |r| run_replication(config, r, &times, options));

    let mut failures = Vec::new();
    let mut ok = Vec::with_capacity(m);
    let mut runtimes = Vec::with_capacity(m);
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok((curves, elapsed)) => {
                ok.push(curves);
                runtimes.push(elapsed);
            }
            Err(e) => failures.push(ReplicationFailure {
                index,
                message: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILED_REPLICATION_FRACTION * m as f64 {
        return Err(Error::ExcessiveFailures {
            failed: failures.len(),
            total: m,
            first: failures[0].message.clone(),
        });
    }

    let mut cells = Vec::new();
    let mut diffs = Vec::with_capacity(ok.len());
    for (mi, &method) in Method::ALL.iter().enumerate() {
        for arm in [0u8, 1] {
            let truth_arm = &truth.arms[usize::from(arm)];
            let mut curves: Vec<(Option<usize>, &[f64])> = (0..truth_arm.incidences.len())
                .map(|k| (Some(k + 1), &truth_arm.incidences[k][..]))
                .collect();
            curves.push((None, &truth_arm.survival));
            for (cause, true_values) in curves {
                for (j, &time) in times.iter().enumerate() {
                    diffs.clear();
                    diffs.extend(ok.iter().map(|rep| {
                        let set = &rep[mi][usize::from(arm)];
                        let v = match cause {
                            Some(k) => set.incidences[k - 1].values[j],
                            None => set.survival.values[j],
                        };
                        v - true_values[j]
                    }));
                    let n = diffs.len() as f64;
                    let bias = diffs.iter().sum::<f64>() / n;
                    let rmse = (diffs.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
                    diffs.sort_by(f64::total_cmp);
                    cells.push(ReportCell {
                        method,
                        arm,
                        curve: curve_name(cause),
                        time,
                        truth: true_values[j],
                        bias,
                        rmse,
                        p025: quantile_sorted(&diffs, 0.025),
                        p975: quantile_sorted(&diffs, 0.975),
                    });
                }
            }
        }
    }

    Ok(SimulationReport {
        config: config.clone(),
        eval_times: times,
        truth,
        replications: m,
        failures,
        cells,
        runtimes,
    })
}
