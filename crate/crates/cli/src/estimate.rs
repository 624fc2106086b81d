use std::fmt::Write as _;
use std::path::PathBuf;

use adjcif::adjust::{
    default_grid, estimate_methods, AdjustedEstimate, ArmBands, BootstrapSpec, EstimateOptions,
    Estimator, Method,
};
use adjcif::models::{CauseSpecificCoxModel, IncrementPolicy, LogisticModel};
use adjcif::survival::{crude_arm_estimate, validate_grid};
use adjcif::{CifSet, Cohort, Exec, StepCurve};
use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;

use crate::input::{load_cohort, ColumnMap};
use crate::svg::{self, Panel, Series};
use crate::{write_output, CodeExt, Failure, EXIT_ESTIMATION, EXIT_INPUT};

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input CSV file with a header row.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, default_value = "time")]
    pub time: String,
    /// Status column: 0 = censored, k = failure from cause k.
    #[arg(long, default_value = "status")]
    pub status: String,
    /// Treatment column coded 0/1.
    #[arg(long, default_value = "treatment")]
    pub treatment: String,
    /// Covariate columns (comma separated); all remaining columns by default.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Number of causes; the largest observed status by default.
    #[arg(long)]
    pub causes: Option<usize>,
    /// Methods to run: crude, ipw, or, dr.
    #[arg(long, value_delimiter = ',', default_value = "crude,ipw,or,dr")]
    pub methods: Vec<Method>,
    /// Bootstrap resamples for percentile bands (0 = none).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Evaluation grid: `auto`, `events`, `FROM:TO:N` or a comma-separated list of times.
    #[arg(long, default_value = "auto")]
    pub grid: String,
    /// Clamp doubly robust curves to [0, 1].
    #[arg(long)]
    pub clamp_dr: bool,
    /// Fail Cox predictions whose hazard increments exceed 1 instead of saturating them.
    #[arg(long)]
    pub strict_increments: bool,
    /// Skip rows with missing values (counted in the report) instead of rejecting the file.
    #[arg(long)]
    pub drop_incomplete: bool,
    /// Maximum worker threads.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// JSON report path; printed to stdout when no output path is given.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// CSV curve table path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// SVG plot path, one panel per cause.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Meta {
    seed: u64,
    version: &'static str,
    rows_read: usize,
    rows_excluded: usize,
    excluded_lines: Vec<u64>,
    subjects: usize,
    causes: usize,
    covariates: Vec<String>,
    bootstrap: usize,
    clamp_dr: bool,
    strict_increments: bool,
}

#[derive(Debug, Serialize)]
struct Curve {
    t: Vec<f64>,
    v: Vec<f64>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct CauseCurve {
    cause: usize,
    #[serde(flatten)]
    curve: Curve,
}

#[derive(Debug, Serialize)]
struct Arm {
    z: u8,
    survival: Curve,
    cif: Vec<CauseCurve>,
}

#[derive(Debug, Serialize)]
struct Coefficients {
    names: Vec<String>,
    estimates: Vec<f64>,
    iterations: usize,
    log_likelihood: f64,
}

#[derive(Debug, Serialize)]
struct OutcomeCause {
    cause: usize,
    #[serde(flatten)]
    coefficients: Coefficients,
}

#[derive(Debug, Default, Serialize)]
struct Nuisance {
    #[serde(skip_serializing_if = "Option::is_none")]
    propensity: Option<Coefficients>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<Vec<OutcomeCause>>,
}

#[derive(Debug, Serialize)]
struct MethodReport {
    name: &'static str,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    bootstrap_reps: usize,
    failed_resamples: usize,
    arms: Vec<Arm>,
    nuisance: Nuisance,
}

#[derive(Debug, Serialize)]
struct Report {
    meta: Meta,
    methods: Vec<MethodReport>,
}

fn parse_grid(spec: &str, cohort: &Cohort) -> Result<Vec<f64>> {
    let grid = match spec.trim() {
        "auto" => default_grid(cohort)?,
        "events" => {
            let mut t: Vec<f64> = cohort
                .records()
                .iter()
                .filter(|r| r.is_event())
                .map(|r| r.time)
                .collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            t
        }
        s if s.split(':').count() == 3 => {
            let parts: Vec<&str> = s.split(':').collect();
            let from: f64 = parts[0].parse().context("grid FROM")?;
            let to: f64 = parts[1].parse().context("grid TO")?;
            let n: usize = parts[2].parse().context("grid N")?;
            if n < 2 || !from.is_finite() || !to.is_finite() || to <= from {
                bail!("grid range needs FROM < TO and N >= 2");
            }
            (0..n)
                .map(|i| from + (to - from) * i as f64 / (n - 1) as f64)
                .collect()
        }
        s => s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| anyhow!("grid value '{v}' is not a number"))
            })
            .collect::<Result<_>>()?,
    };
    if grid.is_empty() {
        bail!("grid is empty");
    }
    validate_grid(&grid)?;
    Ok(grid)
}

fn curve(grid: &[f64], v: &StepCurve, band: Option<(&StepCurve, &StepCurve)>) -> adjcif::Result<Curve> {
    Ok(Curve {
        t: grid.to_vec(),
        v: v.evaluate_many(grid)?,
        lower: band.map(|(l, _)| l.evaluate_many(grid)).transpose()?,
        upper: band.map(|(_, u)| u.evaluate_many(grid)).transpose()?,
    })
}

fn arm_report(z: u8, grid: &[f64], cif: &CifSet, bands: Option<&ArmBands>) -> adjcif::Result<Arm> {
    Ok(Arm {
        z,
        survival: curve(grid, &cif.survival, bands.map(|b| (&b.survival.lower, &b.survival.upper)))?,
        cif: cif
            .incidences
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let band = bands.map(|b| (&b.incidences[k].lower, &b.incidences[k].upper));
                Ok(CauseCurve {
                    cause: k + 1,
                    curve: curve(grid, c, band)?,
                })
            })
            .collect::<adjcif::Result<_>>()?,
    })
}

fn arms(est: &AdjustedEstimate) -> adjcif::Result<Vec<Arm>> {
    (0..2u8)
        .map(|z| {
            let bands = est.bands.as_ref().map(|b| &b[usize::from(z)]);
            arm_report(z, &est.grid, &est.per_arm[usize::from(z)], bands)
        })
        .collect()
}

/// Crude curves for whichever arms have records. The crude estimator is arm-wise,
/// so a single-arm file still has a well-defined curve.
fn single_arm_crude(cohort: &Cohort, grid: &[f64]) -> adjcif::Result<Vec<Arm>> {
    [0u8, 1]
        .into_iter()
        .filter(|&z| cohort.records().iter().any(|r| r.treatment == z))
        .map(|z| arm_report(z, grid, &crude_arm_estimate(cohort, z)?, None))
        .collect()
}

fn propensity_summary(m: &LogisticModel, cohort: &Cohort) -> Coefficients {
    let mut names = vec!["intercept".to_owned()];
    names.extend(cohort.covariate_names().iter().cloned());
    let mut estimates = vec![m.intercept];
    estimates.extend(&m.coefficients);
    Coefficients {
        names,
        estimates,
        iterations: m.iterations,
        log_likelihood: m.log_likelihood,
    }
}

fn outcome_summary(m: &CauseSpecificCoxModel) -> Vec<OutcomeCause> {
    m.causes
        .iter()
        .map(|c| OutcomeCause {
            cause: c.cause,
            coefficients: Coefficients {
                names: m.coefficient_names(),
                estimates: c.coefficients.clone(),
                iterations: c.iterations,
                log_likelihood: c.log_partial_likelihood,
            },
        })
        .collect()
}

fn nuisance(method: Method, fits: &Estimator, cohort: &Cohort) -> Nuisance {
    let propensity = matches!(method, Method::Ipw | Method::DoublyRobust);
    let outcome = matches!(method, Method::OutcomeRegression | Method::DoublyRobust);
    Nuisance {
        propensity: propensity
            .then(|| fits.propensity_model().ok())
            .flatten()
            .map(|m| propensity_summary(m, cohort)),
        outcome: outcome
            .then(|| fits.outcome_model().ok())
            .flatten()
            .map(outcome_summary),
    }
}

fn csv_table(report: &Report) -> String {
    let mut out = String::from("method,z,curve,time,estimate,lower,upper\n");
    let opt = |v: &Option<Vec<f64>>, j: usize| v.as_ref().map_or(String::new(), |v| v[j].to_string());
    for m in &report.methods {
        for arm in &m.arms {
            let curves = std::iter::once(("survival".to_owned(), &arm.survival))
                .chain(arm.cif.iter().map(|c| (format!("cif{}", c.cause), &c.curve)));
            for (name, c) in curves {
                for j in 0..c.t.len() {
                    let _ = writeln!(
                        out,
                        "{},{},{name},{},{},{},{}",
                        m.name,
                        arm.z,
                        c.t[j],
                        c.v[j],
                        opt(&c.lower, j),
                        opt(&c.upper, j)
                    );
                }
            }
        }
    }
    out
}

fn plot(report: &Report) -> String {
    let causes = report.meta.causes;
    let panels: Vec<Panel> = (1..=causes)
        .map(|k| Panel {
            title: format!("Cause {k}"),
            x_label: "time".into(),
            y_label: "cumulative incidence".into(),
            zero_line: false,
            series: report
                .methods
                .iter()
                .enumerate()
                .flat_map(|(mi, m)| {
                    m.arms.iter().map(move |arm| {
                        let c = &arm.cif[k - 1].curve;
                        Series {
                            label: format!("{} z={}", m.name, arm.z),
                            color: svg::PALETTE[mi % svg::PALETTE.len()],
                            dashed: arm.z == 0,
                            step: true,
                            x: c.t.clone(),
                            y: c.v.clone(),
                            band: c.lower.clone().zip(c.upper.clone()),
                        }
                    })
                })
                .collect(),
        })
        .collect();
    svg::render(&panels)
}

pub fn run(args: &EstimateArgs) -> Result<(), Failure> {
    let columns = ColumnMap {
        time: args.time.clone(),
        status: args.status.clone(),
        treatment: args.treatment.clone(),
        covariates: args.covariates.clone(),
    };
    let loaded = load_cohort(&args.input, &columns, args.causes, args.drop_incomplete).code(EXIT_INPUT)?;
    if !loaded.excluded_lines.is_empty() {
        eprintln!(
            "excluded {} of {} rows with missing values",
            loaded.excluded_lines.len(),
            loaded.rows_read
        );
    }
    let cohort = &loaded.cohort;
    let grid = parse_grid(&args.grid, cohort)
        .context("invalid --grid")
        .code(EXIT_INPUT)?;
    let mut methods: Vec<Method> = Vec::new();
    for &m in &args.methods {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(anyhow!("no methods requested")).code(EXIT_INPUT);
    }

    let options = EstimateOptions {
        clamp_dr: args.clamp_dr,
        increments: if args.strict_increments {
            IncrementPolicy::Error
        } else {
            IncrementPolicy::Saturate
        },
        exec: Exec::Parallel,
        ..EstimateOptions::default()
    };
    let bootstrap = (args.bootstrap > 0).then_some(BootstrapSpec {
        replicates: args.bootstrap,
        seed: args.seed,
    });
    let compute = || -> adjcif::Result<_> {
        let results = estimate_methods(cohort, &methods, &grid, bootstrap, options)?;
        let fits = Estimator::new(cohort, grid.clone(), options)?;
        let nuisances: Vec<Nuisance> = methods.iter().map(|&m| nuisance(m, &fits, cohort)).collect();
        Ok((results, nuisances))
    };
    let (results, nuisances) = match args.threads {
        Some(t) => adjcif::exec::with_thread_limit(usize::from(t), compute).code(EXIT_INPUT)?,
        None => compute(),
    }
    .code(EXIT_ESTIMATION)?;

    let mut failed = Vec::new();
    let mut reports = Vec::new();
    for ((method, result), nuisance) in methods.iter().zip(results).zip(nuisances) {
        let result = result.and_then(|e| Ok((arms(&e)?, e.bootstrap_reps, e.failed_resamples)));
        let result = match result {
            Err(adjcif::Error::EmptyArm(_)) if *method == Method::Crude => {
                eprintln!("crude: one arm is empty; reporting the other arm without bands");
                single_arm_crude(cohort, &grid).map(|a| (a, 0, 0))
            }
            other => other,
        };
        let r = match result {
            Ok((arms, bootstrap_reps, failed_resamples)) => MethodReport {
                name: method.name(),
                status: "ok",
                error: None,
                bootstrap_reps,
                failed_resamples,
                arms,
                nuisance,
            },
            Err(e) => {
                failed.push(format!("method {}: {e}", method.name()));
                MethodReport {
                    name: method.name(),
                    status: "failed",
                    error: Some(e.to_string()),
                    bootstrap_reps: args.bootstrap,
                    failed_resamples: 0,
                    arms: Vec::new(),
                    nuisance: Nuisance::default(),
                }
            }
        };
        reports.push(r);
    }
    let report = Report {
        meta: Meta {
            seed: args.seed,
            version: env!("CARGO_PKG_VERSION"),
            rows_read: loaded.rows_read,
            rows_excluded: loaded.excluded_lines.len(),
            excluded_lines: loaded.excluded_lines.clone(),
            subjects: cohort.len(),
            causes: cohort.num_causes(),
            covariates: cohort.covariate_names().to_vec(),
            bootstrap: args.bootstrap,
            clamp_dr: args.clamp_dr,
            strict_increments: args.strict_increments,
        },
        methods: reports,
    };

    let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from).code(EXIT_ESTIMATION)? + "\n";
    let any_output = args.json.is_some() || args.csv.is_some() || args.svg.is_some();
    match &args.json {
        Some(p) => write_output(p, &json)?,
        None if !any_output => print!("{json}"),
        None => {}
    }
    if let Some(p) = &args.csv {
        write_output(p, &csv_table(&report))?;
    }
    if let Some(p) = &args.svg {
        write_output(p, &plot(&report))?;
    }

    if failed.is_empty() {
        Ok(())
    } else {
        Err(anyhow!(failed.join("\n"))).code(EXIT_ESTIMATION)
    }
}
