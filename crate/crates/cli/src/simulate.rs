use std::path::PathBuf;
use std::time::Instant;

use adjcif::adjust::Method;
use adjcif::sim::{curve_name, run_scenario_with, ScenarioConfig, SimulationReport};
use adjcif::Exec;
use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use crate::svg::{self, Panel, Series};
use crate::{write_output, CodeExt, Failure, EXIT_INPUT, EXIT_SIMULATION};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file whose keys mirror the scenario configuration fields.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report times (comma separated); a pilot-based default when unset.
    #[arg(long, value_delimiter = ',')]
    pub eval_times: Option<Vec<f64>>,
    /// Maximum worker threads.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// JSON report path.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// CSV table of bias and RMSE per method, arm, curve and time.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// SVG plot of bias over time, one panel per curve.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Serialize)]
struct Meta {
    seed: u64,
    version: &'static str,
}

#[derive(Serialize)]
struct Document<'a> {
    meta: Meta,
    #[serde(flatten)]
    report: &'a SimulationReport,
}

/// Flags override the file, which overrides the defaults.
pub fn resolve_config(args: &SimulateArgs) -> Result<ScenarioConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = args.scenario {
        config.scenario = s;
    }
    if let Some(m) = args.replications {
        config.n_replications = m;
    }
    if let Some(n) = args.subjects {
        config.n_subjects = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(t) = &args.eval_times {
        config.eval_times = Some(t.clone());
    }
    config.validate()?;
    Ok(config)
}

fn plot(report: &SimulationReport) -> String {
    let panels: Vec<Panel> = [Some(1), Some(2), None]
        .into_iter()
        .map(|cause| {
            let name = curve_name(cause);
            let series = Method::ALL
                .iter()
                .enumerate()
                .flat_map(|(mi, &method)| {
                    let name = name.clone();
                    (0..2u8).map(move |arm| {
                        let cells: Vec<_> = report
                            .cells
                            .iter()
                            .filter(|c| c.method == method && c.arm == arm && c.curve == name)
                            .collect();
                        Series {
                            label: format!("{method} z={arm}"),
                            color: svg::PALETTE[mi % svg::PALETTE.len()],
                            dashed: arm == 0,
                            step: false,
                            x: cells.iter().map(|c| c.time).collect(),
                            y: cells.iter().map(|c| c.bias).collect(),
                            band: None,
                        }
                    })
                })
                .collect();
            Panel {
                title: format!("Bias, {name}"),
                x_label: "time".into(),
                y_label: "bias".into(),
                series,
                zero_line: true,
            }
        })
        .collect();
    svg::render(&panels)
}

pub fn run(args: &SimulateArgs) -> Result<(), Failure> {
    let config = resolve_config(args).code(EXIT_INPUT)?;
    let started = Instant::now();
    let run = || run_scenario_with(&config, Exec::Parallel);
    let report = match args.threads {
        Some(t) => adjcif::exec::with_thread_limit(usize::from(t), run).code(EXIT_INPUT)?,
        None => run(),
    }
    .code(EXIT_SIMULATION)?;
    let elapsed = started.elapsed();

    print!("{}", report.summary_table(config.spot_time()));
    let total: f64 = report.runtimes.iter().map(|d| d.as_secs_f64()).sum();
    let slowest = report.runtimes.iter().map(|d| d.as_secs_f64()).fold(0.0, f64::max);
    eprintln!(
        "{} replications in {:.2} s wall ({:.3} s mean, {:.3} s max per replication)",
        report.replications,
        elapsed.as_secs_f64(),
        total / report.runtimes.len().max(1) as f64,
        slowest
    );
    for f in &report.failures {
        eprintln!("replication {} failed: {}", f.index, f.message);
    }

    if let Some(p) = &args.json {
        let doc = Document {
            meta: Meta {
                seed: config.seed,
                version: env!("CARGO_PKG_VERSION"),
            },
            report: &report,
        };
        let json = serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from).code(EXIT_SIMULATION)?;
        write_output(p, &(json + "\n"))?;
    }
    if let Some(p) = &args.csv {
        write_output(p, &report.to_csv())?;
    }
    if let Some(p) = &args.svg {
        write_output(p, &plot(&report))?;
    }
    Ok(())
}
