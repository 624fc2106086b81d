use std::path::Path;

use adjcif::{Cohort, ObservedRecord};
use anyhow::{bail, Context, Result};

/// Tokens read as a missing value.
const MISSING: [&str; 5] = ["", "NA", "NaN", "nan", "."];

/// Which CSV columns hold the time, status, treatment and covariates.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub time: String,
    pub status: String,
    pub treatment: String,
    /// All remaining columns when `None`.
    pub covariates: Option<Vec<String>>,
}

#[derive(Debug)]
pub struct LoadedCohort {
    pub cohort: Cohort,
    pub rows_read: usize,
    /// Data lines skipped because of missing values (only with `drop_incomplete`).
    pub excluded_lines: Vec<u64>,
}

fn position(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .with_context(|| format!("column '{name}' not found in header ({})", headers.join(", ")))
}

fn parse_number(raw: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| anyhow::anyhow!("line {line}, column '{column}': '{raw}' is not a number"))?;
    if !v.is_finite() {
        bail!("line {line}, column '{column}': '{raw}' is not finite");
    }
    Ok(v)
}

fn parse_code(raw: &str, line: u64, column: &str, what: &str) -> Result<u32> {
    let v = parse_number(raw, line, column)?;
    if v < 0.0 || v.fract() != 0.0 || v > f64::from(u32::MAX) {
        bail!("line {line}, column '{column}': {what} must be a nonnegative integer, got '{raw}'");
    }
    Ok(v as u32)
}

/// Reads a headed CSV file into a cohort.
///
/// Missing values are an error naming the line and column unless `drop_incomplete`
/// is set, in which case those lines are skipped and counted.
pub fn load_cohort(
    path: &Path,
    columns: &ColumnMap,
    causes: Option<usize>,
    drop_incomplete: bool,
) -> Result<LoadedCohort> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .with_context(|| format!("cannot read header of {}", path.display()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if let Some((i, h)) = headers
        .iter()
        .enumerate()
        .find(|(i, h)| headers[..*i].contains(h))
    {
        bail!("duplicate column '{h}' (position {})", i + 1);
    }

    let fixed = [&columns.time, &columns.status, &columns.treatment];
    if fixed[0] == fixed[1] || fixed[0] == fixed[2] || fixed[1] == fixed[2] {
        bail!("time, status and treatment columns must be distinct");
    }
    let covariate_names: Vec<String> = match &columns.covariates {
        Some(c) => {
            if let Some(dup) = c.iter().find(|n| fixed.contains(n)) {
                bail!("column '{dup}' cannot be both a covariate and time, status or treatment");
            }
            c.clone()
        }
        None => headers
            .iter()
            .filter(|h| !fixed.contains(h))
            .cloned()
            .collect(),
    };
    let ti = position(&headers, &columns.time)?;
    let si = position(&headers, &columns.status)?;
    let zi = position(&headers, &columns.treatment)?;
    let xi: Vec<usize> = covariate_names
        .iter()
        .map(|c| position(&headers, c))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut excluded_lines = Vec::new();
    let mut rows_read = 0;
    for row in reader.records() {
        let row = row.with_context(|| format!("malformed CSV in {}", path.display()))?;
        rows_read += 1;
        let line = row.position().map_or(rows_read as u64 + 1, |p| p.line());
        let mut used = [ti, si, zi].into_iter().chain(xi.iter().copied());
        if let Some(col) = used.find(|&c| MISSING.contains(&&row[c])) {
            if drop_incomplete {
                excluded_lines.push(line);
                continue;
            }
            bail!("line {line}, column '{}': missing value", headers[col]);
        }
        let time = parse_number(&row[ti], line, &headers[ti])?;
        if time < 0.0 {
            bail!("line {line}, column '{}': time must be nonnegative", headers[ti]);
        }
        let status = parse_code(&row[si], line, &headers[si], "status")?;
        if let Some(k) = causes {
            if status as usize > k {
                bail!("line {line}, column '{}': status {status} exceeds {k} causes", headers[si]);
            }
        }
        let treatment = parse_code(&row[zi], line, &headers[zi], "treatment")?;
        if treatment > 1 {
            bail!("line {line}, column '{}': treatment must be 0 or 1, got {treatment}", headers[zi]);
        }
        let covariates = xi
            .iter()
            .map(|&c| parse_number(&row[c], line, &headers[c]))
            .collect::<Result<Vec<_>>>()?;
        records.push(ObservedRecord::new(time, status, treatment as u8, covariates));
    }
    if records.is_empty() {
        bail!("{} contains no usable rows", path.display());
    }
    let num_causes = causes.unwrap_or_else(|| {
        records.iter().map(|r| r.status as usize).max().unwrap_or(0).max(1)
    });
    let cohort = Cohort::new(records, num_causes, covariate_names)?;
    Ok(LoadedCohort {
        cohort,
        rows_read,
        excluded_lines,
    })
}
