use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::survival::{aalen_johansen, aj_step, build_risk_table, validate_grid, Cohort};

/// Jackknife pseudo-observations `y*_{i,k}(t) = n I_k(t) - (n - 1) I_k^{-i}(t)` of the
/// pooled Aalen-Johansen incidence, for every record, cause and grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObservationSet {
    grid: Vec<f64>,
    n: usize,
    /// `values[k][i * grid.len() + j]` for cause `k + 1`.
    values: Vec<Vec<f64>>,
}

impl PseudoObservationSet {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_causes(&self) -> usize {
        self.values.len()
    }

    /// Row-major `n x grid.len()` block for `cause` (1-based).
    pub fn cause(&self, cause: usize) -> &[f64] {
        &self.values[cause - 1]
    }

    pub fn row(&self, cause: usize, i: usize) -> &[f64] {
        let g = self.grid.len();
        &self.values[cause - 1][i * g..(i + 1) * g]
    }

    pub fn value(&self, cause: usize, i: usize, j: usize) -> f64 {
        self.values[cause - 1][i * self.grid.len() + j]
    }

    /// `(1/n) sum_i y*_{i,k}(t_j)` for every grid point.
    pub fn mean(&self, cause: usize) -> Vec<f64> {
        let g = self.grid.len();
        let mut out = vec![0.0; g];
        for i in 0..self.n {
            for (o, v) in out.iter_mut().zip(self.row(cause, i)) {
                *o += v;
            }
        }
        out.iter().map(|s| s / self.n as f64).collect()
    }
}

/// Incidence of every cause on `grid` from the unweighted Aalen-Johansen estimator;
/// all zero when the cohort has no events.
fn incidence_on_grid(cohort: &Cohort, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    match build_risk_table(cohort, None) {
        Ok(table) => {
            let cif = aalen_johansen(&table);
            Ok(cif
                .incidences
                .iter()
                .map(|c| grid.iter().map(|&t| c.value_unchecked(t)).collect())
                .collect())
        }
        Err(Error::NoEvents) => Ok(vec![vec![0.0; grid.len()]; cohort.num_causes()]),
        Err(e) => Err(e),
    }
}

fn check_input(cohort: &Cohort, grid: &[f64]) -> Result<()> {
    if cohort.len() < 2 {
        return Err(Error::TooFewSubjects(cohort.len()));
    }
    validate_grid(grid)
}

fn assemble(
    grid: &[f64],
    n: usize,
    full: &[Vec<f64>],
    leave_out: impl Fn(usize) -> Vec<Vec<f64>>,
) -> PseudoObservationSet {
    let nf = n as f64;
    let g = grid.len();
    let mut values = vec![vec![0.0; n * g]; full.len()];
    for i in 0..n {
        let loo = leave_out(i);
        for (k, block) in values.iter_mut().enumerate() {
            for j in 0..g {
                block[i * g + j] = nf * full[k][j] - (nf - 1.0) * loo[k][j];
            }
        }
    }
    PseudoObservationSet {
        grid: grid.to_vec(),
        n,
        values,
    }
}

/// Reference implementation: refits Aalen-Johansen on the cohort without record `i`
/// for every `i`, at `O(n^2 log n)` cost.
pub fn pseudo_observations_naive(cohort: &Cohort, grid: &[f64]) -> Result<PseudoObservationSet> {
    check_input(cohort, grid)?;
    let n = cohort.len();
    let full = incidence_on_grid(cohort, grid)?;
    let loo: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            incidence_on_grid(&cohort.resample(&rest)?, grid)
        })
        .collect::<Result<_>>()?;
    Ok(assemble(grid, n, &full, |i| loo[i].clone()))
}

/// Leave-one-out Aalen-Johansen by shared prefixes.
///
/// Removing record `i` lowers the risk set by one at every event time up to its own
/// time, removes its event there, and leaves later steps untouched. The prefix with
/// `n_j - 1` at risk is shared by all records; only the tail after a record's own time
/// differs, and records with the same time index and status share that tail. Steps
/// run through the same arithmetic as [`aalen_johansen`], so the result matches
/// [`pseudo_observations_naive`] exactly.
pub fn pseudo_observations(cohort: &Cohort, grid: &[f64]) -> Result<PseudoObservationSet> {
    check_input(cohort, grid)?;
    let n = cohort.len();
    let kc = cohort.num_causes();
    let full = incidence_on_grid(cohort, grid)?;
    let table = match build_risk_table(cohort, None) {
        Ok(t) => t,
        Err(Error::NoEvents) => return Ok(assemble(grid, n, &full, |_| full.clone())),
        Err(e) => return Err(e),
    };
    let times = &table.event_times;
    let ends: Vec<usize> = grid
        .iter()
        .map(|&g| times.partition_point(|&t| t <= g))
        .collect();
    let last = ends.last().copied().unwrap_or(0);

    let mut hazards = vec![0.0; kc];
    let mut step = |s: &mut f64, cum: &mut [f64], d: &[f64], at_risk: f64| {
        if at_risk > 0.0 {
            for (h, d) in hazards.iter_mut().zip(d) {
                *h = d / at_risk;
            }
            aj_step(s, cum, &hazards);
        }
    };

    // State after the first j steps with one record fewer at risk.
    let mut prefix_s = Vec::with_capacity(last + 1);
    let mut prefix_i = Vec::with_capacity(last + 1);
    let (mut s, mut cum) = (1.0, vec![0.0; kc]);
    prefix_s.push(s);
    prefix_i.push(cum.clone());
    for j in 0..last {
        step(&mut s, &mut cum, &table.events_by_cause[j], table.at_risk[j] - 1.0);
        prefix_s.push(s);
        prefix_i.push(cum.clone());
    }

    let mut groups: BTreeMap<(usize, u32), Vec<usize>> = BTreeMap::new();
    for (i, r) in cohort.records().iter().enumerate() {
        let m = if r.is_event() {
            times.partition_point(|&t| t < r.time)
        } else {
            times.partition_point(|&t| t <= r.time)
        };
        groups.entry((m, r.status)).or_default().push(i);
    }

    let mut rows: Vec<Option<usize>> = vec![None; n];
    let mut tails: Vec<Vec<Vec<f64>>> = Vec::with_capacity(groups.len());
    let mut d = vec![0.0; kc];
    for (&(m, status), members) in &groups {
        let mut loo = vec![vec![0.0; grid.len()]; kc];
        let mut s = prefix_s[m.min(last)];
        let mut cum = prefix_i[m.min(last)].clone();
        let mut done = m;
        if status != 0 && m < last {
            d.copy_from_slice(&table.events_by_cause[m]);
            d[status as usize - 1] -= 1.0;
            step(&mut s, &mut cum, &d, table.at_risk[m] - 1.0);
            done = m + 1;
        }
        for (gi, &e) in ends.iter().enumerate() {
            if e <= m {
                for (k, col) in loo.iter_mut().enumerate() {
                    col[gi] = prefix_i[e][k];
                }
                continue;
            }
            while done < e {
                step(&mut s, &mut cum, &table.events_by_cause[done], table.at_risk[done]);
                done += 1;
            }
            for (k, col) in loo.iter_mut().enumerate() {
                col[gi] = cum[k];
            }
        }
        for &i in members {
            rows[i] = Some(tails.len());
        }
        tails.push(loo);
    }
    Ok(assemble(grid, n, &full, |i| {
        tails[rows[i].expect("every record is grouped")].clone()
    }))
}
