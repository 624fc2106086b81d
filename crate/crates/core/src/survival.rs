//! Right-censored competing-risks data and the Aalen-Johansen machinery.
//!
//! Conventions shared by every estimator in the crate:
//!
//! - Status 0 is censoring, `1..=K` are the competing causes.
//! - Events of different causes tied at `t_j` share one survival factor
//!   `1 - sum_k d_k(t_j) / n(t_j)`.
//! - A record censored at `t_j` is still at risk at `t_j`.
//! - Times are compared exactly; nearly equal times are never merged.
//! - Each cumulative incidence increment uses the left limit `S(t_j-)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject: observation time, first-event status, treatment and baseline covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRecord {
    pub time: f64,
    pub status: u32,
    pub treatment: u8,
    pub covariates: Vec<f64>,
}

impl ObservedRecord {
    pub fn new(time: f64, status: u32, treatment: u8, covariates: Vec<f64>) -> Self {
        Self {
            time,
            status,
            treatment,
            covariates,
        }
    }

    pub fn is_event(&self) -> bool {
        self.status != 0
    }
}

/// A validated collection of records sharing the number of causes and covariate layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    records: Vec<ObservedRecord>,
    num_causes: usize,
    covariate_names: Vec<String>,
}

impl Cohort {
    pub fn new(
        records: Vec<ObservedRecord>,
        num_causes: usize,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyCohort);
        }
        if num_causes == 0 {
            return Err(Error::InvalidConfig("number of causes must be at least 1".into()));
        }
        let p = covariate_names.len();
        for (index, r) in records.iter().enumerate() {
            let invalid = |reason: String| Error::InvalidRecord { index, reason };
            if !r.time.is_finite() || r.time < 0.0 {
                return Err(invalid(format!("time {} must be finite and nonnegative", r.time)));
            }
            if r.status as usize > num_causes {
                return Err(invalid(format!(
                    "status {} outside 0..={num_causes}",
                    r.status
                )));
            }
            if r.treatment > 1 {
                return Err(invalid(format!("treatment {} must be 0 or 1", r.treatment)));
            }
            if r.covariates.len() != p {
                return Err(invalid(format!(
                    "{} covariates, expected {p}",
                    r.covariates.len()
                )));
            }
            if let Some(j) = r.covariates.iter().position(|x| !x.is_finite()) {
                return Err(invalid(format!("covariate {} is not finite", covariate_names[j])));
            }
        }
        Ok(Self {
            records,
            num_causes,
            covariate_names,
        })
    }

    /// Builds a cohort with covariates named `x1..xp`.
    pub fn unnamed(records: Vec<ObservedRecord>, num_causes: usize) -> Result<Self> {
        let p = records.first().map_or(0, |r| r.covariates.len());
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::new(records, num_causes, names)
    }

    pub fn records(&self) -> &[ObservedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_causes(&self) -> usize {
        self.num_causes
    }

    pub fn num_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn num_events(&self) -> usize {
        self.records.iter().filter(|r| r.is_event()).count()
    }

    /// Records with treatment `z`, in their original order.
    pub fn arm(&self, z: u8) -> Result<Cohort> {
        let records: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.treatment == z)
            .cloned()
            .collect();
        if records.is_empty() {
            return Err(Error::EmptyArm(z));
        }
        Ok(Cohort {
            records,
            num_causes: self.num_causes,
            covariate_names: self.covariate_names.clone(),
        })
    }

    /// A cohort made of the records at `indices` (repeats allowed).
    pub fn resample(&self, indices: &[usize]) -> Result<Cohort> {
        if indices.is_empty() {
            return Err(Error::EmptyCohort);
        }
        Ok(Cohort {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            num_causes: self.num_causes,
            covariate_names: self.covariate_names.clone(),
        })
    }

    /// Treatment indicators as 0/1.
    pub fn treatments(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.treatment).collect()
    }
}

/// Distinct event times with cause-specific event counts and at-risk totals.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    pub event_times: Vec<f64>,
    /// `events_by_cause[j][k]` is `d_{k+1}(t_j)`.
    pub events_by_cause: Vec<Vec<f64>>,
    pub events_total: Vec<f64>,
    pub at_risk: Vec<f64>,
}

impl RiskTable {
    pub fn len(&self) -> usize {
        self.event_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_times.is_empty()
    }

    pub fn num_causes(&self) -> usize {
        self.events_by_cause.first().map_or(0, Vec::len)
    }
}

fn validate_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::WeightLength {
            expected: n,
            got: weights.len(),
        });
    }
    if let Some(index) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidWeight {
            index,
            value: weights[index],
        });
    }
    Ok(())
}

/// Total order used to visit records: by time, then status, then weight. Records
/// equal under this order are interchangeable in every sum, so the table does not
/// depend on the input order.
fn record_order(a: (f64, u32, f64), b: (f64, u32, f64)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.cmp(&b.1))
        .then(a.2.total_cmp(&b.2))
}

/// Risk table over an arbitrary `(time, status, weight)` sequence.
pub(crate) fn risk_table_from_parts(
    items: &mut [(f64, u32, f64)],
    num_causes: usize,
) -> Result<RiskTable> {
    if items.is_empty() {
        return Err(Error::EmptyCohort);
    }
    if !items.iter().any(|it| it.1 != 0) {
        return Err(Error::NoEvents);
    }
    items.sort_by(|a, b| record_order(*a, *b));

    let mut event_times = Vec::new();
    let mut events_by_cause = Vec::new();
    let mut at_risk = Vec::new();
    let mut risk = 0.0;
    let mut end = items.len();
    while end > 0 {
        let t = items[end - 1].0;
        let mut start = end;
        while start > 0 && items[start - 1].0 == t {
            start -= 1;
        }
        let mut counts = vec![0.0; num_causes];
        let mut any_event = false;
        for &(_, status, w) in items[start..end].iter().rev() {
            risk += w;
            if status != 0 {
                counts[status as usize - 1] += w;
                any_event = true;
            }
        }
        if any_event {
            event_times.push(t);
            events_by_cause.push(counts);
            at_risk.push(risk);
        }
        end = start;
    }
    event_times.reverse();
    events_by_cause.reverse();
    at_risk.reverse();
    let events_total = events_by_cause.iter().map(|d| d.iter().sum()).collect();
    Ok(RiskTable {
        event_times,
        events_by_cause,
        events_total,
        at_risk,
    })
}

/// Event and at-risk counts at each distinct event time; with `weights` each record
/// contributes `w_i` instead of 1.
pub fn build_risk_table(cohort: &Cohort, weights: Option<&[f64]>) -> Result<RiskTable> {
    if let Some(w) = weights {
        validate_weights(w, cohort.len())?;
    }
    let mut items: Vec<(f64, u32, f64)> = cohort
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.time, r.status, weights.map_or(1.0, |w| w[i])))
        .collect();
    risk_table_from_parts(&mut items, cohort.num_causes())
}

/// Right-continuous step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurve {
    pub jump_times: Vec<f64>,
    pub values: Vec<f64>,
    pub value_at_zero: f64,
}

impl StepCurve {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>, value_at_zero: f64) -> Self {
        debug_assert_eq!(jump_times.len(), values.len());
        Self {
            jump_times,
            values,
            value_at_zero,
        }
    }

    /// Value at the largest jump time `<= t`, or `value_at_zero` before the first jump.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.value_unchecked(t))
    }

    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&s| s <= t) {
            0 => self.value_at_zero,
            k => self.values[k - 1],
        }
    }

    pub fn evaluate_many(&self, times: &[f64]) -> Result<Vec<f64>> {
        times.iter().map(|&t| self.evaluate(t)).collect()
    }

    pub fn len(&self) -> usize {
        self.jump_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jump_times.is_empty()
    }
}

/// Event-free survival plus one cumulative incidence curve per cause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CifSet {
    pub survival: StepCurve,
    pub incidences: Vec<StepCurve>,
}

impl CifSet {
    pub fn num_causes(&self) -> usize {
        self.incidences.len()
    }

    /// Resamples every curve onto `grid`, giving curves that jump at the grid points.
    pub fn on_grid(&self, grid: &[f64]) -> Result<CifSet> {
        validate_grid(grid)?;
        let sample = |c: &StepCurve| {
            StepCurve::new(
                grid.to_vec(),
                grid.iter().map(|&t| c.value_unchecked(t)).collect(),
                c.value_at_zero,
            )
        };
        Ok(CifSet {
            survival: sample(&self.survival),
            incidences: self.incidences.iter().map(sample).collect(),
        })
    }

    /// Builds a set from values on a grid (`incidences[k][g]`).
    pub fn from_grid(grid: &[f64], survival: Vec<f64>, incidences: Vec<Vec<f64>>) -> CifSet {
        CifSet {
            survival: StepCurve::new(grid.to_vec(), survival, 1.0),
            incidences: incidences
                .into_iter()
                .map(|v| StepCurve::new(grid.to_vec(), v, 0.0))
                .collect(),
        }
    }

    /// Largest `|S + sum_k I_k - 1|` over the survival curve's jump times.
    pub fn max_identity_error(&self) -> f64 {
        self.survival
            .jump_times
            .iter()
            .map(|&t| {
                let total: f64 = self.survival.value_unchecked(t)
                    + self
                        .incidences
                        .iter()
                        .map(|c| c.value_unchecked(t))
                        .sum::<f64>();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Grids must be finite, nonnegative and strictly increasing.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if let Some(t) = grid.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(Error::InvalidGrid(format!("time {t} is negative or not finite")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGrid("times must be strictly increasing".into()));
    }
    Ok(())
}

/// Aalen-Johansen estimates from a risk table.
pub fn aalen_johansen(table: &RiskTable) -> CifSet {
    let k = table.num_causes();
    let j = table.len();
    let mut surv = Vec::with_capacity(j);
    let mut inc: Vec<Vec<f64>> = vec![Vec::with_capacity(j); k];
    let mut s_prev = 1.0;
    let mut cum = vec![0.0; k];
    let mut hazards = vec![0.0; k];
    for idx in 0..j {
        let n = table.at_risk[idx];
        for (h, d) in hazards.iter_mut().zip(&table.events_by_cause[idx]) {
            *h = d / n;
        }
        let total = aj_step(&mut s_prev, &mut cum, &hazards);
        debug_assert!(total <= 1.0 + 1e-12);
        surv.push(s_prev);
        for (c, v) in inc.iter_mut().zip(&cum) {
            c.push(*v);
        }
    }
    CifSet {
        survival: StepCurve::new(table.event_times.clone(), surv, 1.0),
        incidences: inc
            .into_iter()
            .map(|v| StepCurve::new(table.event_times.clone(), v, 0.0))
            .collect(),
    }
}

/// One product-limit step: `I_k += S(t-) h_k`, `S = S(t-) (1 - sum_k h_k)`.
/// Every estimator in the crate goes through this function so that the null Cox
/// prediction and the leave-one-out shortcut reproduce Aalen-Johansen bit for bit.
#[inline]
pub(crate) fn aj_step(survival: &mut f64, cumulative: &mut [f64], hazards: &[f64]) -> f64 {
    let mut total = 0.0;
    for (c, h) in cumulative.iter_mut().zip(hazards) {
        *c += *survival * h;
        total += h;
    }
    // Weighted hazards summing to one can overshoot by an ulp.
    *survival = (*survival * (1.0 - total)).max(0.0);
    total
}

/// Aalen-Johansen on the records of arm `z`.
pub fn crude_arm_estimate(cohort: &Cohort, z: u8) -> Result<CifSet> {
    let arm = cohort.arm(z)?;
    Ok(aalen_johansen(&build_risk_table(&arm, None)?))
}

/// Right-continuous evaluation of `curve` at `t`.
pub fn evaluate(curve: &StepCurve, t: f64) -> Result<f64> {
    curve.evaluate(t)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// (1,1), (2,0), (3,2), (4,1) with two causes, all treated.
    pub fn f1() -> Cohort {
        let recs = [(1.0, 1), (2.0, 0), (3.0, 2), (4.0, 1)]
            .into_iter()
            .map(|(t, s)| ObservedRecord::new(t, s, 1, vec![]))
            .collect();
        Cohort::new(recs, 2, vec![]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::f1;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f1_risk_table_by_hand() {
        let t = build_risk_table(&f1(), None).unwrap();
        assert_eq!(t.event_times, vec![1.0, 3.0, 4.0]);
        assert_eq!(t.at_risk, vec![4.0, 2.0, 1.0]);
        let d1: Vec<f64> = t.events_by_cause.iter().map(|d| d[0]).collect();
        let d2: Vec<f64> = t.events_by_cause.iter().map(|d| d[1]).collect();
        assert_eq!(d1, vec![1.0, 0.0, 1.0]);
        assert_eq!(d2, vec![0.0, 1.0, 0.0]);
        assert_eq!(t.events_total, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn doubled_weights_double_counts() {
        let t = build_risk_table(&f1(), Some(&[2.0; 4])).unwrap();
        assert_eq!(t.at_risk, vec![8.0, 4.0, 2.0]);
        let d1: Vec<f64> = t.events_by_cause.iter().map(|d| d[0]).collect();
        assert_eq!(d1, vec![2.0, 0.0, 2.0]);
    }

    #[test]
    fn all_censored_is_no_events() {
        let recs = vec![ObservedRecord::new(1.0, 0, 0, vec![]); 3];
        let c = Cohort::new(recs, 1, vec![]).unwrap();
        assert_eq!(build_risk_table(&c, None), Err(Error::NoEvents));
    }

    #[test]
    fn bad_weights_rejected() {
        let c = f1();
        assert!(matches!(
            build_risk_table(&c, Some(&[1.0, 0.0, 1.0, 1.0])),
            Err(Error::InvalidWeight { index: 1, .. })
        ));
        assert!(matches!(
            build_risk_table(&c, Some(&[1.0, f64::NAN, 1.0, 1.0])),
            Err(Error::InvalidWeight { index: 1, .. })
        ));
        assert!(matches!(
            build_risk_table(&c, Some(&[1.0])),
            Err(Error::WeightLength { expected: 4, got: 1 })
        ));
    }

    #[test]
    fn cohort_validation() {
        assert_eq!(Cohort::new(vec![], 1, vec![]), Err(Error::EmptyCohort));
        let bad = |r: ObservedRecord| Cohort::new(vec![r], 2, vec!["a".into()]).unwrap_err();
        assert!(matches!(
            bad(ObservedRecord::new(-1.0, 1, 0, vec![0.0])),
            Error::InvalidRecord { index: 0, .. }
        ));
        assert!(matches!(
            bad(ObservedRecord::new(1.0, 3, 0, vec![0.0])),
            Error::InvalidRecord { .. }
        ));
        assert!(matches!(
            bad(ObservedRecord::new(1.0, 1, 2, vec![0.0])),
            Error::InvalidRecord { .. }
        ));
        assert!(matches!(
            bad(ObservedRecord::new(1.0, 1, 0, vec![])),
            Error::InvalidRecord { .. }
        ));
        assert!(matches!(
            bad(ObservedRecord::new(f64::INFINITY, 1, 0, vec![0.0])),
            Error::InvalidRecord { .. }
        ));
    }

    #[test]
    fn censoring_tied_with_event_stays_at_risk() {
        let recs = [(2.0, 0), (2.0, 1), (3.0, 1)]
            .into_iter()
            .map(|(t, s)| ObservedRecord::new(t, s, 0, vec![]))
            .collect();
        let t = build_risk_table(&Cohort::new(recs, 1, vec![]).unwrap(), None).unwrap();
        assert_eq!(t.at_risk, vec![3.0, 1.0]);
    }

    #[test]
    fn f1_aalen_johansen_by_hand() {
        let cif = aalen_johansen(&build_risk_table(&f1(), None).unwrap());
        let i1 = &cif.incidences[0];
        let i2 = &cif.incidences[1];
        assert_eq!(i1.evaluate(1.0).unwrap(), 0.25);
        assert_eq!(cif.survival.evaluate(1.0).unwrap(), 0.75);
        assert_eq!(i2.evaluate(3.0).unwrap(), 0.375);
        assert_eq!(i1.evaluate(4.0).unwrap(), 0.625);
        assert_eq!(cif.survival.evaluate(4.0).unwrap(), 0.0);
        assert_eq!(i1.evaluate(2.5).unwrap(), 0.25);
        assert_eq!(cif.survival.evaluate(100.0).unwrap(), 0.0);
        assert_eq!(i1.evaluate(0.0).unwrap(), 0.0);
        assert_eq!(cif.survival.evaluate(0.0).unwrap(), 1.0);
        assert_eq!(i1.evaluate(-0.5), Err(Error::NegativeTime(-0.5)));
    }

    #[test]
    fn single_subject() {
        let c = Cohort::new(vec![ObservedRecord::new(1.0, 1, 0, vec![])], 1, vec![]).unwrap();
        let cif = aalen_johansen(&build_risk_table(&c, None).unwrap());
        assert_eq!(cif.incidences[0].evaluate(1.0).unwrap(), 1.0);
        assert_eq!(cif.survival.evaluate(1.0).unwrap(), 0.0);
    }

    #[test]
    fn crude_arm_is_subset_estimate() {
        let c = f1();
        let full = aalen_johansen(&build_risk_table(&c, None).unwrap());
        assert_eq!(crude_arm_estimate(&c, 1).unwrap(), full);
        assert_eq!(crude_arm_estimate(&c, 0), Err(Error::EmptyArm(0)));
    }

    #[test]
    fn identical_arms_identical_estimates() {
        let mut recs = Vec::new();
        for z in [0u8, 1] {
            for (t, s) in [(0.5, 1), (1.5, 0), (2.0, 2), (2.0, 1), (3.0, 0)] {
                recs.push(ObservedRecord::new(t, s, z, vec![]));
            }
        }
        let c = Cohort::new(recs, 2, vec![]).unwrap();
        assert_eq!(crude_arm_estimate(&c, 0).unwrap(), crude_arm_estimate(&c, 1).unwrap());
    }

    #[test]
    fn on_grid_samples_right_continuously() {
        let cif = aalen_johansen(&build_risk_table(&f1(), None).unwrap());
        let g = cif.on_grid(&[0.5, 1.0, 3.5, 10.0]).unwrap();
        assert_eq!(g.incidences[0].values, vec![0.0, 0.25, 0.25, 0.625]);
        assert!(cif.on_grid(&[1.0, 1.0]).is_err());
        assert!(cif.on_grid(&[-1.0]).is_err());
    }

    fn arb_records(max_n: usize) -> impl Strategy<Value = Vec<(f64, u32)>> {
        prop::collection::vec(((0u32..12).prop_map(|t| t as f64 * 0.5), 0u32..3), 1..max_n)
            .prop_filter("needs an event", |v| v.iter().any(|r| r.1 != 0))
    }

    fn cohort_of(v: &[(f64, u32)]) -> Cohort {
        let recs = v
            .iter()
            .map(|&(t, s)| ObservedRecord::new(t, s, 0, vec![]))
            .collect();
        Cohort::new(recs, 2, vec![]).unwrap()
    }

    proptest! {
        #[test]
        fn identity_and_monotonicity(v in arb_records(40), w in prop::collection::vec(0.1f64..5.0, 40)) {
            let c = cohort_of(&v);
            for weights in [None, Some(&w[..v.len()])] {
                let cif = aalen_johansen(&build_risk_table(&c, weights).unwrap());
                prop_assert!(cif.max_identity_error() < 1e-10);
                let s = &cif.survival.values;
                prop_assert!(s.windows(2).all(|p| p[1] <= p[0]));
                prop_assert!(s.iter().all(|x| (0.0..=1.0).contains(x)));
                for inc in &cif.incidences {
                    prop_assert!(inc.values.windows(2).all(|p| p[1] >= p[0]));
                    prop_assert!(inc.values.iter().all(|x| (0.0..=1.0 + 1e-12).contains(x)));
                }
            }
        }

        #[test]
        fn weight_scale_invariance(v in arb_records(30), scale in 0.01f64..100.0) {
            let c = cohort_of(&v);
            let base: Vec<f64> = (0..v.len()).map(|i| 1.0 + (i % 3) as f64).collect();
            let scaled: Vec<f64> = base.iter().map(|w| w * scale).collect();
            let a = aalen_johansen(&build_risk_table(&c, Some(&base)).unwrap());
            let b = aalen_johansen(&build_risk_table(&c, Some(&scaled)).unwrap());
            for (x, y) in a.incidences.iter().zip(&b.incidences) {
                for (p, q) in x.values.iter().zip(&y.values) {
                    prop_assert!((p - q).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn no_censoring_is_empirical_cdf(v in prop::collection::vec(((0u32..10).prop_map(|t| t as f64), 1u32..3), 1..40)) {
            let c = cohort_of(&v);
            let cif = aalen_johansen(&build_risk_table(&c, None).unwrap());
            let n = v.len() as f64;
            for t in [0.0, 1.0, 3.5, 6.0, 9.0] {
                for k in 1..=2u32 {
                    let ecdf = v.iter().filter(|r| r.0 <= t && r.1 == k).count() as f64 / n;
                    let got = cif.incidences[k as usize - 1].evaluate(t).unwrap();
                    prop_assert!((got - ecdf).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn permutation_invariance(v in arb_records(30), seed in any::<u64>()) {
            let mut shuffled = v.clone();
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            let w: Vec<f64> = (0..v.len()).map(|i| 0.5 + v[i].0).collect();
            let ws: Vec<f64> = shuffled.iter().map(|r| 0.5 + r.0).collect();
            let a = aalen_johansen(&build_risk_table(&cohort_of(&v), Some(&w)).unwrap());
            let b = aalen_johansen(&build_risk_table(&cohort_of(&shuffled), Some(&ws)).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}
