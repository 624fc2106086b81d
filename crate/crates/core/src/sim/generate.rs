use rand::Rng;
use rand_distr::StandardNormal;

use super::config::ScenarioConfig;
use crate::adjust::quantile_sorted;
use crate::error::Result;
use crate::models::expit;
use crate::rng::{stream, StreamRng};
use crate::survival::{Cohort, ObservedRecord};

pub const COVARIATE_NAMES: [&str; 3] = ["x1", "x2", "x3"];

/// Three-category indicator pair `(X1, X2)` and a standard normal `X3` per row.
pub fn generate_covariates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            let (x1, x2) = match rng.random_range(0..3u8) {
                0 => (0.0, 0.0),
                1 => (1.0, 0.0),
                _ => (0.0, 1.0),
            };
            [x1, x2, rng.sample(StandardNormal)]
        })
        .collect()
}

/// `P(Z = 1 | x) = expit(x omega)` of the generating treatment model (no intercept).
pub fn treatment_probability(config: &ScenarioConfig, x: &[f64; 3]) -> f64 {
    let w = &config.omega;
    expit(x[0] * w[0] + x[1] * w[1] + x[2] * w[2])
}

fn logistic_assignment<R: Rng + ?Sized>(x: &[[f64; 3]], config: &ScenarioConfig, rng: &mut R) -> Vec<u8> {
    x.iter()
        .map(|r| u8::from(rng.random::<f64>() < treatment_probability(config, r)))
        .collect()
}

/// Treatment indicators, returned with the (possibly replaced) covariates.
///
/// Scenarios 1 and 3 draw `Z ~ Bernoulli(expit(x omega))`. Scenario 2 keeps the
/// treated rows of that draw and fills the remaining rows with controls whose
/// covariates come from the unconditional covariate law.
pub fn assign_treatment<R: Rng + ?Sized>(
    x: Vec<[f64; 3]>,
    config: &ScenarioConfig,
    rng: &mut R,
) -> (Vec<[f64; 3]>, Vec<u8>) {
    let z = logistic_assignment(&x, config, rng);
    if config.scenario != 2 {
        return (x, z);
    }
    let n = x.len();
    let mut rows: Vec<[f64; 3]> = x
        .into_iter()
        .zip(&z)
        .filter(|(_, &z)| z == 1)
        .map(|(r, _)| r)
        .collect();
    let treated = rows.len();
    rows.extend(generate_covariates(n - treated, rng));
    let z = (0..n).map(|i| u8::from(i < treated)).collect();
    (rows, z)
}

/// Latent competing exponential times by inversion, `T_k = -ln(U_k) / lambda_k`.
pub fn latent_times<R: Rng + ?Sized>(
    x: &[[f64; 3]],
    z: &[u8],
    config: &ScenarioConfig,
    rng: &mut R,
) -> Vec<[f64; 2]> {
    x.iter()
        .zip(z)
        .map(|(x, &z)| {
            let h = config.hazards(x, z);
            // 1 - U lies in (0, 1], so the logarithm is finite.
            let draw = |rng: &mut R, h: f64| -(1.0 - rng.random::<f64>()).ln() / h;
            let t1 = draw(rng, h[0]);
            let t2 = draw(rng, h[1]);
            [t1, t2]
        })
        .collect()
}

/// Observed `(T*, status)` per subject, with censoring uniform between the 20th and
/// 95th percentiles of this sample's first-event times.
pub fn generate_event_times<R: Rng + ?Sized>(
    z: &[u8],
    x: &[[f64; 3]],
    config: &ScenarioConfig,
    rng: &mut R,
) -> Vec<(f64, u32)> {
    let latent = latent_times(x, z, config, rng);
    let first: Vec<f64> = latent.iter().map(|t| t[0].min(t[1])).collect();
    let mut sorted = first.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, 0.20);
    let hi = quantile_sorted(&sorted, 0.95);
    latent
        .iter()
        .zip(&first)
        .map(|(t, &tf)| {
            let c = lo + (hi - lo) * rng.random::<f64>();
            if tf > c {
                (c, 0)
            } else if t[0] < t[1] {
                (tf, 1)
            } else {
                (tf, 2)
            }
        })
        .collect()
}

/// Generator for replication `index`.
pub fn replication_rng(config: &ScenarioConfig, index: u64) -> StreamRng {
    stream(config.seed, index)
}

/// One simulated cohort drawn from `rng`.
pub fn generate_cohort<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Cohort> {
    let x = generate_covariates(config.n_subjects, rng);
    let (x, z) = assign_treatment(x, config, rng);
    let obs = generate_event_times(&z, &x, config, rng);
    let records = x
        .iter()
        .zip(&z)
        .zip(obs)
        .map(|((x, &z), (t, s))| ObservedRecord::new(t, s, z, x.to_vec()))
        .collect();
    Cohort::new(
        records,
        2,
        COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Cohort of replication `index`.
pub fn generate_replication(config: &ScenarioConfig, index: u64) -> Result<Cohort> {
    generate_cohort(config, &mut replication_rng(config, index))
}
