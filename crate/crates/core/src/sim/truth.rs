use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::generate::{generate_covariates, latent_times};
use crate::rng::stream;

/// Nodes and weights of an expectation rule `E f(X) ~ sum_i w_i f(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Golub-Welsch: nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix
/// (zero diagonal, off-diagonal `off`), weights `mu0` times the squared first
/// eigenvector components.
fn golub_welsch(off: &[f64], mu0: f64) -> Quadrature {
    let n = off.len() + 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (i, &b) in off.iter().enumerate() {
        m[(i, i + 1)] = b;
        m[(i + 1, i)] = b;
    }
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| (eig.eigenvalues[j], mu0 * eig.eigenvectors[(0, j)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Quadrature {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// `n`-point Gauss-Hermite rule for the standard normal expectation.
pub fn gauss_hermite_normal(n: usize) -> Quadrature {
    let off: Vec<f64> = (1..n).map(|i| (i as f64).sqrt()).collect();
    golub_welsch(&off, 1.0)
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Quadrature {
    let off: Vec<f64> = (1..n)
        .map(|i| {
            let i = i as f64;
            i / (4.0 * i * i - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&off, 2.0)
}

/// Standard normal expectation by composite Gauss-Legendre on `[-12, 12]`, with
/// panel edges at `breaks` so that piecewise-smooth integrands are integrated
/// panel by panel.
pub fn composite_normal(breaks: &[f64], per_panel: usize) -> Quadrature {
    let base = gauss_legendre(per_panel);
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in breaks.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (&u, &wt) in base.nodes.iter().zip(&base.weights) {
            let x = mid + half * u;
            nodes.push(x);
            weights.push(wt * half * density(x));
        }
    }
    Quadrature { nodes, weights }
}

pub const HERMITE_NODES: usize = 96;

/// The rule used for `X3` in `config`'s scenario. Scenario 3's hazards jump at
/// `X3 = 1`, which a single Hermite rule would smear; there the axis is split at 1
/// and integrated by panels.
pub fn x3_rule(config: &ScenarioConfig) -> Quadrature {
    if config.scenario == 3 {
        composite_normal(
            &[-12.0, -8.0, -5.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0],
            32,
        )
    } else {
        gauss_hermite_normal(HERMITE_NODES)
    }
}

/// True marginal curves of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueCurves {
    pub z: u8,
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    /// `incidences[k][j]` is `I_{k+1}^z(times[j])`.
    pub incidences: Vec<Vec<f64>>,
}

impl TrueCurves {
    /// Largest `|S + sum_k I_k - 1|` over the times.
    pub fn max_identity_error(&self) -> f64 {
        (0..self.times.len())
            .map(|j| {
                (self.survival[j] + self.incidences.iter().map(|c| c[j]).sum::<f64>() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// True curves for both arms, indexed by treatment value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueCurveSet {
    pub arms: [TrueCurves; 2],
}

const CATEGORIES: [(f64, f64); 3] = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];

/// Marginal truth under treatment `z`.
///
/// Given `(x, z)` both cause-specific hazards are constant, so
/// `I_k(t | x, z) = (lambda_k / Lambda)(1 - e^{-Lambda t})` with `Lambda` their sum.
/// The three categories are averaged exactly and `X3` is integrated by quadrature.
pub fn true_cif(config: &ScenarioConfig, z: u8, times: &[f64]) -> TrueCurves {
    let rule = x3_rule(config);
    let mut survival = vec![0.0; times.len()];
    let mut incidences = vec![vec![0.0; times.len()]; 2];
    for &(x1, x2) in &CATEGORIES {
        for (&x3, &w) in rule.nodes.iter().zip(&rule.weights) {
            let h = config.hazards(&[x1, x2, x3], z);
            let total = h[0] + h[1];
            let w = w / 3.0;
            for (j, &t) in times.iter().enumerate() {
                let fail = -(-total * t).exp_m1();
                survival[j] += w * (1.0 - fail);
                for k in 0..2 {
                    incidences[k][j] += w * h[k] / total * fail;
                }
            }
        }
    }
    TrueCurves {
        z,
        times: times.to_vec(),
        survival,
        incidences,
    }
}

pub fn true_curve_set(config: &ScenarioConfig, times: &[f64]) -> TrueCurveSet {
    TrueCurveSet {
        arms: [true_cif(config, 0, times), true_cif(config, 1, times)],
    }
}

/// Empirical uncensored estimate of the truth from `draws` subjects with treatment
/// fixed at `z`, for validating [`true_cif`].
pub fn monte_carlo_cif(
    config: &ScenarioConfig,
    z: u8,
    times: &[f64],
    draws: usize,
    seed: u64,
) -> TrueCurves {
    const BATCH: usize = 1 << 16;
    let mut rng = stream(seed, u64::from(z));
    let mut counts = vec![vec![0u64; times.len()]; 2];
    let mut left = draws;
    let zs = vec![z; BATCH];
    while left > 0 {
        let m = left.min(BATCH);
        let x = generate_covariates(m, &mut rng);
        for t in latent_times(&x, &zs[..m], config, &mut rng) {
            let (first, cause) = if t[0] < t[1] { (t[0], 0) } else { (t[1], 1) };
            for (c, &s) in counts[cause].iter_mut().zip(times) {
                if first <= s {
                    *c += 1;
                }
            }
        }
        left -= m;
    }
    let n = draws as f64;
    let incidences: Vec<Vec<f64>> = counts
        .iter()
        .map(|c| c.iter().map(|&v| v as f64 / n).collect())
        .collect();
    let survival = (0..times.len())
        .map(|j| 1.0 - incidences[0][j] - incidences[1][j])
        .collect();
    TrueCurves {
        z,
        times: times.to_vec(),
        survival,
        incidences,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let q = gauss_hermite_normal(HERMITE_NODES);
        assert!((q.integrate(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!(q.integrate(|x| x).abs() < 1e-12);
        assert!((q.integrate(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((q.integrate(|x| x.powi(4)) - 3.0).abs() < 1e-11);
        // E exp(X) = exp(1/2)
        assert!((q.integrate(f64::exp) - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn composite_rule_matches_hermite() {
        let c = ScenarioConfig::scenario(3);
        let q = x3_rule(&c);
        assert!((q.integrate(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!((q.integrate(f64::exp) - 0.5f64.exp()).abs() < 1e-12);
        // P(X < 1)
        let p = q.integrate(|x| if x < 1.0 { 1.0 } else { 0.0 });
        assert!((p - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn truth_boundaries() {
        let c = ScenarioConfig::scenario(1);
        let t = true_cif(&c, 1, &[0.0, 0.8, 50.0]);
        assert_eq!(t.incidences[0][0], 0.0);
        assert!((t.survival[0] - 1.0).abs() < 1e-13);
        assert!(t.max_identity_error() < 1e-12);
        assert!((t.incidences[0][2] + t.incidences[1][2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn null_effects_give_equal_arms() {
        let mut c = ScenarioConfig::scenario(1);
        c.theta = [0.0, 0.0];
        let s = true_curve_set(&c, &[0.3, 0.8, 2.0]);
        assert_eq!(s.arms[0].incidences, s.arms[1].incidences);
    }
}
