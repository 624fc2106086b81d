use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::validate_grid;

/// Parameters of one simulation scenario. Fields left out of a TOML file take the
/// default parameter values for the chosen scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// 1: both models correct, 2: misspecified treatment model, 3: misspecified
    /// outcome model.
    pub scenario: u8,
    pub n_subjects: usize,
    pub n_replications: usize,
    pub seed: u64,
    /// Treatment effects on the two log cause-specific hazards.
    pub theta: [f64; 2],
    pub beta1: [f64; 3],
    pub beta2: [f64; 3],
    /// Log baseline hazards; 0 in Scenarios 1-2 and 2 in Scenario 3 when unset.
    pub log_baseline: Option<[f64; 2]>,
    /// Treatment-model coefficients (no intercept).
    pub omega: [f64; 3],
    /// Report times; a pilot-based default when unset.
    pub eval_times: Option<Vec<f64>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: 1,
            n_subjects: 4000,
            n_replications: 1000,
            seed: 1,
            theta: [-1.0, -0.5],
            beta1: [1.0, -1.0, 0.5],
            beta2: [-1.0, 1.0, -0.5],
            log_baseline: None,
            omega: [1.0, -1.0, 1.0],
            eval_times: None,
        }
    }
}

impl ScenarioConfig {
    pub fn scenario(scenario: u8) -> Self {
        Self {
            scenario,
            ..Self::default()
        }
    }

    pub fn log_baseline(&self) -> [f64; 2] {
        self.log_baseline
            .unwrap_or(if self.scenario == 3 { [2.0, 2.0] } else { [0.0, 0.0] })
    }

    /// The single time at which the summary table is reported.
    pub fn spot_time(&self) -> f64 {
        if self.scenario == 3 {
            5.0
        } else {
            0.8
        }
    }

    pub fn beta(&self, cause: usize) -> &[f64; 3] {
        if cause == 1 {
            &self.beta1
        } else {
            &self.beta2
        }
    }

    /// Cause-specific hazards `exp(l_k0) exp(x beta_k + z theta_k [- 4 1(x3 < 1)])`.
    pub fn hazards(&self, x: &[f64; 3], z: u8) -> [f64; 2] {
        let base = self.log_baseline();
        let extra = if self.scenario == 3 && x[2] < 1.0 { -4.0 } else { 0.0 };
        let zf = f64::from(z);
        [1, 2].map(|k| {
            let b = self.beta(k);
            let eta = x[0] * b[0] + x[1] * b[1] + x[2] * b[2] + zf * self.theta[k - 1] + extra;
            (base[k - 1] + eta).exp()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(1..=3).contains(&self.scenario) {
            return bad(format!("scenario must be 1, 2 or 3, got {}", self.scenario));
        }
        if self.n_subjects < 10 {
            return bad(format!("n_subjects must be at least 10, got {}", self.n_subjects));
        }
        if self.n_replications == 0 {
            return bad("n_replications must be positive".into());
        }
        let finite = self
            .theta
            .iter()
            .chain(&self.beta1)
            .chain(&self.beta2)
            .chain(&self.omega)
            .chain(self.log_baseline().iter())
            .all(|v| v.is_finite());
        if !finite {
            return bad("model parameters must be finite".into());
        }
        if let Some(t) = &self.eval_times {
            if t.is_empty() {
                return bad("eval_times must not be empty".into());
            }
            validate_grid(t).map_err(|e| Error::InvalidConfig(format!("eval_times: {e}")))?;
        }
        Ok(())
    }
}
