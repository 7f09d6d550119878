use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances and the randomness schedule shared by every estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub tau_num: f64,
    pub tau_rank: f64,
    pub tau_opt: f64,
    pub dedup_eps: f64,
    pub seed: u64,
    pub restarts: usize,
    pub sample_count: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            tau_num: 1e-9,
            tau_rank: 1e-8,
            tau_opt: 1e-7,
            dedup_eps: 0.02,
            seed: 0,
            restarts: 6,
            sample_count: 1000,
        }
    }
}

impl ToleranceConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let tols = [self.tau_num, self.tau_rank, self.tau_opt, self.dedup_eps];
        if tols.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Precondition("tolerances must be positive and finite".into()));
        }
        if self.dedup_eps <= self.tau_opt {
            return Err(Error::Precondition("dedup_eps must exceed tau_opt".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Precondition("restarts must be at least 1".into()));
        }
        Ok(())
    }
}
