use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{CubatureSpec, Rule};

/// Nelder-Mead settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Total number of simplex runs: the start itself plus `restarts - 1`
    /// jittered copies.
    pub restarts: usize,
    /// Jitter half-width as a fraction of each box width.
    pub jitter: f64,
    /// Relative criterion spread `2|f_hi - f_lo| <= ftol (|f_hi| + |f_lo|)`.
    pub ftol: f64,
    /// Parameter spread of the simplex in natural coordinates.
    pub xtol: f64,
    pub max_iter: usize,
    /// Initial simplex edge in unconstrained coordinates.
    pub step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 5,
            jitter: 0.1,
            ftol: 1e-10,
            xtol: 1e-8,
            max_iter: 4000,
            step: 0.5,
        }
    }
}

/// Everything needed to turn a sample into an estimate at one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationConfig {
    pub k: usize,
    pub phi_cubature: CubatureSpec,
    pub sigma_cubature: CubatureSpec,
    pub optimizer: OptimizerConfig,
    /// Divisor of `n` in the k-means retention threshold.
    pub threshold_divisor: f64,
    pub seed: u64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            k: 100,
            phi_cubature: CubatureSpec::default().with_rule(Rule::Auto),
            sigma_cubature: CubatureSpec::default().fixed(1 << 16),
            optimizer: OptimizerConfig::default(),
            threshold_divisor: 75.0,
            seed: 1,
        }
    }
}

impl EstimationConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k >= n {
            return Err(Error::Config(format!("k = {} must satisfy 1 <= k < n = {n}", self.k)));
        }
        if self.optimizer.restarts == 0 {
            return Err(Error::Config("at least one optimizer run is needed".into()));
        }
        if !(self.threshold_divisor > 0.0) {
            return Err(Error::Config("threshold divisor must be positive".into()));
        }
        Ok(())
    }
}
