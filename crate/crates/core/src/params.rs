use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Metric;

/// Knobs for clustering, quality filtering and encoder training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Purity limit: a ball at or above this purity is not split.
    pub p_l: f64,
    /// Sample-count limit: a ball with at most this many members is not split.
    /// `None` picks `max(4, ceil(N / (50 K)))` from the training set.
    pub n_l: Option<usize>,
    /// Quality filter: minimum purity of a kept ball.
    pub p_t: f64,
    /// Quality filter: a kept ball has strictly more members than this.
    pub n_t: usize,
    pub metric: Metric,
    pub seed: u64,
    /// Encoder output dimension.
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Re-cluster every this many epochs.
    pub recluster_every: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            p_l: 0.9,
            n_l: None,
            p_t: 1.0,
            n_t: 3,
            metric: Metric::CosineDistance,
            seed: 0,
            dim: 64,
            epochs: 10,
            batch_size: 128,
            learning_rate: 2e-5,
            recluster_every: 1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        unit("p_l", self.p_l)?;
        unit("p_t", self.p_t)?;
        if self.n_l == Some(0) {
            return Err(Error::config("n_l must be positive"));
        }
        if self.n_t == 0 {
            return Err(Error::config("n_t must be positive"));
        }
        if self.dim == 0 || self.batch_size == 0 || self.recluster_every == 0 {
            return Err(Error::config(
                "dim, batch_size and recluster_every must be positive",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config(
                "learning_rate must be finite and non-negative",
            ));
        }
        Ok(())
    }

    /// The sample-count limit to use for a training set of `n` samples and `k` classes.
    pub fn resolved_n_l(&self, n: usize, k: usize) -> usize {
        self.n_l.unwrap_or_else(|| 4.max(n.div_ceil(50 * k.max(1))))
    }
}
