//! Dense rectified encoder `z = max(0, W x + b)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Stage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseEncoder {
    d_in: usize,
    d_out: usize,
    /// Row-major `d_out x d_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseEncoder {
    pub fn new(d_in: usize, d_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::config("encoder dimensions must be positive"));
        }
        if weights.len() != d_in * d_out {
            return Err(Error::DimensionMismatch {
                expected: d_in * d_out,
                found: weights.len(),
            });
        }
        if bias.len() != d_out {
            return Err(Error::DimensionMismatch {
                expected: d_out,
                found: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder parameters"));
        }
        Ok(DenseEncoder {
            d_in,
            d_out,
            weights,
            bias,
        })
    }

    /// Weights uniform in `[-1/sqrt(d_in), 1/sqrt(d_in)]`, zero bias.
    pub fn random<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (d_in.max(1) as f64).sqrt();
        let weights = (0..d_in * d_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        DenseEncoder::new(d_in, d_out, weights, vec![0.0; d_out])
    }

    pub fn identity(d: usize) -> Self {
        let mut weights = vec![0.0; d * d];
        for i in 0..d {
            weights[i * d + i] = 1.0;
        }
        DenseEncoder {
            d_in: d,
            d_out: d,
            weights,
            bias: vec![0.0; d],
        }
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.d_in {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.d_in,
                found: x.len(),
            })
        }
    }

    /// `W x + b`, before the rectifier.
    pub fn pre_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self
            .weights
            .chunks_exact(self.d_in)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut a = self.pre_activation(x)?;
        a.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(a)
    }

    /// Encodes every sample, keeping labels and order.
    pub fn encode(&self, ds: &Dataset) -> Result<Dataset> {
        let features = ds
            .samples()
            .par_iter()
            .map(|s| self.forward(&s.features))
            .collect::<Result<Vec<_>>>()?;
        ds.with_features(features, Stage::Encoded)
    }

    pub fn checkpoint(&self, seed: u64, epoch: usize) -> EncoderCheckpoint {
        EncoderCheckpoint {
            d_in: self.d_in,
            d: self.d_out,
            w_h: self.weights.clone(),
            b_h: self.bias.clone(),
            seed,
            epoch,
        }
    }
}

/// On-disk form of an encoder. `W_h` is stored row-major and flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderCheckpoint {
    #[serde(rename = "D_in")]
    pub d_in: usize,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "W_h")]
    pub w_h: Vec<f64>,
    pub b_h: Vec<f64>,
    pub seed: u64,
    pub epoch: usize,
}

impl EncoderCheckpoint {
    pub fn into_encoder(self) -> Result<DenseEncoder> {
        DenseEncoder::new(self.d_in, self.d, self.w_h, self.b_h)
    }
}
