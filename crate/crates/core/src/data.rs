//! Labeled feature vectors and the dataset container.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class id. Known classes are `1..=K`; `K + 1` marks the unknown class.
pub type Label = u32;

/// Whether a dataset holds encoder inputs or encoder outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    Encoded,
}

impl Stage {
    pub fn to_byte(self) -> u8 {
        match self {
            Stage::Raw => 0,
            Stage::Encoded => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Stage::Raw),
            1 => Some(Stage::Encoded),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVector {
    pub features: Vec<f64>,
    pub label: Label,
}

impl LabeledVector {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        LabeledVector { features, label }
    }
}

/// An ordered collection of labeled vectors of one fixed dimension.
///
/// `num_known` is K: the known classes are `1..=K` and the unknown class is
/// `K + 1`. Training sets only carry known labels, test sets may also carry
/// the unknown label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LabeledVector>,
    dim: usize,
    num_known: Label,
    stage: Stage,
}

impl Dataset {
    pub fn new(
        samples: Vec<LabeledVector>,
        dim: usize,
        num_known: Label,
        stage: Stage,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dataset dimension must be positive"));
        }
        if num_known == 0 {
            return Err(Error::config("dataset needs at least one known class"));
        }
        for s in &samples {
            if s.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.features.len(),
                });
            }
            if s.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("dataset features"));
            }
            if s.label == 0 || s.label > num_known + 1 {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    max: num_known + 1,
                });
            }
        }
        Ok(Dataset {
            samples,
            dim,
            num_known,
            stage,
        })
    }

    /// Builds a dataset whose number of known classes is the largest label seen.
    pub fn from_samples(samples: Vec<LabeledVector>, stage: Stage) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        let dim = first.features.len();
        let k = samples.iter().map(|s| s.label).max().unwrap_or(1);
        Dataset::new(samples, dim, k, stage)
    }

    pub fn samples(&self) -> &[LabeledVector] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<LabeledVector> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    /// K, the number of known classes.
    pub fn num_known(&self) -> Label {
        self.num_known
    }

    pub fn known_labels(&self) -> impl Iterator<Item = Label> {
        1..=self.num_known
    }

    pub fn unknown_label(&self) -> Label {
        self.num_known + 1
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.samples[i].features
    }

    pub fn label(&self, i: usize) -> Label {
        self.samples[i].label
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Number of samples per label, indexed `0..=K+1` (index 0 unused).
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_known as usize + 2];
        for s in &self.samples {
            counts[s.label as usize] += 1;
        }
        counts
    }

    /// Fails unless every sample carries a known label.
    pub fn ensure_training(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        match self.samples.iter().find(|s| s.label > self.num_known) {
            Some(s) => Err(Error::LabelOutOfRange {
                label: s.label,
                max: self.num_known,
            }),
            None => Ok(()),
        }
    }

    /// Same metadata, new features. Used when pushing data through an encoder.
    pub fn with_features(&self, features: Vec<Vec<f64>>, stage: Stage) -> Result<Dataset> {
        if features.len() != self.samples.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: self.samples.len(),
            });
        }
        let dim = features.first().map_or(self.dim, Vec::len);
        let samples = features
            .into_iter()
            .zip(&self.samples)
            .map(|(f, s)| LabeledVector::new(f, s.label))
            .collect();
        Dataset::new(samples, dim, self.num_known, stage)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            dim: self.dim,
            num_known: self.num_known,
            stage: self.stage,
        }
    }

    /// FNV-1a over the label and the bit pattern of every feature.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for s in &self.samples {
            eat(&s.label.to_le_bytes());
            for x in &s.features {
                eat(&x.to_bits().to_le_bytes());
            }
        }
        h
    }
}
