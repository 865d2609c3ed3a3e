//! Distance functions shared by clustering, training and inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance used for radii, the training objective and the boundary test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `1 - cos(a, b)`, in `[0, 2]`.
    #[default]
    CosineDistance,
    Euclidean,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::CosineDistance => "cosine_distance",
            Metric::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" | "cosine_distance" => Ok(Metric::CosineDistance),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::config(format!("unknown metric '{other}'"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Distance between `a` and `b` under `metric`.
pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    match metric {
        Metric::Euclidean => Ok(squared_euclidean(a, b).sqrt()),
        Metric::CosineDistance => {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok(cosine_normalized(a, b, na, nb))
        }
    }
}

/// `1 - cos` written as half the squared distance between the unit vectors,
/// which is exactly zero for identical inputs and accurate near zero.
#[inline]
pub(crate) fn cosine_normalized(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x / na - y / nb;
            d * d
        })
        .sum();
    (0.5 * s).min(2.0)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Arithmetic mean of a non-empty set of equal-length vectors.
pub(crate) fn mean_of<'a>(
    rows: impl IntoIterator<Item = &'a [f64]>,
    dim: usize,
) -> (Vec<f64>, usize) {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for row in rows {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
        n += 1;
    }
    if n > 0 {
        let inv = 1.0 / n as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
    }
    (acc, n)
}
