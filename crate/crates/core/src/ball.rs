use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::metric::{self, Metric};

/// A granular ball: a labeled subset of a dataset summarized by its mean,
/// mean member-to-centroid distance, majority label and purity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularBall {
    pub members: Vec<usize>,
    pub centroid: Vec<f64>,
    pub radius: f64,
    pub label: Label,
    pub purity: f64,
}

impl GranularBall {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    pub fn stats(&self) -> BallStats {
        BallStats {
            count: self.count(),
            label: self.label,
            purity: self.purity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallStats {
    pub count: usize,
    pub label: Label,
    pub purity: f64,
}

/// Majority label (smallest id on ties) and its share of `labels`.
pub fn majority(labels: impl IntoIterator<Item = Label>) -> Option<(Label, f64)> {
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    let mut total = 0usize;
    for l in labels {
        *counts.entry(l).or_default() += 1;
        total += 1;
    }
    // BTreeMap iterates in ascending label order, so keeping the first max
    // breaks ties toward the smallest label.
    let (label, count) =
        counts
            .into_iter()
            .fold(None, |best: Option<(Label, usize)>, (l, c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((l, c)),
            })?;
    Some((label, count as f64 / total as f64))
}

/// Mean distance from each member to `centroid`.
pub fn mean_radius(
    ds: &Dataset,
    members: &[usize],
    centroid: &[f64],
    metric: Metric,
) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptyBall);
    }
    let mut sum = 0.0;
    for &i in members {
        sum += metric::distance(ds.features(i), centroid, metric)?;
    }
    Ok(sum / members.len() as f64)
}

pub fn make_ball(ds: &Dataset, members: Vec<usize>, metric: Metric) -> Result<GranularBall> {
    if members.is_empty() {
        return Err(Error::EmptyBall);
    }
    let (centroid, _) = metric::mean_of(members.iter().map(|&i| ds.features(i)), ds.dim());
    let radius = mean_radius(ds, &members, &centroid, metric)?;
    let (label, purity) = majority(members.iter().map(|&i| ds.label(i))).ok_or(Error::EmptyBall)?;
    Ok(GranularBall {
        members,
        centroid,
        radius,
        label,
        purity,
    })
}
