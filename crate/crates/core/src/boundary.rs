//! Multi-granularity decision boundaries and open-set inference.
//!
//! Every quality-filtered ball contributes one sphere `(centroid, radius)` to
//! its class. A query is assigned the class of the nearest sub-centroid whose
//! sphere contains it, or the unknown label if no sphere does.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ball::{make_ball, mean_radius, BallStats};
use crate::cluster::ClusterResult;
use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::metric::{self, Metric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub centroid: Vec<f64>,
    pub radius: f64,
    pub source_ball_stats: BallStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBoundaries {
    pub label: Label,
    pub boundaries: Vec<Boundary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryModel {
    pub metric: Metric,
    #[serde(rename = "K")]
    pub num_known: Label,
    pub dim: usize,
    /// `classes[c - 1]` holds the spheres of class `c`.
    pub classes: Vec<ClassBoundaries>,
}

/// How to pick among the spheres that contain a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceRule {
    /// Smallest raw distance.
    #[default]
    Nearest,
    /// Smallest distance divided by the sphere's radius.
    RadiusNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenSetPrediction {
    pub label: Label,
    /// Distance to the winning sub-centroid, or to the nearest one overall
    /// when the prediction is unknown.
    pub distance: f64,
    /// `(class, index)` of that sub-centroid.
    pub class: Label,
    pub index: usize,
}

impl BoundaryModel {
    pub fn empty(metric: Metric, num_known: Label, dim: usize) -> Self {
        BoundaryModel {
            metric,
            num_known,
            dim,
            classes: (1..=num_known)
                .map(|label| ClassBoundaries {
                    label,
                    boundaries: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn push(&mut self, label: Label, boundary: Boundary) -> Result<()> {
        if label == 0 || label > self.num_known {
            return Err(Error::LabelOutOfRange {
                label,
                max: self.num_known,
            });
        }
        if boundary.centroid.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: boundary.centroid.len(),
            });
        }
        if !(boundary.radius >= 0.0 && boundary.radius.is_finite()) {
            return Err(Error::NonFinite("boundary radius"));
        }
        self.classes[label as usize - 1].boundaries.push(boundary);
        Ok(())
    }

    pub fn unknown_label(&self) -> Label {
        self.num_known + 1
    }

    pub fn n_boundaries(&self) -> usize {
        self.classes.iter().map(|c| c.boundaries.len()).sum()
    }

    pub fn per_class_counts(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.boundaries.len()).collect()
    }

    pub fn empty_classes(&self) -> Vec<Label> {
        self.classes
            .iter()
            .filter(|c| c.boundaries.is_empty())
            .map(|c| c.label)
            .collect()
    }

    /// `(class, index, boundary)` in class-then-index order.
    pub fn iter(&self) -> impl Iterator<Item = (Label, usize, &Boundary)> {
        self.classes.iter().flat_map(|c| {
            c.boundaries
                .iter()
                .enumerate()
                .map(move |(s, b)| (c.label, s, b))
        })
    }

    /// Every sphere with its radius multiplied by `factor`.
    pub fn scaled_radii(&self, factor: f64) -> BoundaryModel {
        let mut out = self.clone();
        for c in &mut out.classes {
            for b in &mut c.boundaries {
                b.radius *= factor;
            }
        }
        out
    }

    fn check_query(&self, z: &[f64]) -> Result<()> {
        if self.n_boundaries() == 0 {
            return Err(Error::NoBoundaries);
        }
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        Ok(())
    }

    fn warn_if_incomplete(&self) {
        let empty = self.empty_classes();
        if !empty.is_empty() {
            log::warn!("classes {empty:?} have no decision boundary and can never be predicted");
        }
    }
}

/// One sphere per quality-filtered ball, radii re-measured under `metric`.
pub fn build_boundaries(
    encoded: &Dataset,
    clusters: &ClusterResult,
    metric: Metric,
) -> Result<BoundaryModel> {
    let mut model = BoundaryModel::empty(metric, encoded.num_known(), encoded.dim());
    for ball in clusters.filtered() {
        let radius = mean_radius(encoded, &ball.members, &ball.centroid, metric)?;
        model.push(
            ball.label,
            Boundary {
                centroid: ball.centroid.clone(),
                radius,
                source_ball_stats: ball.stats(),
            },
        )?;
    }
    if model.n_boundaries() == 0 {
        return Err(Error::NoBoundaries);
    }
    model.warn_if_incomplete();
    Ok(model)
}

/// One sphere per class: the whole class treated as a single ball.
pub fn build_single_boundary_baseline(encoded: &Dataset, metric: Metric) -> Result<BoundaryModel> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); encoded.num_known() as usize];
    for (i, s) in encoded.samples().iter().enumerate() {
        if s.label > encoded.num_known() {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                max: encoded.num_known(),
            });
        }
        members[s.label as usize - 1].push(i);
    }
    let mut model = BoundaryModel::empty(metric, encoded.num_known(), encoded.dim());
    for (c, m) in members.into_iter().enumerate() {
        let label = c as Label + 1;
        if m.is_empty() {
            return Err(Error::EmptyClass(label));
        }
        let ball = make_ball(encoded, m, metric)?;
        model.push(
            label,
            Boundary {
                centroid: ball.centroid.clone(),
                radius: ball.radius,
                source_ball_stats: ball.stats(),
            },
        )?;
    }
    Ok(model)
}

/// Nearest sub-centroid over all classes; ties go to the lower class, then
/// the lower index.
pub fn classify_closed(z: &[f64], model: &BoundaryModel) -> Result<Label> {
    model.check_query(z)?;
    let mut best: Option<(f64, Label)> = None;
    for (c, _, b) in model.iter() {
        let d = metric::distance(z, &b.centroid, model.metric)?;
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    best.map(|(_, c)| c).ok_or(Error::NoBoundaries)
}

pub fn classify_open(z: &[f64], model: &BoundaryModel) -> Result<OpenSetPrediction> {
    classify_open_with(z, model, InferenceRule::Nearest)
}

pub fn classify_open_with(
    z: &[f64],
    model: &BoundaryModel,
    rule: InferenceRule,
) -> Result<OpenSetPrediction> {
    model.check_query(z)?;
    // (score, distance, class, index) of the best satisfied sphere, and the
    // nearest sphere overall for reporting unknowns.
    let mut inside: Option<(f64, f64, Label, usize)> = None;
    let mut nearest: Option<(f64, Label, usize)> = None;
    for (c, s, b) in model.iter() {
        let d = metric::distance(z, &b.centroid, model.metric)?;
        if nearest.is_none_or(|(nd, _, _)| d < nd) {
            nearest = Some((d, c, s));
        }
        if d <= b.radius {
            let score = match rule {
                InferenceRule::Nearest => d,
                InferenceRule::RadiusNormalized if b.radius > 0.0 => d / b.radius,
                // d <= 0 = radius here, so the query sits on the centroid.
                InferenceRule::RadiusNormalized => 0.0,
            };
            if inside.is_none_or(|(bs, _, _, _)| score < bs) {
                inside = Some((score, d, c, s));
            }
        }
    }
    Ok(match inside {
        Some((_, distance, class, index)) => OpenSetPrediction {
            label: class,
            distance,
            class,
            index,
        },
        None => {
            let (distance, class, index) = nearest.ok_or(Error::NoBoundaries)?;
            OpenSetPrediction {
                label: model.unknown_label(),
                distance,
                class,
                index,
            }
        }
    })
}

/// Open-set predictions for every sample of `ds`, in order.
pub fn classify_dataset(
    ds: &Dataset,
    model: &BoundaryModel,
    rule: InferenceRule,
) -> Result<Vec<OpenSetPrediction>> {
    ds.samples()
        .par_iter()
        .map(|s| classify_open_with(&s.features, model, rule))
        .collect()
}
