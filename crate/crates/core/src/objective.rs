//! Training objectives and their analytic gradients.
//!
//! The nearest-sub-centroid loss scores a representation `z` against every
//! known class by its distance to that class's closest sub-centroid and
//! takes a softmax over the negated distances. Sub-centroids are constants:
//! gradients stop at them and only reach the encoder parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryModel, ClassBoundaries};
use crate::data::{Label, LabeledVector};
use crate::encoder::DenseEncoder;
use crate::error::{Error, Result};
use crate::metric::{self, Metric};

/// Distance from `z` to the nearest sub-centroid of `class` and that
/// sub-centroid's index (lowest index on ties).
pub fn class_distance(z: &[f64], class: &ClassBoundaries, metric: Metric) -> Result<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (s, b) in class.boundaries.iter().enumerate() {
        let d = metric::distance(z, &b.centroid, metric)?;
        if !d.is_finite() {
            return Err(Error::NonFinite("sub-centroid distance"));
        }
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, s));
        }
    }
    best.ok_or(Error::EmptyClass(class.label))
}

/// `softmax(-d)` with the usual max-subtraction.
pub fn softmax_neg(d: &[f64]) -> Vec<f64> {
    let m = d.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = d.iter().map(|&v| (m - v).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `-ln softmax(-d)[y]` computed without forming the probability.
fn neg_log_softmax_neg(d: &[f64], y: usize) -> f64 {
    let m = d.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = d.iter().map(|&v| (m - v).exp()).sum();
    (d[y] - m) + s.ln()
}

fn check_label(y: Label, k: Label) -> Result<usize> {
    if y == 0 || y > k {
        Err(Error::LabelOutOfRange { label: y, max: k })
    } else {
        Ok(y as usize - 1)
    }
}

fn class_distances(z: &[f64], model: &BoundaryModel) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut d = Vec::with_capacity(model.classes.len());
    let mut arg = Vec::with_capacity(model.classes.len());
    for class in &model.classes {
        let (dist, s) = class_distance(z, class, model.metric)?;
        d.push(dist);
        arg.push(s);
    }
    Ok((d, arg))
}

/// `p(c | z)` for every known class, in class order.
pub fn class_probabilities(z: &[f64], model: &BoundaryModel) -> Result<Vec<f64>> {
    Ok(softmax_neg(&class_distances(z, model)?.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbLoss {
    pub loss: f64,
    /// `p(y_i | z_i)` for each sample.
    pub probs: Vec<f64>,
}

/// Mean negative log-likelihood of the nearest-sub-centroid classifier on a
/// batch of encoded samples.
pub fn loss_gb(batch: &[LabeledVector], model: &BoundaryModel) -> Result<GbLoss> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    let mut probs = Vec::with_capacity(batch.len());
    for s in batch {
        let y = check_label(s.label, model.num_known)?;
        let (d, _) = class_distances(&s.features, model)?;
        let nll = neg_log_softmax_neg(&d, y);
        total += nll;
        probs.push((-nll).exp());
    }
    Ok(GbLoss {
        loss: total / batch.len() as f64,
        probs,
    })
}

/// Gradients with respect to the encoder parameters, averaged over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub loss: f64,
}

impl Gradients {
    fn zeros(enc: &DenseEncoder) -> Self {
        Gradients {
            weights: vec![0.0; enc.d_in() * enc.d_out()],
            bias: vec![0.0; enc.d_out()],
            loss: 0.0,
        }
    }

    /// Adds `g_a x^T` and `g_a`, where `g_a` is the gradient at the pre-activation.
    fn accumulate(&mut self, g_a: &[f64], x: &[f64]) {
        let d_in = x.len();
        for (r, &g) in g_a.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            self.bias[r] += g;
            for (w, &v) in self.weights[r * d_in..(r + 1) * d_in].iter_mut().zip(x) {
                *w += g * v;
            }
        }
    }

    fn scale(&mut self, f: f64) {
        self.weights
            .iter_mut()
            .chain(self.bias.iter_mut())
            .for_each(|v| *v *= f);
        self.loss *= f;
    }
}

/// Derivative of `distance(z, o)` with respect to `z`, added into `out` with weight `w`.
fn add_distance_grad(
    z: &[f64],
    o: &[f64],
    d: f64,
    metric: Metric,
    w: f64,
    out: &mut [f64],
) -> Result<()> {
    if w == 0.0 {
        return Ok(());
    }
    match metric {
        Metric::Euclidean => {
            // Subgradient zero at the centroid itself.
            if d > 0.0 {
                for ((g, zi), oi) in out.iter_mut().zip(z).zip(o) {
                    *g += w * (zi - oi) / d;
                }
            }
        }
        Metric::CosineDistance => {
            let (nz, no) = (metric::norm(z), metric::norm(o));
            if nz == 0.0 || no == 0.0 {
                return Err(Error::ZeroVector);
            }
            let zo = metric::dot(z, o);
            let a = 1.0 / (nz * no);
            let b = zo / (nz * nz * nz * no);
            for ((g, zi), oi) in out.iter_mut().zip(z).zip(o) {
                *g += w * (b * zi - a * oi);
            }
        }
    }
    Ok(())
}

/// Analytic gradient of [`loss_gb`] through the encoder, for a batch of raw inputs.
pub fn grad_loss(
    batch: &[LabeledVector],
    encoder: &DenseEncoder,
    model: &BoundaryModel,
) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if model.dim != encoder.d_out() {
        return Err(Error::DimensionMismatch {
            expected: encoder.d_out(),
            found: model.dim,
        });
    }
    let mut grads = Gradients::zeros(encoder);
    let mut g_z = vec![0.0; encoder.d_out()];
    for s in batch {
        let y = check_label(s.label, model.num_known)?;
        let a = encoder.pre_activation(&s.features)?;
        let z: Vec<f64> = a.iter().map(|v| v.max(0.0)).collect();
        let (d, arg) = class_distances(&z, model)?;
        let p = softmax_neg(&d);
        grads.loss += neg_log_softmax_neg(&d, y);

        g_z.iter_mut().for_each(|v| *v = 0.0);
        for (c, class) in model.classes.iter().enumerate() {
            let weight = if c == y { 1.0 - p[c] } else { -p[c] };
            let o = &class.boundaries[arg[c]].centroid;
            add_distance_grad(&z, o, d[c], model.metric, weight, &mut g_z)?;
        }
        for (g, &av) in g_z.iter_mut().zip(&a) {
            if av <= 0.0 {
                *g = 0.0;
            }
        }
        grads.accumulate(&g_z, &s.features);
    }
    grads.scale(1.0 / batch.len() as f64);
    Ok(grads)
}

/// Linear K-way classifier head used by the cross-entropy baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub num_classes: usize,
    pub d: usize,
    /// Row-major `num_classes x d`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn random<R: Rng + ?Sized>(num_classes: usize, d: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d.max(1) as f64).sqrt();
        LinearHead {
            num_classes,
            d,
            weights: (0..num_classes * d)
                .map(|_| rng.random_range(-bound..=bound))
                .collect(),
            bias: vec![0.0; num_classes],
        }
    }

    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.d)
            .zip(&self.bias)
            .map(|(row, b)| metric::dot(row, z) + b)
            .collect()
    }

    /// Predicted label in `1..=num_classes`.
    pub fn predict(&self, z: &[f64]) -> Label {
        let logits = self.logits(z);
        let mut best = 0;
        for (c, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = c;
            }
        }
        best as Label + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeGradients {
    pub encoder: Gradients,
    pub head_weights: Vec<f64>,
    pub head_bias: Vec<f64>,
}

/// Mean softmax cross-entropy of `head(encoder(x))` and its gradients.
pub fn ce_loss_grad(
    batch: &[LabeledVector],
    encoder: &DenseEncoder,
    head: &LinearHead,
) -> Result<CeGradients> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if head.d != encoder.d_out() {
        return Err(Error::DimensionMismatch {
            expected: encoder.d_out(),
            found: head.d,
        });
    }
    let k = head.num_classes as Label;
    let mut enc = Gradients::zeros(encoder);
    let mut head_weights = vec![0.0; head.weights.len()];
    let mut head_bias = vec![0.0; head.num_classes];
    for s in batch {
        let y = check_label(s.label, k)?;
        let a = encoder.pre_activation(&s.features)?;
        let z: Vec<f64> = a.iter().map(|v| v.max(0.0)).collect();
        let logits = head.logits(&z);
        let neg: Vec<f64> = logits.iter().map(|v| -v).collect();
        let p = softmax_neg(&neg);
        enc.loss += neg_log_softmax_neg(&neg, y);

        let mut g_z = vec![0.0; z.len()];
        for c in 0..head.num_classes {
            let g = p[c] - if c == y { 1.0 } else { 0.0 };
            head_bias[c] += g;
            let row = c * head.d..(c + 1) * head.d;
            for ((hw, w), (zi, gz)) in head_weights[row.clone()]
                .iter_mut()
                .zip(&head.weights[row])
                .zip(z.iter().zip(g_z.iter_mut()))
            {
                *hw += g * zi;
                *gz += g * w;
            }
        }
        for (g, &av) in g_z.iter_mut().zip(&a) {
            if av <= 0.0 {
                *g = 0.0;
            }
        }
        enc.accumulate(&g_z, &s.features);
    }
    let inv = 1.0 / batch.len() as f64;
    enc.scale(inv);
    head_weights
        .iter_mut()
        .chain(head_bias.iter_mut())
        .for_each(|v| *v *= inv);
    Ok(CeGradients {
        encoder: enc,
        head_weights,
        head_bias,
    })
}
