//! Representation learning.
//!
//! [`train_hrl`] alternates granular-ball clustering of the current encoder
//! outputs with mini-batch gradient descent on the nearest-sub-centroid loss.
//! [`train_ce_baseline`] trains the same encoder with a throwaway linear head
//! and plain cross-entropy instead.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ball::{make_ball, GranularBall};
use crate::boundary::{Boundary, BoundaryModel};
use crate::cluster::{cluster_adaptive, ClusterResult};
use crate::data::{Dataset, LabeledVector};
use crate::encoder::DenseEncoder;
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::objective::{ce_loss_grad, grad_loss, LinearHead};
use crate::params::HyperParams;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const HEAD_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the clustering pass that runs before epoch `epoch`.
fn cluster_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Encoder initialization shared by every training route, so ablations start
/// from the same parameters for a given seed.
pub fn initial_encoder(d_in: usize, hp: &HyperParams) -> Result<DenseEncoder> {
    DenseEncoder::random(d_in, hp.dim, &mut stream_rng(hp.seed, INIT_STREAM))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    pub balls: usize,
    pub filtered: usize,
    /// Checksum of the encoded vectors the epoch's clustering ran on.
    pub encoded_checksum: u64,
}

#[derive(Debug, Clone)]
pub struct HrlOutcome {
    pub encoder: DenseEncoder,
    /// Clustering of `encoded`, recomputed after the last update.
    pub clusters: ClusterResult,
    pub encoded: Dataset,
    pub history: Vec<EpochRecord>,
}

/// Sub-centroids the loss is computed against. Classes without a filtered
/// ball fall back to their unfiltered balls, then to a single whole-class
/// ball. A known class without training samples is an error.
pub fn training_prototypes(
    encoded: &Dataset,
    clusters: &ClusterResult,
    metric: Metric,
) -> Result<BoundaryModel> {
    let mut model = BoundaryModel::empty(metric, encoded.num_known(), encoded.dim());
    let to_boundary = |b: &GranularBall| Boundary {
        centroid: b.centroid.clone(),
        radius: b.radius,
        source_ball_stats: b.stats(),
    };
    for ball in clusters.filtered() {
        model.push(ball.label, to_boundary(ball))?;
    }
    for label in encoded.known_labels() {
        if !model.classes[label as usize - 1].boundaries.is_empty() {
            continue;
        }
        let unfiltered: Vec<_> = clusters.balls.iter().filter(|b| b.label == label).collect();
        if !unfiltered.is_empty() {
            log::warn!(
                "class {label}: no filtered ball, training against {} unfiltered",
                unfiltered.len()
            );
            for b in unfiltered {
                model.push(label, to_boundary(b))?;
            }
            continue;
        }
        let members: Vec<usize> = (0..encoded.len())
            .filter(|&i| encoded.label(i) == label)
            .collect();
        if members.is_empty() {
            return Err(Error::EmptyClass(label));
        }
        log::warn!("class {label}: no ball carries this label, training against the class mean");
        model.push(label, to_boundary(&make_ball(encoded, members, metric)?))?;
    }
    Ok(model)
}

fn batch_of(ds: &Dataset, idx: &[usize]) -> Vec<LabeledVector> {
    idx.iter().map(|&i| ds.samples()[i].clone()).collect()
}

fn sgd_step(enc: &mut DenseEncoder, gw: &[f64], gb: &[f64], lr: f64) {
    let (w, b) = enc.params_mut();
    w.iter_mut().zip(gw).for_each(|(p, g)| *p -= lr * g);
    b.iter_mut().zip(gb).for_each(|(p, g)| *p -= lr * g);
}

pub fn train_hrl(raw: &Dataset, hp: &HyperParams) -> Result<HrlOutcome> {
    raw.ensure_training()?;
    hp.validate()?;
    let mut encoder = initial_encoder(raw.dim(), hp)?;
    let mut shuffle = stream_rng(hp.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..raw.len()).collect();
    let mut history = Vec::with_capacity(hp.epochs);
    let mut current: Option<(BoundaryModel, ClusterResult, u64)> = None;

    for epoch in 0..hp.epochs {
        if epoch % hp.recluster_every == 0 || current.is_none() {
            let encoded = encoder.encode(raw)?;
            let cluster_hp = HyperParams {
                seed: cluster_seed(hp.seed, epoch),
                ..hp.clone()
            };
            let clusters = cluster_adaptive(&encoded, &cluster_hp)?;
            let protos = training_prototypes(&encoded, &clusters, hp.metric)?;
            current = Some((protos, clusters, encoded.checksum()));
        }
        let (protos, clusters, checksum) = current.as_ref().expect("set above");

        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let g = grad_loss(&batch_of(raw, chunk), &encoder, protos)?;
            loss_sum += g.loss * chunk.len() as f64;
            sgd_step(&mut encoder, &g.weights, &g.bias, hp.learning_rate);
        }
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / raw.len() as f64,
            balls: clusters.balls.len(),
            filtered: clusters.num_filtered(),
            encoded_checksum: *checksum,
        });
        log::debug!("hrl epoch {epoch}: loss {:.6}", loss_sum / raw.len() as f64);
    }

    let encoded = encoder.encode(raw)?;
    let clusters = cluster_adaptive(
        &encoded,
        &HyperParams {
            seed: cluster_seed(hp.seed, hp.epochs),
            ..hp.clone()
        },
    )?;
    Ok(HrlOutcome {
        encoder,
        clusters,
        encoded,
        history,
    })
}

#[derive(Debug, Clone)]
pub struct CeOutcome {
    pub encoder: DenseEncoder,
    pub head: LinearHead,
    /// Mean cross-entropy per epoch.
    pub history: Vec<f64>,
}

impl CeOutcome {
    /// Fraction of `raw` the encoder+head classifies correctly.
    pub fn accuracy(&self, raw: &Dataset) -> Result<f64> {
        let mut correct = 0usize;
        for s in raw.samples() {
            if self.head.predict(&self.encoder.forward(&s.features)?) == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / raw.len().max(1) as f64)
    }
}

pub fn train_ce_baseline(raw: &Dataset, hp: &HyperParams) -> Result<CeOutcome> {
    raw.ensure_training()?;
    hp.validate()?;
    let mut encoder = initial_encoder(raw.dim(), hp)?;
    let mut head = LinearHead::random(
        raw.num_known() as usize,
        hp.dim,
        &mut stream_rng(hp.seed, HEAD_STREAM),
    );
    let mut shuffle = stream_rng(hp.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..raw.len()).collect();
    let mut history = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let g = ce_loss_grad(&batch_of(raw, chunk), &encoder, &head)?;
            loss_sum += g.encoder.loss * chunk.len() as f64;
            sgd_step(
                &mut encoder,
                &g.encoder.weights,
                &g.encoder.bias,
                hp.learning_rate,
            );
            head.weights
                .iter_mut()
                .zip(&g.head_weights)
                .for_each(|(p, d)| *p -= hp.learning_rate * d);
            head.bias
                .iter_mut()
                .zip(&g.head_bias)
                .for_each(|(p, d)| *p -= hp.learning_rate * d);
        }
        history.push(loss_sum / raw.len() as f64);
        log::debug!("ce epoch {epoch}: loss {:.6}", loss_sum / raw.len() as f64);
    }
    Ok(CeOutcome {
        encoder,
        head,
        history,
    })
}

/// Fraction of `encoded` whose nearest sub-centroid carries the right label.
pub fn nearest_sub_centroid_accuracy(encoded: &Dataset, model: &BoundaryModel) -> Result<f64> {
    let mut correct = 0usize;
    for s in encoded.samples() {
        if crate::boundary::classify_closed(&s.features, model)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / encoded.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Stage;
    use crate::metric::Metric;
    use rand::{Rng, SeedableRng};

    /// Two well separated classes in four dimensions.
    fn separable(seed: u64, per: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        for (label, center) in [(1, [2.0, 0.0, 1.0, 0.0]), (2, [0.0, 2.0, 0.0, 1.0])] {
            for _ in 0..per {
                let f = center
                    .iter()
                    .map(|c| c + rng.random_range(-0.4..0.4))
                    .collect();
                samples.push(LabeledVector::new(f, label));
            }
        }
        Dataset::new(samples, 4, 2, Stage::Raw).unwrap()
    }

    fn hp(seed: u64) -> HyperParams {
        HyperParams {
            seed,
            dim: 8,
            epochs: 8,
            batch_size: 16,
            learning_rate: 0.05,
            metric: Metric::Euclidean,
            ..HyperParams::default()
        }
    }

    #[test]
    fn hrl_separates_and_loss_drops() {
        for seed in 0..5 {
            let raw = separable(seed, 60);
            let out = train_hrl(&raw, &hp(seed)).unwrap();
            let first = out.history.first().unwrap().loss;
            let last = out.history.last().unwrap().loss;
            assert!(last < first, "seed {seed}: {first} -> {last}");
            let model =
                training_prototypes(&out.encoded, &out.clusters, Metric::Euclidean).unwrap();
            assert!(nearest_sub_centroid_accuracy(&out.encoded, &model).unwrap() > 0.95);
        }
    }

    #[test]
    fn zero_epochs_keeps_initial_encoder() {
        let raw = separable(1, 20);
        let h = HyperParams { epochs: 0, ..hp(3) };
        let out = train_hrl(&raw, &h).unwrap();
        assert_eq!(out.encoder, initial_encoder(4, &h).unwrap());
        assert!(out.history.is_empty());
        assert_eq!(
            out.encoded.checksum(),
            out.encoder.encode(&raw).unwrap().checksum()
        );
    }

    #[test]
    fn single_class_has_zero_loss() {
        let raw = separable(2, 20).subset(&(0..20).collect::<Vec<_>>());
        let raw = Dataset::new(raw.into_samples(), 4, 1, Stage::Raw).unwrap();
        let out = train_hrl(&raw, &hp(0)).unwrap();
        assert!(out.history.iter().all(|e| e.loss == 0.0));
        assert_eq!(out.encoder, initial_encoder(4, &hp(0)).unwrap());
    }

    #[test]
    fn history_checksum_tracks_the_encoder_of_that_epoch() {
        let raw = separable(4, 30);
        let h = HyperParams { epochs: 3, ..hp(5) };
        let full = train_hrl(&raw, &h).unwrap();
        let one = train_hrl(
            &raw,
            &HyperParams {
                epochs: 1,
                ..h.clone()
            },
        )
        .unwrap();
        // Epoch 1 clusters the output of the encoder after one epoch.
        assert_eq!(full.history[1].encoded_checksum, one.encoded.checksum());
        assert_eq!(
            full.history[0].encoded_checksum,
            one.history[0].encoded_checksum
        );
    }

    #[test]
    fn training_is_deterministic() {
        let raw = separable(6, 30);
        let a = train_hrl(&raw, &hp(9)).unwrap();
        let b = train_hrl(&raw, &hp(9)).unwrap();
        assert_eq!(a.encoder, b.encoder);
        assert_eq!(a.history, b.history);
        let c = train_ce_baseline(&raw, &hp(9)).unwrap();
        let d = train_ce_baseline(&raw, &hp(9)).unwrap();
        assert_eq!(
            (c.encoder, c.head, c.history),
            (d.encoder, d.head, d.history)
        );
    }

    #[test]
    fn ce_baseline_learns() {
        for seed in 0..5 {
            let raw = separable(seed + 10, 60);
            let out = train_ce_baseline(&raw, &hp(seed)).unwrap();
            assert!(out.history.last() < out.history.first());
            assert!(out.accuracy(&raw).unwrap() > 0.95);
        }
    }

    #[test]
    fn unknown_labels_are_rejected() {
        let mut samples = separable(0, 5).into_samples();
        samples.push(LabeledVector::new(vec![0.0; 4], 3));
        let raw = Dataset::new(samples, 4, 2, Stage::Raw).unwrap();
        assert!(matches!(
            train_hrl(&raw, &hp(0)),
            Err(Error::LabelOutOfRange { label: 3, .. })
        ));
        assert!(train_ce_baseline(&raw, &hp(0)).is_err());
    }

    #[test]
    fn prototype_fallbacks() {
        // With n_t huge nothing survives the filter, so every class falls
        // back to its unfiltered balls.
        let raw = separable(3, 20);
        let h = HyperParams { n_t: 1000, ..hp(0) };
        let clusters = crate::cluster::cluster_adaptive(&raw, &h).unwrap();
        assert_eq!(clusters.num_filtered(), 0);
        let model = training_prototypes(&raw, &clusters, Metric::Euclidean).unwrap();
        assert_eq!(model.n_boundaries(), clusters.balls.len());
        assert!(model.empty_classes().is_empty());

        // No split happens, so class 2 never owns a ball and trains against
        // its own mean.
        let mut samples: Vec<_> = (0..10)
            .map(|i| LabeledVector::new(vec![i as f64, 1.0], 1))
            .collect();
        samples.push(LabeledVector::new(vec![4.0, 3.0], 2));
        samples.push(LabeledVector::new(vec![6.0, 5.0], 2));
        let ds = Dataset::new(samples, 2, 2, Stage::Raw).unwrap();
        let h = HyperParams {
            n_l: Some(100),
            p_l: 0.8,
            ..hp(0)
        };
        let clusters = crate::cluster::cluster_adaptive(&ds, &h).unwrap();
        assert_eq!(clusters.balls.len(), 1);
        let model = training_prototypes(&ds, &clusters, Metric::Euclidean).unwrap();
        assert_eq!(model.classes[1].boundaries.len(), 1);
        assert_eq!(model.classes[1].boundaries[0].centroid, vec![5.0, 4.0]);
    }
}
