//! Synthetic labeled point clouds with open-intent samples.
//!
//! Known classes are laid out around the origin. Open samples carry the
//! unknown label `K + 1` and come in two flavours: *intra* points sit inside
//! a class's own region (a ring's hole, a crescent's hollow, the gap between
//! two blobs of one class) and *inter* points sit in the space between
//! classes. Generation happens in the plane; for `dim > 2` the points are
//! padded with Gaussian coordinates and randomly rotated.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, LabeledVector, Stage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `blobs_per_class` isotropic blobs per class, labels interleaved
    /// around a circle of radius `spacing`.
    GaussianMixture { blobs_per_class: usize, spread: f64 },
    /// Annulus per class with a hollow center.
    Ring {
        inner_radius: f64,
        outer_radius: f64,
    },
    /// Half-annulus per class, open side rotated per class.
    Crescent { radius: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub family: Family,
    pub classes: usize,
    pub points_per_class: usize,
    /// Distance from the origin to each class center.
    pub spacing: f64,
    pub intra_open: usize,
    pub inter_open: usize,
    /// Probability that a known sample is relabeled to another known class.
    pub label_noise: f64,
    pub dim: usize,
    /// Standard deviation of the padding coordinates when `dim > 2`.
    pub extra_noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            family: Family::Ring {
                inner_radius: 2.0,
                outer_radius: 3.0,
            },
            classes: 3,
            points_per_class: 500,
            spacing: 6.0,
            intra_open: 200,
            inter_open: 200,
            label_noise: 0.0,
            dim: 2,
            extra_noise: 0.1,
        }
    }
}

impl SyntheticSpec {
    /// Named default specs: `ring`, `gaussian_mixture`, `crescent`.
    pub fn preset(name: &str) -> Result<Self> {
        let base = SyntheticSpec::default();
        match name {
            "ring" => Ok(base),
            "gaussian_mixture" => Ok(SyntheticSpec {
                family: Family::GaussianMixture {
                    blobs_per_class: 2,
                    spread: 0.6,
                },
                ..base
            }),
            "crescent" => Ok(SyntheticSpec {
                family: Family::Crescent {
                    radius: 2.5,
                    width: 1.0,
                },
                ..base
            }),
            other => Err(Error::UnknownGenerator(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::GaussianMixture { .. } => "gaussian_mixture",
            Family::Ring { .. } => "ring",
            Family::Crescent { .. } => "crescent",
        }
    }

    fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.points_per_class == 0 {
            return Err(Error::config("synthetic spec needs classes and points"));
        }
        if self.dim < 2 {
            return Err(Error::config("synthetic data needs dim >= 2"));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::config("label_noise must lie in [0, 1)"));
        }
        match self.family {
            Family::GaussianMixture {
                blobs_per_class,
                spread,
            } => {
                if blobs_per_class == 0 || spread <= 0.0 {
                    return Err(Error::config(
                        "gaussian mixture needs blobs and a positive spread",
                    ));
                }
                if blobs_per_class < 2 && self.intra_open > 0 {
                    return Err(Error::config(
                        "intra-open points need at least two blobs per class",
                    ));
                }
            }
            Family::Ring {
                inner_radius,
                outer_radius,
            } => {
                if !(inner_radius > 0.0 && outer_radius > inner_radius) {
                    return Err(Error::config("ring needs 0 < inner_radius < outer_radius"));
                }
            }
            Family::Crescent { radius, width } => {
                if !(width > 0.0 && radius > width) {
                    return Err(Error::config("crescent needs 0 < width < radius"));
                }
            }
        }
        Ok(())
    }

    fn class_center(&self, c: usize) -> [f64; 2] {
        if self.classes == 1 {
            return [0.0, 0.0];
        }
        let t = TAU * c as f64 / self.classes as f64;
        [self.spacing * t.cos(), self.spacing * t.sin()]
    }

    /// Radius beyond which a point is clear of a class's region.
    fn class_extent(&self) -> f64 {
        match self.family {
            Family::GaussianMixture { spread, .. } => 4.0 * spread,
            Family::Ring { outer_radius, .. } => outer_radius,
            Family::Crescent { radius, width } => radius + width / 2.0,
        }
    }
}

fn disk_point<R: Rng>(rng: &mut R, r_min: f64, r_max: f64) -> [f64; 2] {
    // Uniform in area.
    let r = rng.random_range(r_min * r_min..=r_max * r_max).sqrt();
    let t = rng.random_range(0.0..TAU);
    [r * t.cos(), r * t.sin()]
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Known points plus the open points, all in the plane.
fn planar(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<([f64; 2], Label)> {
    let k = spec.classes;
    let unknown = k as Label + 1;
    let mut out = Vec::with_capacity(k * spec.points_per_class + spec.intra_open + spec.inter_open);

    match spec.family {
        Family::GaussianMixture {
            blobs_per_class,
            spread,
        } => {
            let normal = Normal::new(0.0, spread).expect("positive spread");
            let modes = blobs_per_class * k;
            let blob_center = |c: usize, b: usize| {
                let t = TAU * (b * k + c) as f64 / modes as f64;
                [spec.spacing * t.cos(), spec.spacing * t.sin()]
            };
            for c in 0..k {
                for i in 0..spec.points_per_class {
                    let o = blob_center(c, i % blobs_per_class);
                    out.push((
                        add(o, [normal.sample(rng), normal.sample(rng)]),
                        c as Label + 1,
                    ));
                }
            }
            for i in 0..spec.intra_open {
                let c = i % k;
                let b = (i / k) % blobs_per_class;
                let (p, q) = (blob_center(c, b), blob_center(c, (b + 1) % blobs_per_class));
                let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
                out.push((add(mid, disk_point(rng, 0.0, spread)), unknown));
            }
        }
        Family::Ring {
            inner_radius,
            outer_radius,
        } => {
            for c in 0..k {
                let o = spec.class_center(c);
                for _ in 0..spec.points_per_class {
                    out.push((
                        add(o, disk_point(rng, inner_radius, outer_radius)),
                        c as Label + 1,
                    ));
                }
            }
            for i in 0..spec.intra_open {
                let o = spec.class_center(i % k);
                out.push((add(o, disk_point(rng, 0.0, inner_radius / 2.0)), unknown));
            }
        }
        Family::Crescent { radius, width } => {
            for c in 0..k {
                let o = spec.class_center(c);
                // The hollow faces the origin.
                let facing = (-o[1]).atan2(-o[0]);
                for _ in 0..spec.points_per_class {
                    let r = rng.random_range(radius - width / 2.0..=radius + width / 2.0);
                    let t = facing + TAU / 4.0 + rng.random_range(0.0..TAU / 2.0);
                    out.push((add(o, [r * t.cos(), r * t.sin()]), c as Label + 1));
                }
            }
            for i in 0..spec.intra_open {
                let o = spec.class_center(i % k);
                out.push((
                    add(o, disk_point(rng, 0.0, (radius - width / 2.0) / 2.0)),
                    unknown,
                ));
            }
        }
    }

    // Inter-open: rejection sampling in a disk around everything, keeping
    // points well clear of every class region.
    let clear = spec.class_extent() + 1.0;
    let centers: Vec<[f64; 2]> = match spec.family {
        Family::GaussianMixture {
            blobs_per_class, ..
        } => (0..blobs_per_class * k)
            .map(|m| {
                let t = TAU * m as f64 / (blobs_per_class * k) as f64;
                [spec.spacing * t.cos(), spec.spacing * t.sin()]
            })
            .collect(),
        _ => (0..k).map(|c| spec.class_center(c)).collect(),
    };
    let reach = spec.spacing + spec.class_extent() + 2.0;
    let mut placed = 0;
    let mut attempts = 0usize;
    while placed < spec.inter_open && attempts < 1_000_000 {
        attempts += 1;
        let p = disk_point(rng, 0.0, reach);
        if centers.iter().all(|&o| dist2(p, o) > clear * clear) {
            out.push((p, unknown));
            placed += 1;
        }
    }
    out
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix, row-major.
fn random_rotation(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for r in &rows {
            let p: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|a| *a /= n);
            rows.push(v);
        }
    }
    rows
}

/// Generates the dataset described by `spec`. Known classes are `1..=K`,
/// open samples are labeled `K + 1`; known samples come first.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = planar(spec, &mut rng);

    let k = spec.classes as Label;
    if spec.label_noise > 0.0 && k > 1 {
        for (_, label) in points.iter_mut().filter(|(_, l)| *l <= k) {
            if rng.random_bool(spec.label_noise) {
                let shift = rng.random_range(1..k);
                *label = (*label - 1 + shift) % k + 1;
            }
        }
    }

    let samples = if spec.dim == 2 {
        points
            .into_iter()
            .map(|(p, l)| LabeledVector::new(p.to_vec(), l))
            .collect()
    } else {
        let normal = Normal::new(0.0, spec.extra_noise.max(0.0))
            .map_err(|e| Error::config(e.to_string()))?;
        let rot = random_rotation(spec.dim, &mut rng);
        points
            .into_iter()
            .map(|(p, l)| {
                let mut v = vec![p[0], p[1]];
                v.extend((2..spec.dim).map(|_| normal.sample(&mut rng)));
                let rotated = rot
                    .iter()
                    .map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum())
                    .collect();
                LabeledVector::new(rotated, l)
            })
            .collect()
    };
    Dataset::new(samples, spec.dim, k, Stage::Raw)
}
