//! Adaptive granular-ball clustering.
//!
//! All training samples start in one ball. A ball is split while it is both
//! impure (`purity < p_l`) and large (`count > n_l`): one member of every label
//! it contains is drawn as a pseudo-centroid and every member moves to the
//! nearest pseudo-centroid by Euclidean distance. The surviving balls are then
//! quality-filtered by `p_t` / `n_t`.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ball::{make_ball, GranularBall};
use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::metric::{squared_euclidean, Metric};
use crate::params::HyperParams;

pub fn should_split(ball: &GranularBall, p_l: f64, n_l: usize) -> bool {
    ball.purity < p_l && ball.count() > n_l
}

/// Splits `ball` into one ball per distinct member label. Child radii are
/// measured under `metric`; assignment always uses Euclidean distance.
pub fn split_ball<R: Rng + ?Sized>(
    ds: &Dataset,
    ball: &GranularBall,
    metric: Metric,
    rng: &mut R,
) -> Result<Vec<GranularBall>> {
    let mut by_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for &i in &ball.members {
        by_label.entry(ds.label(i)).or_default().push(i);
    }
    if by_label.len() < 2 {
        return Err(Error::SingleLabelSplit(ball.label));
    }

    // One draw per label, in ascending label order.
    let pseudo: Vec<usize> = by_label
        .values()
        .map(|members| members[rng.random_range(0..members.len())])
        .collect();

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); pseudo.len()];
    for &i in &ball.members {
        let slot = match pseudo.iter().position(|&p| p == i) {
            Some(own) => own,
            None => {
                let x = ds.features(i);
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (s, &p) in pseudo.iter().enumerate() {
                    let d = squared_euclidean(x, ds.features(p));
                    // strict: ties stay with the lower pseudo-centroid label
                    if d < best_d {
                        best_d = d;
                        best = s;
                    }
                }
                best
            }
        };
        groups[slot].push(i);
    }

    groups
        .into_iter()
        .map(|members| make_ball(ds, members, metric))
        .collect()
}

/// Indices of the balls that pass the quality filter, and the number of
/// passing balls per known class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityFilter {
    pub kept: Vec<usize>,
    pub per_class_counts: BTreeMap<Label, usize>,
}

impl QualityFilter {
    pub fn empty_classes(&self) -> Vec<Label> {
        self.per_class_counts
            .iter()
            .filter(|(_, &n)| n == 0)
            .map(|(&c, _)| c)
            .collect()
    }
}

/// Keeps balls with `purity >= p_t` and `count > n_t`. Every class in
/// `1..=num_known` gets an entry in the counts, possibly zero.
pub fn filter_quality(
    balls: &[GranularBall],
    p_t: f64,
    n_t: usize,
    num_known: Label,
) -> QualityFilter {
    let mut per_class_counts: BTreeMap<Label, usize> = (1..=num_known).map(|c| (c, 0)).collect();
    let kept = balls
        .iter()
        .enumerate()
        .filter(|(_, b)| b.purity >= p_t && b.count() > n_t)
        .map(|(j, b)| {
            *per_class_counts.entry(b.label).or_default() += 1;
            j
        })
        .collect();
    QualityFilter {
        kept,
        per_class_counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub balls: Vec<GranularBall>,
    pub filter: QualityFilter,
    pub num_known: Label,
    pub metric: Metric,
    pub p_l: f64,
    pub n_l: usize,
    pub p_t: f64,
    pub n_t: usize,
    pub splits: usize,
}

impl ClusterResult {
    pub fn filtered(&self) -> impl Iterator<Item = &GranularBall> {
        self.filter.kept.iter().map(|&j| &self.balls[j])
    }

    pub fn num_filtered(&self) -> usize {
        self.filter.kept.len()
    }

    /// Same balls, different quality thresholds.
    pub fn refilter(&self, p_t: f64, n_t: usize) -> ClusterResult {
        let filter = filter_quality(&self.balls, p_t, n_t, self.num_known);
        warn_empty(&filter);
        ClusterResult {
            filter,
            p_t,
            n_t,
            ..self.clone()
        }
    }

    /// Member sets are pairwise disjoint and cover `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for b in &self.balls {
            for &i in &b.members {
                if i >= n || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn report(&self) -> ClusterReport {
        let kept: std::collections::HashSet<usize> = self.filter.kept.iter().copied().collect();
        ClusterReport {
            summary: ClusterSummary {
                m: self.balls.len(),
                filtered: self.num_filtered(),
                per_class_counts: self.filter.per_class_counts.clone(),
                metric: self.metric,
                p_l: self.p_l,
                n_l: self.n_l,
                p_t: self.p_t,
                n_t: self.n_t,
                splits: self.splits,
            },
            balls: self
                .balls
                .iter()
                .enumerate()
                .map(|(j, b)| BallReport {
                    n: b.count(),
                    centroid: b.centroid.clone(),
                    radius: b.radius,
                    label: b.label,
                    purity: b.purity,
                    kept: kept.contains(&j),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub summary: ClusterSummary,
    pub balls: Vec<BallReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub m: usize,
    pub filtered: usize,
    pub per_class_counts: BTreeMap<Label, usize>,
    pub metric: Metric,
    pub p_l: f64,
    pub n_l: usize,
    pub p_t: f64,
    pub n_t: usize,
    pub splits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallReport {
    pub n: usize,
    pub centroid: Vec<f64>,
    pub radius: f64,
    pub label: Label,
    pub purity: f64,
    pub kept: bool,
}

fn warn_empty(filter: &QualityFilter) {
    let empty = filter.empty_classes();
    if !empty.is_empty() {
        log::warn!("classes {empty:?} have no ball passing the quality filter");
    }
}

/// Runs the split loop to completion, then applies the quality filter.
pub fn cluster_adaptive(ds: &Dataset, hp: &HyperParams) -> Result<ClusterResult> {
    ds.ensure_training()?;
    let n = ds.len();
    let n_l = hp.resolved_n_l(n, ds.num_known() as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);

    let mut queue = VecDeque::from([make_ball(ds, (0..n).collect(), hp.metric)?]);
    let mut done = Vec::new();
    let mut splits = 0usize;
    while let Some(ball) = queue.pop_front() {
        if !should_split(&ball, hp.p_l, n_l) {
            done.push(ball);
            continue;
        }
        // Every split adds at least one ball and there are at most n balls.
        if splits >= n {
            return Err(Error::IterationCap(n));
        }
        splits += 1;
        let children = split_ball(ds, &ball, hp.metric, &mut rng)?;
        if children.iter().any(|c| c.count() == ball.count()) {
            done.push(ball);
        } else {
            queue.extend(children);
        }
    }

    let filter = filter_quality(&done, hp.p_t, hp.n_t, ds.num_known());
    warn_empty(&filter);
    Ok(ClusterResult {
        balls: done,
        filter,
        num_known: ds.num_known(),
        metric: hp.metric,
        p_l: hp.p_l,
        n_l,
        p_t: hp.p_t,
        n_t: hp.n_t,
        splits,
    })
}
