//! Known-class-ratio split protocol.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, LabeledVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    /// Share of each class sent to test.
    pub test: f64,
    /// Share of each known class's remainder held out for validation.
    pub valid: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            test: 0.3,
            valid: 0.1,
        }
    }
}

impl SplitFractions {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.test) || !(0.0..1.0).contains(&self.valid) {
            return Err(Error::config("split fractions must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Train/valid carry only known classes relabeled `1..=K`; test also holds
/// the unknown class `K + 1`.
#[derive(Debug, Clone)]
pub struct OpenSplit {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    /// Original label to split label. Unknown classes map to `K + 1`.
    pub remap: BTreeMap<Label, Label>,
}

impl OpenSplit {
    pub fn num_known(&self) -> Label {
        self.train.num_known()
    }

    /// Original labels of the known classes, in split-label order.
    pub fn known_originals(&self) -> Vec<Label> {
        let k = self.num_known();
        self.remap
            .iter()
            .filter(|(_, &v)| v <= k)
            .map(|(&o, _)| o)
            .collect()
    }
}

/// Number of known classes for `ratio` of `classes`.
pub fn known_count(ratio: f64, classes: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!(
            "known class ratio {ratio} must lie in (0, 1)"
        )));
    }
    Ok(((ratio * classes as f64).round() as usize).max(1))
}

/// Shuffles `members` and cuts `(test, valid, train)` so that train keeps at
/// least one sample whenever there is one to keep.
fn cut(
    members: &mut [usize],
    f: &SplitFractions,
    rng: &mut ChaCha8Rng,
    known: bool,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    members.shuffle(rng);
    let n = members.len();
    let n_test = ((f.test * n as f64).round() as usize).min(n.saturating_sub(1));
    if !known {
        return (members[..n_test].to_vec(), Vec::new(), Vec::new());
    }
    let rest = n - n_test;
    let n_valid = ((f.valid * rest as f64).round() as usize).min(rest.saturating_sub(1));
    (
        members[..n_test].to_vec(),
        members[n_test..n_test + n_valid].to_vec(),
        members[n_test + n_valid..].to_vec(),
    )
}

fn assemble(
    ds: &Dataset,
    remap: BTreeMap<Label, Label>,
    k: Label,
    parts: [Vec<usize>; 3],
) -> Result<OpenSplit> {
    let build = |idx: &[usize]| -> Result<Dataset> {
        let samples: Vec<LabeledVector> = idx
            .iter()
            .map(|&i| LabeledVector::new(ds.features(i).to_vec(), remap[&ds.label(i)]))
            .collect();
        Dataset::new(samples, ds.dim(), k, ds.stage())
    };
    let [mut test, mut valid, mut train] = parts;
    for v in [&mut test, &mut valid, &mut train] {
        v.sort_unstable();
    }
    Ok(OpenSplit {
        train: build(&train)?,
        valid: build(&valid)?,
        test: build(&test)?,
        remap,
    })
}

fn members_by_label(ds: &Dataset) -> BTreeMap<Label, Vec<usize>> {
    let mut by: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for i in 0..ds.len() {
        by.entry(ds.label(i)).or_default().push(i);
    }
    by
}

/// Designates `max(1, round(ratio * C))` of the dataset's `C` known classes
/// as known. Samples already labeled as open (`C + 1`) go to test untouched.
pub fn split_open(
    ds: &Dataset,
    ratio: f64,
    seed: u64,
    fractions: &SplitFractions,
) -> Result<OpenSplit> {
    fractions.validate()?;
    let classes = ds.num_known() as usize;
    if classes < 2 {
        return Err(Error::config(
            "a known-class split needs at least two classes",
        ));
    }
    let n_known = known_count(ratio, classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<Label> = ds.known_labels().collect();
    order.shuffle(&mut rng);
    let mut known = order[..n_known].to_vec();
    known.sort_unstable();

    let k = n_known as Label;
    let mut remap: BTreeMap<Label, Label> = (1..=ds.unknown_label()).map(|l| (l, k + 1)).collect();
    for (i, &l) in known.iter().enumerate() {
        remap.insert(l, i as Label + 1);
    }

    let mut parts: [Vec<usize>; 3] = Default::default();
    for (label, mut members) in members_by_label(ds) {
        let (te, va, tr) = if label == ds.unknown_label() {
            (members, Vec::new(), Vec::new())
        } else {
            cut(&mut members, fractions, &mut rng, remap[&label] <= k)
        };
        parts[0].extend(te);
        parts[1].extend(va);
        parts[2].extend(tr);
    }
    assemble(ds, remap, k, parts)
}

/// Keeps every known class and sends the pre-labeled open samples (`K + 1`)
/// to test.
pub fn split_designated(ds: &Dataset, seed: u64, fractions: &SplitFractions) -> Result<OpenSplit> {
    fractions.validate()?;
    let k = ds.num_known();
    if k == 0 {
        return Err(Error::EmptyDataset);
    }
    let remap: BTreeMap<Label, Label> = (1..=k + 1).map(|l| (l, l)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (label, mut members) in members_by_label(ds) {
        let (te, va, tr) = if label == k + 1 {
            (members, Vec::new(), Vec::new())
        } else {
            cut(&mut members, fractions, &mut rng, true)
        };
        parts[0].extend(te);
        parts[1].extend(va);
        parts[2].extend(tr);
    }
    assemble(ds, remap, k, parts)
}
