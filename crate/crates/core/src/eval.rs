//! Open-set classification metrics.

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// Accuracy and macro-F1 over all, known and unknown classes.
///
/// All scores are fractions in `[0, 1]`. `confusion[g - 1][p - 1]` counts
/// samples with gold label `g` predicted as `p`, for labels `1..=K+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub f1_all: f64,
    pub f1_known: f64,
    pub f1_unknown: f64,
    pub per_class_f1: Vec<f64>,
    pub confusion: Vec<Vec<u64>>,
    pub n_boundaries: usize,
}

impl EvalReport {
    pub fn num_samples(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// Gold counts per label, `1..=K+1`.
    pub fn support(&self) -> Vec<u64> {
        self.confusion.iter().map(|row| row.iter().sum()).collect()
    }

    /// Table-style percentages in the order Acc, F1-All, F1-U, F1-K.
    pub fn percentages(&self) -> [f64; 4] {
        [self.acc, self.f1_all, self.f1_unknown, self.f1_known].map(|v| v * 100.0)
    }

    pub fn csv_header() -> &'static str {
        "acc,f1_all,f1_u,f1_k"
    }

    pub fn csv_row(&self) -> String {
        let [a, b, c, d] = self.percentages();
        format!("{a:.4},{b:.4},{c:.4},{d:.4}")
    }
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if tp == 0 || denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Scores `predictions` against `gold`, both with labels in `1..=k+1`.
pub fn evaluate(predictions: &[Label], gold: &[Label], k: Label) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    let classes = k as usize + 1;
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&p, &g) in predictions.iter().zip(gold) {
        for l in [p, g] {
            if l == 0 || l > k + 1 {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    max: k + 1,
                });
            }
        }
        confusion[g as usize - 1][p as usize - 1] += 1;
    }

    let per_class_f1: Vec<f64> = (0..classes)
        .map(|c| {
            let tp = confusion[c][c];
            let row: u64 = confusion[c].iter().sum();
            let col: u64 = confusion.iter().map(|r| r[c]).sum();
            f1(tp, col - tp, row - tp)
        })
        .collect();
    let correct: u64 = (0..classes).map(|c| confusion[c][c]).sum();
    let n = predictions.len();
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };

    Ok(EvalReport {
        acc: if n == 0 {
            0.0
        } else {
            correct as f64 / n as f64
        },
        f1_all: mean(&per_class_f1),
        f1_known: mean(&per_class_f1[..classes - 1]),
        f1_unknown: per_class_f1[classes - 1],
        per_class_f1,
        confusion,
        n_boundaries: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let gold = [1, 2, 3, 3, 1];
        let r = evaluate(&gold, &gold, 2).unwrap();
        assert_eq!(
            (r.acc, r.f1_all, r.f1_known, r.f1_unknown),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn absent_class_counts_as_zero() {
        // Class 2 never appears in gold nor predictions.
        let r = evaluate(&[1, 3], &[1, 3], 2).unwrap();
        assert_eq!(r.per_class_f1, vec![1.0, 0.0, 1.0]);
        assert!((r.f1_all - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.f1_known, 0.5);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            evaluate(&[1], &[1, 2], 2),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            evaluate(&[4], &[1], 2),
            Err(Error::LabelOutOfRange { label: 4, .. })
        ));
        assert!(matches!(
            evaluate(&[1], &[0], 2),
            Err(Error::LabelOutOfRange { label: 0, .. })
        ));
    }

    #[test]
    fn csv_row_is_percent_in_table_order() {
        let r = evaluate(&[1, 3, 3, 2], &[1, 3, 2, 2], 2).unwrap();
        let expect = format!(
            "{:.4},{:.4},{:.4},{:.4}",
            r.acc * 100.0,
            r.f1_all * 100.0,
            r.f1_unknown * 100.0,
            r.f1_known * 100.0
        );
        assert_eq!(r.csv_row(), expect);
    }

    fn pairs() -> impl Strategy<Value = (Vec<(Label, Label)>, Label)> {
        (1u32..5).prop_flat_map(|k| {
            (
                prop::collection::vec((1..=k + 1, 1..=k + 1), 1..60),
                Just(k),
            )
        })
    }

    proptest! {
        #[test]
        fn invariants((pairs, k) in pairs(), rot in 0usize..60) {
            let (p, g): (Vec<Label>, Vec<Label>) = pairs.iter().copied().unzip();
            let r = evaluate(&p, &g, k).unwrap();
            prop_assert_eq!(r.num_samples(), p.len() as u64);
            let mut support = vec![0u64; k as usize + 1];
            for &l in &g { support[l as usize - 1] += 1; }
            prop_assert_eq!(r.support(), support);
            prop_assert!(r.per_class_f1.iter().all(|&f| (0.0..=1.0).contains(&f)));
            let mean = r.per_class_f1.iter().sum::<f64>() / r.per_class_f1.len() as f64;
            prop_assert!((r.f1_all - mean).abs() < 1e-12);

            // Order of samples does not matter.
            let mut rotated = pairs.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            let (p2, g2): (Vec<Label>, Vec<Label>) = rotated.into_iter().unzip();
            let r2 = evaluate(&p2, &g2, k).unwrap();
            prop_assert_eq!(&r2, &r);

            // Accuracy survives a consistent relabeling (reverse the label order).
            let flip = |l: Label| k + 2 - l;
            let p3: Vec<Label> = p.iter().map(|&l| flip(l)).collect();
            let g3: Vec<Label> = g.iter().map(|&l| flip(l)).collect();
            prop_assert!((evaluate(&p3, &g3, k).unwrap().acc - r.acc).abs() < 1e-15);
        }
    }
}
