//! Frame-level metrics. AUROC is computed by the trapezoid rule over the
//! threshold sweep with an integer numerator, so it coincides bit-for-bit
//! with the Mann–Whitney pairwise statistic (ties credited ½) over the same
//! denominator.

use crate::data::Label;

use super::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    /// Positive class = septic.
    pub fn from_predictions(predictions: &[Label], labels: &[Label]) -> Result<Self> {
        check_paired(predictions.len(), labels.len())?;
        let mut m = ConfusionMatrix { tp: 0, fp: 0, tn: 0, fn_: 0 };
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p, l) {
                (Label::Septic, Label::Septic) => m.tp += 1,
                (Label::Septic, Label::NonSeptic) => m.fp += 1,
                (Label::NonSeptic, Label::NonSeptic) => m.tn += 1,
                (Label::NonSeptic, Label::Septic) => m.fn_ += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// TP/(TP+FP), defined as 1.0 when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    /// TP/(TP+FN); 0 when there are positives but none are found.
    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

fn check_paired(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(EvalError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

pub fn accuracy(predictions: &[Label], labels: &[Label]) -> Result<f64> {
    check_paired(predictions.len(), labels.len())?;
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|&(p, l)| p == l)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone)]
pub struct RocCurve {
    /// (FPR, TPR) along the descending-threshold sweep, from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auroc: f64,
}

fn class_counts(labels: &[Label]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l == Label::Septic).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((pos, neg))
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::Invalid("non-finite score".into()));
    }
    Ok(())
}

/// AUROC via the threshold-swept ROC and the trapezoid rule.
pub fn auroc(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    check_paired(scores.len(), labels.len())?;
    check_scores(scores)?;
    let (pos, neg) = class_counts(labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    // 2·area·P·N accumulated in integers: Σ Δfp · (tp_before + tp_after)
    let mut numerator: u64 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        // advance over a tie group so tied scores share one ROC vertex
        let mut j = i;
        let (tp0, fp0) = (tp, fp);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == Label::Septic {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        numerator += (fp - fp0) * (tp0 + tp);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        i = j;
    }
    let auroc = numerator as f64 / (2 * pos as u64 * neg as u64) as f64;
    Ok(RocCurve { points, auroc })
}

/// Mann–Whitney statistic P(score_pos > score_neg) + ½·P(tie), computed by
/// direct pair enumeration. Independent route used to cross-check [`auroc`].
pub fn auroc_pairwise(scores: &[f64], labels: &[Label]) -> Result<f64> {
    check_paired(scores.len(), labels.len())?;
    check_scores(scores)?;
    let (pos, neg) = class_counts(labels)?;
    let mut numerator: u64 = 0; // 2·wins + ties
    for (i, &li) in labels.iter().enumerate() {
        if li != Label::Septic {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != Label::NonSeptic {
                continue;
            }
            if scores[i] > scores[j] {
                numerator += 2;
            } else if scores[i] == scores[j] {
                numerator += 1;
            }
        }
    }
    Ok(numerator as f64 / (2 * pos as u64 * neg as u64) as f64)
}

#[derive(Debug, Clone)]
pub struct PrCurve {
    /// (recall, precision) at each distinct score threshold, descending.
    pub points: Vec<(f64, f64)>,
    pub precision_at_half: f64,
    pub recall_at_half: f64,
}

/// Threshold sweep of (recall, precision), predicting septic when the
/// score is ≥ the threshold, plus the operating point at 0.5.
pub fn precision_recall(scores: &[f64], labels: &[Label]) -> Result<PrCurve> {
    check_paired(scores.len(), labels.len())?;
    check_scores(scores)?;
    class_counts(labels)?;

    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let at = |threshold: f64| -> ConfusionMatrix {
        let predictions: Vec<Label> = scores
            .iter()
            .map(|&s| if s >= threshold { Label::Septic } else { Label::NonSeptic })
            .collect();
        ConfusionMatrix::from_predictions(&predictions, labels).expect("checked inputs")
    };
    let points = thresholds
        .iter()
        .map(|&t| {
            let m = at(t);
            (m.recall(), m.precision())
        })
        .collect();
    let half = at(0.5);
    Ok(PrCurve {
        points,
        precision_at_half: half.precision(),
        recall_at_half: half.recall(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S: Label = Label::Septic;
    const N: Label = Label::NonSeptic;

    #[test]
    fn accuracy_all_correct_and_all_wrong() {
        assert_eq!(accuracy(&[S, N], &[S, N]).unwrap(), 1.0);
        assert_eq!(accuracy(&[S, N], &[N, S]).unwrap(), 0.0);
    }

    #[test]
    fn published_validation_accuracy_is_arithmetically_consistent() {
        // 5,023 frames at 89.45% → 4,493 correct after rounding
        let correct = (5023.0f64 * 0.8945).round();
        assert_eq!(correct, 4493.0);
        let acc = accuracy(
            &vec![S; 5023],
            &[vec![S; 4493], vec![N; 530]].concat(),
        )
        .unwrap();
        assert!((acc - 0.8945).abs() < 5e-5);
    }

    #[test]
    fn accuracy_invariant_under_pair_permutation() {
        let preds = [S, N, S, S, N, N];
        let labels = [S, S, N, S, N, S];
        let base = accuracy(&preds, &labels).unwrap();
        let perm = [5usize, 3, 0, 1, 4, 2];
        let p2: Vec<Label> = perm.iter().map(|&i| preds[i]).collect();
        let l2: Vec<Label> = perm.iter().map(|&i| labels[i]).collect();
        assert_eq!(accuracy(&p2, &l2).unwrap(), base);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(accuracy(&[], &[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn perfect_separation_gives_auroc_one() {
        let curve = auroc(&[0.9, 0.8, 0.2, 0.1], &[S, S, N, N]).unwrap();
        assert_eq!(curve.auroc, 1.0);
    }

    #[test]
    fn full_tie_gives_half() {
        assert_eq!(auroc(&[0.5, 0.5], &[S, N]).unwrap().auroc, 0.5);
    }

    #[test]
    fn three_of_four_pairs_ordered_gives_075() {
        let curve = auroc(&[0.9, 0.8, 0.4, 0.3], &[S, N, S, N]).unwrap();
        assert_eq!(curve.auroc, 0.75);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            auroc(&[0.1, 0.9], &[S, S]),
            Err(EvalError::SingleClass)
        ));
    }

    #[test]
    fn roc_points_monotone_and_span_unit_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scores: Vec<f64> = (0..40).map(|_| rng.gen()).collect();
        let labels: Vec<Label> = (0..40).map(|_| if rng.gen::<bool>() { S } else { N }).collect();
        let curve = auroc(&scores, &labels).unwrap();
        assert_eq!(curve.points[0], (0.0, 0.0));
        assert_eq!(*curve.points.last().unwrap(), (1.0, 1.0));
        for w in curve.points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn trapezoid_equals_pairwise_exactly_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for case in 0..100 {
            let n = rng.gen_range(4..40);
            // coarse score grid forces frequent ties
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
            let mut labels: Vec<Label> =
                (0..n).map(|_| if rng.gen::<bool>() { S } else { N }).collect();
            labels[0] = S;
            labels[1] = N;
            let trap = auroc(&scores, &labels).unwrap().auroc;
            let pair = auroc_pairwise(&scores, &labels).unwrap();
            assert_eq!(trap, pair, "case {case}: {trap} vs {pair}");
        }
    }

    #[test]
    fn label_flip_complements_auroc() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.gen_range(4..30);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let mut labels: Vec<Label> =
                (0..n).map(|_| if rng.gen::<bool>() { S } else { N }).collect();
            labels[0] = S;
            labels[1] = N;
            let flipped: Vec<Label> =
                labels.iter().map(|&l| if l == S { N } else { S }).collect();
            let a = auroc(&scores, &labels).unwrap().auroc;
            let b = auroc(&scores, &flipped).unwrap().auroc;
            assert!((a - (1.0 - b)).abs() <= 1e-12);
        }
    }

    #[test]
    fn precision_recall_small_confusion_case() {
        // TP=3, FP=1, FN=1, TN=1 at threshold 0.5
        let scores = [0.9, 0.8, 0.7, 0.6, 0.2, 0.1];
        let labels = [S, S, S, N, S, N];
        let curve = precision_recall(&scores, &labels).unwrap();
        assert_eq!(curve.precision_at_half, 0.75);
        assert_eq!(curve.recall_at_half, 0.75);
    }

    #[test]
    fn all_predicted_negative_uses_precision_convention() {
        let m = ConfusionMatrix::from_predictions(&[N, N, N], &[S, N, S]).unwrap();
        assert_eq!(m.precision(), 1.0);
        assert_eq!(m.recall(), 0.0);
    }

    #[test]
    fn pr_points_match_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let scores: Vec<f64> = (0..30).map(|_| rng.gen_range(0..10) as f64 / 10.0).collect();
        let mut labels: Vec<Label> =
            (0..30).map(|_| if rng.gen::<bool>() { S } else { N }).collect();
        labels[0] = S;
        labels[1] = N;
        let curve = precision_recall(&scores, &labels).unwrap();
        let mut thresholds: Vec<f64> = scores.clone();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        assert_eq!(curve.points.len(), thresholds.len());
        for (point, &t) in curve.points.iter().zip(&thresholds) {
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for (&s, &l) in scores.iter().zip(&labels) {
                let predicted_pos = s >= t;
                match (predicted_pos, l) {
                    (true, S) => tp += 1.0,
                    (true, N) => fp += 1.0,
                    (false, S) => fn_ += 1.0,
                    (false, N) => {}
                }
            }
            let precision = if tp + fp == 0.0 { 1.0 } else { tp / (tp + fp) };
            let recall = tp / (tp + fn_);
            assert_eq!(*point, (recall, precision));
        }
    }
}
