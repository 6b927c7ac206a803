use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class true/false positive rates and the confusion matrix
/// (rows = truth, columns = prediction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classes: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
    pub support: Vec<usize>,
    /// `None` for classes absent from the truth.
    pub tpr: Vec<Option<f64>>,
    /// `None` when every instance belongs to the class.
    pub fpr: Vec<Option<f64>>,
    /// Class-size weighted means over classes with a defined rate.
    pub weighted_tpr: f64,
    pub weighted_fpr: f64,
    pub accuracy: f64,
    pub n: usize,
}

fn weighted_mean(rates: &[Option<f64>], support: &[usize]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (r, &s) in rates.iter().zip(support) {
        if let Some(r) = r {
            num += s as f64 * r;
            den += s as f64;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn evaluate(
    predictions: &[u32],
    truth: &[u32],
    classes: &[String],
) -> Result<EvaluationReport> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    let c = classes.len();
    if let Some(&bad) = predictions.iter().chain(truth).find(|&&l| l as usize >= c) {
        return Err(Error::invalid(format!(
            "label index {bad} outside the class list"
        )));
    }
    let n = truth.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion[t as usize][p as usize] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let predicted: Vec<usize> = (0..c)
        .map(|j| confusion.iter().map(|r| r[j]).sum())
        .collect();
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();

    let tpr: Vec<Option<f64>> = (0..c)
        .map(|i| (support[i] > 0).then(|| confusion[i][i] as f64 / support[i] as f64))
        .collect();
    let fpr: Vec<Option<f64>> = (0..c)
        .map(|i| {
            let negatives = n - support[i];
            (negatives > 0).then(|| (predicted[i] - confusion[i][i]) as f64 / negatives as f64)
        })
        .collect();
    Ok(EvaluationReport {
        classes: classes.to_vec(),
        weighted_tpr: weighted_mean(&tpr, &support),
        weighted_fpr: weighted_mean(&fpr, &support),
        accuracy: if n > 0 {
            correct as f64 / n as f64
        } else {
            0.0
        },
        confusion,
        support,
        tpr,
        fpr,
        n,
    })
}

/// Evaluates string labels; the class list is the sorted union of both
/// sides.
pub fn evaluate_labels<S: AsRef<str>>(predictions: &[S], truth: &[S]) -> Result<EvaluationReport> {
    let classes: Vec<String> = predictions
        .iter()
        .chain(truth)
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let code = |s: &S| classes.iter().position(|c| c == s.as_ref()).unwrap() as u32;
    let p: Vec<u32> = predictions.iter().map(code).collect();
    let t: Vec<u32> = truth.iter().map(code).collect();
    evaluate(&p, &t, &classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 1, 0];
        let r = evaluate(&t, &t, &names(3)).unwrap();
        assert!(r.tpr.iter().all(|&v| v == Some(1.0)));
        assert!(r.fpr.iter().all(|&v| v == Some(0.0)));
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn constant_predictor() {
        let t = [0, 0, 1, 1];
        let r = evaluate(&[0, 0, 0, 0], &t, &names(2)).unwrap();
        assert_eq!(r.tpr, vec![Some(1.0), Some(0.0)]);
        assert_eq!(r.fpr[0], Some(1.0));
        assert_eq!(r.fpr[1], Some(0.0));
    }

    /// 12 instances, 3 classes; rates counted by hand from the confusion
    /// matrix below.
    ///
    /// ```text
    ///         pred a  b  c
    /// truth a      3  1  0
    ///       b      1  3  1
    ///       c      0  1  2
    /// ```
    #[test]
    fn hand_counted_fixture() {
        let truth = [0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2];
        let pred = [0, 0, 0, 1, 0, 1, 1, 1, 2, 1, 2, 2];
        let r = evaluate(&pred, &truth, &names(3)).unwrap();
        assert_eq!(
            r.confusion,
            vec![vec![3, 1, 0], vec![1, 3, 1], vec![0, 1, 2]]
        );
        assert_eq!(
            r.tpr,
            vec![Some(3.0 / 4.0), Some(3.0 / 5.0), Some(2.0 / 3.0)]
        );
        assert_eq!(
            r.fpr,
            vec![Some(1.0 / 8.0), Some(2.0 / 7.0), Some(1.0 / 9.0)]
        );
        assert_eq!(r.accuracy, 8.0 / 12.0);
        assert!((r.weighted_tpr - r.accuracy).abs() < 1e-15);
        let wfpr = (4.0 / 8.0 + 5.0 * 2.0 / 7.0 + 3.0 / 9.0) / 12.0;
        assert!((r.weighted_fpr - wfpr).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_not_applicable() {
        let r = evaluate(&[0, 2], &[0, 0], &names(3)).unwrap();
        assert_eq!(r.tpr[1], None);
        assert_eq!(r.tpr[2], None);
        assert_eq!(r.fpr[0], None);
        assert_eq!(r.weighted_tpr, 0.5);
        assert!(evaluate(&[0], &[0, 1], &names(2)).is_err());
    }

    #[test]
    fn string_labels() {
        let r = evaluate_labels(&["dos", "normal", "dos"], &["dos", "dos", "dos"]).unwrap();
        assert_eq!(r.classes, vec!["dos", "normal"]);
        assert_eq!(r.tpr, vec![Some(2.0 / 3.0), None]);
    }

    proptest::proptest! {
        #[test]
        fn weighted_tpr_equals_accuracy(
            pairs in proptest::collection::vec((0u32..4, 0u32..4), 1..200)
        ) {
            let p: Vec<u32> = pairs.iter().map(|x| x.0).collect();
            let t: Vec<u32> = pairs.iter().map(|x| x.1).collect();
            let r = evaluate(&p, &t, &names(4)).unwrap();
            proptest::prop_assert!((r.weighted_tpr - r.accuracy).abs() < 1e-12);
            for v in r.tpr.iter().chain(&r.fpr).flatten() {
                proptest::prop_assert!((0.0..=1.0).contains(v));
            }
            let total: usize = r.confusion.iter().flatten().sum();
            proptest::prop_assert_eq!(total, t.len());
        }
    }
}
