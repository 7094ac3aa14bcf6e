//! Example-based and label-based precision, recall and F-beta.
//!
//! Counts use the usual meaning: a false positive is a predicted label the
//! target lacks, a false negative a target label that was not predicted.
//!
//! Zero denominators: precision with nothing predicted is 0 when the target
//! has positives and 1 otherwise; recall with nothing to find is 0 when
//! something was predicted and 1 otherwise. F-beta is 0 when both are 0.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Counts {
    fn precision(self) -> f64 {
        if self.tp + self.fp == 0 {
            if self.tp + self.fn_ > 0 {
                0.0
            } else {
                1.0
            }
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    fn recall(self) -> f64 {
        if self.tp + self.fn_ == 0 {
            if self.tp + self.fp > 0 {
                0.0
            } else {
                1.0
            }
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    fn add(&mut self, pred: u8, target: u8) {
        match (pred, target) {
            (1, 1) => self.tp += 1,
            (1, 0) => self.fp += 1,
            (0, 1) => self.fn_ += 1,
            _ => {}
        }
    }
}

/// `(1+β²)·P·R / (β²·P + R)`, zero when `P = R = 0`.
pub fn f_beta(precision: f64, recall: f64, beta: u32) -> f64 {
    let b2 = f64::from(beta * beta);
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

fn check(pred: &[Vec<u8>], target: &[Vec<u8>], beta: u32) -> Result<usize> {
    if beta != 1 && beta != 2 {
        return Err(Error::InvalidArgument(format!("beta must be 1 or 2, got {beta}")));
    }
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::shape(
            "metrics",
            format!("{} predicted rows vs {} target rows", pred.len(), target.len()),
        ));
    }
    let c = target[0].len();
    if c == 0 || pred.iter().chain(target).any(|r| r.len() != c) {
        return Err(Error::shape("metrics", "rows differ in class count"));
    }
    if pred.iter().chain(target).flatten().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("predictions and targets must be binary".into()));
    }
    Ok(c)
}

/// Per-example precision and recall averaged over examples, then F-beta.
pub fn example_based_scores(pred: &[Vec<u8>], target: &[Vec<u8>], beta: u32) -> Result<Scores> {
    check(pred, target, beta)?;
    let n = pred.len() as f64;
    let (mut p, mut r) = (0.0, 0.0);
    for (pr, tr) in pred.iter().zip(target) {
        let mut counts = Counts::default();
        pr.iter().zip(tr).for_each(|(&a, &b)| counts.add(a, b));
        p += counts.precision();
        r += counts.recall();
    }
    let (p, r) = (p / n, r / n);
    Ok(Scores { precision: p, recall: r, f_beta: f_beta(p, r, beta) })
}

fn class_counts(pred: &[Vec<u8>], target: &[Vec<u8>], classes: usize) -> Vec<Counts> {
    let mut counts = alloc::vec![Counts::default(); classes];
    for (pr, tr) in pred.iter().zip(target) {
        for (j, c) in counts.iter_mut().enumerate() {
            c.add(pr[j], tr[j]);
        }
    }
    counts
}

/// Per-class precision and recall averaged over classes, then F-beta.
pub fn label_based_scores(pred: &[Vec<u8>], target: &[Vec<u8>], beta: u32) -> Result<Scores> {
    let c = check(pred, target, beta)?;
    let counts = class_counts(pred, target, c);
    let p = counts.iter().map(|k| k.precision()).sum::<f64>() / c as f64;
    let r = counts.iter().map(|k| k.recall()).sum::<f64>() / c as f64;
    Ok(Scores { precision: p, recall: r, f_beta: f_beta(p, r, beta) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: String,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// F1, precision and recall of every class, in vocabulary order.
pub fn per_class_report(pred: &[Vec<u8>], target: &[Vec<u8>], vocabulary: &[String]) -> Result<Vec<ClassRow>> {
    let c = check(pred, target, 1)?;
    if vocabulary.len() != c {
        return Err(Error::shape(
            "per_class_report",
            format!("{} vocabulary entries for {c} classes", vocabulary.len()),
        ));
    }
    Ok(class_counts(pred, target, c)
        .into_iter()
        .zip(vocabulary)
        .map(|(k, label)| {
            let (p, r) = (k.precision(), k.recall());
            ClassRow { label: label.clone(), f1: f_beta(p, r, 1), precision: p, recall: r }
        })
        .collect())
}

/// Aggregate pair (F1 and F2 share the same precision and recall).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub example: AggregateScores,
    pub label: AggregateScores,
    pub per_class: Vec<ClassRow>,
    pub examples: usize,
    pub classes: usize,
}

pub fn evaluate(pred: &[Vec<u8>], target: &[Vec<u8>], vocabulary: &[String]) -> Result<MetricReport> {
    let e1 = example_based_scores(pred, target, 1)?;
    let e2 = example_based_scores(pred, target, 2)?;
    let l1 = label_based_scores(pred, target, 1)?;
    let l2 = label_based_scores(pred, target, 2)?;
    Ok(MetricReport {
        example: AggregateScores { precision: e1.precision, recall: e1.recall, f1: e1.f_beta, f2: e2.f_beta },
        label: AggregateScores { precision: l1.precision, recall: l1.recall, f1: l1.f_beta, f2: l2.f_beta },
        per_class: per_class_report(pred, target, vocabulary)?,
        examples: pred.len(),
        classes: vocabulary.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn perfect_prediction() {
        let t = vec![vec![1, 0, 1], vec![0, 1, 0], vec![0, 0, 0]];
        for beta in [1, 2] {
            let e = example_based_scores(&t, &t, beta).unwrap();
            let l = label_based_scores(&t, &t, beta).unwrap();
            assert_eq!(e, Scores { precision: 1.0, recall: 1.0, f_beta: 1.0 });
            assert_eq!(l, Scores { precision: 1.0, recall: 1.0, f_beta: 1.0 });
        }
    }

    #[test]
    fn single_example_partial_recall() {
        let t = vec![vec![1, 0, 1]];
        let p = vec![vec![1, 0, 0]];
        let f1 = example_based_scores(&p, &t, 1).unwrap();
        assert_eq!((f1.precision, f1.recall), (1.0, 0.5));
        assert!((f1.f_beta - 2.0 / 3.0).abs() < 1e-15);
        let f2 = example_based_scores(&p, &t, 2).unwrap();
        assert!((f2.f_beta - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let t = vec![vec![1, 0, 1], vec![0, 1, 0]];
        let p = vec![vec![0, 0, 0], vec![0, 0, 0]];
        let s = example_based_scores(&p, &t, 1).unwrap();
        assert_eq!(s, Scores { precision: 0.0, recall: 0.0, f_beta: 0.0 });
    }

    #[test]
    fn absent_class_is_vacuously_perfect() {
        let t = vec![vec![1, 0], vec![1, 0]];
        let p = vec![vec![1, 0], vec![0, 0]];
        let vocab = vec!["a".to_string(), "b".to_string()];
        let rows = per_class_report(&p, &t, &vocab).unwrap();
        assert_eq!((rows[1].f1, rows[1].precision, rows[1].recall), (1.0, 1.0, 1.0));
        assert_eq!((rows[0].precision, rows[0].recall), (1.0, 0.5));
        assert!(per_class_report(&p, &t, &vocab[..1]).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = vec![vec![1, 0]];
        assert!(example_based_scores(&t, &t, 3).is_err());
        assert!(label_based_scores(&t, &[vec![1, 0, 0]], 1).is_err());
        assert!(example_based_scores(&[vec![2, 0]], &t, 1).is_err());
        assert!(example_based_scores(&[], &[], 1).is_err());
    }
}
