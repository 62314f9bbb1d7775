//! Classification metrics.

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// `confusion[i][j]` counts samples of true class `i` predicted as `j`.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    /// Recall of each class, i.e. the share of its samples classified correctly.
    pub per_class_accuracy: Vec<f64>,
    pub precision: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn confusion_matrix(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    if pred.len() != truth.len() {
        return Err(Error::domain(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::domain("cannot evaluate an empty prediction set"));
    }
    let mut cm = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::domain(format!("label outside 0..{n_classes}")));
        }
        cm[t][p] += 1;
    }
    Ok(cm)
}

/// Recall per class; classes without samples get 0.
pub fn per_class_accuracy(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    let cm = confusion_matrix(pred, truth, n_classes)?;
    Ok((0..n_classes).map(|c| ratio(cm[c][c], cm[c].iter().sum())).collect())
}

/// Accuracy, per-class and macro precision/recall/F1, with 0/0 taken as 0.
pub fn evaluate(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Metrics> {
    let confusion = confusion_matrix(pred, truth, n_classes)?;
    let diag: u64 = (0..n_classes).map(|c| confusion[c][c]).sum();
    let recall: Vec<f64> = (0..n_classes).map(|c| ratio(confusion[c][c], confusion[c].iter().sum())).collect();
    let precision: Vec<f64> = (0..n_classes)
        .map(|c| ratio(confusion[c][c], confusion.iter().map(|row| row[c]).sum()))
        .collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
        .collect();
    Ok(Metrics {
        accuracy: ratio(diag, pred.len() as u64),
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        per_class_accuracy: recall,
        precision,
        f1,
        confusion,
    })
}
