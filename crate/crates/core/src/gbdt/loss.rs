//! Class-weighted softmax cross-entropy.
//!
//! `L = -(1/N) Σ_i λ_{y_i} log p_{i,y_i}` where hard classes get
//! `λ_c = k · exp(1 - f_c)` (`f_c` the class frequency) and every other class
//! keeps `λ_c = 1`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Floor applied to every Hessian entry.
pub const HESS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub n_classes: usize,
    /// Gain coefficient `k`.
    pub k: f64,
    /// Zero-based indices of the up-weighted classes.
    pub hard_classes: BTreeSet<usize>,
    /// `λ_c` per class.
    pub weights: Vec<f64>,
}

impl LossSpec {
    /// Plain cross-entropy: every `λ_c = 1`.
    pub fn unweighted(n_classes: usize) -> Self {
        Self { n_classes, k: 1.0, hard_classes: BTreeSet::new(), weights: vec![1.0; n_classes] }
    }

    /// Weights derived from the class frequencies in `labels`.
    pub fn from_labels(labels: &[usize], n_classes: usize, k: f64, hard_classes: BTreeSet<usize>) -> Result<Self> {
        let weights = compute_class_weights(labels, n_classes, k, &hard_classes)?;
        Ok(Self { n_classes, k, hard_classes, weights })
    }

    /// Same `k` and hard set, weights recomputed on new labels.
    pub fn reweighted(&self, labels: &[usize]) -> Result<Self> {
        Self::from_labels(labels, self.n_classes, self.k, self.hard_classes.clone())
    }
}

pub fn compute_class_weights(
    labels: &[usize],
    n_classes: usize,
    k: f64,
    hard_classes: &BTreeSet<usize>,
) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::domain("cannot derive class weights from an empty label set"));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::domain(format!("gain coefficient must be positive, got {k}")));
    }
    if let Some(&c) = hard_classes.iter().find(|&&c| c >= n_classes) {
        return Err(Error::domain(format!("hard class {c} is outside 0..{n_classes}")));
    }
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        if y >= n_classes {
            return Err(Error::domain(format!("label {y} is outside 0..{n_classes}")));
        }
        counts[y] += 1;
    }
    let n = labels.len() as f64;
    Ok((0..n_classes)
        .map(|c| {
            if hard_classes.contains(&c) {
                if counts[c] == 0 {
                    log::warn!("hard class {c} does not occur in the labels; using frequency 0");
                }
                k * (1.0 - counts[c] as f64 / n).exp()
            } else {
                1.0
            }
        })
        .collect())
}

/// Numerically stable softmax of one row of raw scores.
pub fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = raw.iter().map(|&r| (r - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Gradient and diagonal Hessian of the weighted loss, per sample and class.
///
/// `raw` is row-major `N × M`, `M = weights.len()`. For sample `i` with class
/// `y`: `grad[i,j] = λ_y (p_ij - [j = y])` and
/// `hess[i,j] = max(λ_y p_ij (1 - p_ij), 1e-6)`. The `1/N` factor of the loss
/// is left out, as boosting libraries do.
pub fn grad_hess(raw: &[f64], labels: &[usize], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = weights.len();
    assert_eq!(raw.len(), labels.len() * m, "raw scores must be N × M");
    let mut grad = vec![0.0; raw.len()];
    let mut hess = vec![0.0; raw.len()];
    for (i, &y) in labels.iter().enumerate() {
        let row = &raw[i * m..(i + 1) * m];
        let p = softmax(row);
        let lambda = weights[y];
        for j in 0..m {
            let target = if j == y { 1.0 } else { 0.0 };
            grad[i * m + j] = lambda * (p[j] - target);
            hess[i * m + j] = (lambda * p[j] * (1.0 - p[j])).max(HESS_FLOOR);
        }
    }
    (grad, hess)
}

/// The weighted cross-entropy `L` over row-major raw scores.
pub fn weighted_cross_entropy(raw: &[f64], labels: &[usize], weights: &[f64]) -> f64 {
    let m = weights.len();
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = &raw[i * m..(i + 1) * m];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|&r| (r - max).exp()).sum::<f64>().ln() + max;
            -weights[y] * (row[y] - log_sum)
        })
        .sum();
    total / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_scores() {
        let (g, h) = grad_hess(&[0.0, 0.0, 0.0], &[0], &[1.0, 1.0, 1.0]);
        let expect_g = [-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        for j in 0..3 {
            assert!((g[j] - expect_g[j]).abs() < 1e-15);
            assert!((h[j] - 2.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn doubling_lambda_doubles_grad_and_hess() {
        let raw = [0.3, -1.2, 2.0, 0.1, 0.0, -0.5];
        let labels = [2, 0];
        let (g1, h1) = grad_hess(&raw, &labels, &[1.0, 0.7, 1.3]);
        let (g2, h2) = grad_hess(&raw, &labels, &[2.0, 1.4, 2.6]);
        for i in 0..raw.len() {
            assert_eq!(g2[i], 2.0 * g1[i]);
            assert_eq!(h2[i], 2.0 * h1[i]);
        }
    }

    #[test]
    fn hessian_is_floored() {
        let (_, h) = grad_hess(&[50.0, -50.0], &[0], &[1.0, 1.0]);
        assert!(h.iter().all(|&v| v >= HESS_FLOOR));
    }

    #[test]
    fn weights_follow_the_frequency_rule() {
        let hard: BTreeSet<usize> = [0].into();
        let w = compute_class_weights(&[0, 0, 0], 1, 1.0, &hard).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-15);

        let w = compute_class_weights(&[0, 1, 0, 1], 2, 2.0, &hard).unwrap();
        assert!((w[0] - 2.0 * 0.5f64.exp()).abs() < 1e-12);
        assert!((w[0] - 3.2974).abs() < 1e-4);
        assert_eq!(w[1], 1.0);
    }

    #[test]
    fn absent_hard_class_uses_zero_frequency() {
        let hard: BTreeSet<usize> = [2].into();
        let w = compute_class_weights(&[0, 1], 3, 1.5, &hard).unwrap();
        assert!((w[2] - 1.5 * 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn weight_errors() {
        let none = BTreeSet::new();
        assert!(compute_class_weights(&[], 2, 1.0, &none).is_err());
        assert!(compute_class_weights(&[0], 2, 0.0, &none).is_err());
        assert!(compute_class_weights(&[5], 2, 1.0, &none).is_err());
    }

    #[test]
    fn loss_of_uniform_scores_is_log_m() {
        let l = weighted_cross_entropy(&[0.0; 6], &[0, 1], &[1.0, 1.0, 1.0]);
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }
}
