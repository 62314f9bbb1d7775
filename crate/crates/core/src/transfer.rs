//! Warm-start transfer: continued boosting on target data from a frozen base model.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gbdt::{self, BoostedModel, Dataset, LossSpec, TrainParams};
use crate::metrics::per_class_accuracy;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    /// Model file to start from; the pipeline trains a source model when unset.
    pub base_model: Option<PathBuf>,
    pub learning_rate: f64,
    pub additional_rounds: usize,
    /// When false the target model is trained from scratch instead.
    pub keep_base_trees: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self { base_model: None, learning_rate: 0.05, additional_rounds: 300, keep_base_trees: true }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.additional_rounds == 0 {
            return Err(Error::Config("transfer needs at least one additional round".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("transfer learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Fits new rounds on `train` on top of `base`.
///
/// Class weights are recomputed from the target labels with the hard set and
/// `k` of `loss`. The base stages are carried over unchanged.
pub fn warm_start(
    base: &BoostedModel,
    train: Dataset,
    valid: Option<Dataset>,
    cfg: &TransferConfig,
    params: &TrainParams,
    loss: &LossSpec,
) -> Result<BoostedModel> {
    cfg.validate()?;
    if loss.n_classes != base.n_classes {
        return Err(Error::domain(format!(
            "target objective has {} classes, base model has {}",
            loss.n_classes, base.n_classes
        )));
    }
    if let Some(&y) = train.labels.iter().find(|&&y| y >= base.n_classes) {
        return Err(Error::domain(format!("target label {y} is not a class of the base model")));
    }
    let loss = loss.reweighted(train.labels)?;
    let target_params =
        TrainParams { learning_rate: cfg.learning_rate, max_rounds: cfg.additional_rounds, ..params.clone() };
    if cfg.keep_base_trees {
        gbdt::train_continued(base, train, valid, &target_params, &loss)
    } else {
        gbdt::train(train, valid, &target_params, &loss)
    }
}

/// Per-class accuracy on the target test set before (target-only training) and
/// after (warm start), averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    /// Overall test accuracy per seed, `(before, after)`.
    pub per_seed: Vec<(f64, f64)>,
}

impl TransferReport {
    pub fn mean_before(&self) -> f64 {
        mean(&self.before)
    }

    pub fn mean_after(&self) -> f64 {
        mean(&self.after)
    }

    /// `movement,before,after` with one row per class (1-based) and a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("movement,before,after\n");
        for (c, (b, a)) in self.before.iter().zip(&self.after).enumerate() {
            out.push_str(&format!("{},{b:.6},{a:.6}\n", c + 1));
        }
        out.push_str(&format!("mean,{:.6},{:.6}\n", self.mean_before(), self.mean_after()));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv().as_bytes())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Target data for a transfer comparison.
#[derive(Debug, Clone, Copy)]
pub struct TargetSplits<'a> {
    pub train: Dataset<'a>,
    /// Early-stopping set for both arms.
    pub valid: Option<Dataset<'a>>,
    pub test: Dataset<'a>,
}

/// Runs the paired before/after comparison once per seed on identical splits.
pub fn transfer_report(
    base: &BoostedModel,
    target: TargetSplits,
    cfg: &TransferConfig,
    params: &TrainParams,
    loss: &LossSpec,
    seeds: &[u64],
) -> Result<TransferReport> {
    if seeds.is_empty() {
        return Err(Error::Config("transfer report needs at least one seed".into()));
    }
    let TargetSplits { train, valid, test } = target;
    let m = base.n_classes;
    let mut before = vec![0.0; m];
    let mut after = vec![0.0; m];
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let p = TrainParams { seed, ..params.clone() };
        let scratch = gbdt::train(train, valid, &p, &loss.reweighted(train.labels)?)?;
        let warm = warm_start(base, train, valid, cfg, &p, loss)?;
        let pred_b = scratch.predict_label(test.features)?;
        let pred_a = warm.predict_label(test.features)?;
        for (acc, pred) in [(&mut before, &pred_b), (&mut after, &pred_a)] {
            for (a, v) in acc.iter_mut().zip(per_class_accuracy(pred, test.labels, m)?) {
                *a += v;
            }
        }
        let overall = |pred: &[usize]| pred.iter().zip(test.labels).filter(|(p, t)| p == t).count() as f64 / test.len() as f64;
        per_seed.push((overall(&pred_b), overall(&pred_a)));
    }
    let k = seeds.len() as f64;
    before.iter_mut().chain(after.iter_mut()).for_each(|v| *v /= k);
    Ok(TransferReport { before, after, per_seed })
}
