//! Histogram gradient-boosted trees for multiclass classification.
//!
//! Each boosting round fits one regression tree per class to the gradients of
//! the class-weighted softmax cross-entropy. A model is a list of stages: a
//! freshly trained model has one, and every warm-started continuation appends
//! another that is fitted on top of the frozen earlier stages.

mod binning;
mod goss;
mod loss;
mod persist;
mod tree;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use binning::{bin_features, bin_value, compute_edges, BinMapper, BinnedMatrix};
pub use goss::{goss_sample, GossSample};
pub use loss::{compute_class_weights, grad_hess, softmax, weighted_cross_entropy, LossSpec, HESS_FLOOR};
pub use persist::{from_json, load_model, save_model, to_json, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use tree::{grow_tree, split_gain, GrowParams, Histogram, Tree, TreeNode};

/// Floor applied to class priors before taking logs for the initial score.
const PRIOR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub min_data_in_leaf: usize,
    pub l2_regularization: f64,
    pub feature_fraction: f64,
    /// Row fraction drawn without replacement each round. Ignored while GOSS is active.
    pub bagging_fraction: f64,
    pub max_bins: usize,
    pub max_rounds: usize,
    /// Rounds without a validation accuracy improvement before stopping; 0 disables.
    pub early_stop_rounds: usize,
    /// GOSS is active whenever `goss_top_rate < 1`.
    pub goss_top_rate: f64,
    pub goss_other_rate: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            num_leaves: 31,
            min_data_in_leaf: 20,
            l2_regularization: 1.0,
            feature_fraction: 1.0,
            bagging_fraction: 1.0,
            max_bins: 255,
            max_rounds: 500,
            early_stop_rounds: 30,
            goss_top_rate: 1.0,
            goss_other_rate: 0.0,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::domain(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.num_leaves < 2 {
            return fail(format!("num_leaves must be at least 2, got {}", self.num_leaves));
        }
        if !(self.l2_regularization >= 0.0 && self.l2_regularization.is_finite()) {
            return fail(format!("l2_regularization must be non-negative, got {}", self.l2_regularization));
        }
        for (name, v) in [("feature_fraction", self.feature_fraction), ("bagging_fraction", self.bagging_fraction)] {
            if !(v > 0.0 && v <= 1.0) {
                return fail(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        if !(2..=255).contains(&self.max_bins) {
            return fail(format!("max_bins must be in 2..=255, got {}", self.max_bins));
        }
        let (a, b) = (self.goss_top_rate, self.goss_other_rate);
        if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0 + 1e-12) {
            return fail(format!("GOSS rates must satisfy a, b >= 0 and a + b <= 1 (a={a}, b={b})"));
        }
        if a < 1.0 && a + b <= 0.0 {
            return fail("GOSS would keep no rows".into());
        }
        Ok(())
    }

    fn uses_goss(&self) -> bool {
        self.goss_top_rate < 1.0
    }

    fn grow_params(&self) -> GrowParams {
        GrowParams {
            num_leaves: self.num_leaves,
            min_data_in_leaf: self.min_data_in_leaf,
            l2: self.l2_regularization,
            feature_fraction: self.feature_fraction,
        }
    }
}

/// Borrowed features (one row per sample) and zero-based labels.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub features: &'a [Vec<f64>],
    pub labels: &'a [usize],
}

impl<'a> Dataset<'a> {
    pub fn new(features: &'a [Vec<f64>], labels: &'a [usize]) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::domain(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One block of boosting rounds sharing a learning rate and objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub learning_rate: f64,
    pub params: TrainParams,
    pub loss: LossSpec,
    pub bin_edges: BinMapper,
    /// `rounds[r][c]` is the tree for class `c` in round `r`.
    pub rounds: Vec<Vec<Tree>>,
    /// Number of leading rounds used for prediction.
    pub best_iteration: usize,
    /// Training loss after each round.
    pub train_loss: Vec<f64>,
    /// Validation accuracy after each round, empty without a validation set.
    pub valid_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub init_score: Vec<f64>,
    pub stages: Vec<Stage>,
}

impl BoostedModel {
    /// Rounds across all stages, including those past `best_iteration`.
    pub fn total_rounds(&self) -> usize {
        self.stages.iter().map(|s| s.rounds.len()).sum()
    }

    fn check_dims(&self, features: &[Vec<f64>]) -> Result<()> {
        if let Some(r) = features.iter().find(|r| r.len() != self.n_features) {
            return Err(Error::domain(format!(
                "feature row has {} columns, model expects {}",
                r.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    fn raw_row(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.init_score);
        for stage in &self.stages {
            add_stage(stage, x, out);
        }
    }

    /// Row-major `N × M` raw scores.
    pub fn predict_raw(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_dims(features)?;
        let m = self.n_classes;
        let mut raw = vec![0.0; features.len() * m];
        for (x, out) in features.iter().zip(raw.chunks_mut(m)) {
            self.raw_row(x, out);
        }
        Ok(raw)
    }

    pub fn predict_proba(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.predict_raw(features)?.chunks(self.n_classes).map(softmax).collect())
    }

    pub fn predict_label(&self, features: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.predict_raw(features)?.chunks(self.n_classes).map(argmax).collect())
    }
}

fn add_stage(stage: &Stage, x: &[f64], out: &mut [f64]) {
    for round in &stage.rounds[..stage.best_iteration] {
        for (o, tree) in out.iter_mut().zip(round) {
            *o += stage.learning_rate * tree.predict(x);
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn accuracy(raw: &[f64], labels: &[usize], m: usize) -> f64 {
    let correct = raw.chunks(m).zip(labels).filter(|(r, &y)| argmax(r) == y).count();
    correct as f64 / labels.len() as f64
}

fn check_labels(data: &Dataset, n_classes: usize, n_features: usize, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::domain(format!("{what} set is empty")));
    }
    if let Some(&y) = data.labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::domain(format!("{what} label {y} is outside 0..{n_classes}")));
    }
    if let Some(r) = data.features.iter().find(|r| r.len() != n_features) {
        return Err(Error::domain(format!("{what} row has {} columns, expected {n_features}", r.len())));
    }
    Ok(())
}

/// Trains a model from scratch, starting from the log class priors.
///
/// Without a validation set every round up to `max_rounds` is kept.
pub fn train(train: Dataset, valid: Option<Dataset>, params: &TrainParams, loss: &LossSpec) -> Result<BoostedModel> {
    let m = loss.n_classes;
    let distinct: BTreeSet<usize> = train.labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::domain("training data must contain at least two classes"));
    }
    let n_features = train.features.first().map_or(0, Vec::len);
    check_labels(&train, m, n_features, "training")?;
    let mut counts = vec![0usize; m];
    for &y in train.labels {
        counts[y] += 1;
    }
    let n = train.len() as f64;
    let init_score = counts.iter().map(|&c| (c as f64 / n).max(PRIOR_FLOOR).ln()).collect();
    let base = BoostedModel { n_classes: m, n_features, init_score, stages: Vec::new() };
    boost(base, train, valid, params, loss)
}

/// Appends a new stage fitted on `train` on top of `base`, whose stages stay untouched.
pub fn train_continued(
    base: &BoostedModel,
    train: Dataset,
    valid: Option<Dataset>,
    params: &TrainParams,
    loss: &LossSpec,
) -> Result<BoostedModel> {
    if loss.n_classes != base.n_classes {
        return Err(Error::domain(format!(
            "objective has {} classes but the base model has {}",
            loss.n_classes, base.n_classes
        )));
    }
    check_labels(&train, base.n_classes, base.n_features, "training")?;
    boost(base.clone(), train, valid, params, loss)
}

fn boost(
    mut model: BoostedModel,
    train: Dataset,
    valid: Option<Dataset>,
    params: &TrainParams,
    loss: &LossSpec,
) -> Result<BoostedModel> {
    params.validate()?;
    let m = model.n_classes;
    if loss.weights.len() != m || loss.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::domain("class weights must be positive, one per class"));
    }
    if let Some(v) = &valid {
        check_labels(v, m, model.n_features, "validation")?;
    }

    let binned = bin_features(train.features, params.max_bins)?;
    let n = train.len();
    let mut raw = model.predict_raw(train.features)?;
    let mut valid_raw = match &valid {
        Some(v) => Some(model.predict_raw(v.features)?),
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let grow = params.grow_params();
    let all_rows: Vec<usize> = (0..n).collect();
    let mut stage = Stage {
        learning_rate: params.learning_rate,
        params: params.clone(),
        loss: loss.clone(),
        bin_edges: binned.mapper().clone(),
        rounds: Vec::new(),
        best_iteration: 0,
        train_loss: Vec::new(),
        valid_accuracy: Vec::new(),
    };
    let mut best_acc = valid_raw.as_ref().zip(valid.as_ref()).map(|(r, v)| accuracy(r, v.labels, m));
    let mut since_best = 0usize;

    let mut g_col = vec![0.0; n];
    let mut h_col = vec![0.0; n];
    for _ in 0..params.max_rounds {
        let (grad, hess) = grad_hess(&raw, train.labels, &loss.weights);
        let (rows, multipliers) = if params.uses_goss() {
            let s = goss_sample(&grad, m, params.goss_top_rate, params.goss_other_rate, &mut rng)?;
            (s.indices, Some(s.multipliers))
        } else if params.bagging_fraction < 1.0 {
            let k = ((params.bagging_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
            let mut rows = rand::seq::index::sample(&mut rng, n, k).into_vec();
            rows.sort_unstable();
            (rows, None)
        } else {
            (all_rows.clone(), None)
        };

        let mut round = Vec::with_capacity(m);
        for c in 0..m {
            for i in 0..n {
                g_col[i] = grad[i * m + c];
                h_col[i] = hess[i * m + c];
            }
            if let Some(mult) = &multipliers {
                for (&r, &w) in rows.iter().zip(mult) {
                    g_col[r] *= w;
                    h_col[r] *= w;
                }
            }
            let tree = grow_tree(&binned, &g_col, &h_col, &rows, &grow, &mut rng);
            for i in 0..n {
                raw[i * m + c] += params.learning_rate * tree.predict_binned(&binned, i);
            }
            if let (Some(v), Some(vr)) = (&valid, valid_raw.as_mut()) {
                for (i, x) in v.features.iter().enumerate() {
                    vr[i * m + c] += params.learning_rate * tree.predict(x);
                }
            }
            round.push(tree);
        }
        stage.rounds.push(round);
        stage.train_loss.push(weighted_cross_entropy(&raw, train.labels, &loss.weights));

        match (&valid, &valid_raw) {
            (Some(v), Some(vr)) => {
                let acc = accuracy(vr, v.labels, m);
                stage.valid_accuracy.push(acc);
                if acc > best_acc.unwrap_or(f64::NEG_INFINITY) {
                    best_acc = Some(acc);
                    stage.best_iteration = stage.rounds.len();
                    since_best = 0;
                } else {
                    since_best += 1;
                    if params.early_stop_rounds > 0 && since_best >= params.early_stop_rounds {
                        break;
                    }
                }
            }
            _ => stage.best_iteration = stage.rounds.len(),
        }
    }
    log::debug!(
        "boosted {} rounds, best iteration {}, validation accuracy {:?}",
        stage.rounds.len(),
        stage.best_iteration,
        best_acc
    );
    model.stages.push(stage);
    Ok(model)
}

/// Per-class recall of `pred` against `truth`; classes absent from `truth` get 0.
fn per_class_recall(pred: &[usize], truth: &[usize], m: usize) -> Vec<f64> {
    let mut hit = vec![0usize; m];
    let mut total = vec![0usize; m];
    for (&p, &t) in pred.iter().zip(truth) {
        total[t] += 1;
        if p == t {
            hit[t] += 1;
        }
    }
    hit.iter().zip(&total).map(|(&h, &t)| if t == 0 { 0.0 } else { h as f64 / t as f64 }).collect()
}

/// Picks hard classes with a short unweighted warm-up: a class is hard when
/// its recall on `valid` falls below `mean - 0.5 std` of all class recalls.
pub fn auto_hard_classes(
    train_set: Dataset,
    valid: Dataset,
    params: &TrainParams,
    n_classes: usize,
) -> Result<BTreeSet<usize>> {
    let warmup = TrainParams { max_rounds: 50, early_stop_rounds: 0, ..params.clone() };
    let model = train(train_set, None, &warmup, &LossSpec::unweighted(n_classes))?;
    let recall = per_class_recall(&model.predict_label(valid.features)?, valid.labels, n_classes);
    let present: BTreeSet<usize> = valid.labels.iter().copied().collect();
    let values: Vec<f64> = present.iter().map(|&c| recall[c]).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let std = (values.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    Ok(present.into_iter().filter(|&c| recall[c] < mean - 0.5 * std).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(n_per: usize, n_classes: usize, dim: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n_per * n_classes {
            let c = i % n_classes;
            x.push(
                (0..dim)
                    .map(|d| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z + if d == c { sep } else { 0.0 }
                    })
                    .collect(),
            );
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs() {
        let (x, y) = blobs(100, 3, 5, 5.0, 1);
        let (xv, yv) = blobs(50, 3, 5, 5.0, 2);
        let params = TrainParams { max_rounds: 40, ..Default::default() };
        let model = train(Dataset::new(&x, &y).unwrap(), None, &params, &LossSpec::unweighted(3)).unwrap();
        let pred = model.predict_label(&xv).unwrap();
        let acc = pred.iter().zip(&yv).filter(|(a, b)| a == b).count() as f64 / yv.len() as f64;
        assert!(acc > 0.95, "accuracy {acc}");
    }

    #[test]
    fn zero_rounds_give_priors() {
        let (x, mut y) = blobs(10, 3, 2, 1.0, 3);
        y[0] = 1;
        let params = TrainParams { max_rounds: 0, ..Default::default() };
        let model = train(Dataset::new(&x, &y).unwrap(), None, &params, &LossSpec::unweighted(3)).unwrap();
        let p = model.predict_proba(&x[..1]).unwrap();
        let expect = [9.0 / 30.0, 11.0 / 30.0, 10.0 / 30.0];
        for (a, b) in p[0].iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![0.0]; 4];
        let y = vec![1; 4];
        let err = train(Dataset::new(&x, &y).unwrap(), None, &TrainParams::default(), &LossSpec::unweighted(2));
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn dimension_mismatch_on_predict() {
        let (x, y) = blobs(10, 2, 3, 3.0, 4);
        let params = TrainParams { max_rounds: 2, min_data_in_leaf: 1, ..Default::default() };
        let model = train(Dataset::new(&x, &y).unwrap(), None, &params, &LossSpec::unweighted(2)).unwrap();
        assert!(model.predict_label(&[vec![0.0; 2]]).is_err());
    }

    #[test]
    fn deterministic_with_sampling() {
        let (x, y) = blobs(40, 3, 6, 2.0, 5);
        let params = TrainParams {
            max_rounds: 10,
            feature_fraction: 0.5,
            goss_top_rate: 0.3,
            goss_other_rate: 0.2,
            seed: 9,
            ..Default::default()
        };
        let a = train(Dataset::new(&x, &y).unwrap(), None, &params, &LossSpec::unweighted(3)).unwrap();
        let b = train(Dataset::new(&x, &y).unwrap(), None, &params, &LossSpec::unweighted(3)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn params_validation() {
        assert!(TrainParams::default().validate().is_ok());
        assert!(TrainParams { num_leaves: 1, ..Default::default() }.validate().is_err());
        assert!(TrainParams { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainParams { goss_top_rate: 0.8, goss_other_rate: 0.3, ..Default::default() }.validate().is_err());
        assert!(TrainParams { max_bins: 256, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn auto_mode_flags_the_confused_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..400 {
            let c = i % 4;
            // classes 0 and 1 share a centre; 2 and 3 are far apart
            let centre = [0.0, 0.0, 6.0, -6.0][c];
            x.push(vec![centre + rng.random::<f64>(), rng.random::<f64>()]);
            y.push(c);
        }
        let (xt, xv) = x.split_at(300);
        let (yt, yv) = y.split_at(300);
        let params = TrainParams { min_data_in_leaf: 5, ..Default::default() };
        let hard = auto_hard_classes(Dataset::new(xt, yt).unwrap(), Dataset::new(xv, yv).unwrap(), &params, 4).unwrap();
        assert!(!hard.is_empty());
        assert!(hard.iter().all(|&c| c < 2), "{hard:?}");
    }
}
