//! Stratified k-fold bagging of boosted models.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gbdt::{self, argmax, BoostedModel, Dataset, LossSpec, TrainParams};
use crate::{Error, Result};

pub const BAGGED_FORMAT: &str = "semg-bagged";
pub const BAGGED_FORMAT_VERSION: u64 = 1;

/// Fold index per sample.
///
/// Each class's samples are shuffled with `seed` and dealt round-robin; the
/// dealing position carries over from one class to the next so fold sizes
/// stay balanced as well.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::domain(format!("k-fold needs k >= 2, got {k}")));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for (c, members) in by_class.iter_mut().enumerate() {
        if !members.is_empty() && members.len() < k {
            log::warn!("class {c} has {} samples, fewer than {k} folds", members.len());
        }
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaggedModel {
    pub members: Vec<BoostedModel>,
}

/// Trains one member per fold: member `j` fits every fold but `j` and uses
/// fold `j` for early stopping.
pub fn train_bagged(train: Dataset, k: usize, params: &TrainParams, loss: &LossSpec) -> Result<BaggedModel> {
    let folds = stratified_kfold(train.labels, k, params.seed)?;
    let mut members = Vec::with_capacity(k);
    for j in 0..k {
        let pick = |want: bool| -> (Vec<Vec<f64>>, Vec<usize>) {
            folds
                .iter()
                .enumerate()
                .filter(|(_, &f)| (f == j) == want)
                .map(|(i, _)| (train.features[i].clone(), train.labels[i]))
                .unzip()
        };
        let (xt, yt) = pick(false);
        let (xv, yv) = pick(true);
        let member_params = TrainParams { seed: params.seed.wrapping_add(j as u64 + 1), ..params.clone() };
        let valid = if xv.is_empty() { None } else { Some(Dataset::new(&xv, &yv)?) };
        members.push(gbdt::train(Dataset::new(&xt, &yt)?, valid, &member_params, loss)?);
    }
    BaggedModel::new(members)
}

impl BaggedModel {
    pub fn new(members: Vec<BoostedModel>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::domain("a bagged model needs at least one member"))?;
        if members.iter().any(|m| m.n_classes != first.n_classes || m.n_features != first.n_features) {
            return Err(Error::domain("bagged members disagree on class count or feature dimension"));
        }
        Ok(Self { members })
    }

    pub fn n_classes(&self) -> usize {
        self.members[0].n_classes
    }

    /// Mean of the members' class probabilities.
    pub fn predict_proba(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut acc = vec![vec![0.0; self.n_classes()]; features.len()];
        for member in &self.members {
            for (a, p) in acc.iter_mut().zip(member.predict_proba(features)?) {
                for (x, y) in a.iter_mut().zip(p) {
                    *x += y;
                }
            }
        }
        let k = self.members.len() as f64;
        for row in &mut acc {
            row.iter_mut().for_each(|x| *x /= k);
        }
        Ok(acc)
    }

    pub fn predict_label(&self, features: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.predict_proba(features)?.iter().map(|p| argmax(p)).collect())
    }

    /// Writes `member_<j>.json` files and a `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (j, member) in self.members.iter().enumerate() {
            let name = format!("member_{j}.json");
            gbdt::save_model(member, &dir.join(&name))?;
            files.push(name);
        }
        let manifest = Manifest { format: BAGGED_FORMAT.into(), format_version: BAGGED_FORMAT_VERSION, members: files };
        crate::io::write_atomic(&dir.join("manifest.json"), (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Load { path: path.clone(), msg: e.to_string() })?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Load { path: path.clone(), msg: e.to_string() })?;
        if manifest.format != BAGGED_FORMAT {
            return Err(Error::Load { path, msg: format!("not a bagged model manifest (format `{}`)", manifest.format) });
        }
        if manifest.format_version != BAGGED_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: manifest.format_version, expected: BAGGED_FORMAT_VERSION });
        }
        let members = manifest.members.iter().map(|f| gbdt::load_model(&dir.join(f))).collect::<Result<_>>()?;
        Self::new(members)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    format_version: u64,
    members: Vec<String>,
}
