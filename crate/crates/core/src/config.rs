//! TOML pipeline configuration.
//!
//! Every section and field is optional; missing values take the defaults below.
//! The top-level `seed` drives every model-side random choice (fold shuffles,
//! feature and row sampling, the hyperparameter sampler). The synthetic data
//! generator keeps its own `data.synthetic.seed` so data and model randomness
//! can be varied independently.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{SyntheticSpec, DEFAULT_STEP, DEFAULT_WINDOW_LEN};
use crate::features::FeatureConfig;
use crate::gbdt::TrainParams;
use crate::hpo::SamplerConfig;
use crate::transfer::TransferConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Output directory; `--out` on the command line takes precedence.
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub filter: FilterConfig,
    pub window: WindowConfig,
    pub features: FeatureSettings,
    pub train: TrainParams,
    pub loss: LossConfig,
    pub ensemble: EnsembleConfig,
    pub hpo: HpoConfig,
    pub transfer: TransferSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV recording(s); when empty the synthetic generator is used.
    pub paths: Vec<PathBuf>,
    pub sample_rate: f64,
    pub synthetic: SyntheticSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { paths: Vec::new(), sample_rate: 2000.0, synthetic: SyntheticSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub enabled: bool,
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub notch_hz: Vec<f64>,
    pub notch_q: f64,
    pub zero_phase: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            low_hz: 20.0,
            high_hz: 200.0,
            order: 5,
            notch_hz: vec![74.0, 148.0],
            notch_q: 30.0,
            zero_phase: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub length: usize,
    pub step: usize,
    pub include_rest: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { length: DEFAULT_WINDOW_LEN, step: DEFAULT_STEP, include_rest: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub seg_len: usize,
    pub hop: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Self { seg_len: f.seg_len, hop: f.hop }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardClasses {
    /// Movement numbers (1-based) to up-weight.
    Manual(Vec<u8>),
    /// Chosen by a short unweighted warm-up run.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub weighted: bool,
    pub k: f64,
    pub hard_classes: HardClasses,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { weighted: true, k: 1.5, hard_classes: HardClasses::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Number of bagged members; 1 trains a single model.
    pub k: usize,
    /// Share of the training windows held out for early stopping of a single model.
    pub holdout_folds: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { k: 5, holdout_folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoConfig {
    pub n_trials: usize,
    /// Score trials on the first split plan only instead of all three.
    pub fast: bool,
    pub sampler: SamplerConfig,
}

impl Default for HpoConfig {
    fn default() -> Self {
        Self { n_trials: 20, fast: true, sampler: SamplerConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSettings {
    /// Model file to start from; a source model is trained when unset.
    pub base_model: Option<PathBuf>,
    pub learning_rate: f64,
    pub additional_rounds: usize,
    pub keep_base_trees: bool,
    /// Target recording(s); when empty a shifted synthetic target is generated.
    pub target_paths: Vec<PathBuf>,
    pub target_synthetic: SyntheticSpec,
    /// Caps the target training windows per class to mimic a small target set.
    pub max_train_windows_per_class: Option<usize>,
    /// Paired before/after runs, seeded `seed, seed + 1, ...`.
    pub n_seeds: usize,
}

impl Default for TransferSettings {
    fn default() -> Self {
        let t = TransferConfig::default();
        Self {
            base_model: t.base_model,
            learning_rate: t.learning_rate,
            additional_rounds: t.additional_rounds,
            keep_base_trees: t.keep_base_trees,
            target_paths: Vec::new(),
            target_synthetic: SyntheticSpec {
                seed: 1,
                profile_seed: Some(0),
                shift: 0.3,
                subject_id: "target".into(),
                ..SyntheticSpec::default()
            },
            max_train_windows_per_class: None,
            n_seeds: 3,
        }
    }
}

impl TransferSettings {
    pub fn config(&self) -> TransferConfig {
        TransferConfig {
            base_model: self.base_model.clone(),
            learning_rate: self.learning_rate,
            additional_rounds: self.additional_rounds,
            keep_base_trees: self.keep_base_trees,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load { path: path.to_path_buf(), msg: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.data.paths.is_empty() {
            self.data.synthetic.validate()?;
        }
        if !(self.data.sample_rate > 0.0) {
            return fail(format!("sample_rate must be positive, got {}", self.data.sample_rate));
        }
        if self.window.length == 0 || self.window.step == 0 {
            return fail("window length and step must be positive".into());
        }
        if self.features.seg_len < 2 || self.features.hop == 0 || self.features.seg_len > self.window.length {
            return fail("STFT segment must fit in the window and the hop must be positive".into());
        }
        self.train.validate()?;
        if self.loss.weighted && !(self.loss.k > 0.0) {
            return fail(format!("loss k must be positive, got {}", self.loss.k));
        }
        if let HardClasses::Manual(list) = &self.loss.hard_classes {
            if list.iter().any(|&c| c == 0 || c > crate::MAX_GESTURE) {
                return fail(format!("hard classes must be movement numbers 1..={}", crate::MAX_GESTURE));
            }
        }
        if self.ensemble.k == 0 || self.ensemble.holdout_folds < 2 {
            return fail("ensemble k must be >= 1 and holdout_folds >= 2".into());
        }
        if self.hpo.n_trials == 0 {
            return fail("hpo n_trials must be at least 1".into());
        }
        self.transfer.config().validate()?;
        if self.transfer.n_seeds == 0 {
            return fail("transfer n_seeds must be at least 1".into());
        }
        Ok(())
    }

    /// Feature settings at the data sample rate.
    pub fn feature_config(&self) -> FeatureConfig {
        let sample_rate = if self.data.paths.is_empty() { self.data.synthetic.sample_rate } else { self.data.sample_rate };
        FeatureConfig { sample_rate, seg_len: self.features.seg_len, hop: self.features.hop }
    }

    /// Training parameters with the top-level seed applied.
    pub fn train_params(&self) -> TrainParams {
        TrainParams { seed: self.seed, ..self.train.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.loss.hard_classes = HardClasses::Manual(vec![1, 9, 12, 13]);
        cfg.train.num_leaves = 15;
        cfg.transfer.additional_rounds = 40;
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = PipelineConfig::from_toml(
            "seed = 7\n[train]\nlearning_rate = 0.05\n[loss]\nhard_classes = { manual = [1, 13] }\n[ensemble]\nk = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train_params().seed, 7);
        assert_eq!(cfg.train.learning_rate, 0.05);
        assert_eq!(cfg.loss.hard_classes, HardClasses::Manual(vec![1, 13]));
        assert_eq!(cfg.ensemble.k, 1);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(PipelineConfig::from_toml("[train]\nlearning_rat = 0.1\n").is_err());
        assert!(PipelineConfig::from_toml("[train]\nnum_leaves = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[loss]\nhard_classes = { manual = [19] }\n").is_err());
    }
}
