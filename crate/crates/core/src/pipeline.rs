//! End-to-end orchestration: filter, segment, split, standardize, extract,
//! train, evaluate and report.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::config::{HardClasses, PipelineConfig};
use crate::dataset::{generate_synthetic, load_recording, make_cv_plans, segment, split_by_repetition, Recording, SplitPlan, SyntheticSpec, Window};
use crate::dsp::{compute_stats, standardize, ChannelStats, FilterChain};
use crate::ensemble::{stratified_kfold, train_bagged, BaggedModel};
use crate::features::{FeatureConfig, FeatureMatrix};
use crate::gbdt::{self, auto_hard_classes, BoostedModel, Dataset, LossSpec, TrainParams};
use crate::hpo::{apply_params, default_space, Study};
use crate::metrics::evaluate;
use crate::report::{emit_report, PlanResult, RunReport};
use crate::transfer::{transfer_report, TargetSplits, TransferReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Evaluate,
    Tune,
    Transfer,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "evaluate" => Ok(Mode::Evaluate),
            "tune" => Ok(Mode::Tune),
            "transfer" => Ok(Mode::Transfer),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// What a run produced besides the files in the output directory.
#[derive(Debug, Default)]
pub struct PipelineOutcome {
    pub report: Option<RunReport>,
    pub transfer: Option<TransferReport>,
    pub study: Option<Study>,
    /// Names of the stages that ran, in order.
    pub stages: Vec<&'static str>,
}

#[derive(Default)]
struct Stages {
    timings: Vec<(String, f64)>,
    names: Vec<&'static str>,
}

impl Stages {
    fn run<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(name));
        let secs = start.elapsed().as_secs_f64();
        match self.timings.iter_mut().find(|(n, _)| n == name) {
            Some((_, t)) => *t += secs,
            None => {
                self.timings.push((name.to_string(), secs));
                self.names.push(name);
            }
        }
        out
    }
}

/// Loads every configured CSV, or generates the synthetic recording.
pub fn load_data(paths: &[PathBuf], sample_rate: f64, synthetic: &SyntheticSpec) -> Result<Vec<Recording>> {
    if paths.is_empty() {
        Ok(vec![generate_synthetic(synthetic)?])
    } else {
        paths.iter().map(|p| load_recording(p, sample_rate)).collect()
    }
}

/// Filters each recording and cuts it into labelled windows.
pub fn prepare_windows(recordings: &[Recording], cfg: &PipelineConfig) -> Result<Vec<Window>> {
    let mut windows = Vec::new();
    for rec in recordings {
        let rec = if cfg.filter.enabled {
            let f = &cfg.filter;
            let chain = FilterChain::new(f.low_hz, f.high_hz, f.order, &f.notch_hz, f.notch_q, rec.sample_rate())?;
            rec.map_channels(|c| chain.apply(c, f.zero_phase))
        } else {
            rec.clone()
        };
        windows.extend(segment(&rec, cfg.window.length, cfg.window.step, cfg.window.include_rest)?);
    }
    if windows.is_empty() {
        return Err(Error::domain("no windows could be cut from the data"));
    }
    Ok(windows)
}

/// Standardization statistics and feature matrices for one split plan. The
/// statistics come from the training windows only.
#[derive(Debug, Clone)]
pub struct PlanData {
    pub plan: SplitPlan,
    pub stats: ChannelStats,
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

pub fn features_with(stats: &ChannelStats, windows: &[Window], cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let standardized = windows.iter().map(|w| standardize(stats, w)).collect::<Result<Vec<_>>>()?;
    FeatureMatrix::from_windows(&standardized, cfg)
}

pub fn prepare_plan(windows: &[Window], plan: &SplitPlan, cfg: &FeatureConfig) -> Result<PlanData> {
    let (train, test) = split_by_repetition(windows, plan)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::domain("a split plan left the training or test set empty"));
    }
    let stats = compute_stats(&train)?;
    Ok(PlanData {
        plan: plan.clone(),
        train: features_with(&stats, &train, cfg)?,
        test: features_with(&stats, &test, cfg)?,
        stats,
    })
}

/// Zero-based class index of each movement label.
pub fn class_indices(labels: &[u8]) -> Vec<usize> {
    labels.iter().map(|&l| l as usize - 1).collect()
}

/// A single boosted model or a bagged ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Single(BoostedModel),
    Bagged(BaggedModel),
}

impl Classifier {
    pub fn n_classes(&self) -> usize {
        match self {
            Classifier::Single(m) => m.n_classes,
            Classifier::Bagged(b) => b.n_classes(),
        }
    }

    pub fn predict_label(&self, features: &[Vec<f64>]) -> Result<Vec<usize>> {
        match self {
            Classifier::Single(m) => m.predict_label(features),
            Classifier::Bagged(b) => b.predict_label(features),
        }
    }

    /// A single model goes to `dir/model.json`, a bagged one to member files plus `dir/manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        match self {
            Classifier::Single(m) => gbdt::save_model(m, &dir.join("model.json")),
            Classifier::Bagged(b) => b.save(dir),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        if dir.join("manifest.json").exists() {
            Ok(Classifier::Bagged(BaggedModel::load(dir)?))
        } else {
            Ok(Classifier::Single(gbdt::load_model(&dir.join("model.json"))?))
        }
    }
}

type Split = (Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>, Vec<usize>);

/// Splits off fold 0 of a stratified k-fold as an early-stopping set.
fn holdout(x: &[Vec<f64>], y: &[usize], folds: usize, seed: u64) -> Result<Split> {
    let assign = stratified_kfold(y, folds, seed)?;
    let (mut xt, mut yt, mut xv, mut yv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, &f) in assign.iter().enumerate() {
        if f == 0 {
            xv.push(x[i].clone());
            yv.push(y[i]);
        } else {
            xt.push(x[i].clone());
            yt.push(y[i]);
        }
    }
    Ok((xt, yt, xv, yv))
}

/// The objective for `labels`, with hard classes taken from the config or found by a warm-up run.
pub fn resolve_loss(x: &[Vec<f64>], y: &[usize], n_classes: usize, cfg: &PipelineConfig, params: &TrainParams) -> Result<LossSpec> {
    if !cfg.loss.weighted {
        return Ok(LossSpec::unweighted(n_classes));
    }
    let hard: BTreeSet<usize> = match &cfg.loss.hard_classes {
        HardClasses::Manual(list) => list.iter().map(|&c| c as usize - 1).filter(|&c| c < n_classes).collect(),
        HardClasses::Auto => {
            let (xt, yt, xv, yv) = holdout(x, y, cfg.ensemble.holdout_folds, params.seed)?;
            let hard = auto_hard_classes(Dataset::new(&xt, &yt)?, Dataset::new(&xv, &yv)?, params, n_classes)?;
            log::info!("hard classes: {:?}", hard.iter().map(|c| c + 1).collect::<Vec<_>>());
            hard
        }
    };
    LossSpec::from_labels(y, n_classes, cfg.loss.k, hard)
}

/// Trains a bagged ensemble (`ensemble.k >= 2`) or a single early-stopped model.
pub fn fit_classifier(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    cfg: &PipelineConfig,
    params: &TrainParams,
    bagging: bool,
) -> Result<Classifier> {
    let loss = resolve_loss(x, y, n_classes, cfg, params)?;
    if bagging && cfg.ensemble.k >= 2 {
        Ok(Classifier::Bagged(train_bagged(Dataset::new(x, y)?, cfg.ensemble.k, params, &loss)?))
    } else {
        let (xt, yt, xv, yv) = holdout(x, y, cfg.ensemble.holdout_folds, params.seed)?;
        let model = gbdt::train(Dataset::new(&xt, &yt)?, Some(Dataset::new(&xv, &yv)?), params, &loss)?;
        Ok(Classifier::Single(model))
    }
}

fn n_classes_of(windows: &[Window]) -> usize {
    windows.iter().map(|w| w.label as usize).max().unwrap_or(0)
}

fn plan_dir(out: &Path, i: usize) -> PathBuf {
    out.join("model").join(format!("plan_{}", i + 1))
}

/// Runs the pipeline in `mode`, writing artifacts below `out`.
pub fn run_pipeline(cfg: &PipelineConfig, mode: Mode, out: &Path) -> Result<PipelineOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut st = Stages::default();
    let mut outcome = PipelineOutcome::default();
    match mode {
        Mode::Train => outcome.report = Some(train_mode(cfg, &cfg.train_params(), out, &mut st)?),
        Mode::Evaluate => outcome.report = Some(evaluate_mode(cfg, out, &mut st)?),
        Mode::Tune => {
            let (study, report) = tune_mode(cfg, out, &mut st)?;
            outcome.study = Some(study);
            outcome.report = Some(report);
        }
        Mode::Transfer => outcome.transfer = Some(transfer_mode(cfg, out, &mut st)?),
    }
    if let Some(report) = outcome.report.as_mut() {
        report.timings = st.timings.clone();
        st.run("report", || emit_report(report, out))?;
    }
    outcome.stages = st.names;
    Ok(outcome)
}

fn source_windows(cfg: &PipelineConfig, st: &mut Stages) -> Result<Vec<Window>> {
    let recs = st.run("load", || load_data(&cfg.data.paths, cfg.data.sample_rate, &cfg.data.synthetic))?;
    st.run("filter", || prepare_windows(&recs, cfg))
}

fn prepare_plans(cfg: &PipelineConfig, windows: &[Window], plans: &[SplitPlan], st: &mut Stages) -> Result<Vec<PlanData>> {
    let fc = cfg.feature_config();
    st.run("extract", || plans.iter().map(|p| prepare_plan(windows, p, &fc)).collect())
}

fn train_mode(cfg: &PipelineConfig, params: &TrainParams, out: &Path, st: &mut Stages) -> Result<RunReport> {
    let windows = source_windows(cfg, st)?;
    let n_classes = n_classes_of(&windows);
    let data = prepare_plans(cfg, &windows, &make_cv_plans(), st)?;
    let mut report = RunReport::default();
    for (i, d) in data.iter().enumerate() {
        let y = class_indices(&d.train.labels);
        let clf = st.run("train", || fit_classifier(&d.train.rows, &y, n_classes, cfg, params, true))?;
        st.run("save", || {
            let dir = plan_dir(out, i);
            clf.save(&dir)?;
            crate::io::write_atomic(&dir.join("stats.json"), serde_json::to_string_pretty(&d.stats)?.as_bytes())
        })?;
        let metrics = st.run("evaluate", || evaluate(&clf.predict_label(&d.test.rows)?, &class_indices(&d.test.labels), n_classes))?;
        log::info!("plan {}: accuracy {:.4}", i + 1, metrics.accuracy);
        report.plans.push(PlanResult { plan: d.plan.clone(), metrics });
    }
    Ok(report)
}

fn evaluate_mode(cfg: &PipelineConfig, out: &Path, st: &mut Stages) -> Result<RunReport> {
    let windows = source_windows(cfg, st)?;
    let fc = cfg.feature_config();
    let mut report = RunReport::default();
    for (i, plan) in make_cv_plans().iter().enumerate() {
        let dir = plan_dir(out, i);
        let (clf, stats) = st.run("load", || {
            let path = dir.join("stats.json");
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Load { path: path.clone(), msg: e.to_string() })?;
            let stats: ChannelStats = serde_json::from_str(&text).map_err(|e| Error::Load { path, msg: e.to_string() })?;
            Ok((Classifier::load(&dir)?, stats))
        })?;
        let (_, test) = split_by_repetition(&windows, plan)?;
        let test = st.run("extract", || features_with(&stats, &test, &fc))?;
        let metrics = st.run("evaluate", || evaluate(&clf.predict_label(&test.rows)?, &class_indices(&test.labels), clf.n_classes()))?;
        report.plans.push(PlanResult { plan: plan.clone(), metrics });
    }
    Ok(report)
}

fn tune_mode(cfg: &PipelineConfig, out: &Path, st: &mut Stages) -> Result<(Study, RunReport)> {
    let windows = source_windows(cfg, st)?;
    let n_classes = n_classes_of(&windows);
    let all = make_cv_plans();
    let plans = if cfg.hpo.fast { &all[..1] } else { &all[..] };
    let data = prepare_plans(cfg, &windows, plans, st)?;
    let base = cfg.train_params();
    let space = default_space();
    let mut study = Study::with_log(&out.join("trials.log"), cfg.seed, cfg.hpo.sampler)?;
    st.run("tune", || {
        study.optimize(&space, cfg.hpo.n_trials, |p| {
            let params = apply_params(&base, p)?;
            let mut acc = 0.0;
            for d in &data {
                let clf = fit_classifier(&d.train.rows, &class_indices(&d.train.labels), n_classes, cfg, &params, false)?;
                let m = evaluate(&clf.predict_label(&d.test.rows)?, &class_indices(&d.test.labels), n_classes)?;
                acc += m.accuracy;
            }
            Ok(acc / data.len() as f64)
        })
    })?;
    let best = study.best_trial().ok_or_else(|| Error::Objective("every trial failed".into()).in_stage("tune"))?;
    let tuned = apply_params(&base, &best.params)?;
    crate::io::write_atomic(&out.join("best_params.json"), serde_json::to_string_pretty(&tuned)?.as_bytes())?;
    let report = train_mode(cfg, &tuned, out, st)?;
    Ok((study, report))
}

/// Keeps at most `cap` windows per class, in recording order.
fn cap_per_class(windows: Vec<Window>, cap: Option<usize>) -> Vec<Window> {
    let Some(cap) = cap else { return windows };
    let mut seen = std::collections::BTreeMap::<u8, usize>::new();
    windows
        .into_iter()
        .filter(|w| {
            let n = seen.entry(w.label).or_default();
            *n += 1;
            *n <= cap
        })
        .collect()
}

fn transfer_mode(cfg: &PipelineConfig, out: &Path, st: &mut Stages) -> Result<TransferReport> {
    let t = &cfg.transfer;
    let params = cfg.train_params();
    let fc = cfg.feature_config();
    let base = match &t.base_model {
        Some(path) => st.run("load", || gbdt::load_model(path))?,
        None => {
            let windows = source_windows(cfg, st)?;
            let n_classes = n_classes_of(&windows);
            let stats = st.run("standardize", || compute_stats(&windows))?;
            let fm = st.run("extract", || features_with(&stats, &windows, &fc))?;
            let y = class_indices(&fm.labels);
            let model = match st.run("train", || fit_classifier(&fm.rows, &y, n_classes, cfg, &params, false))? {
                Classifier::Single(m) => m,
                Classifier::Bagged(_) => unreachable!("source model is trained without bagging"),
            };
            st.run("save", || gbdt::save_model(&model, &out.join("model").join("base.json")))?;
            model
        }
    };
    let target_recs = st.run("load", || load_data(&t.target_paths, cfg.data.sample_rate, &t.target_synthetic))?;
    let target = st.run("filter", || prepare_windows(&target_recs, cfg))?;
    let seeds: Vec<u64> = (0..t.n_seeds as u64).map(|s| cfg.seed.wrapping_add(s)).collect();
    let mut reports = Vec::new();
    for plan in make_cv_plans() {
        let (train_w, test_w) = split_by_repetition(&target, &plan)?;
        let train_w = cap_per_class(train_w, t.max_train_windows_per_class);
        let stats = st.run("standardize", || compute_stats(&train_w))?;
        let train = st.run("extract", || features_with(&stats, &train_w, &fc))?;
        let test = st.run("extract", || features_with(&stats, &test_w, &fc))?;
        let y = class_indices(&train.labels);
        let loss = resolve_loss(&train.rows, &y, base.n_classes, cfg, &params).map_err(|e| e.in_stage("transfer"))?;
        let (xt, yt, xv, yv) = holdout(&train.rows, &y, cfg.ensemble.holdout_folds, cfg.seed)?;
        let yte = class_indices(&test.labels);
        let splits = TargetSplits {
            train: Dataset::new(&xt, &yt)?,
            valid: Some(Dataset::new(&xv, &yv)?),
            test: Dataset::new(&test.rows, &yte)?,
        };
        reports.push(st.run("transfer", || transfer_report(&base, splits, &t.config(), &params, &loss, &seeds))?);
    }
    let k = reports.len() as f64;
    let m = base.n_classes;
    let avg = |f: fn(&TransferReport) -> &Vec<f64>| -> Vec<f64> {
        (0..m).map(|c| reports.iter().map(|r| f(r)[c]).sum::<f64>() / k).collect()
    };
    let combined = TransferReport {
        before: avg(|r| &r.before),
        after: avg(|r| &r.after),
        per_seed: reports.iter().flat_map(|r| r.per_seed.iter().copied()).collect(),
    };
    st.run("report", || combined.write_csv(&out.join("transfer_report.csv")))?;
    log::info!("transfer: before {:.4}, after {:.4}", combined.mean_before(), combined.mean_after());
    Ok(combined)
}
