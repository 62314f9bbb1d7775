//! Hyperparameter search with a density-ratio (TPE-style) sampler.
//!
//! The first `n_startup` trials are drawn uniformly. Afterwards completed
//! trials are split at the `gamma` quantile of their objective into a good and
//! a bad set, each dimension gets a Gaussian kernel density per set, and the
//! candidate with the highest good/bad density ratio among `n_candidates`
//! draws from the good density is suggested.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::gbdt::TrainParams;
use crate::{Error, Result};

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dimension {
    Float { low: f64, high: f64, scale: Scale },
    Int { low: i64, high: i64 },
}

impl Dimension {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Dimension::Float { low, high, scale } => {
                low.is_finite() && high.is_finite() && low < high && (scale == Scale::Linear || low > 0.0)
            }
            Dimension::Int { low, high } => low < high,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid bounds for search dimension `{name}`")))
        }
    }

    /// Bounds in the sampler's internal coordinates.
    fn internal_bounds(&self) -> (f64, f64) {
        match *self {
            Dimension::Float { low, high, scale: Scale::Linear } => (low, high),
            Dimension::Float { low, high, scale: Scale::Log } => (low.ln(), high.ln()),
            Dimension::Int { low, high } => (low as f64 - 0.5, high as f64 + 0.5),
        }
    }

    fn internal(self, v: f64) -> f64 {
        match self {
            Dimension::Float { scale: Scale::Log, .. } => v.ln(),
            _ => v,
        }
    }

    fn external(self, u: f64) -> f64 {
        match self {
            Dimension::Float { low, high, scale: Scale::Linear } => u.clamp(low, high),
            Dimension::Float { low, high, scale: Scale::Log } => u.exp().clamp(low, high),
            Dimension::Int { low, high } => u.round().clamp(low as f64, high as f64),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Dimension::Float { low, high, .. } => v >= low && v <= high,
            Dimension::Int { low, high } => v.fract() == 0.0 && v >= low as f64 && v <= high as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dimensions: Vec<(String, Dimension)>,
}

impl SearchSpace {
    pub fn new(dimensions: Vec<(String, Dimension)>) -> Result<Self> {
        let space = Self { dimensions };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::Config("search space has no dimensions".into()));
        }
        for (name, d) in &self.dimensions {
            d.validate(name)?;
        }
        Ok(())
    }

    pub fn contains(&self, params: &Params) -> bool {
        self.dimensions.iter().all(|(n, d)| params.get(n).is_some_and(|&v| d.contains(v)))
    }
}

/// Search ranges over the main boosting parameters.
pub fn default_space() -> SearchSpace {
    let float = |low, high, scale| Dimension::Float { low, high, scale };
    SearchSpace {
        dimensions: vec![
            ("learning_rate".into(), float(1e-3, 0.3, Scale::Log)),
            ("num_leaves".into(), Dimension::Int { low: 8, high: 256 }),
            ("min_data_in_leaf".into(), Dimension::Int { low: 5, high: 100 }),
            ("feature_fraction".into(), float(0.5, 1.0, Scale::Linear)),
            ("bagging_fraction".into(), float(0.5, 1.0, Scale::Linear)),
            ("l2_regularization".into(), float(1e-8, 10.0, Scale::Log)),
        ],
    }
}

/// Overrides the fields of `base` named in `params`.
pub fn apply_params(base: &TrainParams, params: &Params) -> Result<TrainParams> {
    let mut p = base.clone();
    for (name, &v) in params {
        match name.as_str() {
            "learning_rate" => p.learning_rate = v,
            "num_leaves" => p.num_leaves = v as usize,
            "min_data_in_leaf" => p.min_data_in_leaf = v as usize,
            "feature_fraction" => p.feature_fraction = v,
            "bagging_fraction" => p.bagging_fraction = v,
            "l2_regularization" => p.l2_regularization = v,
            "max_bins" => p.max_bins = v as usize,
            "goss_top_rate" => p.goss_top_rate = v,
            "goss_other_rate" => p.goss_other_rate = v,
            other => return Err(Error::Config(format!("unknown hyperparameter `{other}`"))),
        }
    }
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub number: usize,
    pub params: Params,
    pub objective: Option<f64>,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_startup: 10, gamma: 0.25, n_candidates: 24 }
    }
}

/// Maximizing search state.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub trials: Vec<Trial>,
    log_path: Option<PathBuf>,
}

impl Study {
    pub fn new(seed: u64, sampler: SamplerConfig) -> Self {
        Self { seed, sampler, trials: Vec::new(), log_path: None }
    }

    /// Opens a study backed by a JSON-lines trial log, replaying any trials
    /// already in it. A torn final line is dropped.
    pub fn with_log(path: &Path, seed: u64, sampler: SamplerConfig) -> Result<Self> {
        let mut study = Self::new(seed, sampler);
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            for (i, line) in lines.iter().enumerate() {
                match serde_json::from_str::<Trial>(line) {
                    Ok(t) => study.trials.push(t),
                    Err(e) if i + 1 == lines.len() => log::warn!("ignoring torn last line of {}: {e}", path.display()),
                    Err(e) => return Err(Error::Load { path: path.to_path_buf(), msg: format!("line {}: {e}", i + 1) }),
                }
            }
            if text.lines().count() != study.trials.len() {
                // rewrite without the torn line so appends stay parseable
                let mut clean = String::new();
                for t in &study.trials {
                    clean.push_str(&serde_json::to_string(t)?);
                    clean.push('\n');
                }
                crate::io::write_atomic(path, clean.as_bytes())?;
            }
        }
        study.log_path = Some(path.to_path_buf());
        Ok(study)
    }

    pub fn completed(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(|t| t.status == TrialStatus::Complete)
    }

    /// Highest-objective completed trial; the earliest wins ties.
    pub fn best_trial(&self) -> Option<&Trial> {
        let mut best: Option<&Trial> = None;
        for t in self.completed() {
            if best.is_none_or(|b| t.objective > b.objective) {
                best = Some(t);
            }
        }
        best
    }

    /// Running best objective after each trial (`None` until one completes).
    pub fn best_history(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.trials
            .iter()
            .map(|t| {
                if let Some(v) = t.objective.filter(|_| t.status == TrialStatus::Complete) {
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
                best
            })
            .collect()
    }

    fn trial_rng(&self, number: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(number as u64);
        rng
    }

    /// Proposes parameters for the next trial.
    pub fn suggest(&self, space: &SearchSpace) -> Params {
        let mut rng = self.trial_rng(self.trials.len());
        let history: Vec<(&Params, f64)> = self
            .completed()
            .filter(|t| space.contains(&t.params))
            .filter_map(|t| t.objective.map(|o| (&t.params, o)))
            .collect();
        if history.len() < self.sampler.n_startup.max(1) {
            return space.dimensions.iter().map(|(n, d)| (n.clone(), sample_uniform(d, &mut rng))).collect();
        }
        let mut order: Vec<usize> = (0..history.len()).collect();
        order.sort_by(|&i, &j| history[j].1.total_cmp(&history[i].1).then(i.cmp(&j)));
        let n_good = ((self.sampler.gamma * history.len() as f64).ceil() as usize).clamp(1, history.len());
        let (good, bad) = order.split_at(n_good);

        let kdes: Vec<(Kde, Kde)> = space
            .dimensions
            .iter()
            .map(|(name, d)| {
                let pts = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| d.internal(history[i].0[name])).collect() };
                let bounds = d.internal_bounds();
                (Kde::new(&pts(good), bounds), Kde::new(&pts(bad), bounds))
            })
            .collect();

        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..self.sampler.n_candidates.max(1) {
            let u: Vec<f64> = kdes.iter().map(|(g, _)| g.sample(&mut rng)).collect();
            let score: f64 = kdes.iter().zip(&u).map(|((g, b), &x)| g.log_pdf(x) - b.log_pdf(x)).sum();
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, u));
            }
        }
        let (_, u) = best.unwrap();
        space.dimensions.iter().zip(u).map(|((n, d), x)| (n.clone(), d.external(x))).collect()
    }

    /// Records a finished trial and appends it to the log, if any.
    pub fn tell(&mut self, params: Params, outcome: Result<f64>) -> Result<&Trial> {
        let number = self.trials.len();
        let trial = match outcome {
            Ok(v) if v.is_finite() => Trial { number, params, objective: Some(v), status: TrialStatus::Complete, error: None },
            Ok(v) => Trial {
                number,
                params,
                objective: None,
                status: TrialStatus::Failed,
                error: Some(format!("non-finite objective {v}")),
            },
            Err(e) => Trial { number, params, objective: None, status: TrialStatus::Failed, error: Some(e.to_string()) },
        };
        if let Some(path) = &self.log_path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&trial)?)?;
            f.flush()?;
        }
        self.trials.push(trial);
        Ok(self.trials.last().unwrap())
    }

    /// Runs trials until the study holds `n_trials`, so a resumed study only
    /// runs the missing ones.
    pub fn optimize(
        &mut self,
        space: &SearchSpace,
        n_trials: usize,
        mut objective: impl FnMut(&Params) -> Result<f64>,
    ) -> Result<()> {
        space.validate()?;
        while self.trials.len() < n_trials {
            let params = self.suggest(space);
            let outcome = objective(&params);
            if let Err(e) = &outcome {
                log::warn!("trial {} failed: {e}", self.trials.len());
            }
            let t = self.tell(params, outcome)?;
            log::info!("trial {} -> {:?}", t.number, t.objective);
        }
        Ok(())
    }
}

/// Runs a fresh in-memory study of `n_trials` trials.
pub fn optimize(
    space: &SearchSpace,
    n_trials: usize,
    objective: impl FnMut(&Params) -> Result<f64>,
    seed: u64,
) -> Result<Study> {
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    let mut study = Study::new(seed, SamplerConfig::default());
    study.optimize(space, n_trials, objective)?;
    Ok(study)
}

fn sample_uniform<R: Rng + ?Sized>(d: &Dimension, rng: &mut R) -> f64 {
    match *d {
        Dimension::Float { low, high, scale: Scale::Linear } => rng.random_range(low..=high),
        Dimension::Float { low, high, scale: Scale::Log } => rng.random_range(low.ln()..=high.ln()).exp().clamp(low, high),
        Dimension::Int { low, high } => rng.random_range(low..=high) as f64,
    }
}

/// Equal-weight Gaussian mixture over the observations plus one wide prior
/// component centred on the range.
///
/// The shared Scott bandwidth is floored at `range / min(100, n + 1)`; without
/// the floor a tight cluster of good points collapses the kernel and the search
/// stalls on it.
struct Kde {
    means: Vec<f64>,
    sigmas: Vec<f64>,
    low: f64,
    high: f64,
}

impl Kde {
    fn new(points: &[f64], (low, high): (f64, f64)) -> Self {
        let range = high - low;
        let mut means = points.to_vec();
        let mut sigmas = Vec::with_capacity(points.len() + 1);
        if !points.is_empty() {
            let n = points.len() as f64;
            let mean = points.iter().sum::<f64>() / n;
            let std = (points.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt();
            let floor = range / (1.0 + n).min(100.0);
            let bw = (1.06 * std * n.powf(-0.2)).clamp(floor, range);
            sigmas.resize(points.len(), bw);
        }
        means.push(low + range / 2.0);
        sigmas.push(range);
        Self { means, sigmas, low, high }
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .means
            .iter()
            .zip(&self.sigmas)
            .map(|(&m, &s)| -0.5 * ((x - m) / s).powi(2) - s.ln())
            .collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln() - (self.means.len() as f64).ln()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = rng.random_range(0..self.means.len());
        let normal = Normal::new(self.means[k], self.sigmas[k]).expect("positive bandwidth");
        for _ in 0..100 {
            let x = normal.sample(rng);
            if x >= self.low && x <= self.high {
                return x;
            }
        }
        self.means[k].clamp(self.low, self.high)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> SearchSpace {
        SearchSpace::new(vec![("x".into(), Dimension::Float { low: 0.0, high: 1.0, scale: Scale::Linear })]).unwrap()
    }

    #[test]
    fn startup_is_uniform_within_bounds() {
        let study = Study::new(4, SamplerConfig::default());
        let p = study.suggest(&default_space());
        assert!(default_space().contains(&p));
        assert_eq!(p.len(), 6);
    }

    #[test]
    fn quadratic_objective() {
        let study = optimize(&unit(), 60, |p| Ok(-(p["x"] - 0.3).powi(2)), 1).unwrap();
        assert!((study.best_trial().unwrap().params["x"] - 0.3).abs() < 0.05);
        let h = study.best_history();
        assert!(h.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_trial() {
        let study = optimize(&unit(), 1, |_| Ok(0.5), 0).unwrap();
        assert_eq!(study.trials.len(), 1);
    }

    #[test]
    fn failed_trial_is_recorded_and_search_continues() {
        let mut n = 0;
        let study = optimize(
            &unit(),
            10,
            |_| {
                n += 1;
                if n == 3 {
                    Err(Error::Objective("boom".into()))
                } else {
                    Ok(n as f64)
                }
            },
            0,
        )
        .unwrap();
        assert_eq!(study.trials.len(), 10);
        assert_eq!(study.trials.iter().filter(|t| t.status == TrialStatus::Failed).count(), 1);
        assert_eq!(study.trials[2].status, TrialStatus::Failed);
    }

    #[test]
    fn constant_objective_stays_in_bounds() {
        let space = default_space();
        let study = optimize(&space, 30, |_| Ok(0.5), 7).unwrap();
        for t in &study.trials {
            assert!(space.contains(&t.params), "{:?}", t.params);
            apply_params(&TrainParams::default(), &t.params).unwrap();
        }
    }

    #[test]
    fn integer_dimensions_are_integral() {
        let space = SearchSpace::new(vec![("n".into(), Dimension::Int { low: 2, high: 9 })]).unwrap();
        let study = optimize(&space, 40, |p| Ok(-(p["n"] - 5.0).abs()), 3).unwrap();
        assert!(study.trials.iter().all(|t| space.contains(&t.params)));
    }

    #[test]
    fn resume_from_log_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.log");
        let f = |p: &Params| Ok(-(p["x"] - 0.6).powi(2));
        let mut first = Study::with_log(&path, 5, SamplerConfig::default()).unwrap();
        first.optimize(&unit(), 15, f).unwrap();
        let mut resumed = Study::with_log(&path, 5, SamplerConfig::default()).unwrap();
        assert_eq!(resumed.trials.len(), 15);
        resumed.optimize(&unit(), 25, f).unwrap();
        let straight = optimize(&unit(), 25, f, 5).unwrap();
        assert_eq!(resumed.trials, straight.trials);
    }

    #[test]
    fn step_objective_concentrates_suggestions() {
        let f = |p: &Params| Ok(if p["x"] > 0.8 { 1.0 } else { 0.0 });
        for seed in 0..5 {
            let mut study = optimize(&unit(), 50, f, seed).unwrap();
            study.optimize(&unit(), 70, f).unwrap();
            let hits = study.trials[50..].iter().filter(|t| t.params["x"] > 0.7).count();
            assert!(hits >= 14, "seed {seed}: {hits}/20");
        }
    }

    #[test]
    fn log_dimension_spans_decades() {
        let space = default_space();
        let lrs: Vec<f64> = (0..100)
            .map(|i| Study::new(i, SamplerConfig::default()).suggest(&space)["learning_rate"])
            .collect();
        let (lo, hi) = lrs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(hi / lo > 10.0);
    }

    #[test]
    fn invalid_spaces() {
        assert!(SearchSpace::new(vec![]).is_err());
        assert!(SearchSpace::new(vec![("x".into(), Dimension::Float { low: 0.0, high: 1.0, scale: Scale::Log })]).is_err());
        assert!(SearchSpace::new(vec![("n".into(), Dimension::Int { low: 3, high: 3 })]).is_err());
        assert!(apply_params(&TrainParams::default(), &Params::from([("depth".into(), 3.0)])).is_err());
    }
}
