//! Recordings, sliding-window segmentation and repetition-grouped splits.

mod csv_io;
mod synthetic;

pub use csv_io::{load_recording, save_recording};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, MAX_GESTURE, N_CHANNELS};

/// Default window length: 640 ms at 2 kHz.
pub const DEFAULT_WINDOW_LEN: usize = 1280;
/// Default hop: 160 ms at 2 kHz, i.e. 75% overlap.
pub const DEFAULT_STEP: usize = 320;
/// Highest repetition index.
pub const MAX_REPETITION: u8 = 6;

/// A continuous multichannel sEMG recording with per-sample labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    subject_id: String,
    sample_rate: f64,
    channels: Vec<Vec<f64>>,
    stimulus: Vec<u8>,
    repetition: Vec<u8>,
}

impl Recording {
    /// Builds a recording, checking shape and label invariants.
    ///
    /// Repetition 0 is accepted only on rest samples, which is how converted
    /// Ninapro exports mark inter-movement rest.
    pub fn new(
        subject_id: impl Into<String>,
        sample_rate: f64,
        channels: Vec<Vec<f64>>,
        stimulus: Vec<u8>,
        repetition: Vec<u8>,
    ) -> Result<Self> {
        if channels.len() != N_CHANNELS {
            return Err(Error::domain(format!("expected {N_CHANNELS} channels, got {}", channels.len())));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::domain("sample rate must be positive"));
        }
        let t = channels[0].len();
        if t == 0 {
            return Err(Error::domain("recording is empty"));
        }
        if let Some(c) = channels.iter().position(|c| c.len() != t) {
            return Err(Error::domain(format!("channel {} has {} samples, expected {t}", c + 1, channels[c].len())));
        }
        if stimulus.len() != t || repetition.len() != t {
            return Err(Error::domain("label sequences must match the channel length"));
        }
        if let Some(i) = stimulus.iter().position(|&s| s > MAX_GESTURE) {
            return Err(Error::domain(format!("stimulus {} at sample {i} is outside 0..={MAX_GESTURE}", stimulus[i])));
        }
        for i in 0..t {
            let r = repetition[i];
            if r > MAX_REPETITION || (r == 0 && stimulus[i] != 0) {
                return Err(Error::domain(format!("repetition {r} at sample {i} is invalid")));
            }
            if i > 0 && stimulus[i] != 0 && stimulus[i] == stimulus[i - 1] && r != repetition[i - 1] {
                return Err(Error::domain(format!("repetition changes inside a movement run at sample {i}")));
            }
        }
        Ok(Self { subject_id: subject_id.into(), sample_rate, channels, stimulus, repetition })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn stimulus(&self) -> &[u8] {
        &self.stimulus
    }

    pub fn repetition(&self) -> &[u8] {
        &self.repetition
    }

    pub fn len(&self) -> usize {
        self.stimulus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimulus.is_empty()
    }

    /// Returns a copy with every channel replaced by `f(channel)`.
    pub fn map_channels(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Recording {
        let channels = self.channels.iter().map(|c| f(c)).collect();
        Recording { channels, ..self.clone() }
    }

    /// Maximal runs of constant stimulus as `(start, end_exclusive, stimulus)`.
    pub fn stimulus_runs(&self) -> Vec<(usize, usize, u8)> {
        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..=self.stimulus.len() {
            if i == self.stimulus.len() || self.stimulus[i] != self.stimulus[start] {
                runs.push((start, i, self.stimulus[start]));
                start = i;
            }
        }
        runs
    }
}

/// A fixed-length multichannel segment with one gesture label.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `data[channel][sample]`
    pub data: Vec<Vec<f64>>,
    pub label: u8,
    pub repetition: u8,
    pub subject_id: String,
    /// Index of the first sample in the source recording.
    pub start: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len()
    }
}

/// Cuts windows out of every maximal constant-stimulus run.
///
/// Inside a run of length `L` windows start at `run_start + j * step` for
/// `j = 0..=(L - window_len) / step`, so no window ever straddles a label
/// change. Rest windows (stimulus 0) are kept only when `include_rest` is set.
pub fn segment(recording: &Recording, window_len: usize, step: usize, include_rest: bool) -> Result<Vec<Window>> {
    if window_len == 0 || step == 0 {
        return Err(Error::domain("window length and step must be positive"));
    }
    if window_len > recording.len() {
        return Err(Error::domain(format!(
            "window length {window_len} exceeds recording length {}",
            recording.len()
        )));
    }
    let mut windows = Vec::new();
    for (start, end, label) in recording.stimulus_runs() {
        if label == 0 && !include_rest {
            continue;
        }
        let run_len = end - start;
        if run_len < window_len {
            continue;
        }
        for j in 0..=(run_len - window_len) / step {
            let s = start + j * step;
            windows.push(Window {
                data: recording.channels.iter().map(|c| c[s..s + window_len].to_vec()).collect(),
                label,
                repetition: recording.repetition[s],
                subject_id: recording.subject_id.clone(),
                start: s,
            });
        }
    }
    Ok(windows)
}

/// Which repetitions go to training and which to testing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_repetitions: BTreeSet<u8>,
    pub test_repetitions: BTreeSet<u8>,
}

impl SplitPlan {
    pub fn new(train: impl IntoIterator<Item = u8>, test: impl IntoIterator<Item = u8>) -> Result<Self> {
        let plan = SplitPlan { train_repetitions: train.into_iter().collect(), test_repetitions: test.into_iter().collect() };
        if !plan.train_repetitions.is_disjoint(&plan.test_repetitions) {
            return Err(Error::domain("train and test repetitions overlap"));
        }
        if plan.train_repetitions.iter().chain(&plan.test_repetitions).any(|&r| r == 0 || r > MAX_REPETITION) {
            return Err(Error::domain(format!("repetitions must lie in 1..={MAX_REPETITION}")));
        }
        Ok(plan)
    }
}

/// The three fixed cross-validation groupings; each repetition is tested once.
pub fn make_cv_plans() -> [SplitPlan; 3] {
    let plan = |train: [u8; 4], test: [u8; 2]| SplitPlan::new(train, test).expect("static plan is valid");
    [plan([2, 4, 5, 6], [1, 3]), plan([1, 3, 4, 6], [2, 5]), plan([1, 2, 3, 5], [4, 6])]
}

/// Partitions windows by repetition according to `plan`.
pub fn split_by_repetition(windows: &[Window], plan: &SplitPlan) -> Result<(Vec<Window>, Vec<Window>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for w in windows {
        if plan.train_repetitions.contains(&w.repetition) {
            train.push(w.clone());
        } else if plan.test_repetitions.contains(&w.repetition) {
            test.push(w.clone());
        } else {
            return Err(Error::domain(format!("window repetition {} is not covered by the plan", w.repetition)));
        }
    }
    Ok((train, test))
}
