//! Per-window feature extraction.
//!
//! A window of 12 channels becomes 336 values in a fixed order:
//!
//! | indices   | block                                           |
//! |-----------|-------------------------------------------------|
//! | 0..72     | channel-major `[mean, var, mav, zcr, rms, wl]`  |
//! | 72..192   | channel-major band power, bands 1..10           |
//! | 192..336  | 12×12 phase-locking matrix, row-major           |

mod phase;
mod spectral;
mod time_domain;

pub use phase::{analytic_phase, plv, plv_matrix};
pub use spectral::{band_of, band_power, hann, stft_psd, BAND_HIGH_HZ, BAND_LOW_HZ, N_BANDS};
pub use time_domain::{time_domain, TimeDomainFeatures};

use std::cell::RefCell;
use std::path::Path;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dataset::Window;
use crate::{io::write_atomic, Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn with_fft<R>(len: usize, inverse: bool, f: impl FnOnce(&dyn Fft<f64>) -> R) -> R {
    let fft: Arc<dyn Fft<f64>> = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    });
    f(fft.as_ref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: f64,
    /// STFT segment length in samples.
    pub seg_len: usize,
    /// STFT hop in samples.
    pub hop: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { sample_rate: 2000.0, seg_len: 256, hop: 128 }
    }
}

pub const TIME_FEATURES: usize = 6;

/// Length of the feature vector for `n_channels` channels.
pub fn feature_len(n_channels: usize) -> usize {
    n_channels * (TIME_FEATURES + N_BANDS) + n_channels * n_channels
}

/// Column names in feature order, e.g. `ch1_mean`, `ch3_band7`, `plv_2_11`.
pub fn feature_names(n_channels: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(feature_len(n_channels));
    for c in 1..=n_channels {
        for f in TimeDomainFeatures::NAMES {
            names.push(format!("ch{c}_{f}"));
        }
    }
    for c in 1..=n_channels {
        for b in 1..=N_BANDS {
            names.push(format!("ch{c}_band{b}"));
        }
    }
    for m in 1..=n_channels {
        for n in 1..=n_channels {
            names.push(format!("plv_{m}_{n}"));
        }
    }
    names
}

/// The flattened per-window feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_finite(v: f64, channel: usize, feature: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Extraction { channel, feature: feature.to_string() })
    }
}

/// Extracts time-domain, band-power and phase-locking features from a
/// (filtered, standardized) window.
pub fn extract_features(window: &Window, cfg: &FeatureConfig) -> Result<FeatureVector> {
    let n_ch = window.data.len();
    let mut out = Vec::with_capacity(feature_len(n_ch));
    for (c, ch) in window.data.iter().enumerate() {
        let td = time_domain(ch)?.to_array();
        for (v, name) in td.iter().zip(TimeDomainFeatures::NAMES) {
            out.push(check_finite(*v, c + 1, name)?);
        }
    }
    for (c, ch) in window.data.iter().enumerate() {
        let psd = stft_psd(ch, cfg.seg_len, cfg.hop)?;
        for (b, v) in band_power(&psd, cfg.sample_rate, cfg.seg_len).iter().enumerate() {
            out.push(check_finite(*v, c + 1, &format!("band{}", b + 1))?);
        }
    }
    let phases = window.data.iter().map(|ch| analytic_phase(ch)).collect::<Result<Vec<_>>>()?;
    let plv = plv_matrix(&phases)?;
    for (m, row) in plv.iter().enumerate() {
        for (n, v) in row.iter().enumerate() {
            out.push(check_finite(*v, m + 1, &format!("plv_{}_{}", m + 1, n + 1))?);
        }
    }
    debug_assert_eq!(out.len(), feature_len(n_ch));
    Ok(FeatureVector(out))
}

/// Rows of features with their labels and provenance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub repetitions: Vec<u8>,
    pub subjects: Vec<String>,
}

impl FeatureMatrix {
    pub fn from_windows(windows: &[Window], cfg: &FeatureConfig) -> Result<Self> {
        let mut m = FeatureMatrix::default();
        for w in windows {
            m.rows.push(extract_features(w, cfg)?.into_inner());
            m.labels.push(w.label);
            m.repetitions.push(w.repetition);
            m.subjects.push(w.subject_id.clone());
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Writes `feature columns..., label, repetition, subject`.
    pub fn write_csv(&self, path: &Path, n_channels: usize) -> Result<()> {
        let mut s = feature_names(n_channels).join(",");
        s.push_str(",label,repetition,subject\n");
        for i in 0..self.rows.len() {
            for v in &self.rows[i] {
                s.push_str(&v.to_string());
                s.push(',');
            }
            s.push_str(&format!("{},{},{}\n", self.labels[i], self.repetitions[i], self.subjects[i]));
        }
        write_atomic(path, s.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::N_CHANNELS;

    fn window(identical: bool) -> Window {
        let data = (0..N_CHANNELS)
            .map(|c| {
                (0..1280)
                    .map(|i| {
                        let t = i as f64 / 2000.0;
                        let k = if identical { 0 } else { c };
                        (2.0 * std::f64::consts::PI * (60.0 + 7.0 * k as f64) * t).sin() + 0.3 * (0.01 * (i * (k + 1)) as f64).cos()
                    })
                    .collect()
            })
            .collect();
        Window { data, label: 1, repetition: 1, subject_id: "s".into(), start: 0 }
    }

    #[test]
    fn vector_has_336_entries() {
        let f = extract_features(&window(false), &FeatureConfig::default()).unwrap();
        assert_eq!(f.len(), 336);
        assert_eq!(feature_len(N_CHANNELS), 336);
        assert!(f.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identical_channels_lock_completely() {
        let f = extract_features(&window(true), &FeatureConfig::default()).unwrap();
        for v in &f.as_slice()[192..] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn first_block_matches_direct_time_domain_call() {
        let w = window(false);
        let f = extract_features(&w, &FeatureConfig::default()).unwrap();
        assert_eq!(&f.as_slice()[..6], &time_domain(&w.data[0]).unwrap().to_array());
        assert_eq!(&f.as_slice()[6..12], &time_domain(&w.data[1]).unwrap().to_array());
    }

    #[test]
    fn non_finite_sample_names_channel_and_feature() {
        let mut w = window(false);
        w.data[2][10] = f64::NAN;
        match extract_features(&w, &FeatureConfig::default()) {
            Err(Error::Extraction { channel, feature }) => {
                assert_eq!(channel, 3);
                assert_eq!(feature, "mean");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
