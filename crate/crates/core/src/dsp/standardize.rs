use serde::{Deserialize, Serialize};

use crate::dataset::Window;
use crate::{Error, Result};

/// Per-channel mean and (population) standard deviation of a training pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Pools every sample of every training window per channel.
pub fn compute_stats(train_windows: &[Window]) -> Result<ChannelStats> {
    let first = train_windows.first().ok_or_else(|| Error::domain("no training windows"))?;
    let n_channels = first.data.len();
    let mut mean = vec![0.0; n_channels];
    let mut std = vec![0.0; n_channels];
    for c in 0..n_channels {
        let mut count = 0usize;
        let mut sum = 0.0;
        for w in train_windows {
            sum += w.data[c].iter().sum::<f64>();
            count += w.data[c].len();
        }
        let m = sum / count as f64;
        let mut ss = 0.0;
        for w in train_windows {
            ss += w.data[c].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        }
        let s = (ss / count as f64).sqrt();
        if !(s > 0.0) {
            return Err(Error::DegenerateChannel { channel: c + 1 });
        }
        mean[c] = m;
        std[c] = s;
    }
    Ok(ChannelStats { mean, std })
}

/// Applies `(x - mean_c) / std_c` channel-wise.
pub fn standardize(stats: &ChannelStats, window: &Window) -> Result<Window> {
    if window.data.len() != stats.mean.len() {
        return Err(Error::domain(format!(
            "window has {} channels, stats describe {}",
            window.data.len(),
            stats.mean.len()
        )));
    }
    let data = window
        .data
        .iter()
        .enumerate()
        .map(|(c, ch)| ch.iter().map(|v| (v - stats.mean[c]) / stats.std[c]).collect())
        .collect();
    Ok(Window { data, ..window.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::N_CHANNELS;

    fn window(seed: usize, offset: f64, scale: f64) -> Window {
        let data = (0..N_CHANNELS)
            .map(|c| {
                (0..64)
                    .map(|i| {
                        let k = (i * 7 + c * 13 + seed * 31) % 97;
                        offset + scale * (k as f64 / 97.0 - 0.5) * (c + 1) as f64
                    })
                    .collect()
            })
            .collect();
        Window { data, label: 1, repetition: 1, subject_id: "s".into(), start: 0 }
    }

    #[test]
    fn standardized_pool_has_zero_mean_unit_std() {
        let pool: Vec<Window> = (0..5).map(|s| window(s, 3.0, 2.0)).collect();
        let stats = compute_stats(&pool).unwrap();
        let out: Vec<Window> = pool.iter().map(|w| standardize(&stats, w).unwrap()).collect();
        let again = compute_stats(&out).unwrap();
        for c in 0..N_CHANNELS {
            assert!(again.mean[c].abs() < 1e-9);
            assert!((again.std[c] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_channel_is_degenerate() {
        let mut w = window(0, 0.0, 1.0);
        w.data[4] = vec![2.5; 64];
        assert!(matches!(compute_stats(&[w]), Err(Error::DegenerateChannel { channel: 5 })));
    }

    #[test]
    fn test_window_gets_an_affine_map_of_train_stats() {
        let train: Vec<Window> = (0..3).map(|s| window(s, 0.0, 1.0)).collect();
        let stats = compute_stats(&train).unwrap();
        let test = window(9, 5.0, 3.0);
        let out = standardize(&stats, &test).unwrap();
        for c in 0..N_CHANNELS {
            for i in 0..64 {
                let expected = (test.data[c][i] - stats.mean[c]) / stats.std[c];
                assert_eq!(out.data[c][i], expected);
            }
        }
        // pooling the test window in would change the statistics
        let mut pooled = train.clone();
        pooled.push(test);
        assert_ne!(compute_stats(&pooled).unwrap(), stats);
    }

    #[test]
    fn empty_pool_is_rejected() {
        assert!(compute_stats(&[]).is_err());
    }
}
