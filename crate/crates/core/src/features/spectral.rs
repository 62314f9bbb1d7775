use num_complex::Complex64;
use std::f64::consts::PI;

use super::with_fft;
use crate::{Error, Result};

pub const BAND_LOW_HZ: f64 = 20.0;
pub const BAND_HIGH_HZ: f64 = 200.0;
pub const N_BANDS: usize = 10;

/// Periodic Hann window of length `len`.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect()
}

/// Short-time power summed over segment positions.
///
/// Segments of `seg_len` samples start at `0, hop, 2*hop, ...` while they fit.
/// Each is Hann-windowed and transformed; the result holds the one-sided bins
/// `0..=seg_len/2`, each the sum over segments of `|S(bin, segment)|^2`. No
/// scaling or one-sided doubling is applied.
pub fn stft_psd(channel: &[f64], seg_len: usize, hop: usize) -> Result<Vec<f64>> {
    if seg_len == 0 || hop == 0 {
        return Err(Error::domain("segment length and hop must be positive"));
    }
    if seg_len > channel.len() {
        return Err(Error::domain(format!("segment length {seg_len} exceeds signal length {}", channel.len())));
    }
    let window = hann(seg_len);
    let n_bins = seg_len / 2 + 1;
    let mut psd = vec![0.0; n_bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    with_fft(seg_len, false, |fft| {
        let mut start = 0;
        while start + seg_len <= channel.len() {
            for (b, (x, w)) in buf.iter_mut().zip(channel[start..start + seg_len].iter().zip(&window)) {
                *b = Complex64::new(x * w, 0.0);
            }
            fft.process(&mut buf);
            for (p, s) in psd.iter_mut().zip(&buf) {
                *p += s.norm_sqr();
            }
            start += hop;
        }
    });
    Ok(psd)
}

/// Band index of a frequency, if it falls inside `[20, 200]` Hz.
///
/// Band `k` covers `[20 + 18k, 20 + 18(k+1))`; the last band also takes 200 Hz.
pub fn band_of(freq_hz: f64) -> Option<usize> {
    if !(BAND_LOW_HZ..=BAND_HIGH_HZ).contains(&freq_hz) {
        return None;
    }
    let width = (BAND_HIGH_HZ - BAND_LOW_HZ) / N_BANDS as f64;
    Some((((freq_hz - BAND_LOW_HZ) / width).floor() as usize).min(N_BANDS - 1))
}

/// Sums the PSD bins whose centre frequency falls in each of the ten bands.
pub fn band_power(psd: &[f64], sample_rate: f64, seg_len: usize) -> [f64; N_BANDS] {
    let mut bands = [0.0; N_BANDS];
    for (k, &p) in psd.iter().enumerate() {
        if let Some(b) = band_of(k as f64 * sample_rate / seg_len as f64) {
            bands[b] += p;
        }
    }
    bands
}
