use num_complex::Complex64;
use std::f64::consts::PI;

use super::{Biquad, SecondOrderSections};
use crate::{Error, Result};

const REAL_TOL: f64 = 1e-10;

/// Butterworth band-pass of analog prototype order `order`.
///
/// The prototype poles are shifted to the band with the low-pass to band-pass
/// transform (doubling the order), then mapped to the z-plane with the bilinear
/// transform after pre-warping both edge frequencies, so the -3 dB points land
/// exactly on `low_hz` and `high_hz`. The result has `order` sections.
pub fn design_bandpass(
    low_hz: f64,
    high_hz: f64,
    order: usize,
    sample_rate: f64,
) -> Result<SecondOrderSections> {
    let nyquist = sample_rate / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::domain(format!(
            "band-pass edges must satisfy 0 < low < high < {nyquist} Hz, got {low_hz}..{high_hz}"
        )));
    }
    if order == 0 {
        return Err(Error::domain("filter order must be at least 1"));
    }

    let fs2 = 2.0 * sample_rate;
    let warp = |f: f64| fs2 * (PI * f / sample_rate).tan();
    let (w_lo, w_hi) = (warp(low_hz), warp(high_hz));
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    let n = order as f64;
    let mut analog_poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
        let p = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let root = (p * p - w0_sq).sqrt();
        analog_poles.push(p + root);
        analog_poles.push(p - root);
    }

    // `order` analog zeros at s = 0 map to z = 1, the `order` zeros at infinity
    // map to z = -1.
    let mut gain = Complex64::new(bw.powi(order as i32), 0.0);
    for _ in 0..order {
        gain *= fs2; // (fs2 - 0) for each zero at the origin
    }
    let mut digital_poles = Vec::with_capacity(analog_poles.len());
    for &p in &analog_poles {
        gain /= fs2 - p;
        digital_poles.push((fs2 + p) / (fs2 - p));
    }

    let sections = pair_poles(&digital_poles)
        .into_iter()
        .map(|(r1, r2)| Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -(r1 + r2).re,
            a2: (r1 * r2).re,
        })
        .collect();
    SecondOrderSections::new(sections, gain.re)
}

/// Groups poles into conjugate pairs; leftover real poles are paired with
/// each other in order of magnitude.
fn pair_poles(poles: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    let mut pairs = Vec::new();
    let mut reals = Vec::new();
    for &p in poles {
        if p.im.abs() <= REAL_TOL * p.norm().max(1.0) {
            reals.push(Complex64::new(p.re, 0.0));
        } else if p.im > 0.0 {
            pairs.push((p, p.conj()));
        }
    }
    reals.sort_by(|a, b| b.re.abs().total_cmp(&a.re.abs()));
    for chunk in reals.chunks(2) {
        match chunk {
            [a, b] => pairs.push((*a, *b)),
            [a] => pairs.push((*a, Complex64::new(0.0, 0.0))),
            _ => unreachable!(),
        }
    }
    pairs
}

/// Second-order notch at `f0_hz` with quality factor `quality`.
///
/// Zeros sit on the unit circle at `±f0`; the pole radius is set by the -3 dB
/// bandwidth `f0 / quality`. Gain is exactly one at DC and Nyquist.
pub fn design_notch(f0_hz: f64, quality: f64, sample_rate: f64) -> Result<SecondOrderSections> {
    let nyquist = sample_rate / 2.0;
    if !(f0_hz > 0.0 && f0_hz < nyquist) {
        return Err(Error::domain(format!("notch frequency must lie in (0, {nyquist}) Hz, got {f0_hz}")));
    }
    if !(quality > 0.0) {
        return Err(Error::domain(format!("notch quality must be positive, got {quality}")));
    }
    let w0 = 2.0 * PI * f0_hz / sample_rate;
    let bw = w0 / quality;
    let g = 1.0 / (1.0 + (bw / 2.0).tan());
    let c = w0.cos();
    let section = Biquad {
        b0: 1.0,
        b1: -2.0 * c,
        b2: 1.0,
        a1: -2.0 * g * c,
        a2: 2.0 * g - 1.0,
    };
    SecondOrderSections::new(vec![section], g)
}
