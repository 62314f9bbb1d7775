//! IIR filtering and per-channel standardization.
//!
//! Filters are stored as cascaded second-order sections (biquads) with `a0`
//! normalized to one and a single overall gain applied to the input.

mod design;
mod standardize;

pub use design::{design_bandpass, design_notch};
pub use standardize::{compute_stats, standardize, ChannelStats};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

/// One biquad: `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const IDENTITY: Biquad = Biquad { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 0.0 };

    /// Largest pole magnitude of the section.
    pub fn pole_radius(&self) -> f64 {
        // z^2 + a1 z + a2 = 0
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        let r1 = (-self.a1 + disc) / 2.0;
        let r2 = (-self.a1 - disc) / 2.0;
        r1.norm().max(r2.norm())
    }

    pub fn is_stable(&self) -> bool {
        self.pole_radius() < 1.0
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b0 + z_inv * self.b1 + z2 * self.b2;
        let den = 1.0 + z_inv * self.a1 + z2 * self.a2;
        num / den
    }
}

/// Cascade of biquads with an overall gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderSections {
    sections: Vec<Biquad>,
    overall_gain: f64,
}

impl SecondOrderSections {
    pub fn new(sections: Vec<Biquad>, overall_gain: f64) -> Result<Self> {
        if sections.is_empty() {
            return Err(Error::domain("a filter needs at least one section"));
        }
        if let Some((i, s)) = sections.iter().enumerate().find(|(_, s)| !s.is_stable()) {
            return Err(Error::domain(format!(
                "section {i} is unstable (pole radius {})",
                s.pole_radius()
            )));
        }
        Ok(Self { sections, overall_gain })
    }

    pub fn identity() -> Self {
        Self { sections: vec![Biquad::IDENTITY], overall_gain: 1.0 }
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn overall_gain(&self) -> f64 {
        self.overall_gain
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Biquad::is_stable)
    }

    /// Series connection: `self` followed by `other`.
    pub fn cascade(&self, other: &SecondOrderSections) -> SecondOrderSections {
        let mut sections = self.sections.clone();
        sections.extend_from_slice(&other.sections);
        SecondOrderSections { sections, overall_gain: self.overall_gain * other.overall_gain }
    }
}

/// Filters `signal` through `sos`.
///
/// Causal mode runs each section in direct form II transposed starting from
/// zero state. Zero-phase mode runs the causal filter forward, then again over
/// the time-reversed output, and reverses the result back.
pub fn filter_signal(sos: &SecondOrderSections, signal: &[f64], zero_phase: bool) -> Vec<f64> {
    let mut out = signal.to_vec();
    filter_in_place(sos, &mut out);
    if zero_phase {
        out.reverse();
        filter_in_place(sos, &mut out);
        out.reverse();
    }
    out
}

fn filter_in_place(sos: &SecondOrderSections, data: &mut [f64]) {
    let g = sos.overall_gain;
    for x in data.iter_mut() {
        *x *= g;
    }
    for s in &sos.sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for x in data.iter_mut() {
            let input = *x;
            let y = s.b0 * input + z1;
            z1 = s.b1 * input - s.a1 * y + z2;
            z2 = s.b2 * input - s.a2 * y;
            *x = y;
        }
    }
}

/// Magnitude response `|H(e^{jω})|` at each frequency in Hz.
pub fn frequency_response(sos: &SecondOrderSections, freqs_hz: &[f64], sample_rate: f64) -> Vec<f64> {
    freqs_hz
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f / sample_rate;
            let z_inv = Complex64::from_polar(1.0, -w);
            let h = sos
                .sections
                .iter()
                .fold(Complex64::new(sos.overall_gain, 0.0), |acc, s| acc * s.response(z_inv));
            h.norm()
        })
        .collect()
}

/// The acquisition front end: band-pass followed by the mains notches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterChain {
    pub bandpass: SecondOrderSections,
    pub notches: Vec<SecondOrderSections>,
}

impl FilterChain {
    pub fn new(
        low_hz: f64,
        high_hz: f64,
        order: usize,
        notch_hz: &[f64],
        notch_q: f64,
        sample_rate: f64,
    ) -> Result<Self> {
        let bandpass = design_bandpass(low_hz, high_hz, order, sample_rate)?;
        let notches = notch_hz
            .iter()
            .map(|&f| design_notch(f, notch_q, sample_rate))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bandpass, notches })
    }

    /// All stages as one cascade, in application order.
    pub fn combined(&self) -> SecondOrderSections {
        self.notches.iter().fold(self.bandpass.clone(), |acc, n| acc.cascade(n))
    }

    pub fn apply(&self, signal: &[f64], zero_phase: bool) -> Vec<f64> {
        let mut out = filter_signal(&self.bandpass, signal, zero_phase);
        for n in &self.notches {
            out = filter_signal(n, &out, zero_phase);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn identity_filter_has_unit_magnitude() {
        let sos = SecondOrderSections::identity();
        let freqs: Vec<f64> = (0..=100).map(|i| i as f64 * 10.0).collect();
        for m in frequency_response(&sos, &freqs, 2000.0) {
            assert!((m - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cascade_response_is_product() {
        let bp = design_bandpass(20.0, 200.0, 5, 2000.0).unwrap();
        let n = design_notch(74.0, 30.0, 2000.0).unwrap();
        let c = bp.cascade(&n);
        let freqs: Vec<f64> = (0..=1000).map(|i| i as f64).collect();
        let a = frequency_response(&bp, &freqs, 2000.0);
        let b = frequency_response(&n, &freqs, 2000.0);
        let ab = frequency_response(&c, &freqs, 2000.0);
        for i in 0..freqs.len() {
            assert!((ab[i] - a[i] * b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let sos = design_bandpass(20.0, 200.0, 5, 2000.0).unwrap();
        let out = filter_signal(&sos, &[0.0; 500], false);
        assert!(out.iter().all(|&v| v == 0.0));
        assert_eq!(out.len(), 500);
    }

    #[test]
    fn filtering_is_homogeneous() {
        let sos = design_bandpass(20.0, 200.0, 5, 2000.0).unwrap();
        let x: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        for zp in [false, true] {
            let y = filter_signal(&sos, &x, zp);
            let y2 = filter_signal(&sos, &x2, zp);
            for (a, b) in y.iter().zip(&y2) {
                assert!((2.0 * a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn notch_removes_steady_state_tone() {
        let fs = 2000.0;
        let notch = design_notch(74.0, 30.0, fs).unwrap();
        let x = tone(74.0, fs, 4000);
        let y = filter_signal(&notch, &x, false);
        let skip = 1000;
        let ratio = rms(&y[skip..]) / rms(&x[skip..]);
        assert!(ratio < 0.05, "ratio {ratio}");
    }

    #[test]
    fn zero_phase_output_of_symmetric_pulse_is_symmetric() {
        let sos = design_bandpass(20.0, 200.0, 5, 2000.0).unwrap();
        let n = 8001;
        let c = n / 2;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = (i as f64 - c as f64) / 10.0;
                (-t * t).exp()
            })
            .collect();
        let y = filter_signal(&sos, &x, true);
        for k in 0..c {
            assert!((y[c - k] - y[c + k]).abs() < 1e-6, "asymmetry at offset {k}");
        }
    }

    #[test]
    fn filter_chain_matches_combined_cascade() {
        let chain = FilterChain::new(20.0, 200.0, 5, &[74.0, 148.0], 30.0, 2000.0).unwrap();
        let x: Vec<f64> = (0..3000).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let a = chain.apply(&x, false);
        let b = filter_signal(&chain.combined(), &x, false);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn unstable_section_is_rejected() {
        let bad = Biquad { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 1.5 };
        assert!(SecondOrderSections::new(vec![bad], 1.0).is_err());
        assert!(SecondOrderSections::new(vec![], 1.0).is_err());
    }
}
