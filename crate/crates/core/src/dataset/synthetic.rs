//! Desk-scale stand-in for a multi-subject sEMG database.
//!
//! Every gesture class gets its own per-channel amplitude profile and its own
//! degree of coupling to a shared carrier, so amplitude, spectral and phase
//! features all carry class information. Carriers are Gaussian noise
//! band-limited to 20-200 Hz; mains interference (fundamental and second
//! harmonic) and broadband noise are added on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::Recording;
use crate::dsp::{design_bandpass, filter_signal};
use crate::{Error, Result, MAX_GESTURE, N_CHANNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub repetitions: usize,
    /// Seconds per gesture hold.
    pub hold_duration: f64,
    /// Seconds of rest after each hold.
    pub rest_duration: f64,
    pub snr_db: f64,
    pub mains_hz: f64,
    pub sample_rate: f64,
    pub seed: u64,
    /// Seed for the class profiles; defaults to `seed`. Two recordings that
    /// share a profile seed describe the same gesture vocabulary.
    pub profile_seed: Option<u64>,
    /// Log-normal spread applied to the class amplitude profiles, drawn from
    /// `seed`. Zero reproduces the profiles exactly; positive values model a
    /// population shift between subjects.
    pub shift: f64,
    pub subject_id: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 18,
            repetitions: 6,
            hold_duration: 5.0,
            rest_duration: 3.0,
            snr_db: 20.0,
            mains_hz: 74.0,
            sample_rate: 2000.0,
            seed: 0,
            profile_seed: None,
            shift: 0.0,
            subject_id: "synthetic".into(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.n_classes > MAX_GESTURE as usize {
            return Err(Error::domain(format!("n_classes must be in 2..={MAX_GESTURE}")));
        }
        if self.repetitions == 0 || self.repetitions > super::MAX_REPETITION as usize {
            return Err(Error::domain("repetitions must be in 1..=6"));
        }
        if !(self.hold_duration > 0.0 && self.rest_duration > 0.0) {
            return Err(Error::domain("durations must be positive"));
        }
        if !(self.sample_rate > 0.0) || !(self.mains_hz > 0.0 && self.mains_hz * 2.0 < self.sample_rate / 2.0) {
            return Err(Error::domain("mains harmonic must lie below Nyquist"));
        }
        if !self.snr_db.is_finite() || !(self.shift >= 0.0) {
            return Err(Error::domain("snr must be finite and shift non-negative"));
        }
        Ok(())
    }
}

const REST_AMPLITUDE: f64 = 0.05;
const MAINS_AMPLITUDE: f64 = 0.3;

struct ClassProfile {
    amplitude: [f64; N_CHANNELS],
    coupling: [f64; N_CHANNELS],
}

/// Generates a labelled recording following a hold/rest schedule: for each
/// class, `repetitions` holds, each followed by rest that carries the same
/// repetition index.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Recording> {
    spec.validate()?;
    let fs = spec.sample_rate;
    let hold = (spec.hold_duration * fs).round() as usize;
    let rest = (spec.rest_duration * fs).round() as usize;
    if hold == 0 || rest == 0 {
        return Err(Error::domain("durations are shorter than one sample"));
    }

    let mut profile_rng = ChaCha8Rng::seed_from_u64(spec.profile_seed.unwrap_or(spec.seed));
    let mut profiles: Vec<ClassProfile> = (0..spec.n_classes)
        .map(|_| ClassProfile {
            amplitude: std::array::from_fn(|_| profile_rng.random_range(0.2..1.0)),
            coupling: std::array::from_fn(|_| profile_rng.random_range(0.0..0.8)),
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x005e_ed0f_e396);
    if spec.shift > 0.0 {
        for p in &mut profiles {
            for a in &mut p.amplitude {
                let z: f64 = rng.sample(StandardNormal);
                *a *= (spec.shift * z).exp();
            }
        }
    }

    // schedule
    let segments = spec.n_classes * spec.repetitions;
    let t = segments * (hold + rest);
    let mut stimulus = Vec::with_capacity(t);
    let mut repetition = Vec::with_capacity(t);
    for c in 1..=spec.n_classes {
        for r in 1..=spec.repetitions {
            stimulus.extend(std::iter::repeat_n(c as u8, hold));
            stimulus.extend(std::iter::repeat_n(0u8, rest));
            repetition.extend(std::iter::repeat_n(r as u8, hold + rest));
        }
    }

    // per (class, repetition, channel) amplitude jitter
    let jitter: Vec<[f64; N_CHANNELS]> =
        (0..segments).map(|_| std::array::from_fn(|_| rng.random_range(0.9..1.1))).collect();

    let carrier_filter = design_bandpass(20.0, 200.0, 4, fs)?;
    let carrier = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let white: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
        let mut band = filter_signal(&carrier_filter, &white, false);
        let rms = (band.iter().map(|v| v * v).sum::<f64>() / t as f64).sqrt();
        band.iter_mut().for_each(|v| *v /= rms);
        band
    };

    let shared = carrier(&mut rng);
    let signal_power = profiles.iter().flat_map(|p| p.amplitude.iter()).map(|a| a * a).sum::<f64>()
        / (spec.n_classes * N_CHANNELS) as f64;
    let noise_std = (signal_power / 10f64.powf(spec.snr_db / 10.0)).sqrt();

    let mut channels = Vec::with_capacity(N_CHANNELS);
    #[allow(clippy::needless_range_loop)]
    for ch in 0..N_CHANNELS {
        let own = carrier(&mut rng);
        let phase1 = rng.random_range(0.0..2.0 * PI);
        let phase2 = rng.random_range(0.0..2.0 * PI);
        let w1 = 2.0 * PI * spec.mains_hz / fs;
        let w2 = 2.0 * w1;
        let mut x = vec![0.0; t];
        for (seg, (c, _r)) in (0..spec.n_classes).flat_map(|c| (0..spec.repetitions).map(move |r| (c, r))).enumerate() {
            let start = seg * (hold + rest);
            let p = &profiles[c];
            let a = p.amplitude[ch] * jitter[seg][ch];
            let rho = p.coupling[ch];
            let own_w = (1.0 - rho * rho).sqrt();
            for i in start..start + hold {
                x[i] = a * (own_w * own[i] + rho * shared[i]);
            }
            for i in start + hold..start + hold + rest {
                x[i] = REST_AMPLITUDE * own[i];
            }
        }
        for (i, v) in x.iter_mut().enumerate() {
            let n: f64 = rng.sample(StandardNormal);
            let ti = i as f64;
            *v += MAINS_AMPLITUDE * (w1 * ti + phase1).sin()
                + 0.5 * MAINS_AMPLITUDE * (w2 * ti + phase2).sin()
                + noise_std * n;
        }
        channels.push(x);
    }

    Recording::new(spec.subject_id.clone(), fs, channels, stimulus, repetition)
}
