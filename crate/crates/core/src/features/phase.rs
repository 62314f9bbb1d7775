use num_complex::Complex64;

use super::with_fft;
use crate::{Error, Result};

/// Instantaneous phase from the discrete analytic signal.
///
/// The spectrum keeps DC and Nyquist, doubles positive frequencies and zeroes
/// negative ones; the inverse transform gives `x + i·H{x}` and the phase is
/// `atan2(H{x}, x)`.
pub fn analytic_phase(channel: &[f64]) -> Result<Vec<f64>> {
    let n = channel.len();
    if n < 4 {
        return Err(Error::domain(format!("analytic phase needs at least 4 samples, got {n}")));
    }
    let mut buf: Vec<Complex64> = channel.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    with_fft(n, false, |fft| fft.process(&mut buf));
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n.is_multiple_of(2) && k == half) {
            continue;
        }
        if k <= (n - 1) / 2 {
            *v *= 2.0;
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    with_fft(n, true, |ifft| ifft.process(&mut buf));
    // the 1/n normalization does not change the angle
    Ok(buf.iter().map(|z| z.im.atan2(z.re)).collect())
}

/// Phase-locking value `|mean(exp(i(φm - φn)))|`.
pub fn plv(phase_m: &[f64], phase_n: &[f64]) -> Result<f64> {
    if phase_m.len() != phase_n.len() {
        return Err(Error::domain(format!("phase lengths differ: {} vs {}", phase_m.len(), phase_n.len())));
    }
    if phase_m.is_empty() {
        return Err(Error::domain("phase sequences are empty"));
    }
    let (re, im) = phase_m.iter().zip(phase_n).fold((0.0, 0.0), |(re, im), (a, b)| {
        let d = a - b;
        (re + d.cos(), im + d.sin())
    });
    let n = phase_m.len() as f64;
    Ok(((re / n).powi(2) + (im / n).powi(2)).sqrt().min(1.0))
}

/// Pairwise PLV over all channels: symmetric, unit diagonal.
pub fn plv_matrix(phases: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let c = phases.len();
    let mut m = vec![vec![0.0; c]; c];
    for i in 0..c {
        m[i][i] = 1.0;
        for j in i + 1..c {
            let v = plv(&phases[i], &phases[j])?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unwrap(phase: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(phase.len());
        let mut offset = 0.0;
        for (i, &p) in phase.iter().enumerate() {
            if i > 0 {
                let d = p - phase[i - 1];
                if d > PI {
                    offset -= 2.0 * PI;
                } else if d < -PI {
                    offset += 2.0 * PI;
                }
            }
            out.push(p + offset);
        }
        out
    }

    #[test]
    fn cosine_phase_advances_linearly() {
        let fs = 2000.0;
        let x: Vec<f64> = (0..1280).map(|i| (2.0 * PI * 50.0 * i as f64 / fs).cos()).collect();
        let ph = unwrap(&analytic_phase(&x).unwrap());
        let expected = 2.0 * PI * 50.0 / fs;
        let (a, b) = (100, 1180);
        let slope = (ph[b] - ph[a]) / (b - a) as f64;
        assert!((slope - expected).abs() / expected < 0.01);
    }

    #[test]
    fn sine_lags_cosine_by_quarter_cycle() {
        let fs = 2000.0;
        let n = 1280;
        let c: Vec<f64> = (0..n).map(|i| (2.0 * PI * 50.0 * i as f64 / fs).cos()).collect();
        let s: Vec<f64> = (0..n).map(|i| (2.0 * PI * 50.0 * i as f64 / fs).sin()).collect();
        let pc = analytic_phase(&c).unwrap();
        let ps = analytic_phase(&s).unwrap();
        for i in 100..n - 100 {
            let d = (pc[i] - ps[i]).rem_euclid(2.0 * PI);
            assert!((d - PI / 2.0).abs() < 1e-6, "sample {i}: {d}");
        }
    }

    #[test]
    fn phase_is_amplitude_invariant() {
        let x: Vec<f64> = (0..301).map(|i| ((i * 37) % 23) as f64 - 11.0).collect();
        let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let a = analytic_phase(&x).unwrap();
        let b = analytic_phase(&x3).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_and_offset_phases_lock() {
        let p: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        assert!((plv(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        let q: Vec<f64> = p.iter().map(|v| v + PI / 3.0).collect();
        assert!((plv(&p, &q).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plv_errors() {
        assert!(plv(&[0.0; 3], &[0.0; 4]).is_err());
        assert!(analytic_phase(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn matrix_is_symmetric_with_unit_diagonal() {
        let phases: Vec<Vec<f64>> =
            (0..5).map(|c| (0..200).map(|i| ((i * (c + 3)) % 17) as f64 * 0.4).collect()).collect();
        let m = plv_matrix(&phases).unwrap();
        for i in 0..5 {
            assert_eq!(m[i][i], 1.0);
            for j in 0..5 {
                assert_eq!(m[i][j], m[j][i]);
                assert!((0.0..=1.0).contains(&m[i][j]));
            }
        }
    }
}
