use crate::{Error, Result};

/// The six classic amplitude/shape descriptors of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeDomainFeatures {
    pub mean: f64,
    /// Sample variance (divides by `N - 1`).
    pub variance: f64,
    pub mav: f64,
    pub zcr: f64,
    pub rms: f64,
    pub wl: f64,
}

impl TimeDomainFeatures {
    pub const NAMES: [&'static str; 6] = ["mean", "var", "mav", "zcr", "rms", "wl"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.mean, self.variance, self.mav, self.zcr, self.rms, self.wl]
    }
}

fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Computes mean, variance, MAV, ZCR, RMS and waveform length.
///
/// The zero-crossing rate sums `|sgn(s[n]) - sgn(s[n-1])|` over the `N - 1`
/// adjacent pairs and divides by `2N`; a full sign flip therefore counts 2/2N
/// and a touch of zero counts 1/2N.
pub fn time_domain(channel: &[f64]) -> Result<TimeDomainFeatures> {
    let n = channel.len();
    if n < 2 {
        return Err(Error::domain(format!("time-domain features need at least 2 samples, got {n}")));
    }
    let nf = n as f64;
    let (sum, abs_sum, sq_sum) = channel
        .iter()
        .fold((0.0, 0.0, 0.0), |(s, a, q), &x| (s + x, a + x.abs(), q + x * x));
    let mean = sum / nf;
    let variance = channel.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    let (crossings, wl) = channel.windows(2).fold((0u64, 0.0), |(z, w), pair| {
        (z + (sgn(pair[1]) - sgn(pair[0])).unsigned_abs() as u64, w + (pair[1] - pair[0]).abs())
    });
    Ok(TimeDomainFeatures {
        mean,
        variance,
        mav: abs_sum / nf,
        zcr: crossings as f64 / (2.0 * nf),
        rms: (sq_sum / nf).sqrt(),
        wl,
    })
}
