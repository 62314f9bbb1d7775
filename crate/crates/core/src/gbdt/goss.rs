//! Gradient-based one-side sampling.

use rand::Rng;

use crate::{Error, Result};

/// Rows kept for one boosting round with their gradient multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct GossSample {
    /// Ascending row indices.
    pub indices: Vec<usize>,
    /// Multiplier for the row at the same position in `indices`.
    pub multipliers: Vec<f64>,
}

/// Keeps the `⌈aN⌉` rows with the largest gradient L1 norm and a uniform
/// `⌈bN⌉` of the remainder, the latter reweighted by `(1 - a) / b` so the
/// expected gradient sum is unchanged.
///
/// `grad` is row-major `N × n_classes`.
pub fn goss_sample<R: Rng + ?Sized>(grad: &[f64], n_classes: usize, a: f64, b: f64, rng: &mut R) -> Result<GossSample> {
    if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0 + 1e-12) {
        return Err(Error::domain(format!("GOSS rates must satisfy a, b >= 0 and a + b <= 1 (a={a}, b={b})")));
    }
    let n = grad.len() / n_classes.max(1);
    let ceil = |x: f64| ((x - 1e-9).ceil().max(0.0) as usize).min(n);
    let n_top = ceil(a * n as f64);
    let n_other = ceil(b * n as f64).min(n - n_top);

    let norms: Vec<f64> = grad.chunks(n_classes).map(|row| row.iter().map(|g| g.abs()).sum()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut picked: Vec<(usize, f64)> = order[..n_top].iter().map(|&i| (i, 1.0)).collect();
    if n_other > 0 {
        let rest = &order[n_top..];
        let weight = (1.0 - a) / b;
        for k in rand::seq::index::sample(rng, rest.len(), n_other) {
            picked.push((rest[k], weight));
        }
    }
    picked.sort_by_key(|p| p.0);
    Ok(GossSample {
        indices: picked.iter().map(|p| p.0).collect(),
        multipliers: picked.iter().map(|p| p.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_keep() {
        let g: Vec<f64> = (0..30).map(|i| i as f64 - 15.0).collect();
        let s = goss_sample(&g, 3, 1.0, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.indices, (0..10).collect::<Vec<_>>());
        assert!(s.multipliers.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn keeps_top_plus_sampled_count() {
        let g: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64).collect();
        let s = goss_sample(&g, 1, 0.2, 0.1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(s.indices.len(), 30);
        let top: Vec<usize> = s.indices.iter().zip(&s.multipliers).filter(|(_, &m)| m == 1.0).map(|(&i, _)| i).collect();
        assert_eq!(top.len(), 20);
        assert!(top.iter().all(|&i| g[i] >= 80.0));
        assert!(s.multipliers.iter().filter(|&&m| m != 1.0).all(|&m| (m - 8.0).abs() < 1e-12));
    }

    #[test]
    fn invalid_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(goss_sample(&[1.0], 1, 0.7, 0.5, &mut rng).is_err());
        assert!(goss_sample(&[1.0], 1, -0.1, 0.5, &mut rng).is_err());
    }
}
