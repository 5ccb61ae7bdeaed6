use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::Observable;

pub const WEINBERG_DRAWS: usize = 20;

/// Unnormalized angular density `1 + c^2 + a c` with `a = 2 (g - 1)`.
pub fn weinberg_density(c: f64, g: f64) -> f64 {
    1.0 + c * c + 2.0 * (g - 1.0) * c
}

/// Twenty scattering cosines drawn by rejection against a uniform envelope.
pub fn weinberg_simulate(theta: &[f64], rng: &mut RngStream) -> Result<Observable> {
    if theta.len() != 1 {
        return Err(Error::ShapeMismatch {
            expected: 1,
            got: theta.len(),
        });
    }
    let g = theta[0];
    let a = 2.0 * (g - 1.0);
    if !(a.abs() < 2.0) {
        return Err(Error::OutOfSupport {
            benchmark: "weinberg".into(),
            theta: theta.to_vec(),
        });
    }
    let envelope = 2.0 + a.abs();
    let mut out = Vec::with_capacity(WEINBERG_DRAWS);
    while out.len() < WEINBERG_DRAWS {
        let c = rng.random_range(-1.0..=1.0);
        let u = rng.random::<f64>() * envelope;
        if u <= weinberg_density(c, g) {
            out.push(c);
        }
    }
    Observable::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pooled(g: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            out.extend(weinberg_simulate(&[g], &mut rng).unwrap().into_inner());
        }
        out.truncate(n);
        out
    }

    #[test]
    fn symmetric_at_unit_coupling() {
        let c = pooled(1.0, 100_000, 1);
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn positivity_and_support() {
        assert_eq!(weinberg_density(-1.0, 1.5), 1.0);
        assert!(pooled(1.5, 10_000, 2).iter().all(|c| (-1.0..=1.0).contains(c)));
        assert!(pooled(0.5, 10_000, 3).iter().all(|c| (-1.0..=1.0).contains(c)));
    }

    #[test]
    fn histogram_matches_density() {
        let g = 1.3;
        let n = 1_000_000;
        let c = pooled(g, n, 4);
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for v in &c {
            counts[(((v + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let a = 2.0 * (g - 1.0);
        // Antiderivative of 1 + c^2 + a c; the total over [-1, 1] is 8/3.
        let cdf = |x: f64| x + x.powi(3) / 3.0 + a * x * x / 2.0;
        let z = cdf(1.0) - cdf(-1.0);
        assert!((z - 8.0 / 3.0).abs() < 1e-12);
        for (k, count) in counts.iter().enumerate() {
            let lo = -1.0 + 2.0 * k as f64 / bins as f64;
            let hi = lo + 2.0 / bins as f64;
            let p = (cdf(hi) - cdf(lo)) / z;
            let se = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (*count as f64 - n as f64 * p).abs() < 3.0 * se,
                "bin {k}: {count} vs {}",
                n as f64 * p
            );
        }
    }
}
