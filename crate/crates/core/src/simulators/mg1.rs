use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::Observable;

pub const MG1_CUSTOMERS: usize = 50;

/// M/G/1 queue: service `U(t1, t1 + t2)`, inter-arrivals `Exp(t3)`.
/// Returns the {0, .25, .5, .75, 1} quantiles of the times between
/// consecutive departures.
pub fn mg1_simulate(theta: &[f64], rng: &mut RngStream) -> Result<Observable> {
    if theta.len() != 3 {
        return Err(Error::ShapeMismatch {
            expected: 3,
            got: theta.len(),
        });
    }
    let (lo, width, rate) = (theta[0], theta[1], theta[2]);
    if !(rate > 0.0) || lo < 0.0 || width < 0.0 {
        return Err(Error::OutOfSupport {
            benchmark: "mg1".into(),
            theta: theta.to_vec(),
        });
    }
    let arrivals = Exp::new(rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut arrival = 0.0;
    let mut departure = 0.0;
    let mut gaps = Vec::with_capacity(MG1_CUSTOMERS - 1);
    for i in 0..MG1_CUSTOMERS {
        arrival += arrivals.sample(rng);
        let service = lo + width * rng.random::<f64>();
        let next = arrival.max(departure) + service;
        if i > 0 {
            gaps.push(next - departure);
        }
        departure = next;
    }
    gaps.sort_by(f64::total_cmp);
    Observable::new([0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile_sorted(&gaps, q)).to_vec())
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::Prior;

    #[test]
    fn saturated_fixed_service_gives_constant_gaps() {
        let mut rng = RngStream::new(8);
        let x = mg1_simulate(&[10.0, 0.0, 0.33], &mut rng).unwrap();
        // Gaps are at least one service time; the busy queue pins all but
        // possibly the largest to exactly the service time.
        for q in &x[..4] {
            assert_eq!(*q, 10.0);
        }
        assert!(x[4] >= 10.0);
    }

    #[test]
    fn quantiles_nondecreasing_and_nonnegative() {
        let prior = Prior::uniform(vec![0.0, 0.0, 0.0], vec![10.0, 10.0, 1.0 / 3.0]).unwrap();
        let mut rng = RngStream::new(9);
        for _ in 0..10_000 {
            let mut theta = prior.sample(&mut rng);
            if theta[2] == 0.0 {
                theta[2] = 1e-3;
            }
            let x = mg1_simulate(&theta, &mut rng).unwrap();
            assert!(x[0] >= 0.0);
            assert!(x.windows(2).all(|w| w[0] <= w[1]), "{x:?}");
        }
    }

    #[test]
    fn deterministic_and_rejects_zero_rate() {
        let a = mg1_simulate(&[1.0, 2.0, 0.2], &mut RngStream::new(1)).unwrap();
        let b = mg1_simulate(&[1.0, 2.0, 0.2], &mut RngStream::new(1)).unwrap();
        assert_eq!(a, b);
        assert!(mg1_simulate(&[1.0, 2.0, 0.0], &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile_sorted(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.25), 1.0);
        assert_eq!(quantile_sorted(&[0.0, 1.0], 0.5), 0.5);
    }
}
