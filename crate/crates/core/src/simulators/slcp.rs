use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{Observable, ParameterVector};

pub const SLCP_POINTS: usize = 4;

/// Four i.i.d. 2-D Gaussian points, mean `(t1, t2)`, scales `t3^2`, `t4^2`,
/// correlation `tanh(t5)`, flattened as `(x1, y1, ..., x4, y4)`.
pub fn slcp_simulate(theta: &[f64], rng: &mut RngStream) -> Result<Observable> {
    if theta.len() != 5 {
        return Err(Error::ShapeMismatch {
            expected: 5,
            got: theta.len(),
        });
    }
    if theta.iter().any(|t| !(-3.0..=3.0).contains(t)) {
        return Err(Error::OutOfSupport {
            benchmark: "slcp".into(),
            theta: theta.to_vec(),
        });
    }
    let (m1, m2) = (theta[0], theta[1]);
    let s1 = theta[2] * theta[2];
    let s2 = theta[3] * theta[3];
    let rho = theta[4].tanh();
    let mut x = Vec::with_capacity(2 * SLCP_POINTS);
    for _ in 0..SLCP_POINTS {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        x.push(m1 + s1 * z1);
        x.push(m2 + s2 * (rho * z1 + (1.0 - rho * rho).sqrt() * z2));
    }
    Observable::new(x)
}

/// Projection onto the two inferred coordinates.
pub fn slcp_marginal_restrict(theta: &[f64]) -> ParameterVector {
    ParameterVector::new(vec![theta[0], theta[1]]).expect("finite input")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(theta: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed);
        (0..n)
            .map(|_| slcp_simulate(theta, &mut rng).unwrap().into_inner())
            .collect()
    }

    #[test]
    fn restrict_projects() {
        assert_eq!(slcp_marginal_restrict(&[1., 2., 0.5, 0.5, 0.]).values(), &[1., 2.]);
        assert_eq!(slcp_marginal_restrict(&[0.; 5]).values(), &[0., 0.]);
    }

    #[test]
    fn zero_mean_coordinates() {
        let xs = draws(&[0., 0., 1., 1., 0.], 100_000, 1);
        for c in 0..8 {
            let mean = xs.iter().map(|x| x[c]).sum::<f64>() / xs.len() as f64;
            assert!(mean.abs() < 0.02, "coordinate {c}: {mean}");
        }
    }

    #[test]
    fn degenerate_scale_pins_first_coordinates() {
        for x in draws(&[1.5, -0.5, 0., 2., 0.3], 100, 2) {
            for c in [0, 2, 4, 6] {
                assert_eq!(x[c], 1.5);
            }
        }
    }

    #[test]
    fn covariance_matches_analytic_within_three_se() {
        let theta = [0.5, -1.0, 1.2, -0.9, 0.8];
        let xs = draws(&theta, 100_000, 3);
        let (s1, s2, rho) = (theta[2] * theta[2], theta[3] * theta[3], f64::tanh(theta[4]));
        let sigma = [[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]];
        // Pool the four points; all are i.i.d.
        let pts: Vec<[f64; 2]> = xs
            .iter()
            .flat_map(|x| (0..4).map(move |p| [x[2 * p], x[2 * p + 1]]))
            .collect();
        let n = pts.len() as f64;
        let mean = [
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        ];
        for a in 0..2 {
            for b in 0..2 {
                let prods: Vec<f64> = pts.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).collect();
                let cov = prods.iter().sum::<f64>() / (n - 1.0);
                let var = prods.iter().map(|v| (v - cov).powi(2)).sum::<f64>() / (n - 1.0);
                let se = (var / n).sqrt();
                assert!(
                    (cov - sigma[a][b]).abs() < 3.0 * se,
                    "({a},{b}) {cov} vs {}",
                    sigma[a][b]
                );
            }
        }
    }

    #[test]
    fn zero_correlation_when_t5_is_zero() {
        let xs = draws(&[0., 0., 1., 1., 0.], 100_000, 4);
        let n = xs.len() as f64;
        let (ma, mb) = (
            xs.iter().map(|x| x[0]).sum::<f64>() / n,
            xs.iter().map(|x| x[1]).sum::<f64>() / n,
        );
        let cov = xs.iter().map(|x| (x[0] - ma) * (x[1] - mb)).sum::<f64>() / n;
        let va = xs.iter().map(|x| (x[0] - ma).powi(2)).sum::<f64>() / n;
        let vb = xs.iter().map(|x| (x[1] - mb).powi(2)).sum::<f64>() / n;
        assert!((cov / (va * vb).sqrt()).abs() < 0.02);
    }

    #[test]
    fn out_of_support_errors() {
        assert!(slcp_simulate(&[0., 0., 3.5, 1., 0.], &mut RngStream::new(0)).is_err());
        assert!(slcp_simulate(&[0., 0.], &mut RngStream::new(0)).is_err());
    }
}
