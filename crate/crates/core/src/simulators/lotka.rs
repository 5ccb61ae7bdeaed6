use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::Observable;

pub const LV_INITIAL: (u32, u32) = (50, 100);
pub const LV_HORIZON: f64 = 30.0;
pub const LV_RECORDS: usize = 50;
pub const LV_CAP: u32 = 3000;

/// Stochastic Lotka-Volterra kinetics simulated exactly with Gillespie's
/// direct method.
///
/// `theta = (alpha, beta, gamma, delta)`: prey birth `alpha X`, predation
/// `beta X Y` (prey -1, predator +1), predator death `gamma Y`. Predation
/// converts prey to predators one-for-one, so `delta` carries no separate
/// reaction. Both populations are recorded at 50 equally spaced times on
/// `[0, 30]`, prey first; counts never exceed [`LV_CAP`].
pub fn lotka_volterra_simulate(theta: &[f64], rng: &mut RngStream) -> Result<Observable> {
    if theta.len() != 4 {
        return Err(Error::ShapeMismatch {
            expected: 4,
            got: theta.len(),
        });
    }
    if theta.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::OutOfSupport {
            benchmark: "lotka".into(),
            theta: theta.to_vec(),
        });
    }
    let (alpha, beta, gamma) = (theta[0], theta[1], theta[2]);
    let (mut prey, mut pred) = LV_INITIAL;
    let mut prey_rec = Vec::with_capacity(LV_RECORDS);
    let mut pred_rec = Vec::with_capacity(LV_RECORDS);
    let dt = LV_HORIZON / (LV_RECORDS - 1) as f64;
    let mut t = 0.0;
    for k in 0..LV_RECORDS {
        let target = k as f64 * dt;
        loop {
            let birth = alpha * prey as f64;
            let predation = beta * prey as f64 * pred as f64;
            let death = gamma * pred as f64;
            let total = birth + predation + death;
            if total <= 0.0 {
                // Frozen: no further events.
                t = f64::INFINITY;
                break;
            }
            let wait = -(1.0 - rng.random::<f64>()).ln() / total;
            if t + wait > target {
                // Memorylessness lets us restart the clock at the record time.
                t = target;
                break;
            }
            t += wait;
            let u = rng.random::<f64>() * total;
            if u < birth {
                prey = (prey + 1).min(LV_CAP);
            } else if u < birth + predation {
                prey -= 1;
                pred = (pred + 1).min(LV_CAP);
            } else {
                pred -= 1;
            }
        }
        prey_rec.push(prey as f64);
        pred_rec.push(pred as f64);
    }
    prey_rec.extend(pred_rec);
    Observable::new(prey_rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn populations_are_bounded_integers() {
        let mut rng = RngStream::new(2);
        let prior = crate::prior::Prior::log_uniform(vec![1e-2; 4], vec![1.0; 4]).unwrap();
        for _ in 0..20 {
            let theta = prior.sample(&mut rng);
            let x = lotka_volterra_simulate(&theta, &mut rng).unwrap();
            assert_eq!(x.len(), 100);
            for v in x.iter() {
                assert!(*v >= 0.0 && *v <= LV_CAP as f64 && v.fract() == 0.0);
            }
            assert_eq!(x[0], 50.0);
            assert_eq!(x[50], 100.0);
        }
    }

    #[test]
    fn deterministic() {
        let th = [0.5, 0.02, 0.3, 0.1];
        let a = lotka_volterra_simulate(&th, &mut RngStream::new(4)).unwrap();
        let b = lotka_volterra_simulate(&th, &mut RngStream::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weak_predation_direction_matches_mean_field() {
        // alpha = 1, beta = 0.01, gamma = 1: at (50, 100) the mean-field
        // predator growth Y (beta X - gamma) is negative while prey growth is
        // zero, so predators fall first and prey then rises. Integrate the ODE
        // over the first records and check the jump-process means move the
        // same way.
        let th = [1.0, 0.01, 1.0, 0.5];
        let dt = LV_HORIZON / (LV_RECORDS - 1) as f64;
        let (mut x, mut y) = (50.0f64, 100.0f64);
        let h = 1e-5;
        let mut ode = vec![(x, y)];
        for _ in 0..3 {
            for _ in 0..(dt / h).round() as usize {
                let dx = th[0] * x - th[1] * x * y;
                let dy = th[1] * x * y - th[2] * y;
                x += h * dx;
                y += h * dy;
            }
            ode.push((x, y));
        }
        assert!(ode[1].1 < 100.0 && ode[3].0 > 50.0, "{ode:?}");

        let mut rng = RngStream::new(5);
        let runs = 400;
        let (mut pred1, mut prey3) = (0.0, 0.0);
        for _ in 0..runs {
            let s = lotka_volterra_simulate(&th, &mut rng).unwrap();
            pred1 += s[LV_RECORDS + 1];
            prey3 += s[3];
        }
        let (pred1, prey3) = (pred1 / runs as f64, prey3 / runs as f64);
        assert!(pred1 < 100.0, "{pred1}");
        assert!(prey3 > 50.0, "{prey3}");
        assert!((pred1 - ode[1].1).abs() < 5.0 && (prey3 - ode[3].0).abs() < 10.0);
    }

    #[test]
    fn extinct_system_freezes() {
        let x = lotka_volterra_simulate(&[0.0, 0.0, 0.0, 0.0], &mut RngStream::new(0)).unwrap();
        assert!(x[..50].iter().all(|v| *v == 50.0));
        assert!(x[50..].iter().all(|v| *v == 100.0));
    }
}
