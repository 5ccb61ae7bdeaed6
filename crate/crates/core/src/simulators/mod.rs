//! Benchmark generative models addressable by string id.

mod gaussian;
mod lotka;
mod mg1;
mod sir;
mod slcp;
mod weinberg;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::prior::Prior;
use crate::rng::RngStream;
use crate::types::Observable;

pub use gaussian::{gaussian_simulate, gaussian_true_posterior, GaussianPosterior, GAUSSIAN_DIM};
pub use lotka::{lotka_volterra_simulate, LV_CAP, LV_HORIZON, LV_INITIAL, LV_RECORDS};
pub use mg1::{mg1_simulate, MG1_CUSTOMERS};
pub use sir::{spatial_sir_run, spatial_sir_simulate, SirRun, SIR_SIZE, SIR_STEPS};
pub use slcp::{slcp_marginal_restrict, slcp_simulate, SLCP_POINTS};
pub use weinberg::{weinberg_density, weinberg_simulate, WEINBERG_DRAWS};

/// Attempts per simulation before a failure becomes a hard error.
pub const SIMULATION_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkKind {
    Slcp,
    Weinberg,
    Mg1,
    LotkaVolterra,
    SpatialSir,
    Gaussian,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 6] = [
        BenchmarkKind::Slcp,
        BenchmarkKind::Weinberg,
        BenchmarkKind::Mg1,
        BenchmarkKind::LotkaVolterra,
        BenchmarkKind::SpatialSir,
        BenchmarkKind::Gaussian,
    ];

    pub fn id(self) -> &'static str {
        match self {
            BenchmarkKind::Slcp => "slcp",
            BenchmarkKind::Weinberg => "weinberg",
            BenchmarkKind::Mg1 => "mg1",
            BenchmarkKind::LotkaVolterra => "lotka",
            BenchmarkKind::SpatialSir => "sir",
            BenchmarkKind::Gaussian => "gaussian",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.id() == id)
            .ok_or_else(|| Error::UnknownBenchmark(id.to_string()))
    }
}

/// How raw observables are turned into estimator inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMap {
    Identity,
    /// Categorical cells expanded to one-hot blocks of `categories` reals.
    OneHot {
        categories: usize,
    },
}

impl FeatureMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            FeatureMap::Identity => x.to_vec(),
            FeatureMap::OneHot { categories } => {
                let mut out = vec![0.0; x.len() * categories];
                for (i, v) in x.iter().enumerate() {
                    let c = (*v as usize).min(categories - 1);
                    out[i * categories + c] = 1.0;
                }
                out
            }
        }
    }

    pub fn len(&self, x_len: usize) -> usize {
        match *self {
            FeatureMap::Identity => x_len,
            FeatureMap::OneHot { categories } => x_len * categories,
        }
    }

    pub fn code(&self) -> u32 {
        match *self {
            FeatureMap::Identity => 0,
            FeatureMap::OneHot { categories } => categories as u32,
        }
    }

    pub fn from_code(code: u32) -> Self {
        match code {
            0 => FeatureMap::Identity,
            c => FeatureMap::OneHot { categories: c as usize },
        }
    }
}

/// A prior over the inference target, a stochastic simulator and, for the
/// Gaussian validation model, the exact posterior.
///
/// Every `simulate` call bumps a shared counter so the harness can audit
/// simulation budgets. Clones share the counter; [`Benchmark::with_fresh_counter`]
/// detaches it.
#[derive(Debug, Clone)]
pub struct Benchmark {
    kind: BenchmarkKind,
    prior: Prior,
    calls: Arc<AtomicU64>,
}

impl Benchmark {
    pub fn new(kind: BenchmarkKind) -> Self {
        let prior = match kind {
            BenchmarkKind::Slcp => Prior::uniform(vec![-3.0; 2], vec![3.0; 2]),
            BenchmarkKind::Weinberg => Prior::uniform(vec![0.5], vec![1.5]),
            BenchmarkKind::Mg1 => Prior::uniform(vec![0.0, 0.0, 0.0], vec![10.0, 10.0, 1.0 / 3.0]),
            BenchmarkKind::LotkaVolterra => Prior::log_uniform(vec![1e-2; 2], vec![1.0; 2]),
            BenchmarkKind::SpatialSir => Prior::uniform(vec![0.0; 2], vec![1.0; 2]),
            BenchmarkKind::Gaussian => Prior::normal(vec![0.0], vec![1.0]),
        }
        .expect("static priors are valid");
        Self {
            kind,
            prior,
            calls: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Ok(Self::new(BenchmarkKind::from_id(id)?))
    }

    pub fn with_fresh_counter(&self) -> Self {
        Self::new(self.kind)
    }

    pub fn kind(&self) -> BenchmarkKind {
        self.kind
    }

    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    /// Prior over the inference target (marginal parameters for SLCP and
    /// Lotka-Volterra).
    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn theta_dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn observable_len(&self) -> usize {
        match self.kind {
            BenchmarkKind::Slcp => 2 * SLCP_POINTS,
            BenchmarkKind::Weinberg => WEINBERG_DRAWS,
            BenchmarkKind::Mg1 => 5,
            BenchmarkKind::LotkaVolterra => 2 * LV_RECORDS,
            BenchmarkKind::SpatialSir => SIR_SIZE * SIR_SIZE,
            BenchmarkKind::Gaussian => GAUSSIAN_DIM,
        }
    }

    pub fn feature_map(&self) -> FeatureMap {
        match self.kind {
            BenchmarkKind::SpatialSir => FeatureMap::OneHot { categories: 3 },
            _ => FeatureMap::Identity,
        }
    }

    /// Number of simulator calls made through this instance and its clones.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// One forward simulation from the inference target `theta`. Nuisance
    /// parameters are redrawn from their prior on every call, so pairs
    /// `(theta, x)` are exact draws from the marginal joint.
    pub fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Observable> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if !self.prior.contains(theta) {
            return Err(Error::OutOfSupport {
                benchmark: self.id().into(),
                theta: theta.to_vec(),
            });
        }
        match self.kind {
            BenchmarkKind::Slcp => {
                let nuisance = Prior::uniform(vec![-3.0; 3], vec![3.0; 3])?.sample(rng);
                let full = [theta[0], theta[1], nuisance[0], nuisance[1], nuisance[2]];
                slcp_simulate(&full, rng)
            }
            BenchmarkKind::Weinberg => weinberg_simulate(theta, rng),
            BenchmarkKind::Mg1 => mg1_simulate(theta, rng),
            BenchmarkKind::LotkaVolterra => {
                let nuisance = Prior::log_uniform(vec![1e-2; 2], vec![1.0; 2])?.sample(rng);
                let full = [nuisance[0], theta[0], theta[1], nuisance[1]];
                lotka_volterra_simulate(&full, rng)
            }
            BenchmarkKind::SpatialSir => spatial_sir_simulate(theta, rng),
            BenchmarkKind::Gaussian => gaussian_simulate(theta, rng),
        }
    }

    /// [`Benchmark::simulate`] with bounded retries on failure or non-finite
    /// output; each retry draws fresh noise from `rng`.
    pub fn simulate_with_retry(&self, theta: &[f64], rng: &mut RngStream) -> Result<Observable> {
        let mut reason = String::new();
        for _ in 0..SIMULATION_ATTEMPTS {
            match self.simulate(theta, rng) {
                Ok(x) if x.len() == self.observable_len() => return Ok(x),
                Ok(x) => reason = format!("output length {}", x.len()),
                Err(e @ Error::OutOfSupport { .. }) => return Err(e),
                Err(e) => reason = e.to_string(),
            }
        }
        Err(Error::SimulatorFailure {
            benchmark: self.id().into(),
            theta: theta.to_vec(),
            attempts: SIMULATION_ATTEMPTS,
            reason,
        })
    }

    /// Exact posterior, available only for the Gaussian validation model.
    pub fn analytic_posterior(&self) -> Option<GaussianPosterior> {
        match self.kind {
            BenchmarkKind::Gaussian => Some(gaussian_true_posterior()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample_joint;

    #[test]
    fn registry_round_trip() {
        for kind in BenchmarkKind::ALL {
            assert_eq!(BenchmarkKind::from_id(kind.id()).unwrap(), kind);
        }
        assert!(Benchmark::from_id("streams").is_err());
    }

    #[test]
    fn outputs_have_constant_shape_and_are_finite() {
        for kind in BenchmarkKind::ALL {
            let b = Benchmark::new(kind);
            let n = match kind {
                BenchmarkKind::LotkaVolterra | BenchmarkKind::SpatialSir => 6,
                _ => 50,
            };
            let ds = sample_joint(&b, n, &RngStream::new(3)).unwrap();
            assert_eq!(ds.len(), n);
            for s in &ds.samples {
                assert_eq!(s.theta.len(), b.theta_dim(), "{kind:?}");
                assert_eq!(s.x.len(), b.observable_len(), "{kind:?}");
                assert!(s.x.iter().all(|v| v.is_finite()));
            }
            assert_eq!(b.calls(), n as u64);
        }
    }

    #[test]
    fn sample_joint_is_bit_reproducible() {
        for kind in BenchmarkKind::ALL {
            let b = Benchmark::new(kind);
            let a = sample_joint(&b, 4, &RngStream::new(7)).unwrap();
            let c = sample_joint(&b, 4, &RngStream::new(7)).unwrap();
            assert_eq!(a.to_bytes(), c.to_bytes(), "{kind:?}");
        }
        let empty = sample_joint(&Benchmark::new(BenchmarkKind::Slcp), 0, &RngStream::new(1)).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn slcp_dataset_shapes() {
        let b = Benchmark::new(BenchmarkKind::Slcp);
        let ds = sample_joint(&b, 1024, &RngStream::new(0)).unwrap();
        assert!(ds.samples.iter().all(|s| s.x.len() == 8 && s.theta.len() == 2));
    }

    #[test]
    fn simulate_rejects_out_of_support() {
        let b = Benchmark::new(BenchmarkKind::Slcp);
        let err = b.simulate_with_retry(&[4.0, 0.0], &mut RngStream::new(0)).unwrap_err();
        assert!(matches!(err, Error::OutOfSupport { .. }));
    }

    #[test]
    fn one_hot_features() {
        let f = FeatureMap::OneHot { categories: 3 };
        assert_eq!(f.apply(&[0.0, 2.0, 1.0]), vec![1., 0., 0., 0., 0., 1., 0., 1., 0.]);
        assert_eq!(f.len(4), 12);
        assert_eq!(FeatureMap::from_code(f.code()), f);
    }
}
