//! Simulated datasets and their on-disk container.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! | field          | type                   |
//! |----------------|------------------------|
//! | magic          | `b"SBIDSET\0"`         |
//! | version        | u32 (= 1)              |
//! | benchmark id   | u32 length + UTF-8     |
//! | seed           | u64                    |
//! | n              | u64                    |
//! | theta_dim      | u32                    |
//! | x rank         | u32 (= 1)              |
//! | x shape        | rank × u32             |
//! | rows           | n × (theta_dim + x_len) f64, theta first |

use rand::Rng;
use rayon::prelude::*;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::simulators::Benchmark;
use crate::types::{JointSample, Observable, ParameterVector};

const MAGIC: &[u8; 8] = b"SBIDSET\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub benchmark: String,
    pub seed: u64,
    pub theta_dim: usize,
    pub x_len: usize,
    pub samples: Vec<JointSample>,
}

impl Dataset {
    pub fn new(benchmark: impl Into<String>, seed: u64, theta_dim: usize, x_len: usize) -> Self {
        Self {
            benchmark: benchmark.into(),
            seed,
            theta_dim,
            x_len,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same provenance, different rows.
    pub fn with_samples(&self, samples: Vec<JointSample>) -> Self {
        Self {
            benchmark: self.benchmark.clone(),
            seed: self.seed,
            theta_dim: self.theta_dim,
            x_len: self.x_len,
            samples,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.magic(MAGIC, VERSION);
        w.str(&self.benchmark);
        w.u64(self.seed);
        w.u64(self.samples.len() as u64);
        w.u32(self.theta_dim as u32);
        w.u32(1);
        w.u32(self.x_len as u32);
        for s in &self.samples {
            w.f64s(&s.theta);
            w.f64s(&s.x);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let version = r.magic(MAGIC)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let benchmark = r.str()?;
        let seed = r.u64()?;
        let n = r.u64()? as usize;
        let theta_dim = r.u32()? as usize;
        let rank = r.u32()? as usize;
        let x_len: usize = (0..rank)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .product();
        let mut ds = Dataset::new(benchmark, seed, theta_dim, x_len);
        ds.samples.reserve(n.min(1 << 24));
        for _ in 0..n {
            let theta = ParameterVector::new(r.f64s(theta_dim)?)?;
            let x = Observable::new(r.f64s(x_len)?)?;
            ds.samples.push(JointSample { theta, x });
        }
        r.finish()?;
        Ok(ds)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Draws `n` pairs `theta_i ~ p(theta)`, `x_i ~ p(x | theta_i)`.
///
/// Row `i` uses child stream `i` of `rng`, so the dataset is reproducible
/// from the seed regardless of the worker count.
pub fn sample_joint(benchmark: &Benchmark, n: usize, rng: &RngStream) -> Result<Dataset> {
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.child(i as u64);
            let theta = benchmark.prior().sample(&mut r);
            let x = benchmark.simulate_with_retry(&theta, &mut r)?;
            Ok(JointSample {
                theta: ParameterVector::new(theta)?,
                x,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset::new(
        benchmark.id(),
        rng.seed(),
        benchmark.theta_dim(),
        benchmark.observable_len(),
    );
    ds.samples = samples;
    Ok(ds)
}

/// Splits into disjoint contiguous pieces of `floor(f * n)` rows each.
pub fn split_dataset(ds: &Dataset, fractions: &[f64]) -> Result<Vec<Dataset>> {
    if fractions.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::InvalidArgument("split fractions must be positive".into()));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!("split fractions sum to {total} > 1")));
    }
    let n = ds.len();
    let mut start = 0;
    let mut out = Vec::with_capacity(fractions.len());
    for f in fractions {
        let size = ((f * n as f64 + 1e-9).floor() as usize).min(n - start);
        out.push(ds.with_samples(ds.samples[start..start + size].to_vec()));
        start += size;
    }
    Ok(out)
}

/// Resamples rows with replacement (one bagged training set).
pub fn bootstrap_resample(ds: &Dataset, rng: &mut RngStream) -> Result<Dataset> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("cannot bootstrap an empty dataset".into()));
    }
    let n = ds.len();
    let samples = (0..n).map(|_| ds.samples[rng.random_range(0..n)].clone()).collect();
    Ok(ds.with_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let mut ds = Dataset::new("toy", 0, 1, 1);
        for i in 0..n {
            ds.samples.push(JointSample {
                theta: ParameterVector::new(vec![i as f64]).unwrap(),
                x: Observable::new(vec![-(i as f64)]).unwrap(),
            });
        }
        ds
    }

    #[test]
    fn split_sizes() {
        let parts = split_dataset(&toy(100), &[0.9, 0.1]).unwrap();
        assert_eq!((parts[0].len(), parts[1].len()), (90, 10));
        assert_eq!(parts[1].samples[0].theta[0], 90.0);
        let whole = split_dataset(&toy(10), &[1.0]).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].len(), 10);
        assert!(split_dataset(&toy(10), &[0.7, 0.7]).is_err());
    }

    #[test]
    fn bootstrap_basics() {
        let mut rng = RngStream::new(5);
        let one = bootstrap_resample(&toy(1), &mut rng).unwrap();
        assert_eq!(one.samples, toy(1).samples);
        assert!(bootstrap_resample(&toy(0), &mut rng).is_err());
        let a = bootstrap_resample(&toy(50), &mut RngStream::new(9)).unwrap();
        let b = bootstrap_resample(&toy(50), &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_distinct_fraction_near_one_minus_inv_e() {
        let n = 2000;
        let ds = toy(n);
        let mut rng = RngStream::new(17);
        let reps = 200;
        let mut total = 0.0;
        for _ in 0..reps {
            let b = bootstrap_resample(&ds, &mut rng).unwrap();
            let mut seen = vec![false; n];
            for s in &b.samples {
                seen[s.theta[0] as usize] = true;
            }
            total += seen.iter().filter(|s| **s).count() as f64 / n as f64;
        }
        let mean = total / reps as f64;
        // Exact expectation for finite n: 1 - (1 - 1/n)^n.
        let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
        assert!((expected - (1.0 - (-1f64).exp())).abs() < 1e-3);
        assert!((mean - expected).abs() < 0.003, "{mean} vs {expected}");
    }

    #[test]
    fn bytes_round_trip() {
        let ds = toy(7);
        let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(ds, back);
        let mut truncated = ds.to_bytes();
        truncated.pop();
        assert!(Dataset::from_bytes(&truncated).is_err());
    }
}
