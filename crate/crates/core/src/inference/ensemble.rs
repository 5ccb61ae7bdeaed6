use rand::Rng;
use rayon::prelude::*;

use super::npe::train_npe;
use super::nre::train_nre;
use super::persist::Estimator;
use super::sampler::{sample_unnormalized, SamplerConfig};
use crate::dataset::{bootstrap_resample, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorMeta, PosteriorEstimator};
use crate::nn::{log_sum_exp, TrainConfig};
use crate::prior::Prior;
use crate::rng::RngStream;
use crate::simulators::Benchmark;
use crate::types::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    /// Members differ only in initialization and batch order.
    Independent,
    /// Each member trains on its own bootstrap resample.
    Bagged,
}

impl EnsembleKind {
    pub fn id(self) -> &'static str {
        match self {
            EnsembleKind::Independent => "independent",
            EnsembleKind::Bagged => "bagged",
        }
    }

    pub fn from_id(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(EnsembleKind::Independent),
            "bagged" => Ok(EnsembleKind::Bagged),
            _ => Err(Error::InvalidArgument(format!("unknown ensemble kind {s:?}"))),
        }
    }
}

/// Which single estimator an ensemble is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberMethod {
    Nre,
    Npe,
}

/// Equal-weight mixture of member posteriors `(1/n) sum p̂_i(theta | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimator {
    pub(crate) meta: EstimatorMeta,
    pub(crate) members: Vec<Estimator>,
    pub(crate) kind: EnsembleKind,
    pub sampler: SamplerConfig,
}

impl EnsembleEstimator {
    pub fn new(members: Vec<Estimator>, kind: EnsembleKind) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidArgument("an ensemble needs at least one member".into()))?;
        let fm = first.meta();
        for m in &members[1..] {
            let mm = m.meta();
            if mm.benchmark != fm.benchmark || mm.budget != fm.budget || m.prior() != first.prior() {
                return Err(Error::InvalidArgument(
                    "ensemble members must share benchmark and budget".into(),
                ));
            }
        }
        let meta = EstimatorMeta::new(
            format!("ensemble-{}", fm.method),
            fm.benchmark.clone(),
            fm.budget,
            fm.seed,
        );
        Ok(Self {
            meta,
            members,
            kind,
            sampler: SamplerConfig::default(),
        })
    }

    pub fn members(&self) -> &[Estimator] {
        &self.members
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The sub-ensemble of the first `n` members.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.members.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix {n} of {} members",
                self.members.len()
            )));
        }
        let mut e = Self::new(self.members[..n].to_vec(), self.kind)?;
        e.meta = self.meta.clone();
        e.sampler = self.sampler.clone();
        Ok(e)
    }

    /// `log p(theta) + log((1/n) sum r̂_i(x | theta))`: averaging the
    /// likelihood-to-evidence ratios rather than the posteriors. Only defined
    /// when every member is a ratio estimator.
    pub fn ratio_averaged_log_posterior(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        let lp = self.prior().log_density(theta);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        let logits = self
            .members
            .iter()
            .map(|m| match m {
                Estimator::Nre(r) => r.log_ratio(theta, x),
                _ => Err(Error::InvalidArgument("ratio averaging needs ratio members".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(lp + log_sum_exp(&logits) - (logits.len() as f64).ln())
    }
}

/// `log((1/n) sum exp(log p̂_i(theta | x)))`.
pub fn ensemble_log_posterior(e: &EnsembleEstimator, theta: &[f64], x: &[f64]) -> Result<f64> {
    e.log_density(theta, x)
}

impl PosteriorEstimator for EnsembleEstimator {
    fn meta(&self) -> &EstimatorMeta {
        &self.meta
    }

    fn prior(&self) -> &Prior {
        self.members[0].prior()
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.log_density_batch(&[ParameterVector::new(theta.to_vec())?], x)?[0])
    }

    fn log_density_batch(&self, thetas: &[ParameterVector], x: &[f64]) -> Result<Vec<f64>> {
        let per_member = self
            .members
            .iter()
            .map(|m| m.log_density_batch(thetas, x))
            .collect::<Result<Vec<_>>>()?;
        let ln_n = (self.members.len() as f64).ln();
        let mut column = vec![0.0; self.members.len()];
        Ok((0..thetas.len())
            .map(|i| {
                for (c, m) in column.iter_mut().zip(&per_member) {
                    *c = m[i];
                }
                log_sum_exp(&column) - ln_n
            })
            .collect())
    }

    /// Normalized members: pick a member uniformly per draw. Otherwise the
    /// averaged density is sampled directly.
    fn sample(&self, m: usize, x: &[f64], rng: &mut RngStream) -> Result<Vec<ParameterVector>> {
        if !self.is_normalized() {
            return sample_unnormalized(self, &self.sampler, m, x, rng);
        }
        let mut counts = vec![0usize; self.members.len()];
        for _ in 0..m {
            counts[rng.random_range(0..self.members.len())] += 1;
        }
        let mut out = Vec::with_capacity(m);
        for (member, c) in self.members.iter().zip(counts) {
            out.extend(member.sample(c, x, rng)?);
        }
        Ok(out)
    }

    fn is_normalized(&self) -> bool {
        self.members.iter().all(|m| m.is_normalized())
    }

    fn observation(&self) -> Option<&[f64]> {
        self.members[0].observation()
    }
}

/// Trains `n` members on `ds`. Member `i` draws everything from child stream
/// `i`; bagged members first resample the dataset with replacement.
pub fn train_ensemble(
    benchmark: &Benchmark,
    ds: &Dataset,
    n: usize,
    kind: EnsembleKind,
    method: MemberMethod,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<EnsembleEstimator> {
    if n == 0 {
        return Err(Error::InvalidArgument("an ensemble needs at least one member".into()));
    }
    let members = (0..n)
        .into_par_iter()
        .map(|i| {
            let r = rng.child(i as u64);
            let data = match kind {
                EnsembleKind::Independent => ds.clone(),
                EnsembleKind::Bagged => bootstrap_resample(ds, &mut r.child_named("bootstrap"))?,
            };
            Ok(match method {
                MemberMethod::Nre => Estimator::Nre(train_nre(benchmark, &data, cfg, &r)?.0),
                MemberMethod::Npe => Estimator::Npe(train_npe(benchmark, &data, cfg, &r)?.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut e = EnsembleEstimator::new(members, kind)?;
    e.meta.seed = rng.seed();
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::PriorEstimator;
    use crate::simulators::BenchmarkKind;

    fn prior_member() -> Estimator {
        let bm = Benchmark::new(BenchmarkKind::Slcp);
        Estimator::Prior(PriorEstimator::new("slcp", bm.prior().clone()))
    }

    #[test]
    fn single_and_identical_members_equal_member() {
        let x = vec![0.0; 8];
        let one = EnsembleEstimator::new(vec![prior_member()], EnsembleKind::Independent).unwrap();
        let three = EnsembleEstimator::new(vec![prior_member(); 3], EnsembleKind::Independent).unwrap();
        for t in [[0.0, 0.0], [1.0, -2.0]] {
            let p = prior_member().log_density(&t, &x).unwrap();
            assert_eq!(one.log_density(&t, &x).unwrap(), p);
            assert!((three.log_density(&t, &x).unwrap() - p).abs() < 1e-12);
        }
        assert!(EnsembleEstimator::new(vec![], EnsembleKind::Bagged).is_err());
    }

    #[test]
    fn kind_ids_round_trip() {
        for k in [EnsembleKind::Independent, EnsembleKind::Bagged] {
            assert_eq!(EnsembleKind::from_id(k.id()).unwrap(), k);
        }
    }
}
