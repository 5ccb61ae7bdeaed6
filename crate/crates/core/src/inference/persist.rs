//! Estimator container.
//!
//! Little-endian, after the 8-byte magic `SBIESTM\0` and a `u32` version (1):
//!
//! | field      | encoding                                  |
//! |------------|-------------------------------------------|
//! | kind       | `u32`: 0 prior, 1 nre, 2 npe, 3 abc, 4 ensemble |
//! | method     | `u32` length + UTF-8                      |
//! | benchmark  | `u32` length + UTF-8                      |
//! | budget     | `u64`                                     |
//! | seed       | `u64`                                     |
//! | prior      | `u32` family (0 uniform, 1 normal, 2 log-uniform), `u32` dim, two `f64` arrays |
//! | body       | kind specific, see below                  |
//!
//! Ratio body: feature map code, parameter and observable normalizers
//! (`u32` dim, means, stds), network. Posterior-network body adds the mixture
//! component count before the normalizers. ABC body: observation (`u64`
//! length + values), tolerance, warning flag, bandwidths, `u64` point count and
//! `(weight, point)` rows. Ensemble body: member kind (`u32`, 0 independent, 1
//! bagged), `u32` member count, then each member as a nested container
//! prefixed by its `u64` byte length. A non-amortized estimator's observation
//! follows as `u32` flag plus values. Networks use their own container
//! (magic `SBIMLP\0\0`) with a layer-size header.

use std::path::Path;

use super::abc::AbcPosterior;
use super::ensemble::{EnsembleEstimator, EnsembleKind};
use super::npe::NpeEstimator;
use super::nre::RatioEstimator;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorMeta, PosteriorEstimator, PriorEstimator};
use crate::prior::Prior;
use crate::rng::RngStream;
use crate::types::ParameterVector;

const MAGIC: &[u8; 8] = b"SBIESTM\0";
const VERSION: u32 = 1;

/// Every persistable estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Prior(PriorEstimator),
    Nre(RatioEstimator),
    Npe(NpeEstimator),
    Abc(AbcPosterior),
    Ensemble(EnsembleEstimator),
}

impl Estimator {
    fn inner(&self) -> &dyn PosteriorEstimator {
        match self {
            Estimator::Prior(e) => e,
            Estimator::Nre(e) => e,
            Estimator::Npe(e) => e,
            Estimator::Abc(e) => e,
            Estimator::Ensemble(e) => e,
        }
    }

    fn kind_code(&self) -> u32 {
        match self {
            Estimator::Prior(_) => 0,
            Estimator::Nre(_) => 1,
            Estimator::Npe(_) => 2,
            Estimator::Abc(_) => 3,
            Estimator::Ensemble(_) => 4,
        }
    }

    /// Replaces the provenance header (method id, benchmark, budget, seed).
    pub fn set_meta(&mut self, meta: EstimatorMeta) {
        match self {
            Estimator::Prior(e) => e.set_meta(meta),
            Estimator::Nre(e) => e.meta = meta,
            Estimator::Npe(e) => e.meta = meta,
            Estimator::Abc(e) => e.meta = meta,
            Estimator::Ensemble(e) => e.meta = meta,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.magic(MAGIC, VERSION);
        w.u32(self.kind_code());
        let meta = self.meta();
        w.str(&meta.method);
        w.str(&meta.benchmark);
        w.u64(meta.budget as u64);
        w.u64(meta.seed);
        write_prior(&mut w, self.prior());
        match self {
            Estimator::Prior(_) => {}
            Estimator::Nre(e) => e.write_body(&mut w),
            Estimator::Npe(e) => e.write_body(&mut w),
            Estimator::Abc(e) => e.write_body(&mut w),
            Estimator::Ensemble(e) => {
                w.u32(match e.kind() {
                    EnsembleKind::Independent => 0,
                    EnsembleKind::Bagged => 1,
                });
                w.u32(e.len() as u32);
                for m in e.members() {
                    let b = m.to_bytes();
                    w.u64(b.len() as u64);
                    w.raw(&b);
                }
            }
        }
        if let Estimator::Nre(e) = self {
            match e.observation() {
                Some(x) => {
                    w.u32(1);
                    w.f64_vec(x);
                }
                None => w.u32(0),
            }
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let version = r.magic(MAGIC)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported estimator version {version}")));
        }
        let kind = r.u32()?;
        let method = r.str()?;
        let benchmark = r.str()?;
        let budget = r.u64()? as usize;
        let seed = r.u64()?;
        let meta = EstimatorMeta::new(method, benchmark, budget, seed);
        let prior = read_prior(&mut r)?;
        let est = match kind {
            0 => {
                let mut p = PriorEstimator::new(&meta.benchmark, prior);
                p.set_meta(meta);
                Estimator::Prior(p)
            }
            1 => {
                let mut e = RatioEstimator::read_body(meta, prior, &mut r)?;
                if r.u32()? == 1 {
                    e = e.with_observation(r.f64_vec()?);
                }
                Estimator::Nre(e)
            }
            2 => Estimator::Npe(NpeEstimator::read_body(meta, prior, &mut r)?),
            3 => Estimator::Abc(AbcPosterior::read_body(meta, prior, &mut r)?),
            4 => {
                let ek = match r.u32()? {
                    0 => EnsembleKind::Independent,
                    1 => EnsembleKind::Bagged,
                    k => return Err(Error::Format(format!("unknown ensemble kind {k}"))),
                };
                let n = r.u32()? as usize;
                let members = (0..n)
                    .map(|_| {
                        let len = r.u64()? as usize;
                        Estimator::from_bytes(r.raw(len)?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut e = EnsembleEstimator::new(members, ek)?;
                e.meta = meta;
                Estimator::Ensemble(e)
            }
            k => return Err(Error::Format(format!("unknown estimator kind {k}"))),
        };
        r.finish()?;
        Ok(est)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn write_prior(w: &mut Writer, prior: &Prior) {
    let (family, a, b) = match prior {
        Prior::UniformBox { low, high } => (0, low, high),
        Prior::IndependentNormal { mean, std } => (1, mean, std),
        Prior::LogUniformBox { low, high } => (2, low, high),
    };
    w.u32(family);
    w.u32(a.len() as u32);
    w.f64s(a);
    w.f64s(b);
}

fn read_prior(r: &mut Reader) -> Result<Prior> {
    let family = r.u32()?;
    let d = r.u32()? as usize;
    let a = r.f64s(d)?;
    let b = r.f64s(d)?;
    match family {
        0 => Prior::uniform(a, b),
        1 => Prior::normal(a, b),
        2 => Prior::log_uniform(a, b),
        f => Err(Error::Format(format!("unknown prior family {f}"))),
    }
}

impl PosteriorEstimator for Estimator {
    fn meta(&self) -> &EstimatorMeta {
        self.inner().meta()
    }

    fn prior(&self) -> &Prior {
        self.inner().prior()
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.inner().log_density(theta, x)
    }

    fn log_density_batch(&self, thetas: &[ParameterVector], x: &[f64]) -> Result<Vec<f64>> {
        self.inner().log_density_batch(thetas, x)
    }

    fn sample(&self, m: usize, x: &[f64], rng: &mut RngStream) -> Result<Vec<ParameterVector>> {
        self.inner().sample(m, x, rng)
    }

    fn is_normalized(&self) -> bool {
        self.inner().is_normalized()
    }

    fn observation(&self) -> Option<&[f64]> {
        self.inner().observation()
    }
}

impl From<RatioEstimator> for Estimator {
    fn from(e: RatioEstimator) -> Self {
        Estimator::Nre(e)
    }
}

impl From<NpeEstimator> for Estimator {
    fn from(e: NpeEstimator) -> Self {
        Estimator::Npe(e)
    }
}

impl From<AbcPosterior> for Estimator {
    fn from(e: AbcPosterior) -> Self {
        Estimator::Abc(e)
    }
}

impl From<EnsembleEstimator> for Estimator {
    fn from(e: EnsembleEstimator) -> Self {
        Estimator::Ensemble(e)
    }
}

impl From<PriorEstimator> for Estimator {
    fn from(e: PriorEstimator) -> Self {
        Estimator::Prior(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample_joint;
    use crate::inference::abc::{rejection_abc, AcceptRule};
    use crate::inference::ensemble::{train_ensemble, MemberMethod};
    use crate::inference::npe::train_npe;
    use crate::inference::nre::train_nre;
    use crate::nn::TrainConfig;
    use crate::simulators::{Benchmark, BenchmarkKind};

    #[test]
    fn every_kind_round_trips_exactly() {
        let bm = Benchmark::new(BenchmarkKind::Slcp);
        let ds = sample_joint(&bm, 128, &RngStream::new(1)).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            hidden: vec![8],
            components: 2,
            ..TrainConfig::default()
        };
        let rng = RngStream::new(2);
        let x = ds.samples[0].x.to_vec();
        let all: Vec<Estimator> = vec![
            PriorEstimator::new("slcp", bm.prior().clone()).into(),
            train_nre(&bm, &ds, &cfg, &rng).unwrap().0.into(),
            train_nre(&bm, &ds, &cfg, &rng)
                .unwrap()
                .0
                .with_observation(x.clone())
                .into(),
            train_npe(&bm, &ds, &cfg, &rng).unwrap().0.into(),
            rejection_abc(&bm, &x, 200, AcceptRule::Quantile(0.05), &rng)
                .unwrap()
                .into(),
            train_ensemble(&bm, &ds, 3, EnsembleKind::Bagged, MemberMethod::Nre, &cfg, &rng)
                .unwrap()
                .into(),
        ];
        for e in all {
            let bytes = e.to_bytes();
            let back = Estimator::from_bytes(&bytes).unwrap();
            assert_eq!(back, e);
            assert_eq!(back.to_bytes(), bytes);
            let t = [0.3, -1.2];
            assert_eq!(
                back.log_density(&t, &x).unwrap().to_bits(),
                e.log_density(&t, &x).unwrap().to_bits()
            );
            assert!(Estimator::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
    }
}
