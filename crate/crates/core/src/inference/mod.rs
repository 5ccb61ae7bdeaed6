//! Posterior estimation: ratio and posterior networks, ensembles, rejection
//! and sequential Monte Carlo ABC, sequential ratio estimation, and the
//! samplers used to draw from unnormalized posteriors.

pub mod abc;
pub mod ensemble;
pub mod grid;
pub mod mcmc;
pub mod npe;
pub mod nre;
pub mod persist;
pub mod sampler;
pub mod smc;
pub mod snre;

pub use abc::{
    kde_log_density, rejection_abc, silverman_bandwidth, AbcModel, AbcPosterior, AcceptRule, DiscreteToy,
    PerturbationKernel,
};
pub use ensemble::{ensemble_log_posterior, train_ensemble, EnsembleEstimator, EnsembleKind, MemberMethod};
pub use grid::{grid_posterior_sample, GridPosterior};
pub use mcmc::{metropolis_hastings, MhChain, MhConfig};
pub use npe::{train_npe, NpeEstimator};
pub use nre::{derangement, nre_log_posterior, simulate_training_set, train_nre, RatioEstimator};
pub use persist::Estimator;
pub use sampler::{sample_mh, sample_unnormalized, SamplerConfig};
pub use smc::{smc_abc, SmcResult};
pub use snre::{round_sizes, snre_sequential, SnreOutcome};
