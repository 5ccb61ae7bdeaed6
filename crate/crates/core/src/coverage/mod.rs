//! Expected coverage of highest-posterior-density regions.
//!
//! The `1 - alpha` HPD region of `p̂(. | x)` is approximated from `m` self
//! samples: it is `{theta : log p̂(theta | x) >= c}` with `c` the empirical
//! `alpha`-quantile of the samples' log densities. The expected coverage of
//! an estimator is the frequency with which that region contains the
//! parameter that generated `x`, over pairs from the joint.

mod curve;
mod hpd;
mod record;

pub use curve::{
    coverage_ci, coverage_indicators, empirical_expected_coverage, expected_information_gain, has_coverage,
    indicators_from_log_densities, is_conservative, CoverageCurve, CoverageOptions, TieBreak, DEFAULT_SAMPLES,
    MIN_TEST_PAIRS,
};
pub use hpd::{grid_hpd_contains, grid_hpd_indicators, hpd_contains, hpd_threshold, ConfidenceLevel, HpdThreshold};
pub use record::{CoverageRecord, CSV_HEADER};

/// `{0.05, 0.10, ..., 0.95}`.
pub fn default_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}
