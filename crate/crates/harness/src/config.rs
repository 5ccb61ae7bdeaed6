//! Flat `key = value` experiment configuration.
//!
//! One assignment per line; `#` starts a comment; lists are comma
//! separated. Unknown keys, repeated keys and malformed values are errors.

use std::path::PathBuf;

use sbicov_core::coverage::{default_levels, TieBreak};
use sbicov_core::nn::TrainConfig;
use sbicov_core::BenchmarkKind;

use crate::error::{HarnessError, Result};

/// Every method id the matrix runner understands.
pub const METHODS: [&str; 9] = [
    "npe",
    "nre",
    "ensemble-npe",
    "ensemble-nre",
    "bagged-nre",
    "rej-abc",
    "smc-abc",
    "snre",
    "sweep-nre",
];

/// Methods fit to a single observation; their coverage pools one estimator
/// per observation.
pub fn is_amortized(method: &str) -> bool {
    !matches!(method, "rej-abc" | "smc-abc" | "snre")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub benchmarks: Vec<String>,
    pub methods: Vec<String>,
    pub budgets: Vec<usize>,
    /// Seed indices `0..seeds` per cell.
    pub seeds: usize,
    pub base_seed: u64,
    pub levels: Vec<f64>,
    pub n_eval: usize,
    pub n_obs: usize,
    pub samples: usize,
    pub tie_break: TieBreak,
    pub ensemble_size: usize,
    pub sweep_sizes: Vec<usize>,
    pub train: TrainConfig,
    pub abc_quantile: f64,
    /// Multiplier on the Silverman kernel widths of ABC posteriors.
    pub kde_bandwidth_scale: f64,
    /// 0 picks `clamp(budget / 8, 50, 1000)`.
    pub smc_population: usize,
    pub smc_decay: f64,
    pub snre_rounds: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmarks: vec!["gaussian".into(), "slcp".into(), "mg1".into()],
            methods: vec!["nre".into(), "npe".into(), "rej-abc".into()],
            budgets: vec![128, 256, 512, 1024, 2048, 4096, 8192],
            seeds: 5,
            base_seed: 0,
            levels: default_levels(),
            n_eval: 2000,
            n_obs: 100,
            samples: 2000,
            tie_break: TieBreak::Randomized,
            ensemble_size: 5,
            sweep_sizes: vec![1, 2, 5, 10, 20],
            train: TrainConfig::default(),
            abc_quantile: 0.01,
            kde_bandwidth_scale: 1.0,
            smc_population: 0,
            smc_decay: 0.5,
            snre_rounds: 10,
            out: PathBuf::from("results"),
        }
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("line {line}: {msg}"))
}

fn list<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| bad(line, format!("bad value {s:?} for {key}")))
        })
        .collect()
}

fn one<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| bad(line, format!("bad value {v:?} for {key}")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected key = value, got {content:?}")))?;
            let (key, v) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(bad(line, format!("duplicate key {key}")));
            }
            match key {
                "benchmarks" => c.benchmarks = list(v, line, key)?,
                "methods" => c.methods = list(v, line, key)?,
                "budgets" => c.budgets = list(v, line, key)?,
                "seeds" => c.seeds = one(v, line, key)?,
                "seed" => c.base_seed = one(v, line, key)?,
                "levels" => c.levels = list(v, line, key)?,
                "n_eval" => c.n_eval = one(v, line, key)?,
                "n_obs" => c.n_obs = one(v, line, key)?,
                "samples" => c.samples = one(v, line, key)?,
                "tie_break" => {
                    c.tie_break = match v {
                        "randomized" => TieBreak::Randomized,
                        "inclusive" => TieBreak::Inclusive,
                        _ => {
                            return Err(bad(
                                line,
                                format!("tie_break must be randomized or inclusive, got {v:?}"),
                            ))
                        }
                    }
                }
                "ensemble_size" => c.ensemble_size = one(v, line, key)?,
                "sweep_sizes" => c.sweep_sizes = list(v, line, key)?,
                "epochs" => c.train.epochs = one(v, line, key)?,
                "batch_size" => c.train.batch_size = one(v, line, key)?,
                "learning_rate" => c.train.learning_rate = one(v, line, key)?,
                "weight_decay" => c.train.weight_decay = one(v, line, key)?,
                "validation_fraction" => c.train.validation_fraction = one(v, line, key)?,
                "hidden" => c.train.hidden = list(v, line, key)?,
                "components" => c.train.components = one(v, line, key)?,
                "abc_quantile" => c.abc_quantile = one(v, line, key)?,
                "kde_bandwidth_scale" => c.kde_bandwidth_scale = one(v, line, key)?,
                "smc_population" => c.smc_population = one(v, line, key)?,
                "smc_decay" => c.smc_decay = one(v, line, key)?,
                "snre_rounds" => c.snre_rounds = one(v, line, key)?,
                "out" => c.out = PathBuf::from(v),
                _ => return Err(bad(line, format!("unknown key {key:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(HarnessError::Config(m));
        for b in &self.benchmarks {
            if BenchmarkKind::from_id(b).is_err() {
                return err(format!("unknown benchmark {b:?}"));
            }
        }
        for m in &self.methods {
            if !METHODS.contains(&m.as_str()) {
                return err(format!("unknown method {m:?}"));
            }
        }
        if self.benchmarks.is_empty() || self.methods.is_empty() || self.budgets.is_empty() {
            return err("benchmarks, methods and budgets must be nonempty".into());
        }
        if self.budgets.iter().any(|b| !b.is_power_of_two()) || self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return err("budgets must be strictly increasing powers of two".into());
        }
        if self.seeds == 0 {
            return err("seeds must be at least 1".into());
        }
        if self.levels.is_empty()
            || self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0))
            || self.levels.windows(2).any(|w| w[0] >= w[1])
        {
            return err("levels must be strictly increasing inside (0, 1)".into());
        }
        if self.n_eval == 0 || self.n_obs == 0 || self.samples < 100 {
            return err("n_eval and n_obs must be positive and samples at least 100".into());
        }
        if self.ensemble_size == 0 || self.sweep_sizes.contains(&0) {
            return err("ensemble sizes must be positive".into());
        }
        if !(self.abc_quantile > 0.0 && self.abc_quantile <= 1.0) || !(self.smc_decay > 0.0 && self.smc_decay < 1.0) {
            return err("abc_quantile must be in (0, 1] and smc_decay in (0, 1)".into());
        }
        if !(self.kde_bandwidth_scale > 0.0 && self.kde_bandwidth_scale.is_finite()) {
            return err("kde_bandwidth_scale must be positive".into());
        }
        if self.snre_rounds == 0 {
            return err("snre_rounds must be at least 1".into());
        }
        self.train.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn smc_population_for(&self, budget: usize) -> usize {
        if self.smc_population > 0 {
            self.smc_population
        } else {
            (budget / 8).clamp(50, 1000)
        }
    }

    /// The configured acceptance quantile, raised where needed so that at
    /// least two draws are kept (the kernel density needs two points).
    pub fn abc_quantile_for(&self, budget: usize) -> f64 {
        self.abc_quantile.max(2.0 / budget as f64).min(1.0)
    }

    /// Members trained by the ensemble size sweep.
    pub fn sweep_members(&self) -> usize {
        self.sweep_sizes.iter().copied().max().unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_key() {
        let text = "
            # desk matrix
            benchmarks = gaussian, slcp
            methods = nre,rej-abc
            budgets = 128,256
            seeds = 2
            seed = 7
            levels = 0.25, 0.5, 0.75
            n_eval = 100   # reduced
            n_obs = 10
            samples = 500
            tie_break = inclusive
            ensemble_size = 3
            sweep_sizes = 1, 3
            epochs = 3
            batch_size = 64
            learning_rate = 0.002
            weight_decay = 0
            validation_fraction = 0.2
            hidden = 16,16
            components = 4
            abc_quantile = 0.05
            kde_bandwidth_scale = 0.5
            smc_population = 60
            smc_decay = 0.7
            snre_rounds = 4
            out = /tmp/x
        ";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.benchmarks, vec!["gaussian", "slcp"]);
        assert_eq!(c.methods, vec!["nre", "rej-abc"]);
        assert_eq!(c.budgets, vec![128, 256]);
        assert_eq!(
            (c.seeds, c.base_seed, c.n_eval, c.n_obs, c.samples),
            (2, 7, 100, 10, 500)
        );
        assert_eq!(c.levels, vec![0.25, 0.5, 0.75]);
        assert_eq!(c.tie_break, TieBreak::Inclusive);
        assert_eq!((c.ensemble_size, c.sweep_sizes.clone()), (3, vec![1, 3]));
        let t = &c.train;
        assert_eq!((t.epochs, t.batch_size, t.components), (3, 64, 4));
        assert_eq!(
            (t.learning_rate, t.weight_decay, t.validation_fraction),
            (0.002, 0.0, 0.2)
        );
        assert_eq!(t.hidden, vec![16, 16]);
        assert_eq!((c.abc_quantile, c.kde_bandwidth_scale, c.smc_decay), (0.05, 0.5, 0.7));
        assert_eq!((c.smc_population, c.snre_rounds), (60, 4));
        assert_eq!(c.out, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "colour = red",
            "seeds = 1\nseeds = 2",
            "budgets = 100",
            "budgets = 256,128",
            "methods = snpe",
            "benchmarks = nope",
            "seeds",
            "n_eval = many",
            "levels = 0.5,1.0",
            "kde_bandwidth_scale = 0",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn smc_population_default() {
        let c = ExperimentConfig::default();
        assert_eq!(c.smc_population_for(128), 50);
        assert_eq!(c.smc_population_for(4096), 512);
        assert_eq!(c.smc_population_for(1 << 17), 1000);
    }

    #[test]
    fn abc_quantile_keeps_two_draws() {
        let c = ExperimentConfig::default();
        assert_eq!(c.abc_quantile_for(128), 2.0 / 128.0);
        assert_eq!(c.abc_quantile_for(8192), 0.01);
    }
}
