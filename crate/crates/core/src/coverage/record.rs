use super::curve::CoverageCurve;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "benchmark,method,budget,seed,ensemble_size,level,empirical,ci_halfwidth,n_eval";

/// One row of the coverage CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRecord {
    pub benchmark: String,
    pub method: String,
    pub budget: usize,
    pub seed: u64,
    pub ensemble_size: usize,
    pub level: f64,
    pub empirical: f64,
    pub ci_halfwidth: f64,
    pub n_eval: usize,
}

impl CoverageRecord {
    pub fn from_curve(
        curve: &CoverageCurve,
        benchmark: &str,
        method: &str,
        budget: usize,
        seed: u64,
        ensemble_size: usize,
    ) -> Vec<Self> {
        (0..curve.levels.len())
            .map(|i| Self {
                benchmark: benchmark.into(),
                method: method.into(),
                budget,
                seed,
                ensemble_size,
                level: curve.levels[i],
                empirical: curve.empirical[i],
                ci_halfwidth: curve.ci_halfwidths[i],
                n_eval: curve.n_eval,
            })
            .collect()
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{}",
            self.benchmark,
            self.method,
            self.budget,
            self.seed,
            self.ensemble_size,
            self.level,
            self.empirical,
            self.ci_halfwidth,
            self.n_eval
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 9 {
            return Err(Error::Format(format!(
                "expected 9 CSV fields, got {}: {line:?}",
                f.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| Error::Format(format!("bad number {:?} in column {}", f[i], i + 1)))
        };
        let int = |i: usize| -> Result<u64> {
            f[i].parse()
                .map_err(|_| Error::Format(format!("bad integer {:?} in column {}", f[i], i + 1)))
        };
        Ok(Self {
            benchmark: f[0].into(),
            method: f[1].into(),
            budget: int(2)? as usize,
            seed: int(3)?,
            ensemble_size: int(4)? as usize,
            level: num(5)?,
            empirical: num(6)?,
            ci_halfwidth: num(7)?,
            n_eval: int(8)? as usize,
        })
    }
}
