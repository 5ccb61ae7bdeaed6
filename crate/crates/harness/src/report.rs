//! Plot-ready tables derived from coverage records.

use std::collections::BTreeMap;

use crate::error::{HarnessError, Result};
use crate::matrix::ExperimentRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Coverage against level per (benchmark, method, budget), averaged over
    /// seeds.
    CoverageCurves,
    /// Ensemble against the mean and spread of its own members.
    EnsembleCompare,
    /// Coverage against ensemble size for the size sweep.
    SizeSweep,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::CoverageCurves, PlotKind::EnsembleCompare, PlotKind::SizeSweep];

    pub fn id(self) -> &'static str {
        match self {
            PlotKind::CoverageCurves => "coverage-curves",
            PlotKind::EnsembleCompare => "ensemble-compare",
            PlotKind::SizeSweep => "size-sweep",
        }
    }

    pub fn from_id(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| HarnessError::Report(format!("unknown plot kind {s:?}")))
    }
}

/// Restricts the records a table is built from; `None` keeps everything.
#[derive(Debug, Clone, Default)]
pub struct Filter {
    pub benchmark: Option<String>,
    pub method: Option<String>,
    pub budget: Option<usize>,
}

impl Filter {
    fn keeps(&self, r: &ExperimentRecord) -> bool {
        let base = r.method.split(':').next().unwrap_or("");
        self.benchmark.as_ref().is_none_or(|b| *b == r.benchmark)
            && self.method.as_ref().is_none_or(|m| m == base)
            && self.budget.is_none_or(|b| b == r.budget)
    }
}

fn level_key(l: f64) -> i64 {
    (l * 1e6).round() as i64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Half-width of the mean of independent estimates with the given
/// half-widths.
fn pooled_ci(cis: &[f64]) -> f64 {
    cis.iter().map(|c| c * c).sum::<f64>().sqrt() / cis.len() as f64
}

fn levels_of(records: &[&ExperimentRecord]) -> Vec<f64> {
    let mut seen = BTreeMap::new();
    for r in records {
        seen.insert(level_key(r.level), r.level);
    }
    seen.into_values().collect()
}

type Group<'a> = BTreeMap<(String, String, usize), BTreeMap<i64, Vec<&'a ExperimentRecord>>>;

fn group<'a>(records: impl Iterator<Item = &'a ExperimentRecord>) -> Group<'a> {
    let mut g: Group = BTreeMap::new();
    for r in records {
        g.entry((r.benchmark.clone(), r.method.clone(), r.budget))
            .or_default()
            .entry(level_key(r.level))
            .or_default()
            .push(r);
    }
    g
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

/// Tidy CSV for one figure kind. Every table ends with a `diagonal` series
/// holding the nominal reference. An empty selection is an error.
pub fn emit_plotdata(records: &[ExperimentRecord], kind: PlotKind, filter: &Filter) -> Result<String> {
    let selected: Vec<&ExperimentRecord> = records
        .iter()
        .filter(|r| filter.keeps(r))
        .filter(|r| match kind {
            PlotKind::CoverageCurves => !r.method.contains(':') && r.method != "sweep-nre",
            PlotKind::EnsembleCompare => {
                matches!(
                    r.method.split(':').next(),
                    Some("ensemble-nre" | "ensemble-npe" | "bagged-nre")
                )
            }
            PlotKind::SizeSweep => r.method == "sweep-nre",
        })
        .collect();
    if selected.is_empty() {
        return Err(HarnessError::Report(format!(
            "no records match the selection for {}",
            kind.id()
        )));
    }
    let levels = levels_of(&selected);
    let mut out = String::new();
    match kind {
        PlotKind::CoverageCurves => {
            out += "series,benchmark,method,budget,x,y,ci_halfwidth,n_seeds\n";
            for ((b, m, budget), by_level) in group(selected.iter().copied()) {
                for rs in by_level.values() {
                    let y: Vec<f64> = rs.iter().map(|r| r.empirical).collect();
                    let ci: Vec<f64> = rs.iter().map(|r| r.ci_halfwidth).collect();
                    out += &format!(
                        "estimate,{b},{m},{budget},{},{},{},{}\n",
                        rs[0].level,
                        f(mean(&y)),
                        f(pooled_ci(&ci)),
                        rs.len()
                    );
                }
            }
            for l in &levels {
                out += &format!("diagonal,,,,{l},{},0.000000,0\n", f(*l));
            }
        }
        PlotKind::EnsembleCompare => {
            out += "series,benchmark,method,budget,x,y,sd,ci_halfwidth\n";
            let ensembles = group(selected.iter().copied().filter(|r| !r.method.contains(':')));
            let members = group(selected.iter().copied().filter(|r| r.method.contains(':')));
            // Members of one ensemble share the method prefix.
            let mut pooled: BTreeMap<(String, String, usize), BTreeMap<i64, Vec<&ExperimentRecord>>> = BTreeMap::new();
            for ((b, m, budget), by_level) in members {
                let base = m.split(':').next().unwrap_or("").to_string();
                let entry = pooled.entry((b, base, budget)).or_default();
                for (k, rs) in by_level {
                    entry.entry(k).or_default().extend(rs);
                }
            }
            for ((b, m, budget), by_level) in &ensembles {
                for rs in by_level.values() {
                    let y: Vec<f64> = rs.iter().map(|r| r.empirical).collect();
                    let ci: Vec<f64> = rs.iter().map(|r| r.ci_halfwidth).collect();
                    let sd = if y.len() > 1 { std_dev(&y) } else { 0.0 };
                    out += &format!(
                        "ensemble,{b},{m},{budget},{},{},{},{}\n",
                        rs[0].level,
                        f(mean(&y)),
                        f(sd),
                        f(pooled_ci(&ci))
                    );
                }
            }
            for ((b, m, budget), by_level) in &pooled {
                for rs in by_level.values() {
                    // Spread across members within each seed, then averaged
                    // over seeds.
                    let mut by_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
                    for r in rs {
                        by_seed.entry(r.seed).or_default().push(r.empirical);
                    }
                    let y: Vec<f64> = rs.iter().map(|r| r.empirical).collect();
                    let sd = mean(&by_seed.values().map(|v| std_dev(v)).collect::<Vec<_>>());
                    let ci: Vec<f64> = rs.iter().map(|r| r.ci_halfwidth).collect();
                    out += &format!(
                        "members,{b},{m},{budget},{},{},{},{}\n",
                        rs[0].level,
                        f(mean(&y)),
                        f(sd),
                        f(pooled_ci(&ci))
                    );
                }
            }
            for l in &levels {
                out += &format!("diagonal,,,,{l},{},0.000000,0.000000\n", f(*l));
            }
        }
        PlotKind::SizeSweep => {
            out += "series,benchmark,budget,level,x,y,ci_halfwidth,n_seeds\n";
            let mut g: BTreeMap<(String, usize, i64, usize), Vec<&ExperimentRecord>> = BTreeMap::new();
            for r in &selected {
                g.entry((r.benchmark.clone(), r.budget, level_key(r.level), r.ensemble_size))
                    .or_default()
                    .push(r);
            }
            let mut sizes = std::collections::BTreeSet::new();
            for ((b, budget, _, size), rs) in &g {
                sizes.insert(*size);
                let y: Vec<f64> = rs.iter().map(|r| r.empirical).collect();
                let ci: Vec<f64> = rs.iter().map(|r| r.ci_halfwidth).collect();
                out += &format!(
                    "estimate,{b},{budget},{},{size},{},{},{}\n",
                    rs[0].level,
                    f(mean(&y)),
                    f(pooled_ci(&ci)),
                    rs.len()
                );
            }
            for l in &levels {
                for size in &sizes {
                    out += &format!("diagonal,,,{l},{size},{},0.000000,0\n", f(*l));
                }
            }
        }
    }
    Ok(out)
}
