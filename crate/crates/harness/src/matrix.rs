//! The experiment matrix: one cell per (benchmark, method, budget, seed).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use sbicov_core::coverage::{
    coverage_indicators, empirical_expected_coverage, CoverageCurve, CoverageOptions, CoverageRecord, CSV_HEADER,
};
use sbicov_core::inference::{
    rejection_abc, simulate_training_set, smc_abc, snre_sequential, train_ensemble, train_npe, train_nre, AcceptRule,
    EnsembleEstimator, EnsembleKind, Estimator, MemberMethod,
};
use sbicov_core::nn::TrainConfig;
use sbicov_core::{sample_joint, Benchmark, Dataset, EstimatorMeta, RngStream};

use crate::config::{is_amortized, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::progress::Progress;
use crate::sweep::subset_coverage;

/// One row of the results table.
pub type ExperimentRecord = CoverageRecord;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub benchmark: String,
    pub method: String,
    pub budget: usize,
    /// Seed index within the cell, `0..cfg.seeds`.
    pub seed: u64,
}

impl Cell {
    pub fn new(benchmark: &str, method: &str, budget: usize, seed: u64) -> Self {
        Self {
            benchmark: benchmark.into(),
            method: method.into(),
            budget,
            seed,
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}/{}/{}", self.benchmark, self.method, self.budget, self.seed)
    }
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for b in &cfg.benchmarks {
        for m in &cfg.methods {
            for &budget in &cfg.budgets {
                for s in 0..cfg.seeds as u64 {
                    out.push(Cell::new(b, m, budget, s));
                }
            }
        }
    }
    out
}

/// Random streams of one cell. Training draws only from `train`, evaluation
/// pairs and HPD samples only from `test`.
#[derive(Debug, Clone)]
pub struct CellStreams {
    pub train: RngStream,
    pub test: RngStream,
}

fn is_prefix(a: &[u64], b: &[u64]) -> bool {
    a.len() <= b.len() && b[..a.len()] == *a
}

/// Two branches are disjoint when neither path extends the other.
pub fn disjoint(a: &RngStream, b: &RngStream) -> bool {
    !is_prefix(a.path(), b.path()) && !is_prefix(b.path(), a.path())
}

/// Training streams depend on the budget, so amortized methods at the same
/// (benchmark, budget, seed) share one training dataset; the test branch
/// depends only on (benchmark, seed), so all methods are scored on the same
/// pairs.
pub fn cell_streams(base_seed: u64, benchmark: &str, seed: u64, budget: usize) -> Result<CellStreams> {
    let root = RngStream::new(base_seed).child_named(benchmark).child(seed);
    let streams = CellStreams {
        train: root.child_named("train").child(budget as u64),
        test: root.child_named("test"),
    };
    if !disjoint(&streams.train, &streams.test) {
        return Err(HarnessError::Config(format!(
            "training and test branches overlap: {:?} vs {:?}",
            streams.train.path(),
            streams.test.path()
        )));
    }
    Ok(streams)
}

/// Everything that can change the output of a cell, as a canonical string.
pub fn cell_fingerprint(cfg: &ExperimentConfig, cell: &Cell) -> String {
    let mut s = format!(
        "v1|{}|{}|{}|{}|base={}|levels={:?}|samples={}|tie={:?}",
        cell.benchmark, cell.method, cell.budget, cell.seed, cfg.base_seed, cfg.levels, cfg.samples, cfg.tie_break
    );
    if is_amortized(&cell.method) {
        s += &format!("|n_eval={}", cfg.n_eval);
    } else {
        s += &format!("|n_obs={}", cfg.n_obs);
    }
    let t = &cfg.train;
    let train = format!(
        "|train={},{},{},{},{},{:?},{}",
        t.epochs, t.batch_size, t.learning_rate, t.weight_decay, t.validation_fraction, t.hidden, t.components
    );
    match cell.method.as_str() {
        "rej-abc" => {
            s += &format!(
                "|q={}|kde={}",
                cfg.abc_quantile_for(cell.budget),
                cfg.kde_bandwidth_scale
            )
        }
        "smc-abc" => {
            s += &format!(
                "|pop={}|decay={}|kde={}",
                cfg.smc_population_for(cell.budget),
                cfg.smc_decay,
                cfg.kde_bandwidth_scale
            )
        }
        "snre" => s += &format!("{train}|rounds={}", cfg.snre_rounds),
        "sweep-nre" => s += &format!("{train}|sweep={:?}", cfg.sweep_sizes),
        "ensemble-npe" | "ensemble-nre" | "bagged-nre" => s += &format!("{train}|ensemble={}", cfg.ensemble_size),
        _ => s += &train,
    }
    s
}

/// First 128 bits of the SHA-256 of the fingerprint, hex encoded.
pub fn cell_hash(cfg: &ExperimentConfig, cell: &Cell) -> String {
    let digest = Sha256::digest(cell_fingerprint(cfg, cell).as_bytes());
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Simulator calls made while building and while scoring a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallCounts {
    pub training: u64,
    pub evaluation: u64,
}

impl CallCounts {
    pub fn total(&self) -> u64 {
        self.training + self.evaluation
    }
}

/// Analytic call counts: `budget + n_eval` for amortized cells, `budget` per
/// observation plus the observations themselves for non-amortized ones.
pub fn expected_calls(cfg: &ExperimentConfig, cell: &Cell) -> CallCounts {
    if is_amortized(&cell.method) {
        CallCounts {
            training: cell.budget as u64,
            evaluation: cfg.n_eval as u64,
        }
    } else {
        CallCounts {
            training: (cell.budget * cfg.n_obs) as u64,
            evaluation: cfg.n_obs as u64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub records: Vec<ExperimentRecord>,
    pub calls: CallCounts,
    /// The fitted amortized estimator; non-amortized cells fit one per
    /// observation and keep none.
    pub estimator: Option<Estimator>,
    /// The amortized training set.
    pub dataset: Option<Dataset>,
}

fn coverage_options(cfg: &ExperimentConfig) -> CoverageOptions {
    CoverageOptions {
        samples: cfg.samples,
        tie_break: cfg.tie_break,
    }
}

fn records(cell: &Cell, method: &str, size: usize, curve: &CoverageCurve) -> Vec<ExperimentRecord> {
    CoverageRecord::from_curve(curve, &cell.benchmark, method, cell.budget, cell.seed, size)
}

fn ensemble_spec(method: &str) -> Option<(EnsembleKind, MemberMethod)> {
    match method {
        "ensemble-nre" | "sweep-nre" => Some((EnsembleKind::Independent, MemberMethod::Nre)),
        "ensemble-npe" => Some((EnsembleKind::Independent, MemberMethod::Npe)),
        "bagged-nre" => Some((EnsembleKind::Bagged, MemberMethod::Nre)),
        _ => None,
    }
}

/// Trains the estimator of an amortized cell on `ds`.
pub fn train_amortized(
    benchmark: &Benchmark,
    method: &str,
    ds: &Dataset,
    members: usize,
    train: &TrainConfig,
    rng: &RngStream,
) -> Result<Estimator> {
    let rng = rng.child_named(method);
    Ok(match method {
        "nre" => train_nre(benchmark, ds, train, &rng)?.0.into(),
        "npe" => train_npe(benchmark, ds, train, &rng)?.0.into(),
        m => {
            let (kind, member) =
                ensemble_spec(m).ok_or_else(|| HarnessError::Config(format!("{m} is not an amortized method")))?;
            train_ensemble(benchmark, ds, members, kind, member, train, &rng)?.into()
        }
    })
}

/// Scores an ensemble and each of its members on the same test pairs.
///
/// The ensemble row carries `ensemble_size = n`; member `i` is reported as
/// `<method>:m<i>` with size 1.
pub fn build_ensemble_cell(
    ensemble: &EnsembleEstimator,
    expected_members: usize,
    cell: &Cell,
    test: &Dataset,
    levels: &[f64],
    opts: &CoverageOptions,
    rng: &RngStream,
) -> Result<Vec<ExperimentRecord>> {
    if ensemble.len() != expected_members {
        return Err(HarnessError::Config(format!(
            "ensemble has {} members, expected {expected_members}",
            ensemble.len()
        )));
    }
    let curve = empirical_expected_coverage(ensemble, test, levels, opts, rng)?;
    let mut out = CoverageRecord::from_curve(
        &curve,
        &cell.benchmark,
        &cell.method,
        cell.budget,
        cell.seed,
        ensemble.len(),
    );
    for (i, m) in ensemble.members().iter().enumerate() {
        let curve = empirical_expected_coverage(m, test, levels, opts, rng)?;
        let name = format!("{}:m{i}", cell.method);
        out.extend(CoverageRecord::from_curve(
            &curve,
            &cell.benchmark,
            &name,
            cell.budget,
            cell.seed,
            1,
        ));
    }
    Ok(out)
}

/// Mean coverage of disjoint member subsets of every configured size, pooled
/// over subsets. Subsets of size `s` are members `[k s, (k + 1) s)`.
fn sweep_records(
    cfg: &ExperimentConfig,
    cell: &Cell,
    ensemble: &EnsembleEstimator,
    test: &Dataset,
    rng: &RngStream,
) -> Result<Vec<ExperimentRecord>> {
    let n = ensemble.len();
    let mut subsets = Vec::new();
    let mut owner = Vec::new();
    for &s in &cfg.sweep_sizes {
        for k in 0..n / s {
            subsets.push((k * s..(k + 1) * s).collect::<Vec<_>>());
            owner.push(s);
        }
    }
    let per_subset = subset_coverage(ensemble, &subsets, test, &cfg.levels, &coverage_options(cfg), rng)?;
    let mut out = Vec::new();
    for &s in &cfg.sweep_sizes {
        let rows: Vec<Vec<bool>> = per_subset
            .iter()
            .zip(&owner)
            .filter(|(_, o)| **o == s)
            .flat_map(|(rows, _)| rows.iter().cloned())
            .collect();
        let curve = CoverageCurve::from_indicators(&cfg.levels, &rows)?;
        out.extend(records(cell, &cell.method, s, &curve));
    }
    Ok(out)
}

/// Runs one cell without touching the disk.
pub fn execute_cell(cfg: &ExperimentConfig, cell: &Cell) -> Result<CellRun> {
    let train_bm = Benchmark::from_id(&cell.benchmark)?;
    let eval_bm = train_bm.with_fresh_counter();
    let streams = cell_streams(cfg.base_seed, &cell.benchmark, cell.seed, cell.budget)?;
    let opts = coverage_options(cfg);
    let cov_rng = streams.test.child_named("coverage");
    let meta = EstimatorMeta::new(cell.method.clone(), cell.benchmark.clone(), cell.budget, cell.seed);

    let mut run = if is_amortized(&cell.method) {
        let test = sample_joint(&eval_bm, cfg.n_eval, &streams.test.child_named("pairs"))?;
        let ds = simulate_training_set(&train_bm, cell.budget, &streams.train)?;
        let members = match cell.method.as_str() {
            "sweep-nre" => cfg.sweep_members(),
            _ => cfg.ensemble_size,
        };
        let mut est = train_amortized(&train_bm, &cell.method, &ds, members, &cfg.train, &streams.train)?;
        est.set_meta(meta);
        let records = match (&est, cell.method.as_str()) {
            (Estimator::Ensemble(e), "sweep-nre") => sweep_records(cfg, cell, e, &test, &cov_rng)?,
            (Estimator::Ensemble(e), _) => build_ensemble_cell(e, members, cell, &test, &cfg.levels, &opts, &cov_rng)?,
            (e, _) => {
                let curve = empirical_expected_coverage(e, &test, &cfg.levels, &opts, &cov_rng)?;
                records(cell, &cell.method, 1, &curve)
            }
        };
        CellRun {
            records,
            calls: CallCounts {
                training: 0,
                evaluation: 0,
            },
            estimator: Some(est),
            dataset: Some(ds),
        }
    } else {
        let observations = sample_joint(&eval_bm, cfg.n_obs, &streams.test.child_named("observations"))?;
        let fit_rng = streams.train.child_named(&cell.method);
        let rows = observations
            .samples
            .par_iter()
            .enumerate()
            .map(|(j, s)| {
                let r = fit_rng.child(j as u64);
                let est: Estimator = match cell.method.as_str() {
                    "rej-abc" => rejection_abc(
                        &train_bm,
                        &s.x,
                        cell.budget,
                        AcceptRule::Quantile(cfg.abc_quantile_for(cell.budget)),
                        &r,
                    )?
                    .scale_bandwidth(cfg.kde_bandwidth_scale)?
                    .into(),
                    "smc-abc" => {
                        let pop = cfg.smc_population_for(cell.budget);
                        smc_abc(&train_bm, &s.x, cell.budget, pop, cfg.smc_decay, &r)?
                            .posterior
                            .scale_bandwidth(cfg.kde_bandwidth_scale)?
                            .into()
                    }
                    "snre" => snre_sequential(&train_bm, &s.x, cell.budget, cfg.snre_rounds, &cfg.train, &r)?
                        .estimator
                        .into(),
                    m => return Err(HarnessError::Config(format!("{m} is not a non-amortized method"))),
                };
                Ok(coverage_indicators(
                    &est,
                    &s.x,
                    &s.theta,
                    &cfg.levels,
                    &opts,
                    &mut cov_rng.child(j as u64),
                )?)
            })
            .collect::<Result<Vec<_>>>()?;
        let curve = CoverageCurve::from_indicators(&cfg.levels, &rows)?;
        CellRun {
            records: records(cell, &cell.method, 1, &curve),
            calls: CallCounts {
                training: 0,
                evaluation: 0,
            },
            estimator: None,
            dataset: None,
        }
    };
    run.calls = CallCounts {
        training: train_bm.calls(),
        evaluation: eval_bm.calls(),
    };
    let expected = expected_calls(cfg, cell);
    if run.calls != expected {
        return Err(HarnessError::Accounting(format!(
            "{}: {} training and {} evaluation simulations, expected {} and {}",
            cell.label(),
            run.calls.training,
            run.calls.evaluation,
            expected.training,
            expected.evaluation
        )));
    }
    Ok(run)
}

/// Output layout under the configured directory.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn new(root: &Path) -> Result<Self> {
        for sub in ["cells", "estimators", "datasets"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn cell_csv(&self, hash: &str) -> PathBuf {
        self.root.join("cells").join(format!("{hash}.csv"))
    }

    pub fn cell_json(&self, hash: &str) -> PathBuf {
        self.root.join("cells").join(format!("{hash}.json"))
    }

    pub fn cell_failure(&self, hash: &str) -> PathBuf {
        self.root.join("cells").join(format!("{hash}.failed"))
    }

    pub fn estimator(&self, hash: &str) -> PathBuf {
        self.root.join("estimators").join(format!("{hash}.est"))
    }

    pub fn dataset(&self, benchmark: &str, budget: usize, seed: u64) -> PathBuf {
        self.root
            .join("datasets")
            .join(format!("{benchmark}-b{budget}-s{seed}.ds"))
    }

    pub fn coverage_csv(&self) -> PathBuf {
        self.root.join("coverage.csv")
    }
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial file. Temporary names are unique per call, so workers racing on
/// the same destination each rename a complete file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    static NEXT: AtomicU64 = AtomicU64::new(0);
    let tmp = path.with_extension(format!(
        "{}.tmp{}-{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id(),
        NEXT.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s += &r.to_csv_row();
        s.push('\n');
    }
    s
}

pub fn parse_records_csv(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        other => {
            return Err(HarnessError::Report(format!("unexpected CSV header {other:?}")));
        }
    }
    Ok(lines
        .filter(|l| !l.trim().is_empty())
        .map(CoverageRecord::parse_csv_row)
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Canonical order: benchmark, method, budget, seed, ensemble size, level.
pub fn sort_records(records: &mut [ExperimentRecord]) {
    records.sort_by(|a, b| {
        (&a.benchmark, &a.method, a.budget, a.seed, a.ensemble_size)
            .cmp(&(&b.benchmark, &b.method, b.budget, b.seed, b.ensemble_size))
            .then(a.level.total_cmp(&b.level))
    });
}

/// Runs a cell unless its result file exists, persisting everything it
/// produced. Returns whether the cell was computed.
pub fn run_cell_cached(cfg: &ExperimentConfig, out: &OutputDir, cell: &Cell, progress: &Progress) -> Result<bool> {
    let hash = cell_hash(cfg, cell);
    let csv = out.cell_csv(&hash);
    if csv.exists() {
        progress.event("cell_skipped", cell, &hash, serde_json::json!({}));
        return Ok(false);
    }
    progress.event("cell_started", cell, &hash, serde_json::json!({}));
    let start = Instant::now();
    match execute_cell(cfg, cell) {
        Ok(run) => {
            if let Some(est) = &run.estimator {
                write_atomic(&out.estimator(&hash), &est.to_bytes())?;
            }
            if let Some(ds) = &run.dataset {
                let path = out.dataset(&cell.benchmark, cell.budget, cell.seed);
                if !path.exists() {
                    write_atomic(&path, &ds.to_bytes())?;
                }
            }
            let summary = serde_json::json!({
                "cell": cell.label(),
                "fingerprint": cell_fingerprint(cfg, cell),
                "training_calls": run.calls.training,
                "evaluation_calls": run.calls.evaluation,
                "records": run.records.len(),
            });
            write_atomic(&out.cell_json(&hash), format!("{summary:#}\n").as_bytes())?;
            write_atomic(&csv, records_to_csv(&run.records).as_bytes())?;
            let _ = fs::remove_file(out.cell_failure(&hash));
            progress.event(
                "cell_done",
                cell,
                &hash,
                serde_json::json!({
                    "seconds": start.elapsed().as_secs_f64(),
                    "training_calls": run.calls.training,
                    "evaluation_calls": run.calls.evaluation,
                }),
            );
            Ok(true)
        }
        Err(e) => {
            write_atomic(&out.cell_failure(&hash), format!("{}\n{e}\n", cell.label()).as_bytes())?;
            progress.event(
                "cell_failed",
                cell,
                &hash,
                serde_json::json!({ "error": e.to_string() }),
            );
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub cells: usize,
    pub computed: usize,
    pub skipped: usize,
    pub failed: Vec<(Cell, String)>,
    pub records: Vec<ExperimentRecord>,
}

/// Runs every cell of the matrix on `jobs` workers, then merges the per-cell
/// files of this configuration into a sorted `coverage.csv`. Failed cells are
/// reported in the summary and left out of the merge.
pub fn run_matrix(cfg: &ExperimentConfig, jobs: usize, progress: &Progress) -> Result<RunSummary> {
    cfg.validate()?;
    let out = OutputDir::new(&cfg.out)?;
    let all = cells(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<(Cell, Result<bool>)> = pool.install(|| {
        all.par_iter()
            .map(|c| (c.clone(), run_cell_cached(cfg, &out, c, progress)))
            .collect()
    });

    let mut summary = RunSummary {
        cells: all.len(),
        ..Default::default()
    };
    for (cell, outcome) in outcomes {
        match outcome {
            Ok(true) => summary.computed += 1,
            Ok(false) => summary.skipped += 1,
            Err(e) => summary.failed.push((cell, e.to_string())),
        }
    }
    for cell in &all {
        let path = out.cell_csv(&cell_hash(cfg, cell));
        if path.exists() {
            summary.records.extend(parse_records_csv(&fs::read_to_string(path)?)?);
        }
    }
    sort_records(&mut summary.records);
    write_atomic(&out.coverage_csv(), records_to_csv(&summary.records).as_bytes())?;
    progress.finished(&summary);
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_disjoint_and_budget_keyed() {
        let a = cell_streams(0, "slcp", 0, 1024).unwrap();
        let b = cell_streams(0, "slcp", 0, 2048).unwrap();
        assert!(disjoint(&a.train, &a.test));
        assert!(disjoint(&a.train, &b.train));
        assert_eq!(a.test.seed(), b.test.seed());
        assert!(!disjoint(&a.train, &a.train.child(3)));
    }

    #[test]
    fn hash_tracks_relevant_keys_only() {
        let cfg = ExperimentConfig::default();
        let nre = Cell::new("slcp", "nre", 1024, 0);
        let abc = Cell::new("slcp", "rej-abc", 1024, 0);
        let mut changed = cfg.clone();
        changed.abc_quantile = 0.02;
        assert_eq!(cell_hash(&cfg, &nre), cell_hash(&changed, &nre));
        assert_ne!(cell_hash(&cfg, &abc), cell_hash(&changed, &abc));
        assert_ne!(
            cell_hash(&cfg, &nre),
            cell_hash(&cfg, &Cell::new("slcp", "nre", 1024, 1))
        );
        assert_eq!(cell_hash(&cfg, &nre).len(), 32);
    }

    #[test]
    fn matrix_enumeration() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cells(&cfg).len(), 3 * 3 * 7 * 5);
    }

    #[test]
    fn sorted_csv_round_trip() {
        let r = |m: &str, budget, level| CoverageRecord {
            benchmark: "slcp".into(),
            method: m.into(),
            budget,
            seed: 0,
            ensemble_size: 1,
            level,
            empirical: 0.5,
            ci_halfwidth: 0.01,
            n_eval: 100,
        };
        let mut v = vec![
            r("nre", 1024, 0.5),
            r("nre", 128, 0.9),
            r("nre", 128, 0.1),
            r("npe", 4096, 0.5),
        ];
        sort_records(&mut v);
        let order: Vec<_> = v.iter().map(|x| (x.method.as_str(), x.budget)).collect();
        assert_eq!(order, [("npe", 4096), ("nre", 128), ("nre", 128), ("nre", 1024)]);
        assert_eq!(parse_records_csv(&records_to_csv(&v)).unwrap(), v);
        assert!(parse_records_csv("a,b\n").is_err());
    }
}
