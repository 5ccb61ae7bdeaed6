use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sbicov_core::coverage::{empirical_expected_coverage, CoverageOptions, CoverageRecord};
use sbicov_core::inference::{simulate_training_set, Estimator};
use sbicov_core::{sample_joint, Benchmark, PosteriorEstimator, RngStream};
use sbicov_harness::acceptance::{run_criterion, CRITERIA};
use sbicov_harness::matrix::{cell_streams, parse_records_csv, records_to_csv, train_amortized, OutputDir};
use sbicov_harness::{
    cell_hash, emit_plotdata, is_amortized, run_matrix, Cell, ExperimentConfig, Filter, HarnessError, PlotKind,
    Progress,
};

#[derive(Parser)]
#[command(
    name = "sbicov",
    version,
    about = "Expected-coverage experiments for simulation-based inference"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and save the training set of every amortized cell.
    Simulate,
    /// Train the estimator of one amortized cell and save it.
    Train {
        #[arg(long)]
        benchmark: String,
        #[arg(long)]
        method: String,
        #[arg(long)]
        budget: usize,
        /// Seed index of the cell.
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Evaluate the expected coverage of a saved estimator; CSV on stdout.
    Coverage {
        #[arg(long)]
        estimator: PathBuf,
        #[arg(long)]
        n_eval: Option<usize>,
        /// Posterior samples per test pair.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run the whole matrix, skipping cells already on disk.
    Run,
    /// Write a plot table derived from a coverage CSV.
    Report {
        /// coverage-curves, ensemble-compare or size-sweep.
        #[arg(long)]
        kind: String,
        /// Coverage CSV (default: `<out>/coverage.csv`).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Destination file (default: stdout).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        benchmark: Option<String>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Run the acceptance suite and print one verdict per criterion.
    Validate {
        #[arg(long)]
        criterion: Option<u8>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn failure(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli.common) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    if cli.common.jobs == 0 {
        return usage("--jobs must be at least 1");
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.jobs)
        .build_global()
    {
        return failure(e);
    }
    let result = match cli.command {
        Command::Simulate => simulate(&cfg),
        Command::Train {
            benchmark,
            method,
            budget,
            index,
        } => train(&cfg, &Cell::new(&benchmark, &method, budget, index)),
        Command::Coverage {
            estimator,
            n_eval,
            samples,
        } => coverage(
            &cfg,
            &estimator,
            n_eval.unwrap_or(cfg.n_eval),
            samples.unwrap_or(cfg.samples),
        ),
        Command::Run => match run_matrix(&cfg, cli.common.jobs, &Progress::Stderr) {
            Ok(s) if s.failed.is_empty() => Ok(()),
            Ok(s) => Err(HarnessError::CellsFailed {
                failed: s.failed.len(),
                total: s.cells,
            }),
            Err(e) => Err(e),
        },
        Command::Report {
            kind,
            input,
            output,
            benchmark,
            method,
            budget,
        } => report(
            &cfg,
            &kind,
            input,
            output,
            Filter {
                benchmark,
                method,
                budget,
            },
        ),
        Command::Validate { criterion } => return validate(criterion),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ HarnessError::Config(_)) => usage(e),
        Err(e) => failure(e),
    }
}

fn simulate(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let out = OutputDir::new(&cfg.out)?;
    for b in &cfg.benchmarks {
        let bm = Benchmark::from_id(b)?;
        for &budget in &cfg.budgets {
            for seed in 0..cfg.seeds as u64 {
                let path = out.dataset(b, budget, seed);
                if path.exists() {
                    continue;
                }
                let streams = cell_streams(cfg.base_seed, b, seed, budget)?;
                simulate_training_set(&bm, budget, &streams.train)?.save(&path)?;
                eprintln!(
                    "{}",
                    serde_json::json!({"event": "dataset_saved", "path": path.display().to_string()})
                );
            }
        }
    }
    Ok(())
}

fn train(cfg: &ExperimentConfig, cell: &Cell) -> Result<(), HarnessError> {
    if !is_amortized(&cell.method) || !sbicov_harness::METHODS.contains(&cell.method.as_str()) {
        return Err(HarnessError::Config(format!(
            "{} is not an amortized method; non-amortized methods run per observation inside `run`",
            cell.method
        )));
    }
    let out = OutputDir::new(&cfg.out)?;
    let bm = Benchmark::from_id(&cell.benchmark)?;
    let streams = cell_streams(cfg.base_seed, &cell.benchmark, cell.seed, cell.budget)?;
    let path = out.dataset(&cell.benchmark, cell.budget, cell.seed);
    let ds = if path.exists() {
        sbicov_core::Dataset::load(&path)?
    } else {
        let ds = simulate_training_set(&bm, cell.budget, &streams.train)?;
        ds.save(&path)?;
        ds
    };
    let members = if cell.method == "sweep-nre" {
        cfg.sweep_members()
    } else {
        cfg.ensemble_size
    };
    let mut est = train_amortized(&bm, &cell.method, &ds, members, &cfg.train, &streams.train)?;
    est.set_meta(sbicov_core::EstimatorMeta::new(
        cell.method.clone(),
        cell.benchmark.clone(),
        cell.budget,
        cell.seed,
    ));
    let dest = out.estimator(&cell_hash(cfg, cell));
    est.save(&dest)?;
    println!("{}", dest.display());
    Ok(())
}

fn coverage(cfg: &ExperimentConfig, path: &std::path::Path, n_eval: usize, samples: usize) -> Result<(), HarnessError> {
    let est = Estimator::load(path)?;
    if est.observation().is_some() {
        return Err(HarnessError::Config(
            "the estimator was fit to a single observation; its coverage is computed inside `run`".into(),
        ));
    }
    let meta = est.meta().clone();
    let bm = Benchmark::from_id(&meta.benchmark)?;
    let test_rng = RngStream::new(cfg.base_seed)
        .child_named(&meta.benchmark)
        .child_named("coverage-command");
    let test = sample_joint(&bm, n_eval, &test_rng.child_named("pairs"))?;
    let opts = CoverageOptions {
        samples,
        tie_break: cfg.tie_break,
    };
    let curve = empirical_expected_coverage(&est, &test, &cfg.levels, &opts, &test_rng.child_named("coverage"))?;
    let size = match &est {
        Estimator::Ensemble(e) => e.len(),
        _ => 1,
    };
    let records = CoverageRecord::from_curve(&curve, &meta.benchmark, &meta.method, meta.budget, meta.seed, size);
    print!("{}", records_to_csv(&records));
    Ok(())
}

fn report(
    cfg: &ExperimentConfig,
    kind: &str,
    input: Option<PathBuf>,
    output: Option<PathBuf>,
    filter: Filter,
) -> Result<(), HarnessError> {
    let kind = PlotKind::from_id(kind).map_err(|e| HarnessError::Config(e.to_string()))?;
    let input = input.unwrap_or_else(|| cfg.out.join("coverage.csv"));
    let records = parse_records_csv(&std::fs::read_to_string(&input)?)?;
    let table = emit_plotdata(&records, kind, &filter)?;
    match output {
        Some(p) => std::fs::write(p, table)?,
        None => print!("{table}"),
    }
    Ok(())
}

fn validate(criterion: Option<u8>) -> ExitCode {
    let ids: Vec<u8> = match criterion {
        Some(c) if CRITERIA.iter().any(|(i, _)| *i == c) => vec![c],
        Some(c) => return usage(format!("no criterion {c}; criteria are 1 to {}", CRITERIA.len())),
        None => CRITERIA.iter().map(|(i, _)| *i).collect(),
    };
    let mut all = true;
    for id in ids {
        let r = run_criterion(id);
        println!("{r}");
        all &= r.passed;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
