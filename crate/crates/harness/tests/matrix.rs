use std::fs;

use sbicov_core::coverage::{coverage_indicators, CoverageOptions, TieBreak};
use sbicov_core::inference::{
    simulate_training_set, train_ensemble, EnsembleEstimator, EnsembleKind, Estimator, MemberMethod,
};
use sbicov_core::nn::TrainConfig;
use sbicov_core::{sample_joint, Benchmark, RngStream};
use sbicov_harness::matrix::{cell_streams, parse_records_csv, OutputDir};
use sbicov_harness::sweep::subset_coverage;
use sbicov_harness::{
    build_ensemble_cell, cell_hash, execute_cell, expected_calls, run_matrix, Cell, ExperimentConfig, Progress,
};

fn small(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "benchmarks = gaussian\n\
         methods = nre\n\
         budgets = 128\n\
         seeds = 1\n\
         n_eval = 100\n\
         n_obs = 10\n\
         samples = 200\n\
         epochs = 3\n\
         hidden = 16, 16\n\
         ensemble_size = 2\n\
         out = {}\n",
        out.display()
    ))
    .unwrap()
}

fn tiny_train() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        hidden: vec![16, 16],
        ..TrainConfig::default()
    }
}

#[test]
fn single_cell_yields_one_record_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let summary = run_matrix(&cfg, 1, &Progress::Silent).unwrap();
    assert_eq!((summary.cells, summary.computed, summary.skipped), (1, 1, 0));
    assert_eq!(summary.records.len(), cfg.levels.len());
    let merged = parse_records_csv(&fs::read_to_string(dir.path().join("coverage.csv")).unwrap()).unwrap();
    assert_eq!(merged, summary.records);
    let hash = cell_hash(&cfg, &Cell::new("gaussian", "nre", 128, 0));
    let out = OutputDir::new(dir.path()).unwrap();
    assert!(out.estimator(&hash).exists());
    assert!(out.cell_json(&hash).exists());
    assert!(out.dataset("gaussian", 128, 0).exists());
}

#[test]
fn rerun_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    run_matrix(&cfg, 1, &Progress::Silent).unwrap();
    let first = fs::read(dir.path().join("coverage.csv")).unwrap();
    let again = run_matrix(&cfg, 1, &Progress::Silent).unwrap();
    assert_eq!((again.computed, again.skipped), (0, 1));
    assert_eq!(fs::read(dir.path().join("coverage.csv")).unwrap(), first);
}

#[test]
fn failing_cell_is_recorded_and_the_rest_completes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    // A population larger than the budget cannot be simulated.
    cfg.methods = vec!["nre".into(), "smc-abc".into()];
    cfg.smc_population = 1000;
    let summary = run_matrix(&cfg, 2, &Progress::Silent).unwrap();
    assert_eq!(summary.failed.len(), 1);
    assert_eq!(summary.failed[0].0.method, "smc-abc");
    assert_eq!(summary.records.len(), cfg.levels.len());
    let out = OutputDir::new(dir.path()).unwrap();
    assert!(out
        .cell_failure(&cell_hash(&cfg, &Cell::new("gaussian", "smc-abc", 128, 0)))
        .exists());
}

#[test]
fn ensemble_cell_reports_members_and_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.methods = vec!["ensemble-nre".into()];
    cfg.ensemble_size = 5;
    let cell = Cell::new("gaussian", "ensemble-nre", 128, 0);
    let run = execute_cell(&cfg, &cell).unwrap();
    assert_eq!(run.records.len(), 6 * cfg.levels.len());
    assert_eq!(
        run.records.iter().filter(|r| r.ensemble_size == 5).count(),
        cfg.levels.len()
    );
    for i in 0..5 {
        let name = format!("ensemble-nre:m{i}");
        assert_eq!(
            run.records.iter().filter(|r| r.method == name).count(),
            cfg.levels.len()
        );
    }
    assert_eq!(run.calls, expected_calls(&cfg, &cell));
}

#[test]
fn identical_members_reproduce_the_member_curve() {
    let bm = Benchmark::from_id("gaussian").unwrap();
    let root = RngStream::new(31);
    let ds = simulate_training_set(&bm, 256, &root.child(0)).unwrap();
    let single = train_ensemble(
        &bm,
        &ds,
        1,
        EnsembleKind::Independent,
        MemberMethod::Nre,
        &tiny_train(),
        &root.child(1),
    )
    .unwrap();
    let member = single.members()[0].clone();
    let ens = EnsembleEstimator::new(vec![member.clone(), member.clone(), member], EnsembleKind::Independent).unwrap();
    let test = sample_joint(&bm, 200, &root.child(2)).unwrap();
    let cfg = ExperimentConfig::default();
    let opts = CoverageOptions {
        samples: 500,
        tie_break: TieBreak::Randomized,
    };
    let records = build_ensemble_cell(
        &ens,
        3,
        &Cell::new("gaussian", "ensemble-nre", 256, 0),
        &test,
        &cfg.levels,
        &opts,
        &root.child(3),
    )
    .unwrap();
    let curve = |m: &str| {
        records
            .iter()
            .filter(|r| r.method == m)
            .map(|r| r.empirical)
            .collect::<Vec<_>>()
    };
    let ensemble = curve("ensemble-nre");
    for i in 0..3 {
        let member = curve(&format!("ensemble-nre:m{i}"));
        // Averaging equal densities can differ from the member in the last
        // bit, which may flip a handful of draws.
        for (a, b) in ensemble.iter().zip(&member) {
            assert!((a - b).abs() <= 0.01, "{ensemble:?} vs {member:?}");
        }
    }
    assert!(build_ensemble_cell(
        &ens,
        4,
        &Cell::new("gaussian", "ensemble-nre", 256, 0),
        &test,
        &cfg.levels,
        &opts,
        &root.child(3)
    )
    .is_err());
}

#[test]
fn shared_grid_sweep_matches_per_subset_ensembles() {
    let bm = Benchmark::from_id("slcp").unwrap();
    let root = RngStream::new(32);
    let ds = simulate_training_set(&bm, 512, &root.child(0)).unwrap();
    let ens = train_ensemble(
        &bm,
        &ds,
        4,
        EnsembleKind::Independent,
        MemberMethod::Nre,
        &tiny_train(),
        &root.child(1),
    )
    .unwrap();
    let test = sample_joint(&bm, 20, &root.child(2)).unwrap();
    let levels = vec![0.2, 0.5, 0.8, 0.95];
    let opts = CoverageOptions {
        samples: 200,
        tie_break: TieBreak::Randomized,
    };
    let subsets = vec![vec![0], vec![1, 2], vec![0, 1, 2, 3]];
    let rng = root.child(3);
    let fast = subset_coverage(&ens, &subsets, &test, &levels, &opts, &rng).unwrap();
    for (k, subset) in subsets.iter().enumerate() {
        let members: Vec<Estimator> = subset.iter().map(|j| ens.members()[*j].clone()).collect();
        let e = EnsembleEstimator::new(members, EnsembleKind::Independent).unwrap();
        let r = rng.child(k as u64);
        for (i, s) in test.samples.iter().enumerate() {
            let direct = coverage_indicators(&e, &s.x, &s.theta, &levels, &opts, &mut r.child(i as u64)).unwrap();
            assert_eq!(fast[k][i], direct, "subset {k}, pair {i}");
        }
    }
}

#[test]
fn sweep_cell_reports_every_size() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.methods = vec!["sweep-nre".into()];
    cfg.sweep_sizes = vec![1, 2, 4];
    let cell = Cell::new("gaussian", "sweep-nre", 128, 0);
    let run = execute_cell(&cfg, &cell).unwrap();
    assert_eq!(run.records.len(), 3 * cfg.levels.len());
    for (size, groups) in [(1, 4), (2, 2), (4, 1)] {
        let r = run.records.iter().find(|r| r.ensemble_size == size).unwrap();
        assert_eq!(r.n_eval, groups * cfg.n_eval);
    }
}

#[test]
fn non_amortized_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.methods = vec!["rej-abc".into()];
    let cell = Cell::new("gaussian", "rej-abc", 128, 0);
    let run = execute_cell(&cfg, &cell).unwrap();
    assert_eq!(run.calls.training, 128 * 10);
    assert_eq!(run.calls.evaluation, 10);
    assert_eq!(run.records[0].n_eval, 10);
    assert!(run.estimator.is_none());
}

#[test]
fn cell_streams_separate_training_and_test() {
    let a = cell_streams(5, "gaussian", 0, 128).unwrap();
    let b = cell_streams(5, "gaussian", 1, 128).unwrap();
    assert!(sbicov_harness::matrix::disjoint(&a.train, &a.test));
    assert!(sbicov_harness::matrix::disjoint(&a.test, &b.test));
}
