//! The acceptance suite: one check per criterion, each returning a verdict
//! with a one-line summary of the measured quantities.
//!
//! Sample sizes are fixed here. Criteria whose full-size run takes hours on
//! one core (5, 6 and 11) use fewer test pairs and self samples; their
//! tolerances are unchanged.

use std::fmt;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use sbicov_core::coverage::{
    coverage_indicators, default_levels, empirical_expected_coverage, grid_hpd_indicators, CoverageCurve,
    CoverageOptions, TieBreak,
};
use sbicov_core::inference::{
    rejection_abc, simulate_training_set, smc_abc, train_ensemble, train_npe, train_nre, AcceptRule, DiscreteToy,
    EnsembleKind, MemberMethod,
};
use sbicov_core::nn::{bce_with_logits, mdn_head_len, mdn_nll_grad, Mlp, TrainConfig};
use sbicov_core::simulators::gaussian_true_posterior;
use sbicov_core::{sample_joint, Benchmark, BenchmarkKind, PosteriorEstimator, PriorEstimator, RngStream};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::matrix::{execute_cell, expected_calls, run_matrix, Cell};
use crate::progress::Progress;

/// Root seed of every acceptance run.
pub const ACCEPTANCE_SEED: u64 = 20_220_613;

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "oracle calibration"),
    (2, "prior-estimator calibration"),
    (3, "direction test"),
    (4, "ensemble averaging identity"),
    (5, "ensembles cover at least as well as their members"),
    (6, "coverage nondecreasing in ensemble size"),
    (7, "ABC exactness on a discrete model"),
    (8, "ratio estimator fidelity"),
    (9, "numerics"),
    (10, "simulation accounting"),
    (11, "determinism"),
];

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] C{} {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn stream(id: u8) -> RngStream {
    RngStream::new(ACCEPTANCE_SEED).child(u64::from(id))
}

/// Largest `|empirical - level| / ci` over the levels, and whether every
/// deviation is below two half-widths.
fn calibrated(curve: &CoverageCurve) -> (bool, f64) {
    let worst = curve
        .levels
        .iter()
        .zip(curve.empirical.iter().zip(&curve.ci_halfwidths))
        .map(|(l, (e, c))| (e - l).abs() / c)
        .fold(0.0, f64::max);
    (worst < 2.0, worst)
}

fn opts(samples: usize) -> CoverageOptions {
    CoverageOptions {
        samples,
        tie_break: TieBreak::Randomized,
    }
}

fn c1() -> Result<(bool, String)> {
    let rng = stream(1);
    let bm = Benchmark::new(BenchmarkKind::Gaussian);
    let test = sample_joint(&bm, 2000, &rng.child_named("pairs"))?;
    let curve = empirical_expected_coverage(
        &gaussian_true_posterior(),
        &test,
        &default_levels(),
        &opts(2000),
        &rng.child_named("coverage"),
    )?;
    let (ok, worst) = calibrated(&curve);
    Ok((
        ok,
        format!("max |empirical - nominal| = {worst:.2} CI over 19 levels (n_eval 2000, m 2000)"),
    ))
}

fn c2() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [BenchmarkKind::Slcp, BenchmarkKind::Gaussian] {
        let rng = stream(2).child_named(kind.id());
        let bm = Benchmark::new(kind);
        let est = PriorEstimator::new(bm.id(), bm.prior().clone());
        let test = sample_joint(&bm, 2000, &rng.child_named("pairs"))?;
        let curve = empirical_expected_coverage(
            &est,
            &test,
            &default_levels(),
            &opts(2000),
            &rng.child_named("coverage"),
        )?;
        let (pass, worst) = calibrated(&curve);
        ok &= pass;
        parts.push(format!("{} {worst:.2} CI", kind.id()));
    }
    Ok((ok, format!("max deviation: {}", parts.join(", "))))
}

fn c3() -> Result<(bool, String)> {
    let rng = stream(3);
    let bm = Benchmark::new(BenchmarkKind::Gaussian);
    let test = sample_joint(&bm, 2000, &rng.child_named("pairs"))?;
    let levels = default_levels();
    let narrow = empirical_expected_coverage(
        &gaussian_true_posterior().with_std_scale(0.5),
        &test,
        &levels,
        &opts(2000),
        &rng.child_named("narrow"),
    )?;
    let wide = empirical_expected_coverage(
        &gaussian_true_posterior().with_std_scale(2.0),
        &test,
        &levels,
        &opts(2000),
        &rng.child_named("wide"),
    )?;
    let mut ok = true;
    let (mut narrow_margin, mut wide_margin) = (f64::INFINITY, f64::INFINITY);
    for (i, l) in levels.iter().enumerate() {
        if *l < 0.2 - 1e-9 || *l > 0.9 + 1e-9 {
            continue;
        }
        let nm = (l - narrow.empirical[i]) / narrow.ci_halfwidths[i];
        let wm = (wide.empirical[i] - l) / wide.ci_halfwidths[i];
        ok &= nm > 2.0 && wm > 2.0;
        narrow_margin = narrow_margin.min(nm);
        wide_margin = wide_margin.min(wm);
    }
    Ok((
        ok,
        format!("on [0.2, 0.9]: std x0.5 at least {narrow_margin:.1} CI below nominal, std x2 at least {wide_margin:.1} CI above"),
    ))
}

fn c4() -> Result<(bool, String)> {
    let rng = stream(4);
    let bm = Benchmark::new(BenchmarkKind::Slcp);
    let ds = simulate_training_set(&bm, 1024, &rng)?;
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let ens = train_ensemble(
        &bm,
        &ds,
        5,
        EnsembleKind::Independent,
        MemberMethod::Nre,
        &cfg,
        &rng.child_named("members"),
    )?;
    let mut r = rng.child_named("points");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let theta = bm.prior().sample(&mut r);
        let other = bm.prior().sample(&mut r);
        let x = bm.simulate(&other, &mut r)?;
        let a = ens.log_density(&theta, &x)?;
        let b = ens.ratio_averaged_log_posterior(&theta, &x)?;
        worst = worst.max((a - b).abs());
    }
    Ok((
        worst < 1e-9,
        format!("max |density-averaged - ratio-averaged| = {worst:.2e} over 1000 points"),
    ))
}

/// Shared settings of the ensemble criteria.
fn ensemble_config(id: u8) -> ExperimentConfig {
    ExperimentConfig {
        benchmarks: vec!["slcp".into()],
        budgets: vec![1024],
        base_seed: ACCEPTANCE_SEED + u64::from(id),
        ..ExperimentConfig::default()
    }
}

fn c5() -> Result<(bool, String)> {
    let cfg = ExperimentConfig {
        methods: vec!["ensemble-nre".into()],
        n_eval: 500,
        samples: 500,
        ..ensemble_config(5)
    };
    let runs = (0..5u64)
        .map(|seed| execute_cell(&cfg, &Cell::new("slcp", "ensemble-nre", 1024, seed)))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<_> = runs.into_iter().flat_map(|r| r.records).collect();
    let mut good = 0;
    let mut gaps = Vec::new();
    for l in &cfg.levels {
        let at = |pred: &dyn Fn(&str) -> bool| -> f64 {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| (r.level - l).abs() < 1e-9 && pred(&r.method))
                .map(|r| r.empirical)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let ensemble = at(&|m| m == "ensemble-nre");
        let members = at(&|m| m.starts_with("ensemble-nre:"));
        if ensemble >= members - 0.01 {
            good += 1;
        }
        gaps.push(ensemble - members);
    }
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    Ok((
        good >= 17,
        format!("ensemble >= mean member - 0.01 at {good}/19 levels; gap mean {mean_gap:+.3}, min {min_gap:+.3} (5 seeds, n_eval 500, m 500)"),
    ))
}

fn c6() -> Result<(bool, String)> {
    let cfg = ExperimentConfig {
        methods: vec!["sweep-nre".into()],
        n_eval: 2000,
        samples: 500,
        ..ensemble_config(6)
    };
    let run = execute_cell(&cfg, &Cell::new("slcp", "sweep-nre", 1024, 0))?;
    let at: Vec<(usize, f64)> = cfg
        .sweep_sizes
        .iter()
        .map(|s| {
            let r = run
                .records
                .iter()
                .find(|r| r.ensemble_size == *s && (r.level - 0.8).abs() < 1e-9)
                .expect("every size is reported at 0.8");
            (*s, r.empirical)
        })
        .collect();
    let ok = at.windows(2).all(|w| w[1].1 >= w[0].1 - 0.01);
    let shown: Vec<String> = at.iter().map(|(s, e)| format!("{s}:{e:.3}")).collect();
    Ok((
        ok,
        format!(
            "coverage at 0.8 by size {} (20 members, n_eval 2000, m 500)",
            shown.join(" ")
        ),
    ))
}

/// Total variation between weighted discrete points and `[p(0), p(1)]`.
fn toy_tv(points: &[Vec<f64>], weights: &[f64], exact: [f64; 2]) -> f64 {
    let p0: f64 = points
        .iter()
        .zip(weights)
        .filter(|(p, _)| p[0] == 0.0)
        .map(|(_, w)| w)
        .sum();
    let total: f64 = weights.iter().sum();
    let p0 = p0 / total;
    0.5 * ((p0 - exact[0]).abs() + ((1.0 - p0) - exact[1]).abs())
}

fn c7() -> Result<(bool, String)> {
    let rng = stream(7);
    let toy = DiscreteToy::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for x in [0.0, 1.0] {
        let exact = toy.posterior(x);
        let rej = rejection_abc(
            &toy,
            &[x],
            40_000,
            AcceptRule::Threshold(0.0),
            &rng.child(x as u64).child_named("rejection"),
        )?;
        let tv_rej = toy_tv(rej.points(), rej.weights(), exact);
        let smc = smc_abc(
            &toy,
            &[x],
            200_000,
            10_000,
            0.5,
            &rng.child(x as u64).child_named("smc"),
        )?;
        let post = &smc.posterior;
        let tv_smc = toy_tv(post.points(), post.weights(), exact);
        let accepted = rej.points().len().min(post.points().len());
        ok &= tv_rej < 0.05 && tv_smc < 0.05 && accepted >= 10_000 && post.epsilon() == 0.0;
        parts.push(format!(
            "x={x}: rejection TV {tv_rej:.4} ({} accepted), SMC TV {tv_smc:.4} ({} particles, eps {})",
            rej.points().len(),
            post.points().len(),
            post.epsilon()
        ));
    }
    Ok((ok, parts.join("; ")))
}

/// `log p(x | theta) - log p(x)` for the Gaussian model, with
/// `x ~ N(0, I + 11^T)` marginally.
fn gaussian_log_ratio(theta: f64, x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let ll: f64 =
        x.iter().map(|v| -0.5 * (v - theta).powi(2)).sum::<f64>() - 0.5 * d * (2.0 * std::f64::consts::PI).ln();
    let s: f64 = x.iter().sum();
    let quad = x.iter().map(|v| v * v).sum::<f64>() - s * s / (d + 1.0);
    let lm = -0.5 * quad - 0.5 * (d + 1.0).ln() - 0.5 * d * (2.0 * std::f64::consts::PI).ln();
    ll - lm
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn c8() -> Result<(bool, String)> {
    let rng = stream(8);
    let bm = Benchmark::new(BenchmarkKind::Gaussian);
    let ds = simulate_training_set(&bm, 1 << 13, &rng.child_named("train"))?;
    let (est, _) = train_nre(&bm, &ds, &TrainConfig::default(), &rng.child_named("fit"))?;
    let held_out = sample_joint(&bm, 1000, &rng.child_named("held-out"))?;
    let learned = held_out
        .samples
        .iter()
        .map(|s| est.log_ratio(&s.theta, &s.x))
        .collect::<sbicov_core::Result<Vec<_>>>()?;
    let analytic: Vec<f64> = held_out
        .samples
        .iter()
        .map(|s| gaussian_log_ratio(s.theta[0], &s.x))
        .collect();
    let r = pearson(&learned, &analytic);
    let test = sample_joint(&bm, 2000, &rng.child_named("test"))?;
    let curve = empirical_expected_coverage(
        &est,
        &test,
        &default_levels(),
        &opts(2000),
        &rng.child_named("coverage"),
    )?;
    let worst = curve
        .levels
        .iter()
        .zip(&curve.empirical)
        .map(|(l, e)| (e - l).abs())
        .fold(0.0, f64::max);
    Ok((
        r > 0.95 && worst < 0.1,
        format!("log-ratio correlation {r:.4} over 1000 held-out pairs; max |coverage - nominal| {worst:.3}"),
    ))
}

/// Largest relative error between analytic and central-difference
/// gradients of `loss` with respect to every network parameter.
fn mlp_gradient_error(net: &Mlp, analytic: &Mlp, loss: &dyn Fn(&Mlp) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut check = |an: f64, fd: f64| {
        let scale = an.abs().max(fd.abs());
        if scale > 1e-7 {
            worst = worst.max((an - fd).abs() / scale);
        }
    };
    for l in 0..net.layers.len() {
        for idx in 0..net.layers[l].weight.len() {
            let (r, c) = (idx / net.layers[l].inputs(), idx % net.layers[l].inputs());
            let (mut p, mut m) = (net.clone(), net.clone());
            p.layers[l].weight[[r, c]] += h;
            m.layers[l].weight[[r, c]] -= h;
            check(analytic.layers[l].weight[[r, c]], (loss(&p) - loss(&m)) / (2.0 * h));
        }
        for o in 0..net.layers[l].outputs() {
            let (mut p, mut m) = (net.clone(), net.clone());
            p.layers[l].bias[o] += h;
            m.layers[l].bias[o] -= h;
            check(analytic.layers[l].bias[o], (loss(&p) - loss(&m)) / (2.0 * h));
        }
    }
    worst
}

/// Gradient checks of the dense/SELU stack under a linear probe, the
/// classifier loss and the mixture-density head.
fn gradient_checks(rng: &mut RngStream) -> Result<Vec<(&'static str, f64)>> {
    let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(-2.0..2.0));
    let mut out = Vec::new();

    let net = Mlp::new(&[3, 5, 4, 2], rng);
    let probe = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
    let linear = |n: &Mlp| (n.forward_batch(x.view()).expect("shape") * &probe).sum();
    let grad = net.backward(&net.forward_recorded(x.view())?, probe.view());
    out.push(("dense+selu", mlp_gradient_error(&net, &grad, &linear)));

    let net = Mlp::new(&[3, 5, 1], rng);
    let labels = Array2::from_shape_fn((6, 1), |(i, _)| (i % 2) as f64);
    let bce = |n: &Mlp| bce_with_logits(n.forward_batch(x.view()).expect("shape").view(), labels.view()).0;
    let tape = net.forward_recorded(x.view())?;
    let (_, up) = bce_with_logits(tape.output.view(), labels.view());
    out.push((
        "logistic loss",
        mlp_gradient_error(&net, &net.backward(&tape, up.view()), &bce),
    ));

    let (k, d) = (3, 2);
    let net = Mlp::new(&[3, 5, mdn_head_len(k, d)], rng);
    let thetas = Array2::from_shape_fn((6, d), |_| rng.random_range(-1.5..1.5));
    let nll = |n: &Mlp| mdn_nll_grad(n.forward_batch(x.view()).expect("shape").view(), thetas.view(), k).0;
    let tape = net.forward_recorded(x.view())?;
    let (_, up) = mdn_nll_grad(tape.output.view(), thetas.view(), k);
    out.push((
        "mixture head",
        mlp_gradient_error(&net, &net.backward(&tape, up.view()), &nll),
    ));
    Ok(out)
}

/// Midpoint-rule integral of `exp(log_density)` over a box in one or two
/// dimensions.
fn quadrature(log_density: &(dyn Fn(&[f64]) -> f64 + Sync), low: &[f64], high: &[f64], n: usize) -> f64 {
    let h: Vec<f64> = low.iter().zip(high).map(|(l, u)| (u - l) / n as f64).collect();
    match low.len() {
        1 => (0..n)
            .map(|i| log_density(&[low[0] + (i as f64 + 0.5) * h[0]]).exp() * h[0])
            .sum(),
        2 => (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let t = [low[0] + (i as f64 + 0.5) * h[0], low[1] + (j as f64 + 0.5) * h[1]];
                        log_density(&t).exp() * h[0] * h[1]
                    })
                    .sum::<f64>()
            })
            .sum(),
        d => panic!("quadrature in {d} dimensions"),
    }
}

fn c9() -> Result<(bool, String)> {
    let rng = stream(9);
    let mut parts = Vec::new();
    let mut ok = true;

    let grads = gradient_checks(&mut rng.child_named("gradients"))?;
    for (_, err) in &grads {
        ok &= *err < 1e-4;
    }
    parts.push(format!(
        "gradient rel. err {}",
        grads
            .iter()
            .map(|(n, e)| format!("{n} {e:.1e}"))
            .collect::<Vec<_>>()
            .join(", ")
    ));

    let slcp = Benchmark::new(BenchmarkKind::Slcp);
    let gauss = Benchmark::new(BenchmarkKind::Gaussian);
    let cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    let slcp_ds = simulate_training_set(&slcp, 4096, &rng.child_named("slcp"))?;
    let (slcp_npe, _) = train_npe(&slcp, &slcp_ds, &cfg, &rng.child_named("slcp-fit"))?;
    let gauss_ds = simulate_training_set(&gauss, 1024, &rng.child_named("gaussian"))?;
    let (gauss_npe, _) = train_npe(&gauss, &gauss_ds, &cfg, &rng.child_named("gaussian-fit"))?;
    let x_slcp = slcp.simulate(&[0.7, -1.2], &mut rng.child_named("x-slcp"))?;
    let x_gauss = gauss.simulate(&[0.4], &mut rng.child_named("x-gauss"))?;

    let slcp_abc = rejection_abc(
        &slcp,
        &x_slcp,
        10_000,
        AcceptRule::Quantile(0.01),
        &rng.child_named("slcp-abc"),
    )?;
    let gauss_abc = rejection_abc(
        &gauss,
        &x_gauss,
        10_000,
        AcceptRule::Quantile(0.01),
        &rng.child_named("gaussian-abc"),
    )?;

    let mut integrals = Vec::new();
    let (sl, sh) = slcp.prior().bounding_box();
    let (gl, gh) = gauss.prior().bounding_box();
    integrals.push((
        "MDN 1D",
        quadrature(&|t| gauss_npe.log_density(t, &x_gauss).unwrap(), &gl, &gh, 20_000),
    ));
    integrals.push((
        "MDN 2D",
        quadrature(&|t| slcp_npe.log_density(t, &x_slcp).unwrap(), &sl, &sh, 600),
    ));
    integrals.push((
        "KDE 1D",
        quadrature(&|t| gauss_abc.log_density(t, &x_gauss).unwrap(), &gl, &gh, 20_000),
    ));
    integrals.push((
        "KDE 2D",
        quadrature(&|t| slcp_abc.log_density(t, &x_slcp).unwrap(), &sl, &sh, 600),
    ));
    for (_, v) in &integrals {
        ok &= (v - 1.0).abs() < 1e-3;
    }
    parts.push(format!(
        "integrals {}",
        integrals
            .iter()
            .map(|(n, v)| format!("{n} {v:.5}"))
            .collect::<Vec<_>>()
            .join(", ")
    ));

    // Sample-quantile regions against grid regions on the same density.
    let pairs = sample_joint(&slcp, 100, &rng.child_named("hpd-pairs"))?;
    let levels = default_levels();
    let sample_opts = CoverageOptions {
        samples: 10_000,
        tie_break: TieBreak::Inclusive,
    };
    let hpd_rng = rng.child_named("hpd");
    let agreements = pairs
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let a = coverage_indicators(
                &slcp_npe,
                &s.x,
                &s.theta,
                &levels,
                &sample_opts,
                &mut hpd_rng.child(i as u64),
            )?;
            let b = grid_hpd_indicators(&slcp_npe, &s.x, &s.theta, &levels, 200)?;
            Ok(a.iter().zip(&b).filter(|(p, q)| p == q).count())
        })
        .collect::<sbicov_core::Result<Vec<usize>>>()?;
    let agreement = agreements.iter().sum::<usize>() as f64 / (pairs.len() * levels.len()) as f64;
    ok &= agreement >= 0.98;
    parts.push(format!(
        "HPD sample/grid agreement {:.2}% (m 10000, grid 200x200)",
        100.0 * agreement
    ));
    Ok((ok, parts.join("; ")))
}

fn c10() -> Result<(bool, String)> {
    let base = ExperimentConfig {
        benchmarks: vec!["gaussian".into()],
        budgets: vec![128],
        n_eval: 100,
        n_obs: 10,
        samples: 200,
        ensemble_size: 2,
        smc_population: 50,
        snre_rounds: 2,
        train: TrainConfig {
            epochs: 3,
            hidden: vec![16, 16],
            ..TrainConfig::default()
        },
        base_seed: ACCEPTANCE_SEED + 10,
        ..ExperimentConfig::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (bench, method) in [
        ("gaussian", "nre"),
        ("gaussian", "npe"),
        ("gaussian", "ensemble-nre"),
        ("gaussian", "bagged-nre"),
        ("gaussian", "rej-abc"),
        ("gaussian", "smc-abc"),
        ("gaussian", "snre"),
        ("slcp", "rej-abc"),
        ("mg1", "nre"),
    ] {
        let cell = Cell::new(bench, method, 128, 0);
        let want = expected_calls(&base, &cell);
        match execute_cell(&base, &cell) {
            Ok(run) => {
                ok &= run.calls == want;
                parts.push(format!(
                    "{bench}/{method} {}+{}",
                    run.calls.training, run.calls.evaluation
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{bench}/{method} failed: {e}"));
            }
        }
    }
    Ok((ok, format!("training+evaluation calls: {}", parts.join(", "))))
}

/// The desk matrix with reduced evaluation sizes.
pub fn desk_matrix(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        benchmarks: vec!["gaussian".into(), "slcp".into(), "mg1".into()],
        methods: vec!["nre".into(), "npe".into(), "rej-abc".into()],
        budgets: vec![128, 256, 512, 1024],
        seeds: 2,
        n_eval: 200,
        n_obs: 50,
        samples: 500,
        base_seed: ACCEPTANCE_SEED + 11,
        out: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn c11() -> Result<(bool, String)> {
    let root = std::env::temp_dir().join(format!("sbicov-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&root);
    let (a, b) = (root.join("jobs1"), root.join("jobs2"));
    let start = Instant::now();
    let first = run_matrix(&desk_matrix(&a), 1, &Progress::Silent)?;
    let first_secs = start.elapsed().as_secs_f64();
    let second = run_matrix(&desk_matrix(&b), 2, &Progress::Silent)?;
    let rerun = run_matrix(&desk_matrix(&a), 2, &Progress::Silent)?;
    let csv_a = std::fs::read(a.join("coverage.csv"))?;
    let csv_b = std::fs::read(b.join("coverage.csv"))?;
    let csv_rerun = std::fs::read(a.join("coverage.csv"))?;
    let failed = first.failed.len() + second.failed.len() + rerun.failed.len();
    let ok = failed == 0 && csv_a == csv_b && csv_a == csv_rerun && rerun.computed == 0 && !first.records.is_empty();
    let _ = std::fs::remove_dir_all(&root);
    Ok((
        ok,
        format!(
            "{} cells, {} rows; jobs 1 vs 2 identical: {}; rerun recomputed {} cells; {failed} failures; one run {first_secs:.0} s",
            first.cells,
            first.records.len(),
            csv_a == csv_b,
            rerun.computed
        ),
    ))
}

/// Runs criterion `id` (1 to 11). Errors inside a check count as failure.
pub fn run_criterion(id: u8) -> CriterionResult {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| *n)
        .unwrap_or("unknown criterion");
    let start = Instant::now();
    let outcome = match id {
        1 => c1(),
        2 => c2(),
        3 => c3(),
        4 => c4(),
        5 => c5(),
        6 => c6(),
        7 => c7(),
        8 => c8(),
        9 => c9(),
        10 => c10(),
        11 => c11(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}
