//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Built with `harness = false`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_auc, check_gradient, exhaustive_prior, gradient_cases};
use drpu_core::data::seeded_rng;
use drpu_core::experiments::{
    benchmark, boundary_experiment, grid_mixture_proportion, overfit_run, prior_quality, BenchmarkConfig, BoundaryConfig,
    OverfitConfig, PriorQualityConfig,
};
use drpu_core::metrics::auc;
use drpu_core::prior::{build_intervals, estimate_prior, estimate_test_prior};
use drpu_core::theory;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Criterion = (&'static str, fn() -> Outcome);

fn shifted_boundary() -> Outcome {
    let seeds: Vec<u64> = (0..10).collect();
    let start = Instant::now();
    let report = boundary_experiment(&BoundaryConfig::for_case(1), &seeds).expect("boundary experiment");
    let elapsed = start.elapsed();
    let x_star = (2.0f64 / 3.0).ln() / 2.0;
    let near = (report.drpu.mean - x_star).abs() <= 0.25;
    let beats = report.drpu.mean_abs_error < report.upu.mean_abs_error;
    let fast = elapsed <= Duration::from_secs(120);
    outcome(
        near && beats && fast && report.drpu.missing == 0,
        format!(
            "x* = {x_star:.4}, DRPU mean {:.4} (MAE {:.4}, missing {}), uPU MAE {:.4}, {:.1} s",
            report.drpu.mean,
            report.drpu.mean_abs_error,
            report.drpu.missing,
            report.upu.mean_abs_error,
            elapsed.as_secs_f64()
        ),
    )
}

fn overlapping_boundary() -> Outcome {
    let cfg = BoundaryConfig::for_case(2);
    let seeds: Vec<u64> = (0..10).collect();
    let report = boundary_experiment(&cfg, &seeds).expect("boundary experiment");
    let (train_prior, _) = cfg.priors().unwrap();
    let spec = cfg.synthetic_case().unwrap().spec(train_prior).unwrap();
    let grid = grid_mixture_proportion(&spec, -10.0, 10.0, 20001).unwrap();
    let gap = (grid - train_prior).abs() > 1e-3;
    let target = 2.0f64.ln() / 2.0;
    let bounded = report.drpu.mean_abs_error <= 0.5 && report.drpu.missing == 0;
    outcome(
        gap && bounded,
        format!(
            "grid infimum {grid:.4} vs prior {train_prior}, DRPU mean {:.4}, MAE vs {target:.4} = {:.4} (missing {})",
            report.drpu.mean, report.drpu.mean_abs_error, report.drpu.missing
        ),
    )
}

fn prior_estimation() -> Outcome {
    let seeds: Vec<u64> = (0..20).collect();
    let report = prior_quality(&PriorQualityConfig::default(), &seeds).expect("prior quality");
    let small = report.rows[0].median_abs_error;
    let large = report.rows[1].median_abs_error;
    outcome(
        small <= 0.05 && large < small,
        format!("median |π̂ - 0.4|: {small:.4} at (1000, 5000), {large:.4} at (10000, 50000)"),
    )
}

fn theory_suite() -> Outcome {
    let start = Instant::now();
    let report = theory::run(2024, 100, false).expect("theory suite");
    let flipped = theory::run(2024, 100, true).expect("theory self-check");
    let elapsed = start.elapsed();
    let worst = report
        .suites
        .iter()
        .map(|s| format!("{} {}/{}", s.name, s.passed, s.trials))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        report.all_passed && !flipped.all_passed && elapsed <= Duration::from_secs(30),
        format!("{worst}; injected violation detected: {}; {:.2} s", !flipped.all_passed, elapsed.as_secs_f64()),
    )
}

fn coarse_scores(rng: &mut impl Rng, n: usize, levels: u32) -> Vec<f64> {
    (0..n).map(|_| f64::from(rng.random_range(0..levels)) * 0.25).collect()
}

fn oracle_equivalences() -> Outcome {
    let mut rng = seeded_rng(77, 0);
    let mut failures = Vec::new();
    for n in [1, 10, 100, 500] {
        for levels in [4, 1_000_000] {
            let p = coarse_scores(&mut rng, n, levels);
            let q = coarse_scores(&mut rng, n, levels);
            if auc(&p, &q).unwrap() != brute_auc(&p, &q) {
                failures.push(format!("auc n={n}"));
            }
        }
    }
    for trial in 0..30 {
        let levels = [5, 1_000_000][trial % 2];
        let (np, nu, nt) = (rng.random_range(60..=200), rng.random_range(60..=200), rng.random_range(100..=300));
        let rp = coarse_scores(&mut rng, np, levels);
        let ru = coarse_scores(&mut rng, nu, levels);
        let est = estimate_prior(&rp, &ru, 0.95).unwrap();
        if Some(est.raw) != exhaustive_prior(&rp, &ru, est.gamma_bar) {
            failures.push(format!("sweep trial {trial}"));
        }
        let rt = coarse_scores(&mut rng, nt, levels);
        let via = estimate_test_prior(&build_intervals(&rp).unwrap(), &rt, 0.95).unwrap();
        if Some(via.raw) != exhaustive_prior(&rp, &rt, via.gamma_bar) {
            failures.push(format!("intervals trial {trial}"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "AUC, sweep and interval estimates all equal their oracles exactly".into()
        } else {
            format!("mismatches: {}", failures.join(", "))
        },
    )
}

fn gradients() -> Outcome {
    let results: Vec<_> = [5u64, 23].iter().flat_map(|&s| gradient_cases(s)).map(|c| check_gradient(&c)).collect();
    let worst = results.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    let branches = results.iter().all(|r| r.branch == r.want);
    outcome(
        results.len() >= 20 && worst < 1e-4 && branches,
        format!("{} configurations, worst relative error {worst:.2e}, branches as intended: {branches}", results.len()),
    )
}

fn overfitting() -> Outcome {
    let r = overfit_run(&OverfitConfig::default(), 0).expect("overfit run");
    outcome(
        r.upu_min < 0.0 && r.nnpu_min >= 0.0 && r.drpu_min_contribution >= -1e-12,
        format!(
            "uPU min {:.4}, nnPU min {:.4}, DRPU bracket contribution min {:.2e} ({} epochs with a negative bracket)",
            r.upu_min, r.nnpu_min, r.drpu_min_contribution, r.drpu_negative_bracket_epochs
        ),
    )
}

fn shifted_benchmark() -> Outcome {
    let seeds: Vec<u64> = (0..5).collect();
    let report = benchmark(&BenchmarkConfig::default(), &seeds).expect("benchmark");
    let a = &report.average;
    outcome(
        a.drpu_accuracy >= a.nnpu_true_accuracy - 2.0 && a.drpu_accuracy > a.nnpu_misestimated_accuracy,
        format!(
            "average accuracy: DRPU {:.2}, nnPU true prior {:.2}, nnPU misestimated {:.2}; DRPU AUC {:.2}",
            a.drpu_accuracy, a.nnpu_true_accuracy, a.nnpu_misestimated_accuracy, a.drpu_auc
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 shifted boundary, separable case", shifted_boundary),
        ("2 bounded boundary error, overlapping case", overlapping_boundary),
        ("3 prior estimation quality", prior_estimation),
        ("4 theory verification", theory_suite),
        ("5 oracle equivalences", oracle_equivalences),
        ("6 gradient checks", gradients),
        ("7 non-negative correction", overfitting),
        ("8 shifted benchmark analogue", shifted_benchmark),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
