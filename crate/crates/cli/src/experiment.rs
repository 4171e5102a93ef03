//! Multi-seed experiments. Each seed is an independent unit; with `--sweep N`
//! the units run as up to `N` child processes and the parent aggregates
//! their unit files, producing the same report as an in-process run.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command};

use clap::ValueEnum;
use drpu_core::experiments::{
    benchmark_run, boundary_run, median, overfit_run, prior_quality, BenchmarkConfig, BenchmarkReport, BenchmarkRun, BoundaryConfig,
    BoundaryReport, BoundaryRun, OverfitConfig, OverfitReport, PriorQualityConfig, PriorQualityReport,
};
use drpu_core::data::SyntheticCase;
use drpu_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::commands::{read_json, write_json, Output};
use crate::config::resolve;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// One-dimensional decision boundaries of DRPU and uPU under prior shift.
    Boundary,
    /// Prior-estimation error with the exact density ratio.
    PriorQuality,
    /// Ten-dimensional two-Gaussian accuracy and AUC over several test priors.
    Benchmark,
    /// Training-risk traces of a flexible model on a small sample.
    Overfit,
}

impl Kind {
    fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

/// Plot-ready CSV files, `(file name, contents)`.
type Tables = Vec<(String, String)>;

trait Experiment {
    type Config: Serialize + DeserializeOwned + Default + Clone;
    type Unit: Serialize + DeserializeOwned;
    type Report: Serialize;

    fn validate(cfg: &Self::Config) -> Result<()>;
    fn unit(cfg: &Self::Config, seed: u64) -> Result<Self::Unit>;
    fn aggregate(cfg: &Self::Config, units: Vec<Self::Unit>) -> Result<(Self::Report, Tables)>;
}

struct Boundary;

impl Experiment for Boundary {
    type Config = BoundaryConfig;
    type Unit = BoundaryRun;
    type Report = BoundaryReport;

    fn validate(cfg: &BoundaryConfig) -> Result<()> {
        cfg.validate()
    }

    fn unit(cfg: &BoundaryConfig, seed: u64) -> Result<BoundaryRun> {
        boundary_run(cfg, seed)
    }

    fn aggregate(cfg: &BoundaryConfig, units: Vec<BoundaryRun>) -> Result<(BoundaryReport, Tables)> {
        let r = BoundaryReport::from_runs(cfg, units)?;
        let tables = vec![("boundaries.csv".into(), r.boundary_csv()), ("trace.csv".into(), r.trace_csv())];
        Ok((r, tables))
    }
}

struct PriorQuality;

impl Experiment for PriorQuality {
    type Config = PriorQualityConfig;
    type Unit = PriorQualityReport;
    type Report = PriorQualityReport;

    fn validate(cfg: &PriorQualityConfig) -> Result<()> {
        SyntheticCase::from_index(cfg.case)?.spec(cfg.prior)?;
        if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
            return Err(invalid("gamma", format!("must lie in (0, 1), got {}", cfg.gamma)));
        }
        if cfg.sizes.is_empty() || cfg.sizes.iter().any(|&(p, u)| p == 0 || u == 0) {
            return Err(invalid("sizes", "need at least one pair of positive counts"));
        }
        Ok(())
    }

    fn unit(cfg: &PriorQualityConfig, seed: u64) -> Result<PriorQualityReport> {
        prior_quality(cfg, &[seed])
    }

    fn aggregate(_cfg: &PriorQualityConfig, units: Vec<PriorQualityReport>) -> Result<(PriorQualityReport, Tables)> {
        let mut it = units.into_iter();
        let mut acc = it.next().ok_or_else(|| Error::Empty("prior-quality runs".into()))?;
        for u in it {
            acc.seeds.extend(u.seeds);
            for (row, extra) in acc.rows.iter_mut().zip(u.rows) {
                row.estimates.extend(extra.estimates);
                row.abs_errors.extend(extra.abs_errors);
            }
        }
        let mut csv = String::from("n_pos,n_unl,seed,estimate,abs_error\n");
        for row in &mut acc.rows {
            row.median_abs_error = median(&row.abs_errors);
            for ((seed, e), a) in acc.seeds.iter().zip(&row.estimates).zip(&row.abs_errors) {
                let _ = writeln!(csv, "{},{},{seed},{e},{a}", row.n_pos, row.n_unl);
            }
        }
        Ok((acc, vec![("estimates.csv".into(), csv)]))
    }
}

struct Benchmark;

impl Experiment for Benchmark {
    type Config = BenchmarkConfig;
    type Unit = BenchmarkRun;
    type Report = BenchmarkReport;

    fn validate(cfg: &BenchmarkConfig) -> Result<()> {
        cfg.validate()
    }

    fn unit(cfg: &BenchmarkConfig, seed: u64) -> Result<BenchmarkRun> {
        benchmark_run(cfg, seed)
    }

    fn aggregate(cfg: &BenchmarkConfig, units: Vec<BenchmarkRun>) -> Result<(BenchmarkReport, Tables)> {
        let r = BenchmarkReport::from_runs(cfg, units)?;
        let mut summary = String::from("test_prior,drpu_accuracy,drpu_auc,nnpu_true_accuracy,nnpu_misestimated_accuracy\n");
        for row in &r.rows {
            let _ = writeln!(
                summary,
                "{},{},{},{},{}",
                row.test_prior, row.drpu_accuracy, row.drpu_auc, row.nnpu_true_accuracy, row.nnpu_misestimated_accuracy
            );
        }
        let a = &r.average;
        let _ = writeln!(
            summary,
            "average,{},{},{},{}",
            a.drpu_accuracy, a.drpu_auc, a.nnpu_true_accuracy, a.nnpu_misestimated_accuracy
        );
        let mut tables = vec![("summary.csv".into(), summary)];
        if cfg.trace {
            tables.push(("trace.csv".into(), r.trace_csv()));
        }
        Ok((r, tables))
    }
}

struct Overfit;

#[derive(Debug, Serialize, Deserialize)]
pub struct OverfitSummary {
    pub upu_min: f64,
    pub nnpu_min: f64,
    pub drpu_min_contribution: f64,
    pub runs: Vec<OverfitReport>,
}

impl Experiment for Overfit {
    type Config = OverfitConfig;
    type Unit = OverfitReport;
    type Report = OverfitSummary;

    fn validate(cfg: &OverfitConfig) -> Result<()> {
        cfg.train.validate().map_err(|e| crate::error::nested("train", e))
    }

    fn unit(cfg: &OverfitConfig, seed: u64) -> Result<OverfitReport> {
        overfit_run(cfg, seed)
    }

    fn aggregate(_cfg: &OverfitConfig, runs: Vec<OverfitReport>) -> Result<(OverfitSummary, Tables)> {
        let min = |f: fn(&OverfitReport) -> f64| runs.iter().map(f).fold(f64::INFINITY, f64::min);
        let mut csv = String::new();
        for r in &runs {
            for (i, line) in r.trace_csv().lines().enumerate() {
                if i == 0 {
                    if csv.is_empty() {
                        let _ = writeln!(csv, "seed,{line}");
                    }
                } else {
                    let _ = writeln!(csv, "{},{line}", r.seed);
                }
            }
        }
        let s = OverfitSummary {
            upu_min: min(|r| r.upu_min),
            nnpu_min: min(|r| r.nnpu_min),
            drpu_min_contribution: min(|r| r.drpu_min_contribution),
            runs,
        };
        Ok((s, vec![("trace.csv".into(), csv)]))
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Serialize)]
struct ExperimentResult<R> {
    kind: String,
    seeds: Vec<u64>,
    report: R,
}

pub struct Request<'a> {
    pub kind: Kind,
    pub config: Option<&'a Path>,
    pub overrides: &'a [String],
    pub seeds: Vec<u64>,
    pub out: &'a Path,
    pub sweep: Option<usize>,
    /// Child mode: run the single seed and write only its unit file.
    pub unit: bool,
}

pub const UNIT_FILE: &str = "unit.json";
pub const REPORT_FILE: &str = "report.json";

pub fn run(req: Request<'_>) -> CliResult<()> {
    match req.kind {
        Kind::Boundary => run_kind::<Boundary>(req),
        Kind::PriorQuality => run_kind::<PriorQuality>(req),
        Kind::Benchmark => run_kind::<Benchmark>(req),
        Kind::Overfit => run_kind::<Overfit>(req),
    }
}

fn run_kind<E: Experiment>(req: Request<'_>) -> CliResult<()> {
    let cfg: E::Config = resolve(req.config, req.overrides)?;
    E::validate(&cfg)?;
    if req.seeds.is_empty() {
        return Err(CliError::config("field `seeds`: at least one seed is required"));
    }
    let name = req.kind.name();
    if req.unit {
        let [seed] = req.seeds[..] else {
            return Err(CliError::config("unit mode runs exactly one seed"));
        };
        let unit = E::unit(&cfg, seed)?;
        return write_json(&req.out.join(UNIT_FILE), &Output::new(&name, seed, cfg, unit));
    }
    let units = match req.sweep {
        Some(jobs) if req.seeds.len() > 1 => fan_out::<E>(&req, &cfg, jobs.max(1))?,
        _ => req.seeds.iter().map(|&s| E::unit(&cfg, s)).collect::<Result<Vec<_>>>()?,
    };
    let (report, tables) = E::aggregate(&cfg, units)?;
    fs::create_dir_all(req.out)?;
    for (file, text) in tables {
        fs::write(req.out.join(file), text)?;
    }
    let result = ExperimentResult {
        kind: name.clone(),
        seeds: req.seeds.clone(),
        report,
    };
    write_json(&req.out.join(REPORT_FILE), &Output::new(&format!("experiment {name}"), req.seeds[0], cfg, result))
}

fn unit_dir(out: &Path, seed: u64) -> PathBuf {
    out.join("units").join(format!("seed-{seed}"))
}

fn fan_out<E: Experiment>(req: &Request<'_>, cfg: &E::Config, jobs: usize) -> CliResult<Vec<E::Unit>> {
    fs::create_dir_all(req.out)?;
    let cfg_path = req.out.join("resolved_config.json");
    write_json(&cfg_path, cfg)?;
    let exe = std::env::current_exe()?;
    let mut queue: VecDeque<u64> = req.seeds.iter().copied().collect();
    let mut running: VecDeque<(u64, Child)> = VecDeque::new();
    let mut failure: Option<CliError> = None;
    while !queue.is_empty() || !running.is_empty() {
        while running.len() < jobs && failure.is_none() {
            let Some(seed) = queue.pop_front() else { break };
            let child = Command::new(&exe)
                .args(["experiment", &req.kind.name(), "--unit", "--seeds", &seed.to_string()])
                .arg("--config")
                .arg(&cfg_path)
                .arg("--out")
                .arg(unit_dir(req.out, seed))
                .spawn()?;
            running.push_back((seed, child));
        }
        let Some((seed, mut child)) = running.pop_front() else { break };
        let status = child.wait()?;
        if !status.success() && failure.is_none() {
            failure = Some(CliError {
                code: status.code().and_then(|c| u8::try_from(c).ok()).unwrap_or(1),
                message: format!("seed {seed} failed ({status})"),
            });
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    req.seeds
        .iter()
        .map(|&s| read_json::<Output<E::Config, E::Unit>>(&unit_dir(req.out, s).join(UNIT_FILE)).map(|o| o.result))
        .collect()
}

/// Parses `a..b` (half-open), `a,b,c` or a single seed.
pub fn parse_seeds(spec: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::config(format!("field `seeds`: cannot parse `{spec}` (use 0..10, 1,2,3 or 7)"));
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
