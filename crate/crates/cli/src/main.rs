//! `drpu`: synthesize data, train density-ratio PU classifiers and
//! baselines, adapt the decision threshold to a new class prior, evaluate,
//! and run the numerical theory checks and multi-seed experiments.
//!
//! Configuration precedence, lowest to highest: built-in defaults, the JSON
//! file given by `--config`, `--set key.path=value` overrides in order, then
//! dedicated flags such as `--case` or `--epochs`.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 config error,
//! 3 data or I/O error, 4 numeric divergence, 5 degenerate prior estimation.

mod commands;
mod config;
mod error;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{resolve, AdaptConfig, SynthConfig, TrainRunConfig};
use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "drpu", version, about = "Density-ratio PU classification under class-prior shift")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config field, e.g. `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    /// `--set` values followed by dedicated flags, so the flags win.
    fn overrides(&self, flags: &[(&str, Option<String>)]) -> Vec<String> {
        let mut out = self.set.clone();
        out.extend(flags.iter().filter_map(|(k, v)| v.as_ref().map(|v| format!("{k}={v}"))));
        out
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a synthetic one-dimensional dataset and write CSV files plus a manifest.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// 1: separable mixtures, 2: overlapping mixtures.
        #[arg(long)]
        case: Option<u8>,
        #[arg(long)]
        train_prior: Option<f64>,
        #[arg(long)]
        test_prior: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a data directory; writes model.json, intervals.json and train_report.json.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory with train/val positive and unlabeled CSV files.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// drpu, upu or nnpu.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Class prior for the baselines.
        #[arg(long)]
        prior: Option<f64>,
    },
    /// Estimate the test prior and the shifted threshold from a model, its
    /// interval list and unlabeled test points. Takes no training data.
    Adapt {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        intervals: PathBuf,
        /// Unlabeled test points (CSV).
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cost: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a labeled test file with a model and a threshold.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Threshold record written by `adapt`.
        #[arg(long, conflicts_with = "threshold")]
        record: Option<PathBuf>,
        /// Fixed threshold, e.g. 0 for the uPU/nnPU baselines.
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<f64>,
        /// Labeled test points (CSV, last column -1/+1).
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Recorded when no adapt record is given.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Randomized finite-support checks of the excess-risk bounds and identities.
    VerifyTheory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Reverse every comparison; the run must then report failures.
        #[arg(long)]
        inject_violation: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-seed experiment producing report.json and plot-ready CSV files.
    Experiment {
        kind: experiment::Kind,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `0..10`, `1,2,3` or a single seed.
        #[arg(long, default_value = "0")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        /// Run seeds as up to N child processes.
        #[arg(long, value_name = "N")]
        sweep: Option<usize>,
        #[arg(long, hide = true)]
        unit: bool,
    },
}

fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Cmd::Synth {
            cfg,
            case,
            train_prior,
            test_prior,
            seed,
            out,
        } => {
            let sets = cfg.overrides(&[
                ("case", opt(&case)),
                ("train_prior", opt(&train_prior)),
                ("test_prior", opt(&test_prior)),
            ]);
            commands::synth(resolve::<SynthConfig>(cfg.config.as_deref(), &sets)?, seed, &out)
        }
        Cmd::Train {
            cfg,
            data,
            out,
            seed,
            method,
            epochs,
            prior,
        } => {
            let sets = cfg.overrides(&[("method", method), ("train.epochs", opt(&epochs)), ("prior", opt(&prior))]);
            commands::train(resolve::<TrainRunConfig>(cfg.config.as_deref(), &sets)?, seed, &data, &out)
        }
        Cmd::Adapt {
            cfg,
            model,
            intervals,
            test,
            out,
            cost,
            gamma,
            seed,
        } => {
            let sets = cfg.overrides(&[("cost", opt(&cost)), ("gamma", opt(&gamma))]);
            let c = resolve::<AdaptConfig>(cfg.config.as_deref(), &sets)?;
            commands::adapt(c, seed, &model, &intervals, &test, &out)
        }
        Cmd::Evaluate {
            model,
            record,
            threshold,
            test,
            out,
            seed,
        } => commands::evaluate(&model, record.as_deref(), threshold, &test, seed, &out),
        Cmd::VerifyTheory {
            seed,
            trials,
            inject_violation,
            out,
        } => commands::verify_theory(seed, commands::TheoryConfig { trials, inject_violation }, out),
        Cmd::Experiment {
            kind,
            cfg,
            seeds,
            out,
            sweep,
            unit,
        } => experiment::run(experiment::Request {
            kind,
            config: cfg.config.as_deref(),
            overrides: &cfg.set,
            seeds: experiment::parse_seeds(&seeds)?,
            out: &out,
            sweep,
            unit,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drpu: {e}");
            ExitCode::from(e.code)
        }
    }
}
