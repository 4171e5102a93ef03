use std::fs;
use std::path::{Path, PathBuf};

use drpu_core::baselines::{train_baseline, PuMethod, PuRiskObjective};
use drpu_core::classifier::{classify_scores, cost_threshold, decision_boundary_1d, ShiftSpec};
use drpu_core::data::{load_labeled, load_points, save_csv, PUDataset};
use drpu_core::experiments::{boundary_data, grid_mixture_proportion, sub_seed, TAG_MODEL, TAG_TRAINER};
use drpu_core::metrics::{accuracy, auc_labeled, error_rate};
use drpu_core::models::RatioModel;
use drpu_core::prior::{build_intervals, estimate_prior, estimate_test_prior, IntervalsMetadata, PriorEstimate, ThresholdIntervals};
use drpu_core::theory::{self, TheoryReport};
use drpu_core::trainer::{self, TrainConfig, TrainReport};
use drpu_core::{BregmanGenerator, Error};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{config_hash, AdaptConfig, GeneratorKind, Method, ModelKind, SynthConfig, TrainRunConfig};
use crate::error::{CliError, CliResult, EXIT_FAILED_CHECK};

/// Envelope of every JSON output.
#[derive(Debug, Serialize, Deserialize)]
pub struct Output<C, R> {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: C,
    pub result: R,
}

impl<C: Serialize, R: Serialize> Output<C, R> {
    pub fn new(command: &str, seed: u64, config: C, result: R) -> Self {
        Self {
            command: command.into(),
            seed,
            config_hash: config_hash(&config),
            config,
            result,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// synth

pub const TRAIN_POSITIVE: &str = "train_positive.csv";
pub const TRAIN_UNLABELED: &str = "train_unlabeled.csv";
pub const VAL_POSITIVE: &str = "val_positive.csv";
pub const VAL_UNLABELED: &str = "val_unlabeled.csv";
pub const TEST_LABELED: &str = "test.csv";
pub const TEST_UNLABELED: &str = "test_unlabeled.csv";

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthManifest {
    pub files: Vec<String>,
    pub train_prior: f64,
    pub test_prior: f64,
    /// Bayes boundary under the test prior at cost 0.5.
    pub optimal_boundary: f64,
    pub max_mixture_proportion: f64,
    /// `min p/p_+` over a grid on [-10, 10].
    pub grid_mixture_proportion: f64,
}

pub fn synth(cfg: SynthConfig, seed: u64, out: &Path) -> CliResult<()> {
    let bcfg = cfg.boundary();
    bcfg.validate()?;
    let case = bcfg.synthetic_case()?;
    let (tr, te) = bcfg.priors()?;
    let data = boundary_data(&bcfg, seed)?;
    fs::create_dir_all(out)?;
    save_csv(out.join(TRAIN_POSITIVE), &data.train.positives, None)?;
    save_csv(out.join(TRAIN_UNLABELED), &data.train.unlabeled, None)?;
    save_csv(out.join(VAL_POSITIVE), &data.val.positives, None)?;
    save_csv(out.join(VAL_UNLABELED), &data.val.unlabeled, None)?;
    save_csv(out.join(TEST_LABELED), &data.test.points, Some(&data.test.labels))?;
    save_csv(out.join(TEST_UNLABELED), &data.test.points, None)?;
    let manifest = SynthManifest {
        files: [TRAIN_POSITIVE, TRAIN_UNLABELED, VAL_POSITIVE, VAL_UNLABELED, TEST_LABELED, TEST_UNLABELED]
            .map(String::from)
            .to_vec(),
        train_prior: tr,
        test_prior: te,
        optimal_boundary: case.bayes_boundary(te),
        max_mixture_proportion: case.max_mixture_proportion(tr),
        grid_mixture_proportion: grid_mixture_proportion(&case.spec(tr)?, -10.0, 10.0, 20001)?,
    };
    write_json(&out.join("manifest.json"), &Output::new("synth", seed, cfg, manifest))
}

// ---------------------------------------------------------------------------
// train

pub const MODEL_FILE: &str = "model.json";
pub const INTERVALS_FILE: &str = "intervals.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainResult {
    pub method: Method,
    /// `π̂` from the validation split; density-ratio method only.
    pub prior_estimate: Option<PriorEstimate>,
    pub n_pos: usize,
    pub n_unl: usize,
    pub n_val_pos: usize,
    pub n_val_unl: usize,
    pub model_file: String,
    pub intervals_file: Option<String>,
    pub report: TrainReport,
}

fn load_pu(dir: &Path, pos: &str, unl: &str) -> CliResult<PUDataset> {
    Ok(PUDataset::new(load_points(dir.join(pos))?, load_points(dir.join(unl))?, None)?)
}

fn initial_model(cfg: &TrainRunConfig, train: &PUDataset, seed: u64) -> drpu_core::Result<RatioModel> {
    let m = &cfg.model;
    match m.kind {
        ModelKind::GaussianBasis => match m.max_centers {
            Some(k) => RatioModel::gaussian_basis_subsampled(&train.unlabeled, k, m.bandwidth, sub_seed(seed, TAG_MODEL)),
            None => RatioModel::gaussian_basis_linear(train.unlabeled.clone(), m.bandwidth),
        },
        ModelKind::Mlp => {
            let mut layers = vec![train.dim()];
            layers.extend(&m.hidden);
            layers.push(1);
            RatioModel::mlp(&layers, sub_seed(seed, TAG_MODEL))
        }
    }
}

fn generator(cfg: &TrainRunConfig) -> drpu_core::Result<BregmanGenerator> {
    match cfg.generator.kind {
        GeneratorKind::Lsif => Ok(BregmanGenerator::lsif()),
        GeneratorKind::Quadratic => BregmanGenerator::scaled_quadratic(cfg.generator.mu).map_err(|e| crate::error::nested("generator", e)),
        GeneratorKind::Exp => Ok(BregmanGenerator::exp()),
    }
}

pub fn train(cfg: TrainRunConfig, seed: u64, data: &Path, out: &Path) -> CliResult<()> {
    cfg.validate()?;
    let train_set = load_pu(data, TRAIN_POSITIVE, TRAIN_UNLABELED)?;
    let val = load_pu(data, VAL_POSITIVE, VAL_UNLABELED)?;
    let model = initial_model(&cfg, &train_set, seed)?;
    let tcfg = TrainConfig {
        seed: sub_seed(seed, TAG_TRAINER),
        ..cfg.train.clone()
    };
    let (model, report, prior_estimate, intervals) = match cfg.method {
        Method::Drpu => {
            let gen = generator(&cfg)?;
            let (model, report) = trainer::train(model, &train_set, &val, &gen, &tcfg)?;
            let rp = model.predict_all(&val.positives)?;
            let ru = model.predict_all(&val.unlabeled)?;
            let est = estimate_prior(&rp, &ru, cfg.gamma)?;
            (model, report, Some(est), Some(build_intervals(&rp)?))
        }
        Method::Upu | Method::Nnpu => {
            let objective = PuRiskObjective {
                method: if cfg.method == Method::Upu { PuMethod::Upu } else { PuMethod::Nnpu },
                loss: cfg.loss,
                prior: cfg.prior.expect("validated"),
            };
            let (model, report) = train_baseline(&objective, model, &train_set, &val, &tcfg, None)?;
            (model, report, None, None)
        }
    };
    fs::create_dir_all(out)?;
    model.save(out.join(MODEL_FILE))?;
    if let (Some(iv), Some(est)) = (&intervals, &prior_estimate) {
        let meta = IntervalsMetadata {
            train_prior: est.value,
            train_prior_raw: est.raw,
            gamma: cfg.gamma,
        };
        iv.save(out.join(INTERVALS_FILE), Some(&meta))?;
    }
    let result = TrainResult {
        method: cfg.method,
        prior_estimate,
        n_pos: train_set.n_pos(),
        n_unl: train_set.n_unl(),
        n_val_pos: val.n_pos(),
        n_val_unl: val.n_unl(),
        model_file: MODEL_FILE.into(),
        intervals_file: intervals.map(|_| INTERVALS_FILE.into()),
        report,
    };
    write_json(&out.join(TRAIN_REPORT_FILE), &Output::new("train", seed, cfg, result))
}

// ---------------------------------------------------------------------------
// adapt

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptRecord {
    pub train_prior: f64,
    pub train_prior_raw: f64,
    pub test_prior: PriorEstimate,
    pub cost: f64,
    pub gamma: f64,
    pub c0: f64,
    /// Predict `+1` iff `r(x) ≥ theta`.
    pub theta: f64,
    pub n_test: usize,
}

/// Uses only the model, the interval list and the unlabeled test points.
pub fn adapt(cfg: AdaptConfig, seed: u64, model: &Path, intervals: &Path, test: &Path, out: &Path) -> CliResult<()> {
    cfg.validate()?;
    let (iv, meta) = ThresholdIntervals::load(intervals)?;
    let meta = meta.ok_or_else(|| CliError::data(format!("{}: no training prior stored with the interval list", intervals.display())))?;
    let gamma = cfg.gamma.unwrap_or(meta.gamma);
    let model = RatioModel::load(model)?;
    let points = load_points(test)?;
    let r = model.predict_all(&points)?;
    let test_prior = estimate_test_prior(&iv, &r, gamma)?;
    let spec = ShiftSpec::new(meta.train_prior, test_prior.value, cfg.cost).map_err(|_| {
        Error::DegenerateEstimate(format!(
            "estimated priors ({}, {}) leave no valid cost-sensitive threshold",
            meta.train_prior, test_prior.value
        ))
    })?;
    let (c0, theta) = cost_threshold(&spec)?;
    let record = AdaptRecord {
        train_prior: meta.train_prior,
        train_prior_raw: meta.train_prior_raw,
        test_prior,
        cost: cfg.cost,
        gamma,
        c0,
        theta,
        n_test: points.len(),
    };
    write_json(out, &Output::new("adapt", seed, cfg, record))
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateConfig {
    /// Threshold given on the command line instead of an adapt record.
    pub threshold: Option<f64>,
    pub adapt_config_hash: Option<String>,
    pub boundary_lo: f64,
    pub boundary_hi: f64,
    pub boundary_grid: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub theta: f64,
    pub accuracy: f64,
    /// `π' FNR + (1 - π') FPR` with `π'` the labeled positive fraction.
    pub error_rate: f64,
    pub auc: Option<f64>,
    pub n_test: usize,
    pub test_positive_fraction: f64,
    pub estimated_train_prior: Option<f64>,
    pub estimated_test_prior: Option<f64>,
    pub c0: Option<f64>,
    /// Location where the decision flips; one-dimensional data only.
    pub boundary: Option<f64>,
}

pub fn evaluate(model: &Path, record: Option<&Path>, threshold: Option<f64>, test: &Path, seed: u64, out: &Path) -> CliResult<()> {
    let rec: Option<Output<AdaptConfig, AdaptRecord>> = record.map(read_json).transpose()?;
    let theta = match (&rec, threshold) {
        (Some(r), None) => r.result.theta,
        (None, Some(t)) => t,
        _ => return Err(CliError::config("give exactly one of --record and --threshold")),
    };
    let model = RatioModel::load(model)?;
    let pool = load_labeled(test)?;
    let scores = model.predict_all(&pool.points)?;
    let pred = classify_scores(&scores, theta);
    let pos_frac = pool.positive_fraction();
    let cfg = EvaluateConfig {
        threshold,
        adapt_config_hash: rec.as_ref().map(|r| r.config_hash.clone()),
        boundary_lo: -5.0,
        boundary_hi: 5.0,
        boundary_grid: 2001,
    };
    let boundary = (pool.points.dim() == 1)
        .then(|| {
            decision_boundary_1d(
                |x| model.predict(&[x]).unwrap_or(f64::NAN),
                theta,
                cfg.boundary_lo,
                cfg.boundary_hi,
                cfg.boundary_grid,
            )
        })
        .flatten();
    let metrics = Metrics {
        theta,
        accuracy: accuracy(&pool.labels, &pred)?,
        error_rate: error_rate(&pool.labels, &pred, pos_frac)?,
        auc: (pos_frac > 0.0 && pos_frac < 1.0).then(|| auc_labeled(&scores, &pool.labels)).transpose()?,
        n_test: pool.len(),
        test_positive_fraction: pos_frac,
        estimated_train_prior: rec.as_ref().map(|r| r.result.train_prior),
        estimated_test_prior: rec.as_ref().map(|r| r.result.test_prior.value),
        c0: rec.as_ref().map(|r| r.result.c0),
        boundary,
    };
    let seed = rec.as_ref().map_or(seed, |r| r.seed);
    write_json(out, &Output::new("evaluate", seed, cfg, metrics))
}

// ---------------------------------------------------------------------------
// verify-theory

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub trials: usize,
    pub inject_violation: bool,
}

pub fn verify_theory(seed: u64, cfg: TheoryConfig, out: Option<PathBuf>) -> CliResult<()> {
    if cfg.trials == 0 {
        return Err(CliError::config("field `trials`: must be positive"));
    }
    let report: TheoryReport = theory::run(seed, cfg.trials, cfg.inject_violation)?;
    for s in &report.suites {
        println!(
            "{} {:<28} {}/{} min slack {:.3e} max |lhs - rhs| {:.3e}",
            if s.ok { "PASS" } else { "FAIL" },
            s.name,
            s.passed,
            s.trials,
            s.min_slack,
            s.max_abs_error
        );
    }
    let all = report.all_passed;
    if let Some(path) = out {
        write_json(&path, &Output::new("verify-theory", seed, cfg, report))?;
    }
    if all {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_FAILED_CHECK,
            message: "at least one theory suite failed".into(),
        })
    }
}

