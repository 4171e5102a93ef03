//! End-to-end experiment recipes shared by the CLI and the acceptance tests.
//!
//! Each recipe has a per-seed function and an aggregate built from the
//! per-seed records, so a multi-seed sweep can run the seeds in separate
//! processes and merge afterwards.

use serde::{Deserialize, Serialize};

use crate::baselines::{train_baseline, PuMethod, PuRiskObjective, SurrogateLoss};
use crate::classifier::{classify_scores, cost_threshold, decision_boundary_1d, ShiftSpec};
use crate::data::{Component, GaussianMixtureSpec, PUDataset, Points, SyntheticCase};
use crate::divergence::empirical_objective;
use crate::error::{Error, Result};
use crate::generators::BregmanGenerator;
use crate::metrics::{accuracy, auc_labeled};
use crate::models::RatioModel;
use crate::prior::{build_intervals, estimate_prior, estimate_test_prior, PriorEstimate};
use crate::trainer::{train, train_objective, BatchPairing, DensityRatioObjective, Selection, TrainConfig, TrainReport};

/// Independent seed for a named sub-stream of a run (splitmix64 finaliser).
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const TAG_TRAIN: u64 = 1;
pub const TAG_VAL: u64 = 2;
pub const TAG_TEST: u64 = 3;
pub const TAG_MODEL: u64 = 4;
pub const TAG_TRAINER: u64 = 5;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: sub_seed(seed, TAG_TRAINER),
        ..cfg.clone()
    }
}

/// Ratio-model priors, test-prior and threshold for a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub prior: PriorEstimate,
    pub test_prior: PriorEstimate,
    pub c0: f64,
    pub theta: f64,
}

/// Estimates `π̂` on the validation split, keeps the interval list of the
/// validation positives and estimates `π̂'` from the test scores.
pub fn adapt_threshold(model: &RatioModel, val: &PUDataset, test_unl: &Points, cost: f64, gamma: f64) -> Result<Adaptation> {
    let rp = model.predict_all(&val.positives)?;
    let ru = model.predict_all(&val.unlabeled)?;
    let rt = model.predict_all(test_unl)?;
    adapt_from_scores(&rp, &ru, &rt, cost, gamma)
}

pub fn adapt_from_scores(r_val_pos: &[f64], r_val_unl: &[f64], r_test: &[f64], cost: f64, gamma: f64) -> Result<Adaptation> {
    let prior = estimate_prior(r_val_pos, r_val_unl, gamma)?;
    let intervals = build_intervals(r_val_pos)?;
    let test_prior = estimate_test_prior(&intervals, r_test, gamma)?;
    let spec = ShiftSpec::new(prior.value, test_prior.value, cost).map_err(|_| {
        Error::DegenerateEstimate(format!(
            "estimated priors ({}, {}) leave no valid cost-sensitive threshold",
            prior.value, test_prior.value
        ))
    })?;
    let (c0, theta) = cost_threshold(&spec)?;
    Ok(Adaptation {
        prior,
        test_prior,
        c0,
        theta,
    })
}

// ---------------------------------------------------------------------------
// One-dimensional boundary reproduction

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    pub case: u8,
    /// Defaults to the case's training prior.
    pub train_prior: Option<f64>,
    /// Defaults to the case's test prior.
    pub test_prior: Option<f64>,
    pub n_pos: usize,
    pub n_unl: usize,
    pub n_val_pos: usize,
    pub n_val_unl: usize,
    pub n_test: usize,
    pub bandwidth: f64,
    pub cost: f64,
    pub gamma: f64,
    pub baseline_loss: SurrogateLoss,
    pub train: TrainConfig,
    pub boundary_lo: f64,
    pub boundary_hi: f64,
    pub boundary_grid: usize,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            case: 1,
            train_prior: None,
            test_prior: None,
            n_pos: 200,
            n_unl: 1000,
            n_val_pos: 100,
            n_val_unl: 500,
            n_test: 1000,
            bandwidth: 1.0,
            cost: 0.5,
            // 0.5 leaves no admissible threshold with 100 validation positives.
            gamma: 0.9,
            baseline_loss: SurrogateLoss::Logistic,
            // 200 unlabeled and 40 positives per batch, five steps per epoch.
            train: TrainConfig {
                pairing: BatchPairing::Unlabeled,
                ..TrainConfig::default()
            },
            boundary_lo: -5.0,
            boundary_hi: 5.0,
            boundary_grid: 2001,
        }
    }
}

impl BoundaryConfig {
    pub fn for_case(case: u8) -> Self {
        Self {
            case,
            ..Self::default()
        }
    }

    pub fn synthetic_case(&self) -> Result<SyntheticCase> {
        SyntheticCase::from_index(self.case)
    }

    pub fn priors(&self) -> Result<(f64, f64)> {
        let (tr, te) = self.synthetic_case()?.default_priors();
        Ok((self.train_prior.unwrap_or(tr), self.test_prior.unwrap_or(te)))
    }

    pub fn validate(&self) -> Result<()> {
        let (tr, te) = self.priors()?;
        for (field, v) in [("train_prior", tr), ("test_prior", te), ("cost", self.cost), ("gamma", self.gamma)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(field, format!("must lie in (0, 1), got {v}")));
            }
        }
        for (field, n) in [
            ("n_pos", self.n_pos),
            ("n_unl", self.n_unl),
            ("n_val_pos", self.n_val_pos),
            ("n_val_unl", self.n_val_unl),
            ("n_test", self.n_test),
            ("boundary_grid", self.boundary_grid),
        ] {
            if n == 0 {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::invalid("bandwidth", "must be positive"));
        }
        if !(self.boundary_lo < self.boundary_hi) {
            return Err(Error::invalid("boundary_lo", "must be below boundary_hi"));
        }
        self.train.validate().map_err(|e| prefix_field("train", e))
    }
}

fn prefix_field(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument { field, reason } => Error::InvalidArgument {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}

/// The data of one seed of the boundary experiment.
pub struct BoundaryData {
    pub train: PUDataset,
    pub val: PUDataset,
    pub test: crate::data::LabeledPool,
}

pub fn boundary_data(cfg: &BoundaryConfig, seed: u64) -> Result<BoundaryData> {
    let case = cfg.synthetic_case()?;
    let (tr, te) = cfg.priors()?;
    let spec = case.spec(tr)?;
    Ok(BoundaryData {
        train: spec.sample_pu(cfg.n_pos, cfg.n_unl, sub_seed(seed, TAG_TRAIN))?,
        val: spec.sample_pu(cfg.n_val_pos, cfg.n_val_unl, sub_seed(seed, TAG_VAL))?,
        test: spec.with_prior(te)?.sample_labeled(cfg.n_test, sub_seed(seed, TAG_TEST))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRun {
    pub seed: u64,
    pub adaptation: Adaptation,
    /// `None` if the decision never switches inside the scan range.
    pub drpu_boundary: Option<f64>,
    pub upu_boundary: Option<f64>,
    /// uPU is trained with the ratio model's `π̂`.
    pub upu_prior: f64,
    pub drpu_test_error: f64,
    pub upu_test_error: f64,
    pub drpu_report: TrainReport,
    pub upu_report: TrainReport,
}

pub fn boundary_run(cfg: &BoundaryConfig, seed: u64) -> Result<BoundaryRun> {
    cfg.validate()?;
    let data = boundary_data(cfg, seed)?;
    let tcfg = with_seed(&cfg.train, seed);

    let model = RatioModel::gaussian_basis_linear(data.train.unlabeled.clone(), cfg.bandwidth)?;
    let (drpu, drpu_report) = train(model.clone(), &data.train, &data.val, &BregmanGenerator::lsif(), &tcfg)?;
    let adaptation = adapt_threshold(&drpu, &data.val, &data.test.points, cfg.cost, cfg.gamma)?;
    let r_test = drpu.predict_all(&data.test.points)?;
    let drpu_pred = classify_scores(&r_test, adaptation.theta);

    let objective = PuRiskObjective {
        method: PuMethod::Upu,
        loss: cfg.baseline_loss,
        prior: adaptation.prior.value.clamp(1e-6, 1.0 - 1e-6),
    };
    let (upu, upu_report) = train_baseline(&objective, model, &data.train, &data.val, &tcfg, None)?;
    let g_test = upu.predict_all(&data.test.points)?;
    let upu_pred = classify_scores(&g_test, 0.0);

    let scan = |m: &RatioModel, thr: f64| {
        decision_boundary_1d(
            |x| m.predict(&[x]).unwrap_or(f64::NAN),
            thr,
            cfg.boundary_lo,
            cfg.boundary_hi,
            cfg.boundary_grid,
        )
    };
    Ok(BoundaryRun {
        seed,
        drpu_boundary: scan(&drpu, adaptation.theta),
        upu_boundary: scan(&upu, 0.0),
        upu_prior: objective.prior,
        adaptation,
        drpu_test_error: 1.0 - accuracy(&data.test.labels, &drpu_pred)?,
        upu_test_error: 1.0 - accuracy(&data.test.labels, &upu_pred)?,
        drpu_report,
        upu_report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySummary {
    pub mean: f64,
    pub std: f64,
    pub mean_abs_error: f64,
    /// Seeds whose decision never switched inside the scan range.
    pub missing: usize,
}

impl BoundarySummary {
    fn from(values: &[Option<f64>], optimal: f64) -> Self {
        let found: Vec<f64> = values.iter().flatten().copied().collect();
        let errs: Vec<f64> = found.iter().map(|b| (b - optimal).abs()).collect();
        Self {
            mean: if found.is_empty() { f64::NAN } else { mean(&found) },
            std: std_dev(&found),
            mean_abs_error: if errs.is_empty() { f64::NAN } else { mean(&errs) },
            missing: values.len() - found.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub case: u8,
    pub train_prior: f64,
    pub test_prior: f64,
    /// Equal-cost Bayes boundary under the test prior.
    pub optimal_boundary: f64,
    pub max_mixture_proportion: f64,
    pub drpu: BoundarySummary,
    pub upu: BoundarySummary,
    pub mean_drpu_test_error: f64,
    pub mean_upu_test_error: f64,
    pub runs: Vec<BoundaryRun>,
}

impl BoundaryReport {
    pub fn from_runs(cfg: &BoundaryConfig, runs: Vec<BoundaryRun>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Empty("boundary runs".into()));
        }
        let case = cfg.synthetic_case()?;
        let (tr, te) = cfg.priors()?;
        let optimal = case.bayes_boundary(te);
        let d: Vec<Option<f64>> = runs.iter().map(|r| r.drpu_boundary).collect();
        let u: Vec<Option<f64>> = runs.iter().map(|r| r.upu_boundary).collect();
        Ok(Self {
            case: cfg.case,
            train_prior: tr,
            test_prior: te,
            optimal_boundary: optimal,
            max_mixture_proportion: case.max_mixture_proportion(tr),
            drpu: BoundarySummary::from(&d, optimal),
            upu: BoundarySummary::from(&u, optimal),
            mean_drpu_test_error: mean(&runs.iter().map(|r| r.drpu_test_error).collect::<Vec<_>>()),
            mean_upu_test_error: mean(&runs.iter().map(|r| r.upu_test_error).collect::<Vec<_>>()),
            runs,
        })
    }

    /// Plot-ready rows: `seed,method,boundary,optimal`.
    pub fn boundary_csv(&self) -> String {
        let mut s = String::from("seed,method,boundary,optimal\n");
        for r in &self.runs {
            for (m, b) in [("drpu", r.drpu_boundary), ("upu", r.upu_boundary)] {
                let b = b.map_or(String::new(), |v| v.to_string());
                s.push_str(&format!("{},{m},{b},{}\n", r.seed, self.optimal_boundary));
            }
        }
        s
    }

    /// Plot-ready rows: `seed,method,epoch,train_objective,val_objective`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("seed,method,epoch,train_objective,val_objective\n");
        for r in &self.runs {
            for (m, rep) in [("drpu", &r.drpu_report), ("upu", &r.upu_report)] {
                for e in &rep.epochs {
                    s.push_str(&format!("{},{m},{},{},{}\n", r.seed, e.epoch, e.train_objective, e.val_objective));
                }
            }
        }
        s
    }
}

pub fn boundary_experiment(cfg: &BoundaryConfig, seeds: &[u64]) -> Result<BoundaryReport> {
    let runs = seeds.iter().map(|&s| boundary_run(cfg, s)).collect::<Result<Vec<_>>>()?;
    BoundaryReport::from_runs(cfg, runs)
}

/// `min p(x) / p_+(x)` over an evenly spaced grid on `[lo, hi]`.
pub fn grid_mixture_proportion(spec: &GaussianMixtureSpec, lo: f64, hi: f64, n: usize) -> Result<f64> {
    if spec.dim() != 1 {
        return Err(Error::invalid("spec", "grid search needs one-dimensional data"));
    }
    if n < 2 || !(lo < hi) {
        return Err(Error::invalid("grid", "need at least two points and lo < hi"));
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let pp = spec.density_pos(&[x]);
        if pp > 0.0 {
            best = best.min(spec.density(&[x]) / pp);
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Prior estimation with the exact ratio

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorQualityConfig {
    pub case: u8,
    pub prior: f64,
    /// `(n_pos, n_unl)` pairs.
    pub sizes: Vec<(usize, usize)>,
    pub gamma: f64,
}

impl Default for PriorQualityConfig {
    fn default() -> Self {
        Self {
            case: 1,
            prior: 0.4,
            sizes: vec![(1000, 5000), (10000, 50000)],
            gamma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorQualityRow {
    pub n_pos: usize,
    pub n_unl: usize,
    pub estimates: Vec<f64>,
    pub abs_errors: Vec<f64>,
    pub median_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorQualityReport {
    pub prior: f64,
    pub gamma: f64,
    pub seeds: Vec<u64>,
    pub rows: Vec<PriorQualityRow>,
}

/// Scores each sample with the true ratio `p_+/p` and estimates the prior.
pub fn prior_quality(cfg: &PriorQualityConfig, seeds: &[u64]) -> Result<PriorQualityReport> {
    let spec = SyntheticCase::from_index(cfg.case)?.spec(cfg.prior)?;
    let mut rows = Vec::new();
    for &(n_pos, n_unl) in &cfg.sizes {
        let mut estimates = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let d = spec.sample_pu(n_pos, n_unl, sub_seed(seed, TAG_TRAIN))?;
            let rp: Vec<f64> = d.positives.rows().map(|x| spec.ratio(x)).collect();
            let ru: Vec<f64> = d.unlabeled.rows().map(|x| spec.ratio(x)).collect();
            estimates.push(estimate_prior(&rp, &ru, cfg.gamma)?.value);
        }
        let abs_errors: Vec<f64> = estimates.iter().map(|e| (e - cfg.prior).abs()).collect();
        rows.push(PriorQualityRow {
            n_pos,
            n_unl,
            median_abs_error: median(&abs_errors),
            estimates,
            abs_errors,
        });
    }
    Ok(PriorQualityReport {
        prior: cfg.prior,
        gamma: cfg.gamma,
        seeds: seeds.to_vec(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Multi-dimensional benchmark analogue

/// Two isotropic unit-variance Gaussians in `dim` dimensions whose means
/// are `separation` apart along the diagonal.
pub fn two_gaussian_spec(dim: usize, separation: f64, prior: f64) -> Result<GaussianMixtureSpec> {
    if dim == 0 {
        return Err(Error::invalid("dim", "must be positive"));
    }
    let m = separation / 2.0 / (dim as f64).sqrt();
    GaussianMixtureSpec::new(
        vec![Component::new(vec![m; dim], 1.0, 1.0)],
        vec![Component::new(vec![-m; dim], 1.0, 1.0)],
        prior,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub dim: usize,
    pub separation: f64,
    pub train_prior: f64,
    pub test_priors: Vec<f64>,
    pub n_pos: usize,
    pub n_unl: usize,
    pub n_val_pos: usize,
    pub n_val_unl: usize,
    pub n_test: usize,
    pub hidden: Vec<usize>,
    pub cost: f64,
    pub gamma: f64,
    pub prior_error: f64,
    pub baseline_loss: SurrogateLoss,
    pub drpu_train: TrainConfig,
    pub baseline_train: TrainConfig,
    /// Record per-epoch test error of every method and test prior.
    pub trace: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let drpu_train = TrainConfig {
            alpha: 0.4,
            epochs: 50,
            batch_size: 100,
            learning_rate: 1e-3,
            lr_halving_period: Some(20),
            adam_beta1: 0.9,
            l2_reg: 5e-3,
            ..TrainConfig::default()
        };
        Self {
            dim: 10,
            separation: 2.0,
            train_prior: 0.5,
            test_priors: vec![0.2, 0.4, 0.6, 0.8],
            n_pos: 1000,
            n_unl: 5000,
            n_val_pos: 500,
            n_val_unl: 2500,
            n_test: 2000,
            hidden: vec![64, 64],
            cost: 0.5,
            gamma: 0.5,
            prior_error: 0.15,
            baseline_loss: SurrogateLoss::Sigmoid,
            baseline_train: drpu_train.clone(),
            drpu_train,
            trace: false,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&w| w == 0 || w > 64) {
            return Err(Error::invalid("hidden", "layer widths must lie in 1..=64"));
        }
        if self.test_priors.is_empty() {
            return Err(Error::invalid("test_priors", "must not be empty"));
        }
        for &p in self.test_priors.iter().chain([&self.train_prior, &self.cost, &self.gamma]) {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid("prior", format!("priors, cost and gamma must lie in (0, 1), got {p}")));
            }
        }
        let wrong = self.train_prior + self.prior_error;
        if !(wrong > 0.0 && wrong < 1.0) {
            return Err(Error::invalid("prior_error", "train_prior + prior_error must lie in (0, 1)"));
        }
        self.drpu_train.validate().map_err(|e| prefix_field("drpu_train", e))?;
        self.baseline_train.validate().map_err(|e| prefix_field("baseline_train", e))
    }

    fn layers(&self) -> Vec<usize> {
        let mut l = vec![self.dim];
        l.extend(&self.hidden);
        l.push(1);
        l
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub test_prior: f64,
    pub adaptation: Adaptation,
    pub drpu_accuracy: f64,
    pub drpu_auc: f64,
    pub nnpu_true_accuracy: f64,
    pub nnpu_misestimated_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seed: u64,
    pub method: String,
    pub test_prior: f64,
    pub epoch: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub seed: u64,
    pub cells: Vec<BenchmarkCell>,
    pub drpu_selected_epoch: Option<usize>,
    pub traces: Vec<TraceRow>,
}

type TraceSink = std::rc::Rc<std::cell::RefCell<(Vec<TraceRow>, Option<Error>)>>;

pub fn benchmark_run(cfg: &BenchmarkConfig, seed: u64) -> Result<BenchmarkRun> {
    cfg.validate()?;
    let spec = two_gaussian_spec(cfg.dim, cfg.separation, cfg.train_prior)?;
    let train_set = spec.sample_pu(cfg.n_pos, cfg.n_unl, sub_seed(seed, TAG_TRAIN))?;
    let val = spec.sample_pu(cfg.n_val_pos, cfg.n_val_unl, sub_seed(seed, TAG_VAL))?;
    let tests = cfg
        .test_priors
        .iter()
        .enumerate()
        .map(|(i, &p)| spec.with_prior(p)?.sample_labeled(cfg.n_test, sub_seed(seed, TAG_TEST + 16 * i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let model = RatioModel::mlp(&cfg.layers(), sub_seed(seed, TAG_MODEL))?;

    let sink: TraceSink = Default::default();
    let make_observer = |method: &'static str, is_ratio: bool| {
        let sink = sink.clone();
        let tests = &tests;
        let val = &val;
        move |epoch: usize, m: &RatioModel| {
            let run = || -> Result<Vec<TraceRow>> {
                let mut rows = Vec::new();
                let (rp, ru) = if is_ratio {
                    (m.predict_all(&val.positives)?, m.predict_all(&val.unlabeled)?)
                } else {
                    (Vec::new(), Vec::new())
                };
                for (t, &p) in tests.iter().zip(&cfg.test_priors) {
                    let s = m.predict_all(&t.points)?;
                    let thr = if is_ratio {
                        adapt_from_scores(&rp, &ru, &s, cfg.cost, cfg.gamma)?.theta
                    } else {
                        0.0
                    };
                    let acc = accuracy(&t.labels, &classify_scores(&s, thr))?;
                    rows.push(TraceRow {
                        seed,
                        method: method.into(),
                        test_prior: p,
                        epoch,
                        error: 1.0 - acc,
                    });
                }
                Ok(rows)
            };
            let mut guard = sink.borrow_mut();
            if guard.1.is_some() {
                return;
            }
            match run() {
                Ok(rows) => guard.0.extend(rows),
                Err(e) => guard.1 = Some(e),
            }
        }
    };

    let drpu_cfg = with_seed(&cfg.drpu_train, seed);
    let objective = DensityRatioObjective::corrected(BregmanGenerator::lsif(), drpu_cfg.alpha);
    let mut obs = make_observer("drpu", true);
    let (drpu, drpu_report) = train_objective(
        model.clone(),
        &train_set,
        &val,
        &objective,
        &drpu_cfg,
        Selection::BestValidation,
        if cfg.trace { Some(&mut obs) } else { None },
    )?;

    let base_cfg = with_seed(&cfg.baseline_train, seed);
    let mut nnpu = Vec::new();
    for (name, prior) in [("nnpu_true", cfg.train_prior), ("nnpu_misestimated", cfg.train_prior + cfg.prior_error)] {
        let objective = PuRiskObjective {
            method: PuMethod::Nnpu,
            loss: cfg.baseline_loss,
            prior,
        };
        let mut obs = make_observer(name, false);
        let (m, _) = train_baseline(
            &objective,
            model.clone(),
            &train_set,
            &val,
            &base_cfg,
            if cfg.trace { Some(&mut obs) } else { None },
        )?;
        nnpu.push(m);
    }

    let mut cells = Vec::new();
    for (t, &p) in tests.iter().zip(&cfg.test_priors) {
        let adaptation = adapt_threshold(&drpu, &val, &t.points, cfg.cost, cfg.gamma)?;
        let r = drpu.predict_all(&t.points)?;
        let nn_acc = |m: &RatioModel| -> Result<f64> { accuracy(&t.labels, &classify_scores(&m.predict_all(&t.points)?, 0.0)) };
        cells.push(BenchmarkCell {
            test_prior: p,
            drpu_accuracy: accuracy(&t.labels, &classify_scores(&r, adaptation.theta))?,
            drpu_auc: auc_labeled(&r, &t.labels)?,
            nnpu_true_accuracy: nn_acc(&nnpu[0])?,
            nnpu_misestimated_accuracy: nn_acc(&nnpu[1])?,
            adaptation,
        });
    }
    let (traces, err) = std::mem::take(&mut *sink.borrow_mut());
    if let Some(e) = err {
        return Err(e);
    }
    Ok(BenchmarkRun {
        seed,
        cells,
        drpu_selected_epoch: drpu_report.selected_epoch,
        traces,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummaryRow {
    pub test_prior: f64,
    pub drpu_accuracy: f64,
    pub drpu_auc: f64,
    pub nnpu_true_accuracy: f64,
    pub nnpu_misestimated_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// Mean over seeds, accuracies in percent.
    pub rows: Vec<BenchmarkSummaryRow>,
    /// Mean over test priors of the rows above.
    pub average: BenchmarkSummaryRow,
    pub runs: Vec<BenchmarkRun>,
}

impl BenchmarkReport {
    pub fn from_runs(cfg: &BenchmarkConfig, runs: Vec<BenchmarkRun>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Empty("benchmark runs".into()));
        }
        let mut rows = Vec::new();
        for (i, &p) in cfg.test_priors.iter().enumerate() {
            let col = |f: fn(&BenchmarkCell) -> f64| mean(&runs.iter().map(|r| f(&r.cells[i])).collect::<Vec<_>>());
            rows.push(BenchmarkSummaryRow {
                test_prior: p,
                drpu_accuracy: 100.0 * col(|c| c.drpu_accuracy),
                drpu_auc: 100.0 * col(|c| c.drpu_auc),
                nnpu_true_accuracy: 100.0 * col(|c| c.nnpu_true_accuracy),
                nnpu_misestimated_accuracy: 100.0 * col(|c| c.nnpu_misestimated_accuracy),
            });
        }
        let avg = |f: fn(&BenchmarkSummaryRow) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>());
        let average = BenchmarkSummaryRow {
            test_prior: f64::NAN,
            drpu_accuracy: avg(|r| r.drpu_accuracy),
            drpu_auc: avg(|r| r.drpu_auc),
            nnpu_true_accuracy: avg(|r| r.nnpu_true_accuracy),
            nnpu_misestimated_accuracy: avg(|r| r.nnpu_misestimated_accuracy),
        };
        Ok(Self { rows, average, runs })
    }

    /// Plot-ready rows: `seed,method,test_prior,epoch,error`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("seed,method,test_prior,epoch,error\n");
        for r in &self.runs {
            for t in &r.traces {
                s.push_str(&format!("{},{},{},{},{}\n", t.seed, t.method, t.test_prior, t.epoch, t.error));
            }
        }
        s
    }
}

pub fn benchmark(cfg: &BenchmarkConfig, seeds: &[u64]) -> Result<BenchmarkReport> {
    let runs = seeds.iter().map(|&s| benchmark_run(cfg, s)).collect::<Result<Vec<_>>>()?;
    BenchmarkReport::from_runs(cfg, runs)
}

// ---------------------------------------------------------------------------
// Training-risk traces of a flexible model on a small sample

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverfitConfig {
    pub dim: usize,
    pub separation: f64,
    pub prior: f64,
    pub n_pos: usize,
    pub n_unl: usize,
    pub hidden: Vec<usize>,
    pub loss: SurrogateLoss,
    pub train: TrainConfig,
}

impl Default for OverfitConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            separation: 2.0,
            prior: 0.4,
            n_pos: 20,
            n_unl: 100,
            hidden: vec![64, 64],
            loss: SurrogateLoss::Sigmoid,
            train: TrainConfig {
                alpha: 0.3,
                epochs: 300,
                batch_size: 20,
                learning_rate: 1e-3,
                adam_beta1: 0.9,
                l2_reg: 0.0,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrpuTraceEpoch {
    pub epoch: usize,
    pub objective: f64,
    pub bracket: f64,
    /// Corrected objective minus its positive-sample term, recomputed from
    /// the model at that epoch.
    pub bracket_contribution: f64,
    /// Uncorrected objective on the training split.
    pub plain_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitReport {
    pub seed: u64,
    pub upu_risk: Vec<f64>,
    pub nnpu_risk: Vec<f64>,
    pub drpu: Vec<DrpuTraceEpoch>,
    pub upu_min: f64,
    pub nnpu_min: f64,
    pub drpu_min_contribution: f64,
    pub drpu_negative_bracket_epochs: usize,
}

impl OverfitReport {
    /// Plot-ready rows: `epoch,upu_risk,nnpu_risk,drpu_objective,drpu_bracket,drpu_plain_objective`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("epoch,upu_risk,nnpu_risk,drpu_objective,drpu_bracket,drpu_plain_objective\n");
        for (i, d) in self.drpu.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                d.epoch, self.upu_risk[i], self.nnpu_risk[i], d.objective, d.bracket, d.plain_objective
            ));
        }
        s
    }
}

pub fn overfit_run(cfg: &OverfitConfig, seed: u64) -> Result<OverfitReport> {
    cfg.train.validate().map_err(|e| prefix_field("train", e))?;
    let spec = two_gaussian_spec(cfg.dim, cfg.separation, cfg.prior)?;
    let train_set = spec.sample_pu(cfg.n_pos, cfg.n_unl, sub_seed(seed, TAG_TRAIN))?;
    let val = spec.sample_pu(cfg.n_pos, cfg.n_unl, sub_seed(seed, TAG_VAL))?;
    let mut layers = vec![cfg.dim];
    layers.extend(&cfg.hidden);
    layers.push(1);
    let model = RatioModel::mlp(&layers, sub_seed(seed, TAG_MODEL))?;
    let tcfg = with_seed(&cfg.train, seed);

    let mut risks = Vec::new();
    for method in [PuMethod::Upu, PuMethod::Nnpu] {
        let objective = PuRiskObjective {
            method,
            loss: cfg.loss,
            prior: cfg.prior,
        };
        let (_, rep) = train_baseline(&objective, model.clone(), &train_set, &val, &tcfg, None)?;
        risks.push(rep.epochs.iter().map(|e| e.train_objective).collect::<Vec<_>>());
    }

    let gen = BregmanGenerator::lsif();
    let alpha = tcfg.alpha;
    let mut positive_terms = Vec::new();
    let mut plain = Vec::new();
    let mut failure = None;
    let mut obs = |_: usize, m: &RatioModel| {
        let run = || -> Result<(f64, f64)> {
            let rp = m.predict_all(&train_set.positives)?;
            let ru = m.predict_all(&train_set.unlabeled)?;
            let pos = rp.iter().map(|&r| -gen.f_prime(r) + alpha * gen.big_f(r)).sum::<f64>() / rp.len() as f64
                + gen.f_conj_at_zero();
            Ok((pos, empirical_objective(&gen, &rp, &ru)?))
        };
        match run() {
            Ok((p, v)) => {
                positive_terms.push(p);
                plain.push(v);
            }
            Err(e) => failure = Some(e),
        }
    };
    let objective = DensityRatioObjective::corrected(gen, alpha);
    let (_, rep) = train_objective(model, &train_set, &val, &objective, &tcfg, Selection::LastEpoch, Some(&mut obs))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let drpu: Vec<DrpuTraceEpoch> = rep
        .epochs
        .iter()
        .zip(positive_terms.iter().zip(&plain))
        .map(|(e, (&p, &v))| DrpuTraceEpoch {
            epoch: e.epoch,
            objective: e.train_objective,
            bracket: e.train_bracket,
            bracket_contribution: e.train_objective - p,
            plain_objective: v,
        })
        .collect();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let nnpu_risk = risks.pop().unwrap_or_default();
    let upu_risk = risks.pop().unwrap_or_default();
    Ok(OverfitReport {
        seed,
        upu_min: min(&upu_risk),
        nnpu_min: min(&nnpu_risk),
        drpu_min_contribution: min(&drpu.iter().map(|d| d.bracket_contribution).collect::<Vec<_>>()),
        drpu_negative_bracket_epochs: drpu.iter().filter(|d| d.bracket < 0.0).count(),
        upu_risk,
        nnpu_risk,
        drpu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_differ() {
        let a: Vec<u64> = (0..5).map(|t| sub_seed(7, t)).collect();
        for i in 0..5 {
            for j in 0..i {
                assert_ne!(a[i], a[j]);
            }
        }
        assert_ne!(sub_seed(7, 1), sub_seed(8, 1));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn grid_gap_for_overlapping_case() {
        let s = SyntheticCase::Overlapping.spec(0.6).unwrap();
        let g = grid_mixture_proportion(&s, -10.0, 10.0, 4001).unwrap();
        assert!((g - 0.7).abs() < 1e-6, "{g}");
        let s = SyntheticCase::Separable.spec(0.4).unwrap();
        let g = grid_mixture_proportion(&s, -10.0, 10.0, 4001).unwrap();
        assert!((g - 0.4).abs() < 1e-6, "{g}");
    }

    #[test]
    fn config_validation_names_fields() {
        let cfg = BoundaryConfig {
            test_prior: Some(1.5),
            ..BoundaryConfig::default()
        };
        match cfg.validate() {
            Err(Error::InvalidArgument { field, .. }) => assert_eq!(field, "test_prior"),
            other => panic!("{other:?}"),
        }
        let mut cfg = BoundaryConfig::default();
        cfg.train.learning_rate = -1.0;
        match cfg.validate() {
            Err(Error::InvalidArgument { field, .. }) => assert_eq!(field, "train.learning_rate"),
            other => panic!("{other:?}"),
        }
    }
}
