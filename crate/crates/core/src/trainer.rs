//! Mini-batch training with Adam and best-validation snapshotting.
//!
//! The loop is objective-agnostic: anything implementing [`PuObjective`]
//! supplies per-point derivatives with respect to the model outputs, and the
//! chain rule through the model is done here. The density-ratio objective
//! lives in this module; the PU risk baselines plug into the same loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{seeded_rng, PUDataset, Points};
use crate::divergence::{self, Branch, ObjectiveValue};
use crate::error::{Error, Result};
use crate::generators::BregmanGenerator;
use crate::models::{RatioModel, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Lower bound on the class prior used by the non-negative correction.
    pub alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// What `batch_size` counts.
    pub pairing: BatchPairing,
    pub learning_rate: f64,
    /// Halve the learning rate every this many epochs.
    pub lr_halving_period: Option<usize>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub l2_reg: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Settings of the one-dimensional synthetic experiments.
    fn default() -> Self {
        Self {
            alpha: 0.0,
            epochs: 200,
            batch_size: 200,
            pairing: BatchPairing::Positives,
            learning_rate: 2e-5,
            lr_halving_period: None,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            l2_reg: 0.1,
            seed: 0,
        }
    }
}

/// Composition of a mini-batch, with `k = max(1, round(n_unl / n_pos))`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchPairing {
    /// `batch_size` positives and `batch_size * k` unlabeled points.
    #[default]
    Positives,
    /// `batch_size` unlabeled points and `max(1, round(batch_size / k))` positives.
    Unlabeled,
}

impl BatchPairing {
    /// `(positives, unlabeled)` per batch.
    pub fn batch_shape(self, n_pos: usize, n_unl: usize, batch_size: usize) -> (usize, usize) {
        let k = ((n_unl as f64 / n_pos as f64).round() as usize).max(1);
        match self {
            BatchPairing::Positives => (batch_size, batch_size * k),
            BatchPairing::Unlabeled => (((batch_size as f64 / k as f64).round() as usize).max(1), batch_size),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1), got {}", self.alpha)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.lr_halving_period == Some(0) {
            return Err(Error::invalid("lr_halving_period", "must be positive"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid(name, format!("must lie in (0, 1), got {b}")));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::invalid("adam_epsilon", "must be positive"));
        }
        if !(self.l2_reg >= 0.0) {
            return Err(Error::invalid("l2_reg", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_halving_period {
            Some(p) => self.learning_rate * 0.5f64.powi((epoch / p) as i32),
            None => self.learning_rate,
        }
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    l2_reg: f64,
}

impl AdamState {
    pub fn new(n_params: usize, beta1: f64, beta2: f64, epsilon: f64, l2_reg: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1,
            beta2,
            epsilon,
            l2_reg,
        }
    }

    pub fn from_config(n_params: usize, cfg: &TrainConfig) -> Self {
        Self::new(n_params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon, cfg.l2_reg)
    }

    pub fn steps(&self) -> u32 {
        self.t
    }
}

/// One bias-corrected Adam update. The `l2_reg * params` term is added to the
/// gradient before the moments are updated. Returns the parameter delta.
pub fn adam_step(state: &mut AdamState, params: &[f64], grad: &[f64], lr: f64) -> Result<Vec<f64>> {
    if grad.len() != state.m.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            got: if grad.len() != state.m.len() { grad.len() } else { params.len() },
        });
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    let mut delta = Vec::with_capacity(grad.len());
    for i in 0..grad.len() {
        let g = grad[i] + state.l2_reg * params[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        delta.push(-lr * m_hat / (v_hat.sqrt() + state.epsilon));
    }
    Ok(delta)
}

/// An empirical objective over positive and unlabeled model outputs.
pub trait PuObjective {
    /// Per-point derivatives (already divided by the set sizes) of the
    /// quantity to descend on this batch, and the branch taken.
    fn output_gradients(&self, out_pos: &[f64], out_unl: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Branch)>;

    /// Objective reported on the training split.
    fn training_value(&self, out_pos: &[f64], out_unl: &[f64]) -> Result<ObjectiveValue>;

    /// Criterion minimised for model selection on the validation split.
    fn selection_value(&self, out_pos: &[f64], out_unl: &[f64]) -> Result<f64>;
}

/// Bregman density-ratio objective, optionally with the non-negative correction.
#[derive(Debug, Clone, Copy)]
pub struct DensityRatioObjective {
    pub generator: BregmanGenerator,
    pub alpha: f64,
    pub corrected: bool,
}

impl DensityRatioObjective {
    pub fn corrected(generator: BregmanGenerator, alpha: f64) -> Self {
        Self {
            generator,
            alpha,
            corrected: true,
        }
    }

    pub fn plain(generator: BregmanGenerator) -> Self {
        Self {
            generator,
            alpha: 0.0,
            corrected: false,
        }
    }
}

impl PuObjective for DensityRatioObjective {
    fn output_gradients(&self, out_pos: &[f64], out_unl: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Branch)> {
        if self.corrected {
            divergence::output_gradients(&self.generator, self.alpha, out_pos, out_unl)
        } else {
            let (dp, du, _) = divergence::output_gradients(&self.generator, 0.0, out_pos, out_unl)?;
            Ok((dp, du, Branch::Normal))
        }
    }

    fn training_value(&self, out_pos: &[f64], out_unl: &[f64]) -> Result<ObjectiveValue> {
        let corrected = divergence::corrected_objective(&self.generator, self.alpha, out_pos, out_unl)?;
        if self.corrected {
            Ok(corrected)
        } else {
            Ok(ObjectiveValue {
                value: divergence::empirical_objective(&self.generator, out_pos, out_unl)?,
                branch: Branch::Normal,
                bracket: corrected.bracket,
            })
        }
    }

    fn selection_value(&self, out_pos: &[f64], out_unl: &[f64]) -> Result<f64> {
        divergence::empirical_objective(&self.generator, out_pos, out_unl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Keep the parameters from the epoch with the lowest validation criterion.
    BestValidation,
    LastEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Objective on the full training split (corrected for the density-ratio objective).
    pub train_objective: f64,
    /// Correction bracket on the full training split.
    pub train_bracket: f64,
    /// Selection criterion on the validation split.
    pub val_objective: f64,
    /// Fraction of mini-batches that took the corrected branch.
    pub corrected_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub selection: Selection,
    /// Validation criterion before the first update.
    pub initial_val_objective: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based index of the epoch whose parameters were returned.
    pub selected_epoch: Option<usize>,
}

impl TrainReport {
    pub fn selected(&self) -> Option<&EpochRecord> {
        self.selected_epoch.map(|e| &self.epochs[e - 1])
    }
}

/// Index sets for the mini-batches of one epoch.
///
/// Splits one epoch into batches shaped by `pairing`; one epoch is one pass
/// over the shuffled unlabeled set. Positives are taken from a fresh
/// permutation and drawn with replacement once it runs out.
pub fn epoch_batches<R: Rng>(
    n_pos: usize,
    n_unl: usize,
    batch_size: usize,
    pairing: BatchPairing,
    rng: &mut R,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let (pos_per_batch, unl_per_batch) = pairing.batch_shape(n_pos, n_unl, batch_size);
    let mut unl: Vec<usize> = (0..n_unl).collect();
    unl.shuffle(rng);
    let mut pos: Vec<usize> = (0..n_pos).collect();
    pos.shuffle(rng);
    let mut next_pos = 0;
    unl.chunks(unl_per_batch)
        .map(|chunk| {
            let batch_pos = (0..pos_per_batch)
                .map(|_| {
                    if next_pos < pos.len() {
                        next_pos += 1;
                        pos[next_pos - 1]
                    } else {
                        rng.random_range(0..n_pos)
                    }
                })
                .collect();
            (batch_pos, chunk.to_vec())
        })
        .collect()
}

struct Split {
    pos: Points,
    unl: Points,
}

impl Split {
    fn outputs(&self, model: &RatioModel, ws: &mut Workspace) -> (Vec<f64>, Vec<f64>) {
        let eval = |pts: &Points, ws: &mut Workspace| pts.rows().map(|z| model.value_from_features(z, ws)).collect();
        (eval(&self.pos, ws), eval(&self.unl, ws))
    }
}

fn check_split(name: &str, ds: &PUDataset, dim: usize) -> Result<()> {
    if ds.n_pos() == 0 || ds.n_unl() == 0 {
        return Err(Error::Empty(format!("{name} split needs positive and unlabeled points")));
    }
    if ds.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: ds.dim(),
        });
    }
    Ok(())
}

/// Called after every epoch with the 1-based epoch index and current model.
pub type EpochObserver<'a> = &'a mut dyn FnMut(usize, &RatioModel);

/// Generic training loop.
pub fn train_objective<O: PuObjective>(
    mut model: RatioModel,
    train: &PUDataset,
    val: &PUDataset,
    objective: &O,
    cfg: &TrainConfig,
    selection: Selection,
    mut observer: Option<EpochObserver<'_>>,
) -> Result<(RatioModel, TrainReport)> {
    cfg.validate()?;
    check_split("training", train, model.dim_in())?;
    check_split("validation", val, model.dim_in())?;
    let (bp, bu) = cfg.pairing.batch_shape(train.n_pos(), train.n_unl(), cfg.batch_size);
    if bp > train.n_pos() || cfg.batch_size > train.n_unl() || bu == 0 {
        return Err(Error::invalid(
            "batch_size",
            format!(
                "{} exceeds the training split (n_pos = {}, n_unl = {})",
                cfg.batch_size,
                train.n_pos(),
                train.n_unl()
            ),
        ));
    }

    let tr = Split {
        pos: model.features_all(&train.positives)?,
        unl: model.features_all(&train.unlabeled)?,
    };
    let va = Split {
        pos: model.features_all(&val.positives)?,
        unl: model.features_all(&val.unlabeled)?,
    };
    let mut ws = Workspace::default();
    let (vp, vu) = va.outputs(&model, &mut ws);
    let initial_val_objective = objective.selection_value(&vp, &vu)?;

    let mut rng = seeded_rng(cfg.seed, 0x7a1);
    let mut adam = AdamState::from_config(model.params().len(), cfg);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut grad = vec![0.0; model.params().len()];
    let mut out_pos = Vec::new();
    let mut out_unl = Vec::new();

    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate_at(epoch - 1);
        let batches = epoch_batches(train.n_pos(), train.n_unl(), cfg.batch_size, cfg.pairing, &mut rng);
        let mut corrected = 0usize;
        for (bp, bu) in &batches {
            out_pos.clear();
            out_pos.extend(bp.iter().map(|&i| model.value_from_features(tr.pos.row(i), &mut ws)));
            out_unl.clear();
            out_unl.extend(bu.iter().map(|&i| model.value_from_features(tr.unl.row(i), &mut ws)));
            if let Some(bad) = out_pos.iter().chain(&out_unl).find(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("model output {bad} on a training batch"),
                });
            }
            let (dp, du, branch) = objective.output_gradients(&out_pos, &out_unl)?;
            if branch == Branch::Corrected {
                corrected += 1;
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (&i, &s) in bp.iter().zip(&dp) {
                model.accumulate_grad(tr.pos.row(i), s, &mut grad, &mut ws);
            }
            for (&i, &s) in bu.iter().zip(&du) {
                model.accumulate_grad(tr.unl.row(i), s, &mut grad, &mut ws);
            }
            let delta = adam_step(&mut adam, model.params(), &grad, lr)?;
            for (p, d) in model.params_mut().iter_mut().zip(delta) {
                *p += d;
            }
        }

        let (tp, tu) = tr.outputs(&model, &mut ws);
        let (vp, vu) = va.outputs(&model, &mut ws);
        if tp.iter().chain(&tu).chain(&vp).chain(&vu).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                detail: "non-finite model output after the epoch".into(),
            });
        }
        let train_value = objective.training_value(&tp, &tu)?;
        let val_value = objective.selection_value(&vp, &vu)?;
        if !train_value.value.is_finite() || !val_value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("train objective {}, validation objective {}", train_value.value, val_value),
            });
        }
        records.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_objective: train_value.value,
            train_bracket: train_value.bracket,
            val_objective: val_value,
            corrected_fraction: corrected as f64 / batches.len() as f64,
        });
        let improves = match (&best, selection) {
            (None, _) => true,
            (Some(_), Selection::LastEpoch) => true,
            (Some((_, b, _)), Selection::BestValidation) => val_value < *b,
        };
        if improves {
            best = Some((epoch, val_value, model.params().to_vec()));
        }
        if let Some(obs) = observer.as_mut() {
            obs(epoch, &model);
        }
    }

    let selected_epoch = match best {
        Some((epoch, _, params)) => {
            model.set_params(params)?;
            Some(epoch)
        }
        None => None,
    };
    Ok((
        model,
        TrainReport {
            selection,
            initial_val_objective,
            epochs: records,
            selected_epoch,
        },
    ))
}

/// Trains a density-ratio model by minimising the non-negative corrected
/// Bregman objective, keeping the epoch with the lowest validation value of
/// the plain objective.
pub fn train(
    model: RatioModel,
    train: &PUDataset,
    val: &PUDataset,
    gen: &BregmanGenerator,
    cfg: &TrainConfig,
) -> Result<(RatioModel, TrainReport)> {
    gen.require_strongly_convex()?;
    let objective = DensityRatioObjective::corrected(*gen, cfg.alpha);
    train_objective(model, train, val, &objective, cfg, Selection::BestValidation, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_case1;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = AdamState::new(3, 0.9, 0.999, 1e-8, 0.0);
        let d = adam_step(&mut s, &[1.0, -2.0, 0.5], &[0.0; 3], 0.1).unwrap();
        assert_eq!(d, vec![0.0; 3]);
        assert!(adam_step(&mut s, &[1.0], &[0.0], 0.1).is_err());
    }

    #[test]
    fn constant_gradient_step_tends_to_learning_rate() {
        let mut s = AdamState::new(2, 0.5, 0.999, 1e-8, 0.0);
        let mut params = vec![0.0, 0.0];
        let mut last = vec![];
        for _ in 0..2000 {
            last = adam_step(&mut s, &params, &[3.0, -0.01], 1e-3).unwrap();
            params.iter_mut().zip(&last).for_each(|(p, d)| *p += d);
        }
        // m_hat = g and v_hat = g^2 for a constant gradient, so |delta| = lr |g| / (|g| + eps)
        assert!((last[0] + 1e-3).abs() < 1e-9);
        assert!((last[1] - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn l2_term_is_added_to_gradient() {
        let mut a = AdamState::new(1, 0.9, 0.999, 1e-8, 0.5);
        let mut b = AdamState::new(1, 0.9, 0.999, 1e-8, 0.0);
        let da = adam_step(&mut a, &[2.0], &[0.3], 0.01).unwrap();
        let db = adam_step(&mut b, &[2.0], &[0.3 + 0.5 * 2.0], 0.01).unwrap();
        assert_eq!(da, db);
    }

    #[test]
    fn batches_cover_unlabeled_once() {
        let mut rng = seeded_rng(1, 0);
        let batches = epoch_batches(20, 100, 8, BatchPairing::Positives, &mut rng);
        // k = 5 → 40 unlabeled per batch → 3 batches (40, 40, 20)
        assert_eq!(batches.len(), 3);
        let mut seen: Vec<usize> = batches.iter().flat_map(|(_, u)| u.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
        assert!(batches.iter().all(|(p, _)| p.len() == 8));
        // the first 20 positives form a permutation; the rest are drawn with replacement
        let mut first: Vec<usize> = batches.iter().flat_map(|(p, _)| p.clone()).take(20).collect();
        first.sort_unstable();
        assert_eq!(first, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn unlabeled_pairing_shape() {
        assert_eq!(BatchPairing::Unlabeled.batch_shape(200, 1000, 200), (40, 200));
        assert_eq!(BatchPairing::Positives.batch_shape(200, 1000, 200), (200, 1000));
        assert_eq!(BatchPairing::Unlabeled.batch_shape(20, 1000, 10), (1, 10));
        let mut rng = seeded_rng(2, 0);
        let batches = epoch_batches(200, 1000, 200, BatchPairing::Unlabeled, &mut rng);
        assert_eq!(batches.len(), 5);
        assert!(batches.iter().all(|(p, u)| p.len() == 40 && u.len() == 200));
        let mut pos: Vec<usize> = batches.iter().flat_map(|(p, _)| p.clone()).collect();
        pos.sort_unstable();
        assert_eq!(pos, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn learning_rate_halving() {
        let cfg = TrainConfig {
            learning_rate: 1.0,
            lr_halving_period: Some(20),
            ..Default::default()
        };
        assert_eq!(cfg.learning_rate_at(0), 1.0);
        assert_eq!(cfg.learning_rate_at(19), 1.0);
        assert_eq!(cfg.learning_rate_at(20), 0.5);
        assert_eq!(cfg.learning_rate_at(45), 0.25);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { alpha: 1.0, ..ok.clone() },
            TrainConfig { batch_size: 0, ..ok.clone() },
            TrainConfig { learning_rate: 0.0, ..ok.clone() },
            TrainConfig { adam_beta1: 1.0, ..ok.clone() },
            TrainConfig { l2_reg: -1.0, ..ok.clone() },
            TrainConfig { lr_halving_period: Some(0), ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    fn small_problem() -> (RatioModel, PUDataset, PUDataset) {
        let train = synth_case1(40, 200, 0.4, 1).unwrap().without_labels();
        let val = synth_case1(20, 100, 0.4, 2).unwrap().without_labels();
        let model = RatioModel::gaussian_basis_linear(train.unlabeled.clone(), 1.0).unwrap();
        (model, train, val)
    }

    #[test]
    fn zero_epochs_is_noop() {
        let (model, train, val) = small_problem();
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 10,
            ..Default::default()
        };
        let (out, report) = super::train(model.clone(), &train, &val, &BregmanGenerator::lsif(), &cfg).unwrap();
        assert_eq!(out, model);
        assert!(report.epochs.is_empty());
        assert_eq!(report.selected_epoch, None);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (model, train, val) = small_problem();
        let cfg = TrainConfig {
            batch_size: 41,
            epochs: 1,
            ..Default::default()
        };
        assert!(super::train(model.clone(), &train, &val, &BregmanGenerator::lsif(), &cfg).is_err());
        let cfg = TrainConfig {
            batch_size: 10,
            epochs: 1,
            ..Default::default()
        };
        assert!(super::train(model.clone(), &train, &val, &BregmanGenerator::kl_unchecked(), &cfg).is_err());
        let empty = PUDataset::new(Points::empty(1), val.unlabeled.clone(), None).unwrap();
        assert!(super::train(model, &train, &empty, &BregmanGenerator::lsif(), &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let (model, train, val) = small_problem();
        let cfg = TrainConfig {
            batch_size: 10,
            epochs: 50,
            learning_rate: 50.0,
            ..Default::default()
        };
        let err = super::train(model, &train, &val, &BregmanGenerator::exp(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }
}
