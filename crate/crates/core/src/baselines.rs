//! Unbiased and non-negative PU risk estimators, trained with the same loop
//! as the density-ratio model. Both need the class prior as an input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::PUDataset;
use crate::divergence::{Branch, ObjectiveValue};
use crate::error::{Error, Result};
use crate::models::{sigmoid, softplus, OutputMap, RatioModel};
use crate::trainer::{train_objective, EpochObserver, PuObjective, Selection, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateLoss {
    /// `log(1 + e^{-y v})`.
    Logistic,
    /// `1 / (1 + e^{y v})`.
    Sigmoid,
}

impl SurrogateLoss {
    pub fn loss(self, y: f64, v: f64) -> f64 {
        match self {
            SurrogateLoss::Logistic => softplus(-y * v),
            SurrogateLoss::Sigmoid => sigmoid(-y * v),
        }
    }

    pub fn dloss_dv(self, y: f64, v: f64) -> f64 {
        let s = sigmoid(-y * v);
        match self {
            SurrogateLoss::Logistic => -y * s,
            SurrogateLoss::Sigmoid => -y * s * (1.0 - s),
        }
    }
}

impl FromStr for SurrogateLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Self::Logistic),
            "sigmoid" => Ok(Self::Sigmoid),
            _ => Err(Error::invalid("loss", format!("unknown loss `{s}` (expected logistic or sigmoid)"))),
        }
    }
}

impl fmt::Display for SurrogateLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Logistic => "logistic",
            Self::Sigmoid => "sigmoid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PuMethod {
    Upu,
    Nnpu,
}

impl FromStr for PuMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "upu" => Ok(Self::Upu),
            "nnpu" => Ok(Self::Nnpu),
            _ => Err(Error::invalid("method", format!("unknown baseline `{s}` (expected upu or nnpu)"))),
        }
    }
}

fn check_inputs(prior: f64, g_pos: &[f64], g_unl: &[f64]) -> Result<()> {
    if !(0.0..=1.0).contains(&prior) {
        return Err(Error::invalid("prior", format!("must lie in [0, 1], got {prior}")));
    }
    if g_pos.is_empty() || g_unl.is_empty() {
        return Err(Error::Empty("decision values".into()));
    }
    Ok(())
}

fn mean(v: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    v.iter().map(|&x| f(x)).sum::<f64>() / v.len() as f64
}

/// Returns `(π mean_P ℓ(+1, g), mean_U ℓ(-1, g) - π mean_P ℓ(-1, g))`.
fn risk_parts(loss: SurrogateLoss, prior: f64, g_pos: &[f64], g_unl: &[f64]) -> (f64, f64) {
    let pos = prior * mean(g_pos, |v| loss.loss(1.0, v));
    let bracket = mean(g_unl, |v| loss.loss(-1.0, v)) - prior * mean(g_pos, |v| loss.loss(-1.0, v));
    (pos, bracket)
}

/// `π mean_P ℓ(+1, g) - π mean_P ℓ(-1, g) + mean_U ℓ(-1, g)`. May be negative.
pub fn upu_risk(loss: SurrogateLoss, prior: f64, g_pos: &[f64], g_unl: &[f64]) -> Result<f64> {
    check_inputs(prior, g_pos, g_unl)?;
    let (pos, bracket) = risk_parts(loss, prior, g_pos, g_unl);
    Ok(pos + bracket)
}

/// `π mean_P ℓ(+1, g) + (mean_U ℓ(-1, g) - π mean_P ℓ(-1, g))_+`.
pub fn nnpu_risk(loss: SurrogateLoss, prior: f64, g_pos: &[f64], g_unl: &[f64]) -> Result<(f64, Branch)> {
    check_inputs(prior, g_pos, g_unl)?;
    let (pos, bracket) = risk_parts(loss, prior, g_pos, g_unl);
    Ok((pos + bracket.max(0.0), Branch::from_bracket(bracket)))
}

/// PU risk as a training objective over decision values.
#[derive(Debug, Clone, Copy)]
pub struct PuRiskObjective {
    pub method: PuMethod,
    pub loss: SurrogateLoss,
    pub prior: f64,
}

impl PuObjective for PuRiskObjective {
    fn output_gradients(&self, g_pos: &[f64], g_unl: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Branch)> {
        check_inputs(self.prior, g_pos, g_unl)?;
        let (np, nu) = (g_pos.len() as f64, g_unl.len() as f64);
        let (pi, l) = (self.prior, self.loss);
        let branch = match self.method {
            PuMethod::Upu => Branch::Normal,
            PuMethod::Nnpu => Branch::from_bracket(risk_parts(l, pi, g_pos, g_unl).1),
        };
        Ok(match branch {
            Branch::Normal => (
                g_pos
                    .iter()
                    .map(|&v| pi * (l.dloss_dv(1.0, v) - l.dloss_dv(-1.0, v)) / np)
                    .collect(),
                g_unl.iter().map(|&v| l.dloss_dv(-1.0, v) / nu).collect(),
                Branch::Normal,
            ),
            // descend on the negated bracket
            Branch::Corrected => (
                g_pos.iter().map(|&v| pi * l.dloss_dv(-1.0, v) / np).collect(),
                g_unl.iter().map(|&v| -l.dloss_dv(-1.0, v) / nu).collect(),
                Branch::Corrected,
            ),
        })
    }

    fn training_value(&self, g_pos: &[f64], g_unl: &[f64]) -> Result<ObjectiveValue> {
        check_inputs(self.prior, g_pos, g_unl)?;
        let (pos, bracket) = risk_parts(self.loss, self.prior, g_pos, g_unl);
        let value = match self.method {
            PuMethod::Upu => pos + bracket,
            PuMethod::Nnpu => pos + bracket.max(0.0),
        };
        Ok(ObjectiveValue {
            value,
            branch: Branch::from_bracket(bracket),
            bracket,
        })
    }

    fn selection_value(&self, g_pos: &[f64], g_unl: &[f64]) -> Result<f64> {
        Ok(self.training_value(g_pos, g_unl)?.value)
    }
}

/// Trains a real-valued decision function `g` (the model's output map is
/// switched to identity) and returns the last-epoch parameters. Predictions
/// are `+1` iff `g(x) ≥ 0`.
pub fn train_baseline(
    objective: &PuRiskObjective,
    model: RatioModel,
    train: &PUDataset,
    val: &PUDataset,
    cfg: &TrainConfig,
    observer: Option<EpochObserver<'_>>,
) -> Result<(RatioModel, TrainReport)> {
    let prior = objective.prior;
    if !(prior > 0.0 && prior < 1.0) {
        return Err(Error::invalid("prior", format!("must lie in (0, 1), got {prior}")));
    }
    train_objective(
        model.with_output(OutputMap::Identity),
        train,
        val,
        objective,
        cfg,
        Selection::LastEpoch,
        observer,
    )
}
