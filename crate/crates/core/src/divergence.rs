//! Bregman-divergence objectives for density-ratio estimation from positive
//! and unlabeled samples.
//!
//! With `r_P`, `r_U` the model values on the positive and unlabeled sets,
//!
//! * the plain estimator is `mean_P[-f'(r)] + mean_U[f*(r)]`;
//! * the corrected estimator is
//!   `mean_P[-f'(r) + α F(r)] + (mean_U[F(r)] - α mean_P[F(r)])_+ + f*(0)`.
//!
//! The bracket `mean_U[F(r)] - α mean_P[F(r)]` estimates a nonnegative
//! population quantity; when a batch drives it below zero the gradient step
//! switches to ascending it.

use serde::{Deserialize, Serialize};

use crate::data::Points;
use crate::error::{Error, Result};
use crate::generators::BregmanGenerator;
use crate::models::{RatioModel, Workspace};

/// Which branch of the non-negative correction applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Normal,
    Corrected,
}

impl Branch {
    pub fn from_bracket(bracket: f64) -> Self {
        if bracket >= 0.0 {
            Branch::Normal
        } else {
            Branch::Corrected
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub value: f64,
    pub branch: Branch,
    /// `mean_U[F(r)] - α mean_P[F(r)]`.
    pub bracket: f64,
}

fn check_ratios(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty(format!("{name} ratio values")));
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeRatio { index, value });
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::invalid("alpha", format!("must lie in [0, 1), got {alpha}")))
    }
}

fn mean(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    values.iter().map(|&v| f(v)).sum::<f64>() / values.len() as f64
}

/// Plain empirical objective `mean_P[-f'(r)] + mean_U[f*(r)]`.
pub fn empirical_objective(gen: &BregmanGenerator, r_pos: &[f64], r_unl: &[f64]) -> Result<f64> {
    check_ratios("positive", r_pos)?;
    check_ratios("unlabeled", r_unl)?;
    Ok(mean(r_pos, |r| -gen.f_prime(r)) + mean(r_unl, |r| gen.f_conj(r)))
}

/// Non-negative corrected objective.
pub fn corrected_objective(gen: &BregmanGenerator, alpha: f64, r_pos: &[f64], r_unl: &[f64]) -> Result<ObjectiveValue> {
    check_alpha(alpha)?;
    check_ratios("positive", r_pos)?;
    check_ratios("unlabeled", r_unl)?;
    let pos_f = mean(r_pos, |r| gen.big_f(r));
    let bracket = mean(r_unl, |r| gen.big_f(r)) - alpha * pos_f;
    let value = mean(r_pos, |r| -gen.f_prime(r)) + alpha * pos_f + bracket.max(0.0) + gen.f_conj_at_zero();
    Ok(ObjectiveValue {
        value,
        branch: Branch::from_bracket(bracket),
        bracket,
    })
}

/// Per-point derivatives of the objective that the current branch descends,
/// with respect to the model values.
///
/// Returns `(d/dr_P, d/dr_U, branch)`; each entry already carries its
/// `1 / n` weight.
pub fn output_gradients(
    gen: &BregmanGenerator,
    alpha: f64,
    r_pos: &[f64],
    r_unl: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Branch)> {
    check_alpha(alpha)?;
    check_ratios("positive", r_pos)?;
    check_ratios("unlabeled", r_unl)?;
    let (np, nu) = (r_pos.len() as f64, r_unl.len() as f64);
    let bracket = mean(r_unl, |r| gen.big_f(r)) - alpha * mean(r_pos, |r| gen.big_f(r));
    let branch = Branch::from_bracket(bracket);
    let (dp, du) = match branch {
        Branch::Normal => (
            r_pos.iter().map(|&r| -gen.f_second(r) / np).collect(),
            r_unl.iter().map(|&r| gen.f_conj_prime(r) / nu).collect(),
        ),
        Branch::Corrected => (
            r_pos.iter().map(|&r| alpha * gen.big_f_prime(r) / np).collect(),
            r_unl.iter().map(|&r| -gen.big_f_prime(r) / nu).collect(),
        ),
    };
    Ok((dp, du, branch))
}

/// Parameter gradient for one mini-batch.
///
/// If the batch bracket is nonnegative this is the gradient of the plain
/// objective; otherwise it is the gradient of
/// `-mean_U[F(r)] + α mean_P[F(r)]`.
pub fn objective_gradient(
    gen: &BregmanGenerator,
    alpha: f64,
    model: &RatioModel,
    batch_pos: &Points,
    batch_unl: &Points,
) -> Result<(Vec<f64>, Branch)> {
    if batch_pos.is_empty() || batch_unl.is_empty() {
        return Err(Error::Empty("mini-batch".into()));
    }
    for pts in [batch_pos, batch_unl] {
        if pts.dim() != model.dim_in() {
            return Err(Error::DimensionMismatch {
                expected: model.dim_in(),
                got: pts.dim(),
            });
        }
    }
    let fp = model.features_all(batch_pos)?;
    let fu = model.features_all(batch_unl)?;
    let mut ws = Workspace::default();
    let rp: Vec<f64> = fp.rows().map(|z| model.value_from_features(z, &mut ws)).collect();
    let ru: Vec<f64> = fu.rows().map(|z| model.value_from_features(z, &mut ws)).collect();
    let (dp, du, branch) = output_gradients(gen, alpha, &rp, &ru)?;
    let mut grad = vec![0.0; model.params().len()];
    for (z, s) in fp.rows().zip(&dp) {
        model.accumulate_grad(z, *s, &mut grad, &mut ws);
    }
    for (z, s) in fu.rows().zip(&du) {
        model.accumulate_grad(z, *s, &mut grad, &mut ws);
    }
    Ok((grad, branch))
}

/// Class-conditional masses on a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistributionPair {
    support: Vec<f64>,
    p_plus: Vec<f64>,
    p_minus: Vec<f64>,
    prior: f64,
}

impl DiscreteDistributionPair {
    pub fn new(support: Vec<f64>, p_plus: Vec<f64>, p_minus: Vec<f64>, prior: f64) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::Empty("support".into()));
        }
        if p_plus.len() != n || p_minus.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if p_plus.len() != n { p_plus.len() } else { p_minus.len() },
            });
        }
        if !(prior > 0.0 && prior < 1.0) {
            return Err(Error::invalid("prior", format!("must lie in (0, 1), got {prior}")));
        }
        for (name, m) in [("p_plus", &p_plus), ("p_minus", &p_minus)] {
            if m.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::invalid(name, "masses must be nonnegative"));
            }
            let total: f64 = m.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(name, format!("masses sum to {total}")));
            }
        }
        let dist = Self {
            support,
            p_plus,
            p_minus,
            prior,
        };
        let total: f64 = dist.marginal().iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("prior", "marginal does not sum to one"));
        }
        Ok(dist)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn p_plus(&self) -> &[f64] {
        &self.p_plus
    }

    pub fn p_minus(&self) -> &[f64] {
        &self.p_minus
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    /// `p = π p_+ + (1 - π) p_-`.
    pub fn marginal(&self) -> Vec<f64> {
        self.p_plus
            .iter()
            .zip(&self.p_minus)
            .map(|(a, b)| self.prior * a + (1.0 - self.prior) * b)
            .collect()
    }

    /// `r* = p_+ / p`, zero where `p` vanishes.
    pub fn ratio(&self) -> Vec<f64> {
        self.p_plus
            .iter()
            .zip(self.marginal())
            .map(|(a, p)| if p > 0.0 { a / p } else { 0.0 })
            .collect()
    }

    /// Class posterior `η = π r*`.
    pub fn posterior(&self) -> Vec<f64> {
        self.ratio().into_iter().map(|r| self.prior * r).collect()
    }

    /// The same class-conditionals with a different prior.
    pub fn with_prior(&self, prior: f64) -> Result<Self> {
        Self::new(self.support.clone(), self.p_plus.clone(), self.p_minus.clone(), prior)
    }

    pub(crate) fn check_aligned(&self, r_values: &[f64]) -> Result<()> {
        if r_values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: r_values.len(),
            });
        }
        Ok(())
    }
}

/// Expected Bregman divergence from `r*` to `r`, summed exactly over the support.
pub fn population_divergence(gen: &BregmanGenerator, dist: &DiscreteDistributionPair, r_values: &[f64]) -> Result<f64> {
    dist.check_aligned(r_values)?;
    check_ratios("model", r_values)?;
    let total = dist
        .marginal()
        .iter()
        .zip(dist.ratio())
        .zip(r_values)
        .filter(|((p, _), _)| **p > 0.0)
        .map(|((p, rs), &r)| p * (gen.f(rs) - gen.f(r) - gen.f_prime(r) * (rs - r)))
        .sum::<f64>();
    Ok(total.max(0.0))
}
