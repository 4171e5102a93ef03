//! Turning a ratio model into a cost-sensitive classifier under prior shift.
//!
//! With training prior `π`, test prior `π'` and false-positive cost `c'`, the
//! classifier `sign(π r - c0)` with
//!
//! `c0 = c' π (1 - π') / ((1 - c')(1 - π) π' + c' π (1 - π'))`
//!
//! targets the shifted cost-sensitive risk. Equivalently `r ≥ θ = c0 / π`.

use serde::{Deserialize, Serialize};

use crate::divergence::{population_divergence, DiscreteDistributionPair};
use crate::error::{Error, Result};
use crate::generators::BregmanGenerator;
use crate::models::RatioModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub train_prior: f64,
    pub test_prior: f64,
    pub cost: f64,
}

fn check_open(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must lie strictly inside (0, 1), got {v}")))
    }
}

impl ShiftSpec {
    pub fn new(train_prior: f64, test_prior: f64, cost: f64) -> Result<Self> {
        let s = Self {
            train_prior,
            test_prior,
            cost,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_open("train_prior", self.train_prior)?;
        check_open("test_prior", self.test_prior)?;
        check_open("cost", self.cost)
    }
}

/// Returns `(c0, θ = c0 / π)`.
pub fn cost_threshold(spec: &ShiftSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let ShiftSpec {
        train_prior: pi,
        test_prior: pt,
        cost: c,
    } = *spec;
    let num = c * pi * (1.0 - pt);
    let c0 = num / ((1.0 - c) * (1.0 - pi) * pt + num);
    Ok((c0, c0 / pi))
}

/// The constant `C = π (c' + π' - 2 c' π') / (c0 + π - 2 c0 π)` of the
/// shifted excess-risk bound.
pub fn risk_constant(spec: &ShiftSpec) -> Result<f64> {
    let (c0, _) = cost_threshold(spec)?;
    let ShiftSpec {
        train_prior: pi,
        test_prior: pt,
        cost: c,
    } = *spec;
    Ok(pi * (c + pt - 2.0 * c * pt) / (c0 + pi - 2.0 * c0 * pi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: i8,
    pub score: f64,
    pub threshold_used: f64,
}

/// `+1` iff `score ≥ threshold`.
pub fn decide(score: f64, threshold: f64) -> Decision {
    Decision {
        label: if score >= threshold { 1 } else { -1 },
        score,
        threshold_used: threshold,
    }
}

pub fn classify(model: &RatioModel, spec: &ShiftSpec, x: &[f64]) -> Result<Decision> {
    let (_, theta) = cost_threshold(spec)?;
    Ok(decide(model.predict(x)?, theta))
}

pub fn classify_scores(scores: &[f64], threshold: f64) -> Vec<i8> {
    scores.iter().map(|&s| decide(s, threshold).label).collect()
}

pub(crate) fn class_error_rates(labels: &[i8], decisions: &[i8]) -> Result<(f64, f64)> {
    if labels.len() != decisions.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: decisions.len(),
        });
    }
    let (mut n_pos, mut n_neg, mut fn_, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&y, &d) in labels.iter().zip(decisions) {
        match y {
            1 => {
                n_pos += 1;
                if d != 1 {
                    fn_ += 1;
                }
            }
            -1 => {
                n_neg += 1;
                if d == 1 {
                    fp += 1;
                }
            }
            other => return Err(Error::invalid("labels", format!("expected ±1, got {other}"))),
        }
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Empty(format!(
            "evaluation set needs both classes ({n_pos} positives, {n_neg} negatives)"
        )));
    }
    Ok((fn_ as f64 / n_pos as f64, fp as f64 / n_neg as f64))
}

/// `(1 - c) π FNR + c (1 - π) FPR`.
pub fn cost_sensitive_risk(labels: &[i8], decisions: &[i8], prior: f64, cost: f64) -> Result<f64> {
    for (name, v) in [("prior", prior), ("cost", cost)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")));
        }
    }
    let (fnr, fpr) = class_error_rates(labels, decisions)?;
    Ok((1.0 - cost) * prior * fnr + cost * (1.0 - prior) * fpr)
}

/// Exact cost-sensitive risk of a labeling of the support.
pub fn population_cost_risk(dist: &DiscreteDistributionPair, labels: &[i8], prior: f64, cost: f64) -> Result<f64> {
    if labels.len() != dist.len() {
        return Err(Error::DimensionMismatch {
            expected: dist.len(),
            got: labels.len(),
        });
    }
    Ok(labels
        .iter()
        .zip(dist.p_plus().iter().zip(dist.p_minus()))
        .map(|(&h, (&pp, &pm))| {
            if h == 1 {
                cost * (1.0 - prior) * pm
            } else {
                (1.0 - cost) * prior * pp
            }
        })
        .sum())
}

/// Bayes risk: the cheaper label at every support point.
pub fn bayes_cost_risk(dist: &DiscreteDistributionPair, prior: f64, cost: f64) -> f64 {
    dist.p_plus()
        .iter()
        .zip(dist.p_minus())
        .map(|(&pp, &pm)| ((1.0 - cost) * prior * pp).min(cost * (1.0 - prior) * pm))
        .sum()
}

/// Left and right side of a numerical inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

fn divergence_term(gen: &BregmanGenerator, dist: &DiscreteDistributionPair, r_values: &[f64]) -> Result<f64> {
    gen.require_strongly_convex()?;
    Ok((2.0 / gen.mu() * population_divergence(gen, dist, r_values)?).sqrt())
}

fn check_spec_matches(dist: &DiscreteDistributionPair, spec: &ShiftSpec) -> Result<()> {
    spec.validate()?;
    if (dist.prior() - spec.train_prior).abs() > 1e-12 {
        return Err(Error::invalid(
            "train_prior",
            format!("spec uses {} but the distribution has prior {}", spec.train_prior, dist.prior()),
        ));
    }
    Ok(())
}

/// Excess shifted risk of `r ≥ θ̂` on the test distribution.
fn excess_at_threshold(dist: &DiscreteDistributionPair, r_values: &[f64], spec: &ShiftSpec, theta: f64) -> Result<f64> {
    let labels = classify_scores(r_values, theta);
    let risk = population_cost_risk(dist, &labels, spec.test_prior, spec.cost)?;
    Ok(risk - bayes_cost_risk(dist, spec.test_prior, spec.cost))
}

/// Compares the exact excess shifted risk of `r ≥ c0 / π` with
/// `C sqrt(2 BR_f(r* ‖ r) / μ)`. `spec.train_prior` must be the prior of `dist`.
pub fn excess_risk_bound_check(
    dist: &DiscreteDistributionPair,
    r_values: &[f64],
    spec: &ShiftSpec,
    gen: &BregmanGenerator,
) -> Result<BoundCheck> {
    check_spec_matches(dist, spec)?;
    let d = divergence_term(gen, dist, r_values)?;
    let (_, theta) = cost_threshold(spec)?;
    Ok(BoundCheck {
        lhs: excess_at_threshold(dist, r_values, spec, theta)?,
        rhs: risk_constant(spec)? * d,
    })
}

/// Excess risk with a perturbed threshold `θ̂` against
/// `C ((1 + ω) sqrt(2 BR / μ) + |θ̂ - θ|)`.
pub fn threshold_bound_check(
    dist: &DiscreteDistributionPair,
    r_values: &[f64],
    spec: &ShiftSpec,
    gen: &BregmanGenerator,
    theta_hat: f64,
    omega: f64,
) -> Result<BoundCheck> {
    check_spec_matches(dist, spec)?;
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::invalid("omega", "must lie in [0, 1]"));
    }
    let d = divergence_term(gen, dist, r_values)?;
    let (_, theta) = cost_threshold(spec)?;
    Ok(BoundCheck {
        lhs: excess_at_threshold(dist, r_values, spec, theta_hat)?,
        rhs: risk_constant(spec)? * ((1.0 + omega) * d + (theta_hat - theta).abs()),
    })
}

/// Leftmost point in `[lo, hi]` where `score(x) - threshold` changes from
/// negative to nonnegative, located on an `n_grid` scan and refined by
/// bisection. `None` if there is no such crossing.
pub fn decision_boundary_1d(score: impl Fn(f64) -> f64, threshold: f64, lo: f64, hi: f64, n_grid: usize) -> Option<f64> {
    let n = n_grid.max(2);
    let at = |i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let mut prev = at(0);
    let mut prev_pos = score(prev) >= threshold;
    for i in 1..n {
        let x = at(i);
        let pos = score(x) >= threshold;
        if pos && !prev_pos {
            let (mut a, mut b) = (prev, x);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if score(m) >= threshold {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev = x;
        prev_pos = pos;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticCase;
    use crate::data::Points;

    #[test]
    fn threshold_examples() {
        let (c0, theta) = cost_threshold(&ShiftSpec::new(0.4, 0.6, 0.5).unwrap()).unwrap();
        assert!((c0 - 0.08 / 0.26).abs() < 1e-12);
        assert!((theta - 0.08 / 0.26 / 0.4).abs() < 1e-12);
        let (c0, theta) = cost_threshold(&ShiftSpec::new(0.5, 0.5, 0.5).unwrap()).unwrap();
        assert!((c0 - 0.5).abs() < 1e-15 && (theta - 1.0).abs() < 1e-15);
        for &c in &[0.1, 0.3, 0.77] {
            for &pi in &[0.2, 0.65] {
                let (c0, _) = cost_threshold(&ShiftSpec::new(pi, pi, c).unwrap()).unwrap();
                assert!((c0 - c).abs() < 1e-14);
            }
        }
        assert!(ShiftSpec::new(0.0, 0.5, 0.5).is_err());
        assert!(ShiftSpec::new(0.5, 1.0, 0.5).is_err());
        assert!(ShiftSpec::new(0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn c0_monotone_on_grid() {
        for i in 1..20 {
            for j in 1..20 {
                let pi = i as f64 / 20.0;
                let pt = j as f64 / 20.0;
                for k in 1..19 {
                    let c = k as f64 / 20.0;
                    let a = cost_threshold(&ShiftSpec::new(pi, pt, c).unwrap()).unwrap().0;
                    let b = cost_threshold(&ShiftSpec::new(pi, pt, c + 0.05).unwrap()).unwrap().0;
                    assert!(b > a);
                }
                if j < 19 {
                    let a = cost_threshold(&ShiftSpec::new(pi, pt, 0.5).unwrap()).unwrap().0;
                    let b = cost_threshold(&ShiftSpec::new(pi, pt + 0.05, 0.5).unwrap()).unwrap().0;
                    assert!(b < a);
                }
            }
        }
    }

    #[test]
    fn zero_model_rejects_everything() {
        let model = RatioModel::gaussian_basis_linear(Points::from_scalars(&[0.0, 1.0]), 1.0).unwrap();
        let spec = ShiftSpec::new(0.3, 0.7, 0.2).unwrap();
        for x in [-3.0, 0.0, 5.0] {
            let d = classify(&model, &spec, &[x]).unwrap();
            assert_eq!(d.label, -1);
            assert_eq!(d.score, 0.0);
        }
        assert!(classify(&model, &spec, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn exact_ratio_gives_shifted_bayes_boundary() {
        let spec = SyntheticCase::Separable.spec(0.4).unwrap();
        let (_, theta) = cost_threshold(&ShiftSpec::new(0.4, 0.6, 0.5).unwrap()).unwrap();
        let b = decision_boundary_1d(|x| spec.ratio(&[x]), theta, -5.0, 5.0, 1001).unwrap();
        assert!((b - (2.0f64 / 3.0).ln() / 2.0).abs() < 1e-9, "{b}");
    }

    #[test]
    fn scaling_ratio_keeps_priors_but_moves_decisions() {
        use crate::prior::estimate_prior;
        let spec = SyntheticCase::Separable.spec(0.4).unwrap();
        let pu = spec.sample_pu(2000, 5000, 3).unwrap();
        let r = |x: &[f64]| spec.ratio(x);
        let rp: Vec<f64> = pu.positives.rows().map(r).collect();
        let ru: Vec<f64> = pu.unlabeled.rows().map(r).collect();
        let test = spec.with_prior(0.6).unwrap().sample_pu(1, 3000, 4).unwrap().unlabeled;
        let rt: Vec<f64> = test.rows().map(r).collect();
        let run = |k: f64| {
            let sc = |v: &Vec<f64>| v.iter().map(|x| k * x).collect::<Vec<f64>>();
            let pi = estimate_prior(&sc(&rp), &sc(&ru), 0.5).unwrap().value;
            let pt = estimate_prior(&sc(&rp), &sc(&rt), 0.5).unwrap().value;
            let (_, theta) = cost_threshold(&ShiftSpec::new(pi, pt, 0.5).unwrap()).unwrap();
            (pi, pt, classify_scores(&sc(&rt), theta))
        };
        let (pi1, pt1, base) = run(1.0);
        let (pi3, pt3, scaled) = run(3.0);
        // the prior estimates only see the ordering
        assert_eq!((pi1, pt1), (pi3, pt3));
        // the threshold c0 / π is on the scale of the true ratio
        assert_ne!(base, scaled);
    }

    #[test]
    fn cost_sensitive_risk_examples() {
        let labels = [1, 1, -1, -1, -1];
        assert_eq!(cost_sensitive_risk(&labels, &labels, 0.4, 0.3).unwrap(), 0.0);
        let all_pos = [1; 5];
        assert!((cost_sensitive_risk(&labels, &all_pos, 0.4, 0.3).unwrap() - 0.3 * 0.6).abs() < 1e-15);
        let pred = [1, -1, -1, 1, -1];
        let half = cost_sensitive_risk(&labels, &pred, 0.4, 0.5).unwrap();
        let err = 0.4 * 0.5 + 0.6 * (1.0 / 3.0);
        assert!((half - err / 2.0).abs() < 1e-15);
        assert!(cost_sensitive_risk(&[1, 1], &[1, 1], 0.4, 0.5).is_err());
        assert!(cost_sensitive_risk(&[1, -1], &[1], 0.4, 0.5).is_err());
    }

    #[test]
    fn optimal_ratio_has_zero_excess() {
        let dist = DiscreteDistributionPair::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![0.1, 0.2, 0.3, 0.4],
            vec![0.4, 0.3, 0.2, 0.1],
            0.35,
        )
        .unwrap();
        let spec = ShiftSpec::new(0.35, 0.7, 0.4).unwrap();
        let check = excess_risk_bound_check(&dist, &dist.ratio(), &spec, &BregmanGenerator::lsif()).unwrap();
        assert!(check.lhs.abs() < 1e-15 && check.rhs == 0.0);
        let wrong = ShiftSpec::new(0.5, 0.7, 0.4).unwrap();
        assert!(excess_risk_bound_check(&dist, &dist.ratio(), &wrong, &BregmanGenerator::lsif()).is_err());
        assert!(excess_risk_bound_check(&dist, &dist.ratio(), &spec, &BregmanGenerator::kl_unchecked()).is_err());
    }

    #[test]
    fn no_shift_constant_is_prior() {
        for &pi in &[0.1, 0.4, 0.8] {
            let c = risk_constant(&ShiftSpec::new(pi, pi, 0.5).unwrap()).unwrap();
            assert!((c - pi).abs() < 1e-14);
        }
    }

    #[test]
    fn threshold_error_is_linear_in_prior_error() {
        let (_, theta) = cost_threshold(&ShiftSpec::new(0.4, 0.6, 0.5).unwrap()).unwrap();
        let eps = [0.08, 0.04, 0.02, 0.01, 0.005];
        let errs: Vec<f64> = eps
            .iter()
            .map(|&e| {
                let (_, t) = cost_threshold(&ShiftSpec::new(0.4 + e, 0.6 - e, 0.5).unwrap()).unwrap();
                (t - theta).abs()
            })
            .collect();
        for w in 0..eps.len() - 1 {
            let slope = (errs[w].ln() - errs[w + 1].ln()) / (eps[w].ln() - eps[w + 1].ln());
            assert!((0.8..=1.2).contains(&slope), "slope {slope}");
        }
    }

    #[test]
    fn boundary_scan() {
        assert_eq!(decision_boundary_1d(|x| x, 10.0, -1.0, 1.0, 11), None);
        let b = decision_boundary_1d(|x| x * x * x, 0.125, -1.0, 1.0, 11).unwrap();
        assert!((b - 0.5).abs() < 1e-12);
    }
}
