//! Evaluation metrics and the AUC excess-risk check.

use serde::{Deserialize, Serialize};

use crate::classifier::{class_error_rates, BoundCheck};
use crate::divergence::{population_divergence, DiscreteDistributionPair};
use crate::error::{Error, Result};
use crate::generators::BregmanGenerator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucDetail {
    /// Ties between a positive and a negative count one half.
    pub value: f64,
    /// Ties count zero.
    pub strict: f64,
    pub has_ties: bool,
}

fn check_scores(name: &str, s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Empty(format!("{name} scores")));
    }
    if s.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid(name, "scores contain NaN"));
    }
    Ok(())
}

/// Rank-sum AUC with mid-ranks for ties, in `O(n log n)`.
pub fn auc_detailed(scores_pos: &[f64], scores_neg: &[f64]) -> Result<AucDetail> {
    check_scores("positive", scores_pos)?;
    check_scores("negative", scores_neg)?;
    let mut all: Vec<(f64, bool)> = scores_pos
        .iter()
        .map(|&s| (s, true))
        .chain(scores_neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum over positives of (#negatives strictly below) and (#negatives tied).
    let mut below = 0.0f64;
    let mut tied = 0.0f64;
    let mut neg_seen = 0usize;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut p, mut n) = (0usize, 0usize);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        below += p as f64 * neg_seen as f64;
        tied += p as f64 * n as f64;
        neg_seen += n;
        i = j;
    }
    let pairs = scores_pos.len() as f64 * scores_neg.len() as f64;
    Ok(AucDetail {
        value: (below + 0.5 * tied) / pairs,
        strict: below / pairs,
        has_ties: tied > 0.0,
    })
}

pub fn auc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    Ok(auc_detailed(scores_pos, scores_neg)?.value)
}

/// AUC of labeled scores.
pub fn auc_labeled(scores: &[f64], labels: &[i8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let pick = |y: i8| -> Vec<f64> {
        scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == y)
            .map(|(&s, _)| s)
            .collect()
    };
    auc(&pick(1), &pick(-1))
}

/// Population AUC over a finite support: `Σ p+(x) p-(x') [1{s(x) > s(x')} + ½ 1{s(x) = s(x')}]`.
pub fn population_auc(dist: &DiscreteDistributionPair, scores: &[f64]) -> Result<f64> {
    dist.check_aligned(scores)?;
    let mut total = 0.0;
    for (i, &pp) in dist.p_plus().iter().enumerate() {
        if pp == 0.0 {
            continue;
        }
        for (j, &pm) in dist.p_minus().iter().enumerate() {
            let w = if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                continue;
            };
            total += pp * pm * w;
        }
    }
    Ok(total)
}

/// Exact excess AUC risk of `r` against `sqrt(2 BR_f(r* ‖ r) / μ) / (1 - π)`.
pub fn auc_excess_bound_check(dist: &DiscreteDistributionPair, r_values: &[f64], gen: &BregmanGenerator) -> Result<BoundCheck> {
    gen.require_strongly_convex()?;
    let br = population_divergence(gen, dist, r_values)?;
    let best = population_auc(dist, &dist.ratio())?;
    let got = population_auc(dist, r_values)?;
    Ok(BoundCheck {
        lhs: best - got,
        rhs: (2.0 / gen.mu() * br).sqrt() / (1.0 - dist.prior()),
    })
}

/// Error rate under a test prior: `π' FNR + (1 - π') FPR`.
pub fn error_rate(labels: &[i8], predictions: &[i8], test_prior: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&test_prior) {
        return Err(Error::invalid("test_prior", format!("must lie in [0, 1], got {test_prior}")));
    }
    let (fnr, fpr) = class_error_rates(labels, predictions)?;
    Ok(test_prior * fnr + (1.0 - test_prior) * fpr)
}

/// Plain fraction of correct predictions.
pub fn accuracy(labels: &[i8], predictions: &[i8]) -> Result<f64> {
    if labels.len() != predictions.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("labels".into()));
    }
    let hits = labels.iter().zip(predictions).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn prior_abs_error(estimate: f64, truth: f64) -> f64 {
    (estimate - truth).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(pos: &[f64], neg: &[f64]) -> f64 {
        let mut s = 0.0;
        for &p in pos {
            for &n in neg {
                s += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        let d = auc_detailed(&[1.0; 4], &[1.0; 7]).unwrap();
        assert_eq!(d.value, 0.5);
        assert_eq!(d.strict, 0.0);
        assert!(d.has_ties);
        assert!(!auc_detailed(&[1.0], &[0.0]).unwrap().has_ties);
        assert!(auc(&[], &[1.0]).is_err());
        assert_eq!(auc_labeled(&[0.1, 0.9, 0.5], &[-1, 1, -1]).unwrap(), 1.0);
    }

    #[test]
    fn error_examples() {
        let y = [1, -1, 1, -1];
        assert_eq!(error_rate(&y, &y, 0.3).unwrap(), 0.0);
        assert!((error_rate(&y, &[-1; 4], 0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!((prior_abs_error(0.42, 0.40) - 0.02).abs() < 1e-12);
        assert_eq!(accuracy(&y, &[1, 1, 1, 1]).unwrap(), 0.5);
        assert!(error_rate(&[1, 1], &[1, 1], 0.5).is_err());
    }

    #[test]
    fn reversed_ratio_still_bounded() {
        let dist = DiscreteDistributionPair::new(
            vec![0.0, 1.0, 2.0],
            vec![0.1, 0.3, 0.6],
            vec![0.6, 0.3, 0.1],
            0.5,
        )
        .unwrap();
        let rs = dist.ratio();
        let check = auc_excess_bound_check(&dist, &rs, &BregmanGenerator::lsif()).unwrap();
        assert!(check.lhs.abs() < 1e-15 && check.rhs == 0.0);
        let rev: Vec<f64> = rs.iter().map(|r| 2.0 - r).collect();
        let check = auc_excess_bound_check(&dist, &rev, &BregmanGenerator::lsif()).unwrap();
        let worst = population_auc(&dist, &rs).unwrap() - population_auc(&dist, &rev).unwrap();
        assert_eq!(check.lhs, worst);
        assert!(check.lhs > 0.5 && check.holds(0.0));
    }

    proptest! {
        #[test]
        fn rank_sum_matches_pairs(
            pos in prop::collection::vec(0u8..30, 1..250),
            neg in prop::collection::vec(0u8..30, 1..250),
        ) {
            let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
            let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
            let fast = auc(&pos, &neg).unwrap();
            prop_assert!((fast - brute(&pos, &neg)).abs() < 1e-12);
            let t = |v: &f64| v.powi(3) - 7.0;
            let tp: Vec<f64> = pos.iter().map(t).collect();
            let tn: Vec<f64> = neg.iter().map(t).collect();
            prop_assert_eq!(auc(&tp, &tn).unwrap(), fast);
        }

        #[test]
        fn swapped_classes_sum_to_one(
            pos in prop::collection::hash_set(0i32..100_000, 1..100),
            neg in prop::collection::hash_set(100_000i32..200_000, 1..100),
        ) {
            let mut pos: Vec<f64> = pos.into_iter().map(|v| (v as f64 * 7919.0) % 200_003.0).collect();
            let neg: Vec<f64> = neg.into_iter().map(|v| (v as f64 * 7919.0) % 200_003.0).collect();
            pos.retain(|p| !neg.contains(p));
            prop_assume!(!pos.is_empty());
            let a = auc(&pos, &neg).unwrap() + auc(&neg, &pos).unwrap();
            prop_assert!((a - 1.0).abs() < 1e-12);
        }
    }
}
