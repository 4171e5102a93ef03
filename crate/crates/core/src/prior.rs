//! Class-prior estimation by thresholding a fitted ratio model.
//!
//! For a threshold `θ` the hypothesis `h(x) = +1 iff r(x) ≥ θ` has empirical
//! acceptance rates `P(h)` on unlabeled and `P+(h)` on positive data. The
//! estimate is `min P(h) / P+(h)` over thresholds with `P+(h) > γ̄`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.5;

const INTERVALS_FORMAT: &str = "drpu-intervals/1";

/// `sqrt(4 log(e n / 2) / n) + sqrt(log(2 / δ) / (2 n))`.
pub fn epsilon(n: usize, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    Ok(epsilon_raw(n, delta))
}

fn epsilon_raw(n: usize, delta: f64) -> f64 {
    let n = n as f64;
    (4.0 * (std::f64::consts::E * n / 2.0).ln() / n).sqrt() + ((2.0 / delta).ln() / (2.0 * n)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBar {
    pub value: f64,
    /// No threshold can be admissible when `value >= 1`.
    pub degenerate: bool,
}

/// `max(ε(n_P, 1/n_P), ε(n_U, 1/n_U)) / γ`.
pub fn gamma_bar(n_pos: usize, n_unl: usize, gamma: f64) -> Result<GammaBar> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("gamma", format!("must lie in (0, 1), got {gamma}")));
    }
    if n_pos == 0 || n_unl == 0 {
        return Err(Error::Empty("sample counts for gamma_bar".into()));
    }
    // n = 1 gives δ = 1, just outside the open interval; the value is finite
    // and far above 1, so it is reported as degenerate.
    let e = epsilon_raw(n_pos, 1.0 / n_pos as f64).max(epsilon_raw(n_unl, 1.0 / n_unl as f64));
    let value = e / gamma;
    Ok(GammaBar {
        value,
        degenerate: value >= 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorEstimate {
    /// Estimate clamped to `[0, 1]`.
    pub value: f64,
    /// Unclamped minimum ratio.
    pub raw: f64,
    pub argmin_threshold: f64,
    pub gamma: f64,
    pub gamma_bar: f64,
    pub n_pos_used: usize,
    pub n_unl_used: usize,
}

fn check_scores(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty(format!("{name} scores")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(name, "scores must be finite"));
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Fraction of a sorted sample at or above `theta`.
fn accept_rate(sorted: &[f64], theta: f64) -> f64 {
    (sorted.len() - sorted.partition_point(|&v| v < theta)) as f64 / sorted.len() as f64
}

fn admissible_gamma_bar(n_pos: usize, n_unl: usize, gamma: f64) -> Result<f64> {
    let gb = gamma_bar(n_pos, n_unl, gamma)?;
    if gb.degenerate {
        return Err(Error::DegeneratePrior {
            gamma_bar: gb.value,
            n_pos,
            n_unl,
            gamma,
        });
    }
    Ok(gb.value)
}

/// Minimises `P(θ) / P+(θ)` over `candidates` (any order) with `P+(θ) > γ̄`.
/// Candidates are visited from the highest threshold down, and ties keep the
/// highest threshold.
fn sweep(
    candidates: &mut Vec<f64>,
    p_plus: impl Fn(f64) -> f64,
    p_unl: impl Fn(f64) -> f64,
    gamma_bar: f64,
) -> Option<(f64, f64)> {
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();
    let mut best: Option<(f64, f64)> = None;
    for &theta in candidates.iter() {
        let pp = p_plus(theta);
        if pp <= gamma_bar {
            continue;
        }
        let ratio = p_unl(theta) / pp;
        if best.is_none_or(|(b, _)| ratio < b) {
            best = Some((ratio, theta));
        }
    }
    best
}

fn finish(best: Option<(f64, f64)>, gamma: f64, gamma_bar: f64, n_pos: usize, n_unl: usize) -> PriorEstimate {
    // The lowest attained threshold accepts every positive, and γ̄ < 1, so an
    // admissible candidate always exists.
    let (raw, argmin_threshold) = best.expect("lowest threshold is always admissible");
    PriorEstimate {
        value: raw.clamp(0.0, 1.0),
        raw,
        argmin_threshold,
        gamma,
        gamma_bar,
        n_pos_used: n_pos,
        n_unl_used: n_unl,
    }
}

/// Estimates the class prior of the unlabeled sample from ratio values on
/// positive and unlabeled points.
pub fn estimate_prior(r_pos: &[f64], r_unl: &[f64], gamma: f64) -> Result<PriorEstimate> {
    check_scores("positive", r_pos)?;
    check_scores("unlabeled", r_unl)?;
    let gb = admissible_gamma_bar(r_pos.len(), r_unl.len(), gamma)?;
    let pos = sorted(r_pos);
    let unl = sorted(r_unl);
    let mut candidates: Vec<f64> = pos.iter().chain(&unl).copied().collect();
    let best = sweep(&mut candidates, |t| accept_rate(&pos, t), |t| accept_rate(&unl, t), gb);
    Ok(finish(best, gamma, gb, pos.len(), unl.len()))
}

/// Positive acceptance counts as a step function of the threshold.
///
/// `boundaries` are the distinct ratio values attained on the positive set in
/// increasing order, `multiplicities` how often each occurs. A threshold in
/// `(b[i-1], b[i]]` accepts exactly the positives at `b[i]` and above.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdIntervals {
    n_pos: usize,
    boundaries: Vec<f64>,
    multiplicities: Vec<usize>,
    accepted: Vec<usize>,
}

pub fn build_intervals(r_pos: &[f64]) -> Result<ThresholdIntervals> {
    check_scores("positive", r_pos)?;
    let s = sorted(r_pos);
    let mut boundaries: Vec<f64> = Vec::new();
    let mut multiplicities: Vec<usize> = Vec::new();
    for v in s {
        if boundaries.last() == Some(&v) {
            *multiplicities.last_mut().unwrap() += 1;
        } else {
            boundaries.push(v);
            multiplicities.push(1);
        }
    }
    ThresholdIntervals::from_parts(r_pos.len(), boundaries, multiplicities)
}

impl ThresholdIntervals {
    pub fn from_parts(n_pos: usize, boundaries: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self> {
        if n_pos == 0 || boundaries.is_empty() {
            return Err(Error::Integrity("interval list is empty".into()));
        }
        if boundaries.len() != multiplicities.len() {
            return Err(Error::Integrity("boundary and multiplicity lengths differ".into()));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::Integrity("non-finite boundary".into()));
        }
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Integrity("boundaries are not strictly increasing".into()));
        }
        if multiplicities.iter().any(|&m| m == 0) || multiplicities.iter().sum::<usize>() != n_pos {
            return Err(Error::Integrity(format!("multiplicities do not add up to n_pos = {n_pos}")));
        }
        let mut accepted = vec![0; boundaries.len() + 1];
        for i in (0..boundaries.len()).rev() {
            accepted[i] = accepted[i + 1] + multiplicities[i];
        }
        Ok(Self {
            n_pos,
            boundaries,
            multiplicities,
            accepted,
        })
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// Number of positives with `r ≥ θ`.
    pub fn accepted_count(&self, theta: f64) -> usize {
        self.accepted[self.boundaries.partition_point(|&b| b < theta)]
    }

    /// `#{r ≥ θ} / n_P`.
    pub fn reconstruct(&self, theta: f64) -> f64 {
        self.accepted_count(theta) as f64 / self.n_pos as f64
    }

    pub fn to_json(&self, meta: Option<&IntervalsMetadata>) -> Result<String> {
        let mut doc = IntervalsDocument {
            format: INTERVALS_FORMAT.into(),
            n_pos: self.n_pos,
            boundaries: self.boundaries.clone(),
            multiplicities: self.multiplicities.clone(),
            metadata: meta.cloned(),
            checksum: String::new(),
        };
        doc.checksum = doc.content_checksum()?;
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses and verifies a document written by [`Self::to_json`]. Any
    /// structural problem or checksum mismatch is an integrity error.
    pub fn from_json(s: &str) -> Result<(Self, Option<IntervalsMetadata>)> {
        let doc: IntervalsDocument =
            serde_json::from_str(s).map_err(|e| Error::Integrity(format!("malformed interval file: {e}")))?;
        if doc.format != INTERVALS_FORMAT {
            return Err(Error::Integrity(format!("unknown format `{}`", doc.format)));
        }
        if doc.content_checksum()? != doc.checksum {
            return Err(Error::Integrity("checksum mismatch".into()));
        }
        Ok((Self::from_parts(doc.n_pos, doc.boundaries, doc.multiplicities)?, doc.metadata))
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: Option<&IntervalsMetadata>) -> Result<()> {
        std::fs::write(path, self.to_json(meta)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<IntervalsMetadata>)> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Training-time quantities shipped alongside the interval list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalsMetadata {
    pub train_prior: f64,
    pub train_prior_raw: f64,
    pub gamma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalsDocument {
    format: String,
    n_pos: usize,
    boundaries: Vec<f64>,
    multiplicities: Vec<usize>,
    metadata: Option<IntervalsMetadata>,
    /// SHA-256 of the compact JSON of the fields above.
    checksum: String,
}

impl IntervalsDocument {
    fn content_checksum(&self) -> Result<String> {
        let canonical = serde_json::to_string(&(
            &self.format,
            self.n_pos,
            &self.boundaries,
            &self.multiplicities,
            &self.metadata,
        ))?;
        Ok(format!("{:x}", Sha256::digest(canonical.as_bytes())))
    }
}

/// Estimates the prior of a test-time unlabeled sample using only the
/// preserved interval list on the positive side.
pub fn estimate_test_prior(intervals: &ThresholdIntervals, r_test_unl: &[f64], gamma: f64) -> Result<PriorEstimate> {
    check_scores("test unlabeled", r_test_unl)?;
    let gb = admissible_gamma_bar(intervals.n_pos(), r_test_unl.len(), gamma)?;
    let test = sorted(r_test_unl);
    let mut candidates: Vec<f64> = intervals.boundaries().iter().chain(&test).copied().collect();
    let best = sweep(&mut candidates, |t| intervals.reconstruct(t), |t| accept_rate(&test, t), gb);
    Ok(finish(best, gamma, gb, intervals.n_pos(), test.len()))
}
