//! Datasets, synthetic generators and CSV ingestion.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seeded generator used everywhere randomness is needed.
///
/// ChaCha8 is counter based, so a `(seed, stream)` pair names an independent,
/// platform-independent sequence.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Row-major matrix of feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::Data(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| Error::Empty("no rows".into()))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    /// One-dimensional points.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Self {
            dim: 1,
            data: xs.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { dim: self.dim, data }
    }

    pub fn concat(&self, other: &Points) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { dim: self.dim, data })
    }
}

/// Positive and unlabeled samples. `hidden_labels`, when present, gives the
/// true class of each unlabeled point and is only used for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PUDataset {
    pub positives: Points,
    pub unlabeled: Points,
    pub hidden_labels: Option<Vec<i8>>,
}

impl PUDataset {
    pub fn new(positives: Points, unlabeled: Points, hidden_labels: Option<Vec<i8>>) -> Result<Self> {
        if positives.dim() != unlabeled.dim() {
            return Err(Error::DimensionMismatch {
                expected: positives.dim(),
                got: unlabeled.dim(),
            });
        }
        if let Some(labels) = &hidden_labels {
            if labels.len() != unlabeled.len() {
                return Err(Error::Data(format!(
                    "{} hidden labels for {} unlabeled points",
                    labels.len(),
                    unlabeled.len()
                )));
            }
        }
        Ok(Self {
            positives,
            unlabeled,
            hidden_labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.positives.dim()
    }

    pub fn n_pos(&self) -> usize {
        self.positives.len()
    }

    pub fn n_unl(&self) -> usize {
        self.unlabeled.len()
    }

    /// Copy without the hidden labels, as handed to training code.
    pub fn without_labels(&self) -> Self {
        Self {
            positives: self.positives.clone(),
            unlabeled: self.unlabeled.clone(),
            hidden_labels: None,
        }
    }

    /// Splits positives and unlabeled independently; `train_fraction` of each
    /// (rounded down, at least one point per side) goes to the first split.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction", "must lie in (0, 1)"));
        }
        let mut rng = seeded_rng(seed, 0x5b17);
        let split_one = |n: usize, rng: &mut ChaCha8Rng| -> Result<(Vec<usize>, Vec<usize>)> {
            if n < 2 {
                return Err(Error::Data(format!("cannot split {n} points into two nonempty parts")));
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let k = ((n as f64 * train_fraction).floor() as usize).clamp(1, n - 1);
            let val = idx.split_off(k);
            Ok((idx, val))
        };
        let (p_tr, p_val) = split_one(self.n_pos(), &mut rng)?;
        let (u_tr, u_val) = split_one(self.n_unl(), &mut rng)?;
        let labels = |idx: &[usize]| {
            self.hidden_labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect::<Vec<_>>())
        };
        let train = Self {
            positives: self.positives.select(&p_tr),
            unlabeled: self.unlabeled.select(&u_tr),
            hidden_labels: labels(&u_tr),
        };
        let val = Self {
            positives: self.positives.select(&p_val),
            unlabeled: self.unlabeled.select(&u_val),
            hidden_labels: labels(&u_val),
        };
        Ok((train, val))
    }
}

/// Fully labeled points, labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    pub points: Points,
    pub labels: Vec<i8>,
}

impl LabeledPool {
    pub fn new(points: Points, labels: Vec<i8>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::Data(format!("label {bad} is not -1 or +1")));
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positive_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.len() as f64
    }

    pub fn class_indices(&self, label: i8) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }

    /// Points of one class.
    pub fn class_points(&self, label: i8) -> Points {
        self.points.select(&self.class_indices(label))
    }
}

/// One isotropic Gaussian component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec<f64>,
    pub variance: f64,
    pub weight: f64,
}

impl Component {
    pub fn new(mean: Vec<f64>, variance: f64, weight: f64) -> Self {
        Self { mean, variance, weight }
    }

    pub fn scalar(mean: f64, variance: f64, weight: f64) -> Self {
        Self::new(vec![mean], variance, weight)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len() as f64;
        let sq: f64 = x.iter().zip(&self.mean).map(|(a, m)| (a - m) * (a - m)).sum();
        -0.5 * sq / self.variance - 0.5 * d * (2.0 * std::f64::consts::PI * self.variance).ln()
    }
}

/// Class-conditional Gaussian mixtures and the class prior of the marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub components_pos: Vec<Component>,
    pub components_neg: Vec<Component>,
    pub prior: f64,
}

impl GaussianMixtureSpec {
    pub fn new(components_pos: Vec<Component>, components_neg: Vec<Component>, prior: f64) -> Result<Self> {
        let spec = Self {
            components_pos,
            components_neg,
            prior,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("prior", self.prior)?;
        let dim = self
            .components_pos
            .first()
            .map(|c| c.mean.len())
            .ok_or_else(|| Error::invalid("components_pos", "empty"))?;
        for (name, comps) in [("components_pos", &self.components_pos), ("components_neg", &self.components_neg)] {
            if comps.is_empty() {
                return Err(Error::invalid(name, "empty"));
            }
            let total: f64 = comps.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(name, format!("weights sum to {total}, expected 1")));
            }
            for c in comps {
                if !(c.variance > 0.0) {
                    return Err(Error::invalid(name, "variances must be positive"));
                }
                if c.weight < 0.0 {
                    return Err(Error::invalid(name, "weights must be nonnegative"));
                }
                if c.mean.len() != dim {
                    return Err(Error::invalid(name, "components disagree on dimension"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.components_pos[0].mean.len()
    }

    pub fn with_prior(&self, prior: f64) -> Result<Self> {
        let mut spec = self.clone();
        spec.prior = prior;
        spec.validate()?;
        Ok(spec)
    }

    pub fn density_pos(&self, x: &[f64]) -> f64 {
        mixture_density(&self.components_pos, x)
    }

    pub fn density_neg(&self, x: &[f64]) -> f64 {
        mixture_density(&self.components_neg, x)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.prior * self.density_pos(x) + (1.0 - self.prior) * self.density_neg(x)
    }

    /// True density ratio `p_+(x) / p(x)`.
    pub fn ratio(&self, x: &[f64]) -> f64 {
        let pos = self.density_pos(x);
        let p = self.prior * pos + (1.0 - self.prior) * self.density_neg(x);
        if p > 0.0 {
            pos / p
        } else {
            0.0
        }
    }

    pub fn sample_class<R: Rng>(&self, label: i8, rng: &mut R) -> Vec<f64> {
        let comps = if label == 1 {
            &self.components_pos
        } else {
            &self.components_neg
        };
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = &comps[comps.len() - 1];
        for c in comps {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let sd = chosen.variance.sqrt();
        chosen
            .mean
            .iter()
            .map(|m| {
                let z: f64 = rng.sample(StandardNormal);
                m + sd * z
            })
            .collect()
    }

    /// `n` points from the marginal, each positive with probability `prior`.
    pub fn sample_labeled(&self, n: usize, seed: u64) -> Result<LabeledPool> {
        if n == 0 {
            return Err(Error::invalid("n", "must be positive"));
        }
        let mut rng = seeded_rng(seed, 2);
        let mut points = Points::empty(self.dim());
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let label = if rng.random::<f64>() < self.prior { 1 } else { -1 };
            points.push(&self.sample_class(label, &mut rng))?;
            labels.push(label);
        }
        LabeledPool::new(points, labels)
    }

    /// Positives from `p_+` and unlabeled points from the marginal.
    pub fn sample_pu(&self, n_pos: usize, n_unl: usize, seed: u64) -> Result<PUDataset> {
        if n_pos == 0 {
            return Err(Error::invalid("n_pos", "must be positive"));
        }
        if n_unl == 0 {
            return Err(Error::invalid("n_unl", "must be positive"));
        }
        let mut rng = seeded_rng(seed, 1);
        let mut positives = Points::empty(self.dim());
        for _ in 0..n_pos {
            positives.push(&self.sample_class(1, &mut rng))?;
        }
        let pool = self.sample_labeled(n_unl, seed)?;
        PUDataset::new(positives, pool.points, Some(pool.labels))
    }
}

fn mixture_density(comps: &[Component], x: &[f64]) -> f64 {
    comps.iter().map(|c| c.weight * c.log_density(x).exp()).sum()
}

pub(crate) fn check_open_unit(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must lie in (0, 1), got {v}")))
    }
}

/// The two one-dimensional synthetic scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyntheticCase {
    /// `p_+ = N(+1, 1)`, `p_- = N(-1, 1)`.
    Separable,
    /// `p_+ = 0.8 N(+1, 1) + 0.2 N(-1, 1)`, `p_- = 0.2 N(+1, 1) + 0.8 N(-1, 1)`;
    /// `p_-` is not irreducible with respect to `p_+`.
    Overlapping,
}

impl SyntheticCase {
    pub fn from_index(case: u8) -> Result<Self> {
        match case {
            1 => Ok(Self::Separable),
            2 => Ok(Self::Overlapping),
            _ => Err(Error::invalid("case", format!("expected 1 or 2, got {case}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::Separable => 1,
            Self::Overlapping => 2,
        }
    }

    /// Default (train, test) priors.
    pub fn default_priors(self) -> (f64, f64) {
        match self {
            Self::Separable => (0.4, 0.6),
            Self::Overlapping => (0.6, 0.4),
        }
    }

    pub fn spec(self, prior: f64) -> Result<GaussianMixtureSpec> {
        let (pos, neg) = match self {
            Self::Separable => (
                vec![Component::scalar(1.0, 1.0, 1.0)],
                vec![Component::scalar(-1.0, 1.0, 1.0)],
            ),
            Self::Overlapping => (
                vec![Component::scalar(1.0, 1.0, 0.8), Component::scalar(-1.0, 1.0, 0.2)],
                vec![Component::scalar(1.0, 1.0, 0.2), Component::scalar(-1.0, 1.0, 0.8)],
            ),
        };
        GaussianMixtureSpec::new(pos, neg, prior)
    }

    /// Maximum mixture proportion `inf_x p(x) / p_+(x) = π + (1 - π) inf_x p_-(x) / p_+(x)`.
    ///
    /// In both cases `p_- / p_+` is decreasing in `x`, so the infimum is the
    /// limit at `+∞`: `0` for the separable case and `0.2 / 0.8` for the
    /// overlapping one.
    pub fn max_mixture_proportion(self, prior: f64) -> f64 {
        match self {
            Self::Separable => prior,
            Self::Overlapping => prior + (1.0 - prior) * 0.25,
        }
    }

    /// Bayes-optimal boundary for equal costs under class prior `prior`:
    /// the `x` with `prior p_+(x) = (1 - prior) p_-(x)`.
    pub fn bayes_boundary(self, prior: f64) -> f64 {
        // With a = N(1,1)(x), b = N(-1,1)(x), a / b = e^{2x}.
        let odds = (1.0 - prior) / prior;
        let ratio = match self {
            Self::Separable => odds,
            Self::Overlapping => {
                // prior (0.8a + 0.2b) = (1 - prior)(0.2a + 0.8b)
                (0.8 * (1.0 - prior) - 0.2 * prior) / (0.8 * prior - 0.2 * (1.0 - prior))
            }
        };
        ratio.ln() / 2.0
    }
}

/// Synthetic case 1: positives from `N(+1, 1)`, unlabeled from the mixture.
pub fn synth_case1(n_pos: usize, n_unl: usize, prior: f64, seed: u64) -> Result<PUDataset> {
    SyntheticCase::Separable.spec(prior)?.sample_pu(n_pos, n_unl, seed)
}

/// Synthetic case 2: overlapping class-conditionals.
pub fn synth_case2(n_pos: usize, n_unl: usize, prior: f64, seed: u64) -> Result<PUDataset> {
    SyntheticCase::Overlapping.spec(prior)?.sample_pu(n_pos, n_unl, seed)
}

/// Draws a PU dataset from a labeled pool.
///
/// Positives come from the positive class without replacement. Each
/// unlabeled slot is hidden-positive with probability `unlabeled_prior`, then
/// filled without replacement from the matching class. With `disjoint`, points
/// used as labeled positives are never reused as unlabeled ones.
pub fn pu_sample(
    pool: &LabeledPool,
    n_pos: usize,
    n_unl: usize,
    unlabeled_prior: f64,
    disjoint: bool,
    seed: u64,
) -> Result<PUDataset> {
    if !(0.0..=1.0).contains(&unlabeled_prior) {
        return Err(Error::invalid("unlabeled_prior", "must lie in [0, 1]"));
    }
    if n_pos == 0 || n_unl == 0 {
        return Err(Error::invalid("n_pos/n_unl", "must be positive"));
    }
    let mut rng = seeded_rng(seed, 3);
    let mut pos_idx = pool.class_indices(1);
    let mut neg_idx = pool.class_indices(-1);
    pos_idx.shuffle(&mut rng);
    neg_idx.shuffle(&mut rng);
    if pos_idx.len() < n_pos {
        return Err(Error::Data(format!(
            "pool has {} positives, {n_pos} requested",
            pos_idx.len()
        )));
    }
    let labeled: Vec<usize> = pos_idx[..n_pos].to_vec();
    let mut pos_for_unl: Vec<usize> = if disjoint {
        pos_idx[n_pos..].to_vec()
    } else {
        let mut v = pos_idx.clone();
        v.shuffle(&mut rng);
        v
    };
    let mut hidden = Vec::with_capacity(n_unl);
    for _ in 0..n_unl {
        hidden.push(if rng.random::<f64>() < unlabeled_prior { 1i8 } else { -1 });
    }
    let need_pos = hidden.iter().filter(|&&l| l == 1).count();
    let need_neg = n_unl - need_pos;
    if pos_for_unl.len() < need_pos {
        return Err(Error::Data(format!(
            "pool has {} positives available for the unlabeled set, {need_pos} needed",
            pos_for_unl.len()
        )));
    }
    if neg_idx.len() < need_neg {
        return Err(Error::Data(format!(
            "pool has {} negatives, {need_neg} needed",
            neg_idx.len()
        )));
    }
    pos_for_unl.truncate(need_pos);
    let (mut pi, mut ni) = (pos_for_unl.into_iter(), neg_idx.into_iter());
    let unl_idx: Vec<usize> = hidden
        .iter()
        .map(|&l| if l == 1 { pi.next().unwrap() } else { ni.next().unwrap() })
        .collect();
    PUDataset::new(pool.points.select(&labeled), pool.points.select(&unl_idx), Some(hidden))
}

/// Parsed CSV contents. `labels` is present when the file was read as labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub points: Points,
    pub labels: Option<Vec<i8>>,
    pub had_header: bool,
}

/// Reads a numeric CSV. With `labeled`, the last column must hold `-1`/`+1`.
/// A first row containing any non-numeric cell is treated as a header.
pub fn load_csv(path: impl AsRef<Path>, labeled: bool) -> Result<CsvTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut width: Option<usize> = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut had_header = false;
    let mut rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            row: row_idx,
            column: 0,
            reason: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, usize>> = record
            .iter()
            .enumerate()
            .map(|(c, cell)| cell.parse::<f64>().map_err(|_| c))
            .collect();
        if row_idx == 0 && parsed.iter().any(|p| p.is_err()) {
            had_header = true;
            width = Some(record.len());
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Csv {
                    row: row_idx,
                    column: record.len().min(w),
                    reason: format!("ragged row: expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        let mut values = Vec::with_capacity(record.len());
        for p in parsed {
            match p {
                Ok(v) if v.is_finite() => values.push(v),
                Ok(_) | Err(_) => {
                    let column = values.len();
                    return Err(Error::Csv {
                        row: row_idx,
                        column,
                        reason: format!("non-numeric cell `{}`", &record[column]),
                    });
                }
            }
        }
        if labeled {
            let label = values.pop().unwrap();
            if label != 1.0 && label != -1.0 {
                return Err(Error::Csv {
                    row: row_idx,
                    column: values.len(),
                    reason: format!("label {label} is not -1 or +1"),
                });
            }
            labels.push(label as i8);
        }
        features.extend(values);
        rows += 1;
    }
    let w = width.unwrap_or(0);
    let dim = if labeled { w.saturating_sub(1) } else { w };
    if rows == 0 || dim == 0 {
        return Err(Error::Empty(format!("{} contains no data rows", path.display())));
    }
    Ok(CsvTable {
        points: Points::new(dim, features)?,
        labels: labeled.then_some(labels),
        had_header,
    })
}

pub fn load_points(path: impl AsRef<Path>) -> Result<Points> {
    Ok(load_csv(path, false)?.points)
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<LabeledPool> {
    let t = load_csv(path, true)?;
    LabeledPool::new(t.points, t.labels.unwrap())
}

/// Writes points (and optional labels as the last column) with a header row.
/// Values are printed in shortest round-trip form so reloading is bit-exact.
pub fn save_csv(path: impl AsRef<Path>, points: &Points, labels: Option<&[i8]>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = (0..points.dim()).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, row) in points.rows().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = labels {
            cells.push(l[i].to_string());
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}
