//! Nonnegative parametric density-ratio models.
//!
//! Two architectures are provided: a linear-in-parameter model over Gaussian
//! basis functions and a small fully-connected network. Both expose their
//! parameters as one flat vector and compute parameter gradients by hand.
//!
//! Training code works on *features*: `φ(x)` for the basis model and `x`
//! itself for the network. Features depend only on the architecture, so a
//! trainer can compute them once and reuse them across epochs.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{seeded_rng, Points};
use crate::error::{Error, Result};

const MODEL_FORMAT: &str = "drpu-model/1";

/// How the raw parametric output becomes the model value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMap {
    /// `max(0, g)` with zero subgradient where `g < 0`.
    ClampZero,
    /// `log(1 + e^g)`.
    Softplus,
    /// `g`, for real-valued decision functions.
    Identity,
}

impl OutputMap {
    /// Returns the mapped value and its derivative with respect to `raw`.
    #[inline]
    pub fn apply(self, raw: f64) -> (f64, f64) {
        match self {
            OutputMap::ClampZero => {
                if raw < 0.0 {
                    (0.0, 0.0)
                } else {
                    (raw, 1.0)
                }
            }
            OutputMap::Softplus => (softplus(raw), sigmoid(raw)),
            OutputMap::Identity => (raw, 1.0),
        }
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GaussianBasisLinear,
    Mlp,
}

/// Gaussian basis functions `φ_i(x) = exp(-|x - c_i|^2 / (2 h^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBasis {
    centers: Points,
    bandwidth: f64,
}

impl GaussianBasis {
    pub fn new(centers: Points, bandwidth: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Empty("gaussian basis needs at least one center".into()));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::invalid("bandwidth", format!("must be positive, got {bandwidth}")));
        }
        Ok(Self { centers, bandwidth })
    }

    pub fn centers(&self) -> &Points {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut Vec<f64>) {
        let scale = -0.5 / (self.bandwidth * self.bandwidth);
        out.clear();
        out.extend(self.centers.rows().map(|c| {
            let sq: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (scale * sq).exp()
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    GaussianBasisLinear(GaussianBasis),
    Mlp { layer_sizes: Vec<usize> },
}

impl Architecture {
    fn param_count(&self) -> usize {
        match self {
            Architecture::GaussianBasisLinear(b) => b.len(),
            Architecture::Mlp { layer_sizes } => layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum(),
        }
    }

    fn dim_in(&self) -> usize {
        match self {
            Architecture::GaussianBasisLinear(b) => b.centers.dim(),
            Architecture::Mlp { layer_sizes } => layer_sizes[0],
        }
    }
}

/// A parametric model `r: R^d -> [0, ∞)` (or `R` with [`OutputMap::Identity`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioModel {
    architecture: Architecture,
    output: OutputMap,
    params: Vec<f64>,
}

/// Scratch buffers reused across forward/backward passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    features: Vec<f64>,
    activations: Vec<Vec<f64>>,
    deltas: Vec<f64>,
    next: Vec<f64>,
}

impl RatioModel {
    /// Linear model over Gaussian basis functions centred at `centers`,
    /// weights initialised to zero, output clamped at zero.
    pub fn gaussian_basis_linear(centers: Points, bandwidth: f64) -> Result<Self> {
        let basis = GaussianBasis::new(centers, bandwidth)?;
        let params = vec![0.0; basis.len()];
        Ok(Self {
            architecture: Architecture::GaussianBasisLinear(basis),
            output: OutputMap::ClampZero,
            params,
        })
    }

    /// Same as [`Self::gaussian_basis_linear`] but keeps at most `max_centers`
    /// points chosen uniformly without replacement.
    pub fn gaussian_basis_subsampled(pool: &Points, max_centers: usize, bandwidth: f64, seed: u64) -> Result<Self> {
        if max_centers == 0 {
            return Err(Error::invalid("max_centers", "must be positive"));
        }
        if pool.len() <= max_centers {
            return Self::gaussian_basis_linear(pool.clone(), bandwidth);
        }
        let mut rng = seeded_rng(seed, 7);
        let mut idx = sample(&mut rng, pool.len(), max_centers).into_vec();
        idx.sort_unstable();
        Self::gaussian_basis_linear(pool.select(&idx), bandwidth)
    }

    /// Fully-connected ReLU network with a softplus output unit.
    ///
    /// Weights are drawn uniformly from `±sqrt(6 / fan_in)`, biases start at 0.
    pub fn mlp(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("layer_sizes", "need at least an input and an output layer"));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("layer_sizes", "layer widths must be positive"));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::invalid("layer_sizes", "output width must be 1"));
        }
        let architecture = Architecture::Mlp {
            layer_sizes: layer_sizes.to_vec(),
        };
        let mut rng = seeded_rng(seed, 11);
        let mut params = Vec::with_capacity(architecture.param_count());
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-limit..limit));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            architecture,
            output: OutputMap::Softplus,
            params,
        })
    }

    /// The same architecture and parameters with a different output map.
    pub fn with_output(mut self, output: OutputMap) -> Self {
        self.output = output;
        self
    }

    pub fn kind(&self) -> ModelKind {
        match self.architecture {
            Architecture::GaussianBasisLinear(_) => ModelKind::GaussianBasisLinear,
            Architecture::Mlp { .. } => ModelKind::Mlp,
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn output(&self) -> OutputMap {
        self.output
    }

    pub fn dim_in(&self) -> usize {
        self.architecture.dim_in()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim_in() {
            return Err(Error::DimensionMismatch {
                expected: self.dim_in(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Model value at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut ws = Workspace::default();
        let z = self.features(x, &mut ws);
        Ok(self.output.apply(self.raw_from_features(&z, &mut ws)).0)
    }

    /// Model value and its gradient with respect to the parameters.
    pub fn predict_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x)?;
        let mut ws = Workspace::default();
        let z = self.features(x, &mut ws);
        let mut grad = vec![0.0; self.params.len()];
        let value = self.accumulate_grad(&z, 1.0, &mut grad, &mut ws);
        Ok((value, grad))
    }

    pub fn predict_all(&self, xs: &Points) -> Result<Vec<f64>> {
        if xs.dim() != self.dim_in() {
            return Err(Error::DimensionMismatch {
                expected: self.dim_in(),
                got: xs.dim(),
            });
        }
        let mut ws = Workspace::default();
        Ok(xs
            .rows()
            .map(|x| {
                let z = self.features(x, &mut ws);
                self.output.apply(self.raw_from_features(&z, &mut ws)).0
            })
            .collect())
    }

    /// Feature vector the parameters act on.
    pub fn features(&self, x: &[f64], ws: &mut Workspace) -> Vec<f64> {
        match &self.architecture {
            Architecture::GaussianBasisLinear(b) => {
                b.eval_into(x, &mut ws.features);
                ws.features.clone()
            }
            Architecture::Mlp { .. } => x.to_vec(),
        }
    }

    /// Features of every row, stacked.
    pub fn features_all(&self, xs: &Points) -> Result<Points> {
        if xs.dim() != self.dim_in() {
            return Err(Error::DimensionMismatch {
                expected: self.dim_in(),
                got: xs.dim(),
            });
        }
        match &self.architecture {
            Architecture::GaussianBasisLinear(b) => {
                let mut data = Vec::with_capacity(xs.len() * b.len());
                let mut buf = Vec::new();
                for x in xs.rows() {
                    b.eval_into(x, &mut buf);
                    data.extend_from_slice(&buf);
                }
                Points::new(b.len(), data)
            }
            Architecture::Mlp { .. } => Ok(xs.clone()),
        }
    }

    /// Raw (pre output-map) value from precomputed features.
    pub fn raw_from_features(&self, z: &[f64], ws: &mut Workspace) -> f64 {
        match &self.architecture {
            Architecture::GaussianBasisLinear(_) => dot(&self.params, z),
            Architecture::Mlp { layer_sizes } => mlp_forward(&self.params, layer_sizes, z, ws),
        }
    }

    /// Mapped value from precomputed features.
    pub fn value_from_features(&self, z: &[f64], ws: &mut Workspace) -> f64 {
        self.output.apply(self.raw_from_features(z, ws)).0
    }

    /// Adds `scale * d value / d params` to `grad` and returns the value.
    pub fn accumulate_grad(&self, z: &[f64], scale: f64, grad: &mut [f64], ws: &mut Workspace) -> f64 {
        match &self.architecture {
            Architecture::GaussianBasisLinear(_) => {
                let (value, d) = self.output.apply(dot(&self.params, z));
                let s = scale * d;
                if s != 0.0 {
                    for (g, zi) in grad.iter_mut().zip(z) {
                        *g += s * zi;
                    }
                }
                value
            }
            Architecture::Mlp { layer_sizes } => {
                let raw = mlp_forward(&self.params, layer_sizes, z, ws);
                let (value, d) = self.output.apply(raw);
                let s = scale * d;
                if s != 0.0 {
                    mlp_backward(&self.params, layer_sizes, s, grad, ws);
                }
                value
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelDocument {
            format: MODEL_FORMAT.into(),
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Integrity(format!("unknown model format `{}`", doc.format)));
        }
        let model = doc.model;
        if let Architecture::Mlp { layer_sizes } = &model.architecture {
            if layer_sizes.len() < 2 || layer_sizes.last() != Some(&1) || layer_sizes.contains(&0) {
                return Err(Error::Integrity("invalid layer sizes".into()));
            }
        }
        if let Architecture::GaussianBasisLinear(b) = &model.architecture {
            GaussianBasis::new(b.centers.clone(), b.bandwidth).map_err(|e| Error::Integrity(e.to_string()))?;
        }
        if model.params.len() != model.architecture.param_count() {
            return Err(Error::Integrity(format!(
                "parameter vector has length {}, architecture needs {}",
                model.params.len(),
                model.architecture.param_count()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    model: RatioModel,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward pass storing post-activation values of every layer in `ws`.
fn mlp_forward(params: &[f64], sizes: &[usize], z: &[f64], ws: &mut Workspace) -> f64 {
    let layers = sizes.len() - 1;
    ws.activations.resize(sizes.len(), Vec::new());
    ws.activations[0].clear();
    ws.activations[0].extend_from_slice(z);
    let mut offset = 0;
    for l in 0..layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &params[offset..offset + n_in * n_out];
        let b = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let (prev, rest) = ws.activations.split_at_mut(l + 1);
        let input = &prev[l];
        let out = &mut rest[0];
        out.clear();
        for j in 0..n_out {
            let pre = b[j] + dot(&w[j * n_in..(j + 1) * n_in], input);
            out.push(if l + 1 < layers { pre.max(0.0) } else { pre });
        }
    }
    ws.activations[layers][0]
}

/// Backpropagates `scale` from the raw output, using activations left by
/// [`mlp_forward`], and accumulates into `grad`.
fn mlp_backward(params: &[f64], sizes: &[usize], scale: f64, grad: &mut [f64], ws: &mut Workspace) {
    let layers = sizes.len() - 1;
    let mut offsets = Vec::with_capacity(layers);
    let mut offset = 0;
    for l in 0..layers {
        offsets.push(offset);
        offset += sizes[l] * sizes[l + 1] + sizes[l + 1];
    }
    ws.deltas.clear();
    ws.deltas.push(scale);
    for l in (0..layers).rev() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let off = offsets[l];
        let input = &ws.activations[l];
        for j in 0..n_out {
            let d = ws.deltas[j];
            if d == 0.0 {
                continue;
            }
            let gw = &mut grad[off + j * n_in..off + (j + 1) * n_in];
            for (g, a) in gw.iter_mut().zip(input) {
                *g += d * a;
            }
            grad[off + n_in * n_out + j] += d;
        }
        if l > 0 {
            ws.next.clear();
            ws.next.resize(n_in, 0.0);
            let w = &params[off..off + n_in * n_out];
            for j in 0..n_out {
                let d = ws.deltas[j];
                if d == 0.0 {
                    continue;
                }
                for (i, wi) in w[j * n_in..(j + 1) * n_in].iter().enumerate() {
                    ws.next[i] += d * wi;
                }
            }
            // ReLU: activations[l] is the post-ReLU value of hidden layer l
            for (n, a) in ws.next.iter_mut().zip(&ws.activations[l]) {
                if *a <= 0.0 {
                    *n = 0.0;
                }
            }
            std::mem::swap(&mut ws.deltas, &mut ws.next);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_weights_predict_zero() {
        let centers = Points::from_scalars(&[-1.0, 0.0, 2.0]);
        let m = RatioModel::gaussian_basis_linear(centers, 1.0).unwrap();
        for x in [-3.0, 0.0, 5.0] {
            assert_eq!(m.predict(&[x]).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_center_values() {
        let mut m = RatioModel::gaussian_basis_linear(Points::from_scalars(&[0.7]), 1.0).unwrap();
        m.set_params(vec![1.0]).unwrap();
        assert_eq!(m.predict(&[0.7]).unwrap(), 1.0);
        // unit bandwidth is exp(-(x - c)^2 / 2)
        let x = 1.9;
        assert!((m.predict(&[x]).unwrap() - (-(x - 0.7f64).powi(2) / 2.0).exp()).abs() < 1e-15);

        let mut neg = RatioModel::gaussian_basis_linear(Points::from_scalars(&[0.0]), 1.0).unwrap();
        neg.set_params(vec![-3.0]).unwrap();
        assert_eq!(neg.predict(&[0.0]).unwrap(), 0.0);
        let (v, g) = neg.predict_grad(&[0.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn linear_gradient_is_feature_vector() {
        let centers = Points::from_scalars(&[-1.0, 0.5, 2.0]);
        let mut m = RatioModel::gaussian_basis_linear(centers.clone(), 0.8).unwrap();
        m.set_params(vec![0.3, 0.2, 0.1]).unwrap();
        let (_, g) = m.predict_grad(&[0.1]).unwrap();
        let mut phi = Vec::new();
        GaussianBasis::new(centers, 0.8).unwrap().eval_into(&[0.1], &mut phi);
        assert_eq!(g, phi);
    }

    #[test]
    fn constructor_errors() {
        assert!(RatioModel::gaussian_basis_linear(Points::empty(1), 1.0).is_err());
        assert!(RatioModel::gaussian_basis_linear(Points::from_scalars(&[0.0]), 0.0).is_err());
        assert!(RatioModel::gaussian_basis_linear(Points::from_scalars(&[0.0]), -1.0).is_err());
        assert!(RatioModel::mlp(&[3, 4, 2], 0).is_err());
        assert!(RatioModel::mlp(&[3], 0).is_err());
        let m = RatioModel::mlp(&[2, 3, 1], 0).unwrap();
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn parameter_counts() {
        let pool = Points::from_scalars(&(0..1000).map(|i| i as f64 / 100.0).collect::<Vec<_>>());
        assert_eq!(RatioModel::gaussian_basis_linear(pool.clone(), 1.0).unwrap().params().len(), 1000);
        assert_eq!(RatioModel::mlp(&[1, 8, 1], 3).unwrap().params().len(), 25);
        let sub = RatioModel::gaussian_basis_subsampled(&pool, 100, 1.0, 4).unwrap();
        assert_eq!(sub.params().len(), 100);
    }

    #[test]
    fn mlp_seed_determinism() {
        let a = RatioModel::mlp(&[4, 16, 8, 1], 42).unwrap();
        let b = RatioModel::mlp(&[4, 16, 8, 1], 42).unwrap();
        let c = RatioModel::mlp(&[4, 16, 8, 1], 43).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        let x = [0.1, -0.2, 0.3, 0.9];
        assert_eq!(a.predict(&x).unwrap().to_bits(), b.predict(&x).unwrap().to_bits());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = RatioModel::mlp(&[2, 5, 1], 9).unwrap();
        let back = RatioModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        for (a, b) in m.params().iter().zip(back.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut g = RatioModel::gaussian_basis_linear(Points::from_scalars(&[0.1, 1.0 / 3.0]), 0.7).unwrap();
        g.set_params(vec![1e-17, -2.0 / 7.0]).unwrap();
        let back = RatioModel::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(g, back);

        let broken = g.to_json().unwrap().replace("1e-17,", "");
        assert!(RatioModel::from_json(&broken).is_err());
    }

    proptest! {
        #[test]
        fn predictions_nonnegative(
            seed in 0u64..1000,
            xs in proptest::collection::vec(-50.0f64..50.0, 3),
            w in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let mlp = RatioModel::mlp(&[3, 8, 8, 1], seed).unwrap();
            prop_assert!(mlp.predict(&xs).unwrap() >= 0.0);
            let centers = Points::from_rows(&[
                vec![0.0, 0.0, 0.0], vec![1.0, -1.0, 2.0], vec![-3.0, 0.5, 0.0], vec![4.0, 4.0, -4.0],
            ]).unwrap();
            let mut lin = RatioModel::gaussian_basis_linear(centers, 2.0).unwrap();
            lin.set_params(w).unwrap();
            prop_assert!(lin.predict(&xs).unwrap() >= 0.0);
        }
    }
}
