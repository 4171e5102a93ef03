//! Run configuration: defaults, then the JSON config file, then flag
//! overrides, applied in that order.

use std::fs;
use std::path::Path;

use drpu_core::baselines::SurrogateLoss;
use drpu_core::experiments::BoundaryConfig;
use drpu_core::trainer::{BatchPairing, TrainConfig};
use drpu_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{nested, CliError, CliResult};

/// Builds a config from its defaults, a JSON file and `key.path=value`
/// overrides. Unknown keys and ill-typed values are reported with their path.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(file: Option<&Path>, overrides: &[String]) -> CliResult<T> {
    let mut value = serde_json::to_value(T::default()).map_err(|e| CliError::config(e.to_string()))?;
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if !doc.is_object() {
            return Err(CliError::config(format!("{}: top level must be an object", path.display())));
        }
        merge(&mut value, doc);
    }
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("override `{o}` is not of the form key=value")))?;
        set_path(&mut value, key, parse_scalar(raw))?;
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(format!("field `{path}`: {}", e.into_inner()))
    })
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, key: &str, v: Value) -> CliResult<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj: &mut Map<String, Value> = match cur {
            Value::Object(m) => m,
            _ => return Err(CliError::config(format!("field `{}` is not an object", parts[..i].join(".")))),
        };
        let Some(next) = obj.get_mut(*part) else {
            return Err(CliError::config(format!("field `{}`: unknown field", parts[..=i].join("."))));
        };
        cur = next;
    }
    *cur = v;
    Ok(())
}

/// SHA-256 of the compact JSON of a resolved config.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let text = serde_json::to_string(cfg).expect("configs serialise");
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// 1: separable mixtures, 2: overlapping mixtures.
    pub case: u8,
    pub train_prior: Option<f64>,
    pub test_prior: Option<f64>,
    pub n_pos: usize,
    pub n_unl: usize,
    pub n_val_pos: usize,
    pub n_val_unl: usize,
    pub n_test: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let b = BoundaryConfig::default();
        Self {
            case: b.case,
            train_prior: None,
            test_prior: None,
            n_pos: b.n_pos,
            n_unl: b.n_unl,
            n_val_pos: b.n_val_pos,
            n_val_unl: b.n_val_unl,
            n_test: b.n_test,
        }
    }
}

impl SynthConfig {
    /// The boundary-experiment config that draws the same data.
    pub fn boundary(&self) -> BoundaryConfig {
        BoundaryConfig {
            case: self.case,
            train_prior: self.train_prior,
            test_prior: self.test_prior,
            n_pos: self.n_pos,
            n_unl: self.n_unl,
            n_val_pos: self.n_val_pos,
            n_val_unl: self.n_val_unl,
            n_test: self.n_test,
            ..BoundaryConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Drpu,
    Upu,
    Nnpu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GaussianBasis,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Gaussian basis only.
    pub bandwidth: f64,
    /// Gaussian basis only; all training unlabeled points when absent.
    pub max_centers: Option<usize>,
    /// MLP only.
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::GaussianBasis,
            bandwidth: 1.0,
            max_centers: None,
            hidden: vec![64, 64],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Lsif,
    Quadratic,
    Exp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    /// Curvature of the quadratic generator.
    pub mu: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Lsif,
            mu: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub method: Method,
    pub model: ModelConfig,
    pub generator: GeneratorConfig,
    /// Confidence parameter of the prior estimator.
    pub gamma: f64,
    /// Class prior handed to the uPU/nnPU baselines.
    pub prior: Option<f64>,
    pub loss: SurrogateLoss,
    /// `train.seed` is replaced by a sub-seed of `--seed`.
    pub train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        let b = BoundaryConfig::default();
        Self {
            method: Method::Drpu,
            model: ModelConfig::default(),
            generator: GeneratorConfig::default(),
            gamma: b.gamma,
            prior: None,
            loss: b.baseline_loss,
            train: TrainConfig {
                pairing: BatchPairing::Unlabeled,
                ..TrainConfig::default()
            },
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        field: field.into(),
        reason: reason.into(),
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> drpu_core::Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        if self.method != Method::Drpu {
            match self.prior {
                None => return Err(invalid("prior", "required by the uPU and nnPU baselines")),
                Some(p) if !(p > 0.0 && p < 1.0) => return Err(invalid("prior", format!("must lie in (0, 1), got {p}"))),
                _ => {}
            }
        }
        if self.model.kind == ModelKind::Mlp && self.model.hidden.contains(&0) {
            return Err(invalid("model.hidden", "layer widths must be positive"));
        }
        if !(self.model.bandwidth > 0.0) {
            return Err(invalid("model.bandwidth", "must be positive"));
        }
        self.train.validate().map_err(|e| nested("train", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// False-positive cost at test time.
    pub cost: f64,
    /// Defaults to the value stored with the interval list.
    pub gamma: Option<f64>,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self { cost: 0.5, gamma: None }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> drpu_core::Result<()> {
        if !(self.cost > 0.0 && self.cost < 1.0) {
            return Err(invalid("cost", format!("must lie in (0, 1), got {}", self.cost)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(invalid("gamma", format!("must lie in (0, 1), got {g}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"gamma": 0.8, "train": {"epochs": 5, "learning_rate": 0.01}}"#).unwrap();
        let cfg: TrainRunConfig = resolve(Some(&p), &["train.epochs=7".into(), "method=nnpu".into()]).unwrap();
        assert_eq!(cfg.gamma, 0.8);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.method, Method::Nnpu);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn errors_name_the_field() {
        let e = resolve::<TrainRunConfig>(None, &["train.epochz=3".into()]).unwrap_err();
        assert!(e.message.contains("train.epochz"), "{}", e.message);
        let e = resolve::<TrainRunConfig>(None, &["train.learning_rate=fast".into()]).unwrap_err();
        assert!(e.message.contains("train.learning_rate"), "{}", e.message);
        assert_eq!(e.code, crate::error::EXIT_CONFIG);
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainRunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.gamma = 0.5;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
