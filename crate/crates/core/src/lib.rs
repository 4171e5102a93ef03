//! Positive-unlabeled classification through density-ratio estimation.
//!
//! A non-negative ratio model `r(x) ≈ p+(x) / p(x)` is fitted by minimising a
//! Bregman-divergence objective on positive and unlabeled samples. The class
//! prior is then read off the fitted ratio by a threshold sweep, and the
//! decision threshold is moved to match a test-time prior and cost without
//! retraining.

pub mod baselines;
pub mod classifier;
pub mod data;
pub mod divergence;
pub mod experiments;
pub mod error;
pub mod generators;
pub mod metrics;
pub mod models;
pub mod prior;
pub mod theory;
pub mod trainer;

pub use data::{GaussianMixtureSpec, LabeledPool, PUDataset, Points, SyntheticCase};
pub use divergence::{Branch, DiscreteDistributionPair, ObjectiveValue};
pub use error::{Error, Result};
pub use generators::BregmanGenerator;
pub use models::{OutputMap, RatioModel};
pub use trainer::{BatchPairing, TrainConfig, TrainReport};
