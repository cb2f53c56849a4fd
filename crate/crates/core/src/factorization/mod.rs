//! Latent factor models over a row hierarchy.
//!
//! Every level `ℓ = 1..=L` of the hierarchy has its own row factors `U⁽ˡ⁾`
//! (one k-vector per node) and column factors `V⁽ˡ⁾` (one k-vector per
//! column). Level 0 holds the root priors `u⁽⁰⁾` and `v⁽⁰⁾`, fixed at zero for
//! training. Row factors are coupled to their parent's factor, column factors
//! to the same column one level up; the leaf factors predict the data.

mod factors;
mod laplacian;
mod objective;
mod sgd;
mod synthetic;
mod train;

pub use factors::{predict, FactorMatrix, FactorSet};
pub use laplacian::{objective_stacked, Laplacian, StackedProblem};
pub use objective::{
    gradient_hrpmf, gradient_level, objective_full, objective_hrpmf, objective_level, LevelGradient,
};
pub use sgd::{sgd_direction_sum, sgd_epoch_level};
pub use synthetic::{generate_synthetic, sample_factors, sample_level_data, SynthConfig};
pub(crate) use train::predict_entries;
pub use train::{
    train_hpmf, train_hrpmf, train_lpmf, train_method, train_pmf, Direction, EarlyStopping,
    PassRecord, StopReason, StopSignal, TraceStep, TrainTrace,
};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::taxonomy::TaxonomyError;
use crate::traitdata::DataError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite factor after epoch {epoch} at level {level} (pass {pass}); lower the learning rate")]
    NonFiniteUpdate {
        pass: usize,
        level: usize,
        epoch: usize,
    },
    #[error("training matrix has no entries")]
    EmptyTrainingSet,
    #[error("index ({row}, {col}) outside the {n_rows}x{n_cols} leaf matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("level {level} outside 1..={depth}")]
    BadLevel { level: usize, depth: usize },
    #[error("invalid hyperparameters: {0}")]
    BadHyperparams(String),
    #[error("missing rate {0} outside [0, 1)")]
    BadRate(f64),
    #[error("noise scale {0} must be finite and non-negative")]
    BadSigma(f64),
    #[error("{0} is not a factor model")]
    NotFactorModel(Method),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Training hyperparameters shared by every factor model.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Latent dimension.
    pub k: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub learning_rate: f64,
    /// SGD epochs each time a level is visited in a sweep.
    pub epochs_per_level: usize,
    /// Top-down + bottom-up passes.
    pub max_passes: usize,
    /// Passes without validation improvement before stopping.
    pub patience: usize,
    /// Standard deviation of the random factor initialization.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 15,
            lambda_u: 0.1,
            lambda_v: 0.1,
            learning_rate: 0.005,
            epochs_per_level: 10,
            max_passes: 5,
            patience: 5,
            init_scale: 0.01,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), FactorError> {
        let bad = |msg: &str| Err(FactorError::BadHyperparams(msg.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.lambda_u >= 0.0 && self.lambda_u.is_finite()) {
            return bad("lambda_u must be finite and >= 0");
        }
        if !(self.lambda_v >= 0.0 && self.lambda_v.is_finite()) {
            return bad("lambda_v must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and > 0");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be finite and > 0");
        }
        if self.epochs_per_level == 0 || self.max_passes == 0 || self.patience == 0 {
            return bad("epochs_per_level, max_passes and patience must be at least 1");
        }
        Ok(())
    }
}

/// The model family compared in level-ablation experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mean,
    Pmf,
    Lpmf,
    Hrpmf,
    Hpmf,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mean,
        Method::Pmf,
        Method::Lpmf,
        Method::Hrpmf,
        Method::Hpmf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mean => "mean",
            Method::Pmf => "pmf",
            Method::Lpmf => "lpmf",
            Method::Hrpmf => "hrpmf",
            Method::Hpmf => "hpmf",
        }
    }

    /// Whether the method is defined for a tree with `upper_levels` levels
    /// above the leaves. PMF uses no hierarchy; LPMF, HRPMF and HPMF need one.
    pub fn applies_to(self, upper_levels: usize) -> bool {
        match self {
            Method::Mean => true,
            Method::Pmf => upper_levels == 0,
            Method::Lpmf | Method::Hrpmf | Method::Hpmf => upper_levels > 0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Method::Mean),
            "pmf" => Ok(Method::Pmf),
            "lpmf" => Ok(Method::Lpmf),
            "hrpmf" => Ok(Method::Hrpmf),
            "hpmf" => Ok(Method::Hpmf),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}
