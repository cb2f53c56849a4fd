//! Gap filling for sparse entity × attribute matrices whose rows sit in a
//! balanced multi-level hierarchy.
//!
//! The crate implements hierarchical probabilistic matrix factorization
//! (HPMF) together with the models it is usually compared against:
//!
//! * `PMF`   - plain probabilistic matrix factorization on the leaf matrix,
//! * `LPMF`  - per-level PMF where the hierarchy only seeds initialization,
//! * `HRPMF` - hierarchy-regularized PMF with data only at the leaf level,
//! * `MEAN`  - the hierarchical group-mean baseline.
//!
//! Module map:
//!
//! * [`taxonomy`] - the balanced tree (parent / children maps, truncation).
//! * [`traitdata`] - sparse level matrices, log / z-score preprocessing,
//!   per-level aggregation and train / validation / test splits.
//! * [`factorization`] - objectives, SGD block updates, trainers, prediction
//!   and the generative sampler.
//! * [`baseline`] - hierarchical mean tables.
//! * [`evaluation`] - RMSE, level ablation, Part A / B analysis, scatter and
//!   correlation exports.
//! * [`io`] - the CSV / TSV / factor file formats.

pub mod baseline;
pub mod catalog;
pub mod evaluation;
pub mod factorization;
pub mod io;
pub mod rng;
pub mod taxonomy;
pub mod traitdata;

pub use baseline::{build_mean_tables, mean_predict, MeanCell, MeanError, MeanTables};
pub use factorization::{
    generate_synthetic, predict, train_hpmf, train_hrpmf, train_lpmf, train_method, train_pmf,
    FactorError, FactorMatrix, FactorSet, Hyperparams, Method, StopReason, SynthConfig, TrainTrace,
};
pub use taxonomy::{TaxonomyError, TaxonomyTree};
pub use traitdata::{
    aggregate_levels, inverse_transform, split_per_plant, split_random, transform, DataError,
    Entry, SparseTraitMatrix, SplitBundle, TraitStats,
};
