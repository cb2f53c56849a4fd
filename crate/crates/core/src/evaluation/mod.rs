//! Error metrics, the level-ablation experiment, the Part A / B split of the
//! test set, and scatter / correlation exports.

mod ablation;

pub use ablation::{
    fit_and_predict, part_ab_rows, per_trait_rmse, prefix_label, prepare_split, run_ablation,
    AblationConfig, AblationRow, EvaluationReport, Part, PartAbRow, PreparedSplit, SplitKind,
};

use thiserror::Error;

use crate::baseline::MeanError;
use crate::factorization::FactorError;
use crate::taxonomy::{TaxonomyError, TaxonomyTree};
use crate::traitdata::{DataError, Entry, SparseTraitMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("cannot compute RMSE of an empty list")]
    EmptyList,
    #[error("need at least 2 complete rows for a correlation, found {0}")]
    InsufficientPairs(usize),
    #[error("correlation undefined: {0} has zero variance")]
    UndefinedCorrelation(&'static str),
    #[error("correlation needs two distinct columns, got {0} twice")]
    SameColumn(usize),
    #[error("no prediction for test cell ({row}, {col})")]
    MissingPrediction { row: usize, col: usize },
    #[error("invalid experiment configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Mean(#[from] MeanError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// `√(Σ (a − â)² / T)` over `(truth, prediction)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyList);
    }
    let sse: f64 = pairs.iter().map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

/// `(truth, prediction)` for every entry of `truth`, in entry order.
pub fn paired(
    truth: &SparseTraitMatrix,
    predictions: &SparseTraitMatrix,
) -> Result<Vec<(f64, f64)>, EvalError> {
    truth
        .entries()
        .iter()
        .map(|e| {
            predictions.get(e.row, e.col).map(|p| (e.value, p)).ok_or(
                EvalError::MissingPrediction {
                    row: e.row,
                    col: e.col,
                },
            )
        })
        .collect()
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return Err(EvalError::InsufficientPairs(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(EvalError::UndefinedCorrelation("first variable"));
    }
    if syy == 0.0 {
        return Err(EvalError::UndefinedCorrelation("second variable"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Test entries split by whether another leaf of the same species (the
/// level directly above the leaves) has the column in training.
#[derive(Debug, Clone, PartialEq)]
pub struct PartAb {
    pub part_a: SparseTraitMatrix,
    pub part_b: SparseTraitMatrix,
}

pub fn partition_ab(
    test: &SparseTraitMatrix,
    train: &SparseTraitMatrix,
    tree: &TaxonomyTree,
) -> Result<PartAb, EvalError> {
    let depth = tree.depth();
    let (n, m) = (test.n_rows(), test.n_cols());
    if train.n_rows() != n || train.n_cols() != m || n != tree.leaf_count() {
        return Err(DataError::ShapeMismatch(format!(
            "test {n}x{m}, train {}x{}, {} leaves",
            train.n_rows(),
            train.n_cols(),
            tree.leaf_count()
        ))
        .into());
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    if depth == 1 {
        b.extend_from_slice(test.entries());
    } else {
        let species = tree.ancestors_at(depth - 1);
        let mut counts = vec![0usize; tree.nodes_at(depth - 1) * m];
        for e in train.entries() {
            counts[species[e.row] * m + e.col] += 1;
        }
        for e in test.entries() {
            let own = usize::from(train.contains(e.row, e.col));
            if counts[species[e.row] * m + e.col] > own {
                a.push(*e);
            } else {
                b.push(*e);
            }
        }
    }
    Ok(PartAb {
        part_a: SparseTraitMatrix::from_entries(depth, n, m, a)?,
        part_b: SparseTraitMatrix::from_entries(depth, n, m, b)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictable {
    pub kept: SparseTraitMatrix,
    pub dropped: usize,
}

impl Predictable {
    /// Share of the original test entries that were dropped.
    pub fn discarded_fraction(&self) -> f64 {
        let total = self.kept.len() + self.dropped;
        if total == 0 {
            0.0
        } else {
            self.dropped as f64 / total as f64
        }
    }
}

/// Keeps the test entries whose row has at least one training entry.
pub fn filter_predictable(test: &SparseTraitMatrix, train: &SparseTraitMatrix) -> Predictable {
    let kept: Vec<Entry> = test
        .entries()
        .iter()
        .copied()
        .filter(|e| e.row < train.n_rows() && train.row_len(e.row) > 0)
        .collect();
    let dropped = test.len() - kept.len();
    Predictable {
        kept: SparseTraitMatrix::from_entries(test.level(), test.n_rows(), test.n_cols(), kept)
            .expect("subset of a valid matrix"),
        dropped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub row: usize,
    pub truth: f64,
    pub prediction: f64,
}

/// One `(truth, prediction)` row per test entry of `col`, by row index.
pub fn scatter_export(
    truth: &SparseTraitMatrix,
    predictions: &SparseTraitMatrix,
    col: usize,
) -> Result<Vec<ScatterRow>, EvalError> {
    truth
        .col(col)
        .map(|e| {
            let prediction = predictions
                .get(e.row, col)
                .ok_or(EvalError::MissingPrediction { row: e.row, col })?;
            Ok(ScatterRow {
                row: e.row,
                truth: e.value,
                prediction,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationRow {
    pub row: usize,
    pub truth_i: f64,
    pub truth_j: f64,
    pub pred_i: f64,
    pub pred_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    pub pearson_true: f64,
    pub pearson_pred: f64,
}

/// Rows with both columns of `pair` in `truth`, and the Pearson correlation
/// of the true and of the predicted pair over those rows.
pub fn correlation_report(
    truth: &SparseTraitMatrix,
    predictions: &SparseTraitMatrix,
    pair: (usize, usize),
) -> Result<CorrelationReport, EvalError> {
    let (i, j) = pair;
    if i == j {
        return Err(EvalError::SameColumn(i));
    }
    let mut rows = Vec::new();
    for r in 0..truth.n_rows() {
        let (Some(ti), Some(tj)) = (truth.get(r, i), truth.get(r, j)) else {
            continue;
        };
        let pi = predictions
            .get(r, i)
            .ok_or(EvalError::MissingPrediction { row: r, col: i })?;
        let pj = predictions
            .get(r, j)
            .ok_or(EvalError::MissingPrediction { row: r, col: j })?;
        rows.push(CorrelationRow {
            row: r,
            truth_i: ti,
            truth_j: tj,
            pred_i: pi,
            pred_j: pj,
        });
    }
    if rows.len() < 2 {
        return Err(EvalError::InsufficientPairs(rows.len()));
    }
    let col = |f: fn(&CorrelationRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let pearson_true = pearson(&col(|r| r.truth_i), &col(|r| r.truth_j))?;
    let pearson_pred = pearson(&col(|r| r.pred_i), &col(|r| r.pred_j))?;
    Ok(CorrelationReport {
        rows,
        pearson_true,
        pearson_pred,
    })
}
