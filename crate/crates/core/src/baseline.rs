//! Hierarchical MEAN predictor: the mean of the nearest ancestor group with
//! training data in the requested column, falling back to the global column
//! mean.

use thiserror::Error;

use crate::taxonomy::TaxonomyTree;
use crate::traitdata::SparseTraitMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeanError {
    #[error("column {col} has no training entries")]
    NoPrediction { col: usize },
    #[error("leaf {leaf} or column {col} out of range")]
    IndexOutOfRange { leaf: usize, col: usize },
    #[error("max level {max_level} outside 0..={limit}")]
    BadLevel { max_level: usize, limit: usize },
    #[error("training matrix does not match the tree: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCell {
    pub mean: f64,
    pub count: usize,
}

/// Group means over training leaf entries.
///
/// `levels[ℓ - 1]` is a dense `nodes × M` table for ancestor level
/// `ℓ = 1..L−1`; `global` holds one cell per column. Absent cells had no
/// training entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTables {
    n_cols: usize,
    levels: Vec<Vec<Option<MeanCell>>>,
    global: Vec<Option<MeanCell>>,
}

fn finish(sums: Vec<(f64, usize)>) -> Vec<Option<MeanCell>> {
    sums.into_iter()
        .map(|(s, c)| {
            (c > 0).then(|| MeanCell {
                mean: s / c as f64,
                count: c,
            })
        })
        .collect()
}

impl MeanTables {
    pub fn from_parts(
        n_cols: usize,
        levels: Vec<Vec<Option<MeanCell>>>,
        global: Vec<Option<MeanCell>>,
    ) -> Self {
        Self {
            n_cols,
            levels,
            global,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of ancestor levels above the leaves (`L − 1`).
    pub fn upper_levels(&self) -> usize {
        self.levels.len()
    }

    /// Cell for `node` at ancestor level `level ≥ 1`, or the global cell for
    /// `level == 0` (where `node` is ignored).
    pub fn cell(&self, level: usize, node: usize, col: usize) -> Option<MeanCell> {
        if level == 0 {
            self.global[col]
        } else {
            self.levels[level - 1][node * self.n_cols + col]
        }
    }

    pub fn nodes_at(&self, level: usize) -> usize {
        if level == 0 {
            1
        } else {
            self.levels[level - 1].len() / self.n_cols.max(1)
        }
    }
}

pub fn build_mean_tables(
    train: &SparseTraitMatrix,
    tree: &TaxonomyTree,
) -> Result<MeanTables, MeanError> {
    if train.n_rows() != tree.leaf_count() {
        return Err(MeanError::ShapeMismatch(format!(
            "{} rows for {} leaves",
            train.n_rows(),
            tree.leaf_count()
        )));
    }
    let m = train.n_cols();
    let upper = tree.depth() - 1;
    let ancestors: Vec<Vec<usize>> = (1..=upper).map(|l| tree.ancestors_at(l)).collect();
    let mut sums: Vec<Vec<(f64, usize)>> = (1..=upper)
        .map(|l| vec![(0.0, 0); tree.nodes_at(l) * m])
        .collect();
    let mut global = vec![(0.0, 0); m];
    for e in train.entries() {
        for (l, anc) in ancestors.iter().enumerate() {
            let cell = &mut sums[l][anc[e.row] * m + e.col];
            cell.0 += e.value;
            cell.1 += 1;
        }
        global[e.col].0 += e.value;
        global[e.col].1 += 1;
    }
    Ok(MeanTables {
        n_cols: m,
        levels: sums.into_iter().map(finish).collect(),
        global: finish(global),
    })
}

/// Prediction for `(leaf, col)` using ancestor levels `max_level` down to 1,
/// then the global mean. Returns the value and the level it came from
/// (0 = global).
pub fn mean_predict(
    tables: &MeanTables,
    tree: &TaxonomyTree,
    leaf: usize,
    col: usize,
    max_level: usize,
) -> Result<(f64, usize), MeanError> {
    if leaf >= tree.leaf_count() || col >= tables.n_cols {
        return Err(MeanError::IndexOutOfRange { leaf, col });
    }
    if max_level > tables.upper_levels() {
        return Err(MeanError::BadLevel {
            max_level,
            limit: tables.upper_levels(),
        });
    }
    for level in (1..=max_level).rev() {
        let node = tree.ancestor(leaf, level).expect("leaf and level checked");
        if let Some(c) = tables.cell(level, node, col) {
            return Ok((c.mean, level));
        }
    }
    tables
        .cell(0, 0, col)
        .map(|c| (c.mean, 0))
        .ok_or(MeanError::NoPrediction { col })
}
