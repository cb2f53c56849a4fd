//! Sparse per-level observation matrices and their preprocessing.

mod aggregate;
mod split;
mod transform;

pub use aggregate::aggregate_levels;
pub use split::{split_per_plant, split_random, SplitBundle, SplitFractions};
pub use transform::{inverse_transform, transform, ColumnStats, StdConvention, TraitStats};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("value {value} at ({row}, {col}) is not positive; log transform undefined")]
    NonPositiveValue { row: usize, col: usize, value: f64 },
    #[error("non-finite value at ({row}, {col})")]
    NonFiniteValue { row: usize, col: usize },
    #[error("column {0} has zero log-variance or a single observation")]
    DegenerateColumn(usize),
    #[error("no transform statistics for column {0}")]
    MissingStats(usize),
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("entry ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("matrix has {found} rows, tree has {expected} leaves")]
    RowMismatch { expected: usize, found: usize },
    #[error("matrix shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("empty input matrix")]
    EmptyInput,
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions((f64, f64, f64)),
}

/// One observed cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        Self { row, col, value }
    }
}

/// Observed entries of one hierarchy level's `N⁽ˡ⁾ × M` matrix.
///
/// Entries are stored row-major (sorted by `(row, col)`) with a CSR row
/// pointer, plus a per-column list of positions into the entry array.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTraitMatrix {
    level: usize,
    n_rows: usize,
    n_cols: usize,
    entries: Vec<Entry>,
    row_ptr: Vec<usize>,
    col_pos: Vec<Vec<usize>>,
}

impl SparseTraitMatrix {
    pub fn from_entries(
        level: usize,
        n_rows: usize,
        n_cols: usize,
        mut entries: Vec<Entry>,
    ) -> Result<Self, DataError> {
        for e in &entries {
            if e.row >= n_rows || e.col >= n_cols {
                return Err(DataError::IndexOutOfRange {
                    row: e.row,
                    col: e.col,
                    n_rows,
                    n_cols,
                });
            }
            if !e.value.is_finite() {
                return Err(DataError::NonFiniteValue {
                    row: e.row,
                    col: e.col,
                });
            }
        }
        entries.sort_by_key(|e| (e.row, e.col));
        if let Some(w) = entries
            .windows(2)
            .find(|w| w[0].row == w[1].row && w[0].col == w[1].col)
        {
            return Err(DataError::DuplicateEntry {
                row: w[0].row,
                col: w[0].col,
            });
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for e in &entries {
            row_ptr[e.row + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut col_pos = vec![Vec::new(); n_cols];
        for (i, e) in entries.iter().enumerate() {
            col_pos[e.col].push(i);
        }
        Ok(Self {
            level,
            n_rows,
            n_cols,
            entries,
            row_ptr,
            col_pos,
        })
    }

    pub fn empty(level: usize, n_rows: usize, n_cols: usize) -> Self {
        Self::from_entries(level, n_rows, n_cols, Vec::new()).expect("empty matrix is valid")
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of observed entries `S⁽ˡ⁾`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn row(&self, row: usize) -> &[Entry] {
        &self.entries[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    pub fn row_len(&self, row: usize) -> usize {
        self.row_ptr[row + 1] - self.row_ptr[row]
    }

    pub fn col(&self, col: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.col_pos[col].iter().map(move |&i| &self.entries[i])
    }

    pub fn col_len(&self, col: usize) -> usize {
        self.col_pos[col].len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row >= self.n_rows {
            return None;
        }
        let r = self.row(row);
        r.binary_search_by_key(&col, |e| e.col)
            .ok()
            .map(|i| r[i].value)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_some()
    }

    /// Same entries relabelled as belonging to `level`.
    pub fn with_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }

    /// Same sparsity pattern with every value replaced by `f(entry)`.
    pub fn map_values(&self, mut f: impl FnMut(&Entry) -> f64) -> Self {
        let mut out = self.clone();
        for e in out.entries.iter_mut() {
            e.value = f(e);
        }
        out
    }

    /// Union of two matrices with disjoint patterns and equal shape.
    pub fn union(&self, other: &Self) -> Result<Self, DataError> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(DataError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut all = self.entries.clone();
        all.extend_from_slice(&other.entries);
        Self::from_entries(self.level, self.n_rows, self.n_cols, all)
    }
}
