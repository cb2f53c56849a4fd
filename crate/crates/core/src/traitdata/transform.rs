use super::{DataError, SparseTraitMatrix};

/// Divisor used for the log standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StdConvention {
    /// `n - 1`
    Sample,
    /// `n`
    Population,
}

impl StdConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            StdConvention::Sample => "sample",
            StdConvention::Population => "population",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sample" => Some(StdConvention::Sample),
            "population" => Some(StdConvention::Population),
            _ => None,
        }
    }
}

/// Mean and standard deviation of `ln(x)` for one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub lm: f64,
    pub ls: f64,
}

/// Per-column log statistics for the z-score transform.
///
/// Columns without observations carry no statistics; asking to invert a
/// value in such a column is an error rather than a silent identity.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitStats {
    columns: Vec<Option<ColumnStats>>,
    convention: StdConvention,
}

impl TraitStats {
    pub fn new(columns: Vec<Option<ColumnStats>>, convention: StdConvention) -> Self {
        Self {
            columns,
            convention,
        }
    }

    /// `lm = 0`, `ls = 1` for every column, i.e. `x = exp(z)`.
    pub fn identity(n_cols: usize) -> Self {
        Self::new(
            vec![Some(ColumnStats { lm: 0.0, ls: 1.0 }); n_cols],
            StdConvention::Sample,
        )
    }

    /// Fits sample-convention statistics over the entries of `raw`.
    pub fn fit(raw: &SparseTraitMatrix) -> Result<Self, DataError> {
        Self::fit_with(raw, StdConvention::Sample)
    }

    pub fn fit_with(raw: &SparseTraitMatrix, convention: StdConvention) -> Result<Self, DataError> {
        check_positive(raw)?;
        let mut columns = Vec::with_capacity(raw.n_cols());
        for col in 0..raw.n_cols() {
            let n = raw.col_len(col);
            if n == 0 {
                columns.push(None);
                continue;
            }
            let logs: Vec<f64> = raw.col(col).map(|e| e.value.ln()).collect();
            let lm = logs.iter().sum::<f64>() / n as f64;
            let ss: f64 = logs.iter().map(|l| (l - lm) * (l - lm)).sum();
            let divisor = match convention {
                StdConvention::Sample => n.saturating_sub(1),
                StdConvention::Population => n,
            };
            if divisor == 0 || ss <= 0.0 {
                return Err(DataError::DegenerateColumn(col));
            }
            let ls = (ss / divisor as f64).sqrt();
            if !ls.is_finite() || ls <= 0.0 {
                return Err(DataError::DegenerateColumn(col));
            }
            columns.push(Some(ColumnStats { lm, ls }));
        }
        Ok(Self {
            columns,
            convention,
        })
    }

    pub fn convention(&self) -> StdConvention {
        self.convention
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, col: usize) -> Option<ColumnStats> {
        self.columns.get(col).copied().flatten()
    }

    pub fn columns(&self) -> &[Option<ColumnStats>] {
        &self.columns
    }

    fn require(&self, col: usize) -> Result<ColumnStats, DataError> {
        self.column(col).ok_or(DataError::MissingStats(col))
    }

    pub fn forward_value(&self, col: usize, x: f64) -> Result<f64, DataError> {
        let s = self.require(col)?;
        Ok((x.ln() - s.lm) / s.ls)
    }

    pub fn inverse_value(&self, col: usize, z: f64) -> Result<f64, DataError> {
        let s = self.require(col)?;
        Ok((z * s.ls + s.lm).exp())
    }

    /// z-scores `raw` with these statistics (fitted on possibly other entries).
    pub fn apply(&self, raw: &SparseTraitMatrix) -> Result<SparseTraitMatrix, DataError> {
        check_positive(raw)?;
        for col in 0..raw.n_cols() {
            if raw.col_len(col) > 0 {
                self.require(col)?;
            }
        }
        Ok(raw.map_values(|e| {
            let s = self.columns[e.col].expect("checked above");
            (e.value.ln() - s.lm) / s.ls
        }))
    }

    pub fn invert(&self, matrix: &SparseTraitMatrix) -> Result<SparseTraitMatrix, DataError> {
        for col in 0..matrix.n_cols() {
            if matrix.col_len(col) > 0 {
                self.require(col)?;
            }
        }
        Ok(matrix.map_values(|e| {
            let s = self.columns[e.col].expect("checked above");
            (e.value * s.ls + s.lm).exp()
        }))
    }
}

fn check_positive(raw: &SparseTraitMatrix) -> Result<(), DataError> {
    match raw.entries().iter().find(|e| e.value <= 0.0) {
        Some(e) => Err(DataError::NonPositiveValue {
            row: e.row,
            col: e.col,
            value: e.value,
        }),
        None => Ok(()),
    }
}

/// `x' = (ln x − lm) / ls` per column, with statistics fitted on `raw` itself.
pub fn transform(raw: &SparseTraitMatrix) -> Result<(SparseTraitMatrix, TraitStats), DataError> {
    let stats = TraitStats::fit(raw)?;
    let out = stats.apply(raw)?;
    Ok((out, stats))
}

/// `exp(z · ls + lm)` per entry.
pub fn inverse_transform(
    matrix: &SparseTraitMatrix,
    stats: &TraitStats,
) -> Result<SparseTraitMatrix, DataError> {
    stats.invert(matrix)
}
