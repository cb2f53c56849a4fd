use rand::Rng;
use rand_distr::StandardNormal;

use super::FactorError;
use crate::taxonomy::TaxonomyTree;

/// A `k × n` matrix stored column by column, so each latent vector is a
/// contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    k: usize,
    n: usize,
    data: Vec<f64>,
}

impl FactorMatrix {
    pub fn zeros(k: usize, n: usize) -> Self {
        Self {
            k,
            n,
            data: vec![0.0; k * n],
        }
    }

    pub fn from_data(k: usize, n: usize, data: Vec<f64>) -> Result<Self, FactorError> {
        if data.len() != k * n {
            return Err(FactorError::DimensionMismatch(format!(
                "{} values for a {k}x{n} factor matrix",
                data.len()
            )));
        }
        Ok(Self { k, n, data })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of latent vectors.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn col(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn col_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row and column factors for levels `0..=L`.
///
/// `u[0]` has a single column (the root prior `u⁽⁰⁾`); `v[0]` has one column
/// per data column (`v⁽⁰⁾` for each trait).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    k: usize,
    u: Vec<FactorMatrix>,
    v: Vec<FactorMatrix>,
}

impl FactorSet {
    pub fn zeros(k: usize, nodes_per_level: &[usize], n_cols: usize) -> Self {
        let mut u = vec![FactorMatrix::zeros(k, 1)];
        let mut v = vec![FactorMatrix::zeros(k, n_cols)];
        for &n in nodes_per_level {
            u.push(FactorMatrix::zeros(k, n));
            v.push(FactorMatrix::zeros(k, n_cols));
        }
        Self { k, u, v }
    }

    pub fn for_tree(k: usize, tree: &TaxonomyTree, n_cols: usize) -> Self {
        Self::zeros(k, &tree.nodes_per_level(), n_cols)
    }

    /// Level-0 priors at zero, every other entry drawn from `N(0, scale²)`.
    pub fn random<R: Rng + ?Sized>(
        k: usize,
        nodes_per_level: &[usize],
        n_cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut set = Self::zeros(k, nodes_per_level, n_cols);
        for level in 1..set.u.len() {
            for x in set.u[level].as_mut_slice() {
                *x = scale * rng.sample::<f64, _>(StandardNormal);
            }
            for x in set.v[level].as_mut_slice() {
                *x = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        set
    }

    pub fn from_parts(u: Vec<FactorMatrix>, v: Vec<FactorMatrix>) -> Result<Self, FactorError> {
        if u.is_empty() || u.len() != v.len() {
            return Err(FactorError::DimensionMismatch(format!(
                "{} row-factor levels vs {} column-factor levels",
                u.len(),
                v.len()
            )));
        }
        let k = u[0].k();
        let n_cols = v[0].n();
        if u[0].n() != 1 {
            return Err(FactorError::DimensionMismatch(
                "level-0 row factors must hold exactly one vector".into(),
            ));
        }
        for (a, b) in u.iter().zip(&v) {
            if a.k() != k || b.k() != k || b.n() != n_cols {
                return Err(FactorError::DimensionMismatch(
                    "inconsistent k or column count across levels".into(),
                ));
            }
        }
        Ok(Self { k, u, v })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of hierarchy levels `L` (level 0 not counted).
    pub fn depth(&self) -> usize {
        self.u.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.v[0].n()
    }

    pub fn u(&self, level: usize) -> &FactorMatrix {
        &self.u[level]
    }

    pub fn v(&self, level: usize) -> &FactorMatrix {
        &self.v[level]
    }

    pub fn u_mut(&mut self, level: usize) -> &mut FactorMatrix {
        &mut self.u[level]
    }

    pub fn v_mut(&mut self, level: usize) -> &mut FactorMatrix {
        &mut self.v[level]
    }

    /// Both factor matrices of one level, mutably.
    pub fn level_mut(&mut self, level: usize) -> (&mut FactorMatrix, &mut FactorMatrix) {
        (&mut self.u[level], &mut self.v[level])
    }

    pub fn leaf_u(&self) -> &FactorMatrix {
        &self.u[self.depth()]
    }

    pub fn leaf_v(&self) -> &FactorMatrix {
        &self.v[self.depth()]
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(FactorMatrix::is_finite)
    }

    /// Checks the shape against a tree and column count.
    pub fn check_shape(&self, tree: &TaxonomyTree, n_cols: usize) -> Result<(), FactorError> {
        if self.depth() != tree.depth() {
            return Err(FactorError::DimensionMismatch(format!(
                "factors have {} levels, tree has {}",
                self.depth(),
                tree.depth()
            )));
        }
        if self.n_cols() != n_cols {
            return Err(FactorError::DimensionMismatch(format!(
                "factors have {} columns, data has {n_cols}",
                self.n_cols()
            )));
        }
        for level in 1..=tree.depth() {
            if self.u[level].n() != tree.nodes_at(level) {
                return Err(FactorError::DimensionMismatch(format!(
                    "level {level}: {} row factors for {} nodes",
                    self.u[level].n(),
                    tree.nodes_at(level)
                )));
            }
        }
        Ok(())
    }
}

/// `⟨u_row⁽ᴸ⁾, v_col⁽ᴸ⁾⟩`, defined for every leaf cell.
pub fn predict(factors: &FactorSet, row: usize, col: usize) -> Result<f64, FactorError> {
    let (u, v) = (factors.leaf_u(), factors.leaf_v());
    if row >= u.n() || col >= v.n() {
        return Err(FactorError::IndexOutOfRange {
            row,
            col,
            n_rows: u.n(),
            n_cols: v.n(),
        });
    }
    Ok(dot(u.col(row), v.col(col)))
}
