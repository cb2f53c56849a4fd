//! The same MAP objective written over diagonally stacked matrices with
//! graph-Laplacian regularizers. Used as an independent check on the
//! level-wise objective, not for training.

use super::factors::{dot, FactorMatrix, FactorSet};
use super::objective::{check_problem, row_parent};
use super::{FactorError, Hyperparams};
use crate::taxonomy::TaxonomyTree;
use crate::traitdata::{Entry, SparseTraitMatrix};

/// Sparse symmetric graph Laplacian `D − W` in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Laplacian {
    /// Unit-weight undirected graph on `n` vertices.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut degree = vec![0.0; n];
        for &(a, b) in edges {
            degree[a] += 1.0;
            degree[b] += 1.0;
            rows[a].push((b, -1.0));
            rows[b].push((a, -1.0));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.push((i, degree[i]));
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                // merge parallel edges
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[lo..hi].binary_search(&j) {
            Ok(p) => self.vals[lo + p],
            Err(_) => 0.0,
        }
    }

    /// `tr(Z L Zᵀ) = Σ_ij L_ij ⟨z_i, z_j⟩` for a `k × n` factor matrix `Z`.
    pub fn trace_form(&self, z: &FactorMatrix) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                total += self.vals[p] * dot(z.col(i), z.col(self.cols[p]));
            }
        }
        total
    }
}

/// `X̃`, `Ũ`, `Ṽ` and both Laplacians for one problem instance.
///
/// `Ũ` column 0 is `u⁽⁰⁾` and levels follow in order; `Ṽ` holds `v⁽⁰⁾` for
/// every column and then each level's `M` columns. `X̃` places level `ℓ`'s
/// block at row offset `Σ_{ℓ'<ℓ} N⁽ˡ'⁾` and column offset `(ℓ − 1)·M`.
#[derive(Debug, Clone)]
pub struct StackedProblem {
    pub x: SparseTraitMatrix,
    pub u: FactorMatrix,
    pub v: FactorMatrix,
    pub lap_u: Laplacian,
    pub lap_v: Laplacian,
}

impl StackedProblem {
    pub fn build(
        factors: &FactorSet,
        data: &[SparseTraitMatrix],
        tree: &TaxonomyTree,
    ) -> Result<Self, FactorError> {
        check_problem(factors, data, tree)?;
        let (k, m, depth) = (factors.k(), factors.n_cols(), tree.depth());

        let mut u_offset = vec![0usize; depth + 1];
        for level in 1..=depth {
            u_offset[level] = u_offset[level - 1] + factors.u(level - 1).n();
        }
        let n_u = u_offset[depth] + factors.u(depth).n();
        let mut u = FactorMatrix::zeros(k, n_u);
        let mut edges_u = Vec::new();
        for level in 0..=depth {
            for n in 0..factors.u(level).n() {
                u.col_mut(u_offset[level] + n)
                    .copy_from_slice(factors.u(level).col(n));
                if level > 0 {
                    let p = row_parent(tree, level, n);
                    edges_u.push((u_offset[level - 1] + p, u_offset[level] + n));
                }
            }
        }

        let n_v = (depth + 1) * m;
        let mut v = FactorMatrix::zeros(k, n_v);
        let mut edges_v = Vec::new();
        for level in 0..=depth {
            for c in 0..m {
                v.col_mut(level * m + c)
                    .copy_from_slice(factors.v(level).col(c));
                if level > 0 {
                    edges_v.push(((level - 1) * m + c, level * m + c));
                }
            }
        }

        // X̃ rows exclude the root column of Ũ, columns exclude the level-0 block of Ṽ.
        let n_rows = n_u - 1;
        let mut entries = Vec::new();
        for level in 1..=depth {
            for e in data[level - 1].entries() {
                entries.push(Entry::new(
                    u_offset[level] - 1 + e.row,
                    (level - 1) * m + e.col,
                    e.value,
                ));
            }
        }
        let x = SparseTraitMatrix::from_entries(0, n_rows, depth * m, entries)?;
        Ok(Self {
            x,
            lap_u: Laplacian::from_edges(n_u, &edges_u),
            lap_v: Laplacian::from_edges(n_v, &edges_v),
            u,
            v,
        })
    }

    /// `Σ δ̃ (x̃ − ⟨ũ, ṽ⟩)² + λ_u tr(Ũ L_u Ũᵀ) + λ_v tr(Ṽ L_v Ṽᵀ)`
    ///
    /// With `L = D − W`, `tr(Z L Zᵀ)` already sums `‖z_a − z_b‖²` once per
    /// edge, so no extra factor of 2 is needed to match the level-wise form.
    pub fn objective(&self, lambda_u: f64, lambda_v: f64) -> f64 {
        // X̃ column j pairs with Ṽ column j + M (past the level-0 block).
        let v_shift = self.v.n() - self.x.n_cols();
        let data: f64 = self
            .x
            .entries()
            .iter()
            .map(|e| {
                let r = e.value - dot(self.u.col(e.row + 1), self.v.col(e.col + v_shift));
                r * r
            })
            .sum();
        data + lambda_u * self.lap_u.trace_form(&self.u) + lambda_v * self.lap_v.trace_form(&self.v)
    }
}

/// The MAP objective evaluated through the stacked Laplacian form.
pub fn objective_stacked(
    factors: &FactorSet,
    data: &[SparseTraitMatrix],
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<f64, FactorError> {
    Ok(StackedProblem::build(factors, data, tree)?.objective(h.lambda_u, h.lambda_v))
}
