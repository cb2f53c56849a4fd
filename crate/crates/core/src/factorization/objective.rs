//! Regularized squared-loss objectives and their analytic gradients.

use super::factors::{dot, sq_dist, FactorMatrix, FactorSet};
use super::{FactorError, Hyperparams};
use crate::taxonomy::TaxonomyTree;
use crate::traitdata::SparseTraitMatrix;

fn check_level_data(
    level: usize,
    m: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    n_cols: usize,
) -> Result<(), FactorError> {
    if m.n_rows() != tree.nodes_at(level) || m.n_cols() != n_cols {
        return Err(FactorError::DimensionMismatch(format!(
            "level {level} data is {}x{}, expected {}x{n_cols}",
            m.n_rows(),
            m.n_cols(),
            tree.nodes_at(level)
        )));
    }
    Ok(())
}

pub(crate) fn check_problem(
    factors: &FactorSet,
    data: &[SparseTraitMatrix],
    tree: &TaxonomyTree,
) -> Result<(), FactorError> {
    factors.check_shape(tree, factors.n_cols())?;
    if data.len() != tree.depth() {
        return Err(FactorError::DimensionMismatch(format!(
            "{} data matrices for {} levels",
            data.len(),
            tree.depth()
        )));
    }
    for (i, m) in data.iter().enumerate() {
        check_level_data(i + 1, m, tree, factors.n_cols())?;
    }
    Ok(())
}

/// Leaf matrix of a level list, checked against the tree's leaf level.
pub(crate) fn leaf_of<'a>(
    factors: &FactorSet,
    data: &'a [SparseTraitMatrix],
    tree: &TaxonomyTree,
) -> Result<&'a SparseTraitMatrix, FactorError> {
    factors.check_shape(tree, factors.n_cols())?;
    let leaf = data
        .last()
        .ok_or_else(|| FactorError::DimensionMismatch("no data matrices".into()))?;
    check_level_data(tree.depth(), leaf, tree, factors.n_cols())?;
    Ok(leaf)
}

fn check_level(level: usize, tree: &TaxonomyTree) -> Result<(), FactorError> {
    if level == 0 || level > tree.depth() {
        return Err(FactorError::BadLevel {
            level,
            depth: tree.depth(),
        });
    }
    Ok(())
}

/// `Σ δ (x − ⟨u, v⟩)²` over one level's entries.
pub(crate) fn data_term(m: &SparseTraitMatrix, u: &FactorMatrix, v: &FactorMatrix) -> f64 {
    m.entries()
        .iter()
        .map(|e| {
            let r = e.value - dot(u.col(e.row), v.col(e.col));
            r * r
        })
        .sum()
}

/// Row parent of `node` at `level`, as an index into `u[level - 1]`.
pub(crate) fn row_parent(tree: &TaxonomyTree, level: usize, node: usize) -> usize {
    tree.parent(level, node).unwrap_or(0)
}

/// `Σ_n ‖u_n⁽ˡ⁾ − u_p(n)⁽ˡ⁻¹⁾‖²`
pub(crate) fn upward_u(factors: &FactorSet, tree: &TaxonomyTree, level: usize) -> f64 {
    let (u, up) = (factors.u(level), factors.u(level - 1));
    (0..u.n())
        .map(|n| sq_dist(u.col(n), up.col(row_parent(tree, level, n))))
        .sum()
}

/// `Σ_m ‖v_m⁽ˡ⁾ − v_m⁽ˡ⁻¹⁾‖²`
pub(crate) fn upward_v(factors: &FactorSet, level: usize) -> f64 {
    let (v, vp) = (factors.v(level), factors.v(level - 1));
    (0..v.n()).map(|m| sq_dist(v.col(m), vp.col(m))).sum()
}

/// Full MAP objective: data at every level plus every parent coupling.
pub fn objective_full(
    factors: &FactorSet,
    data: &[SparseTraitMatrix],
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<f64, FactorError> {
    check_problem(factors, data, tree)?;
    let mut total = 0.0;
    for level in 1..=tree.depth() {
        total += data_term(&data[level - 1], factors.u(level), factors.v(level))
            + h.lambda_u * upward_u(factors, tree, level)
            + h.lambda_v * upward_v(factors, level);
    }
    Ok(total)
}

/// The part of the objective that involves `U⁽ˡ⁾` and `V⁽ˡ⁾`: the level's
/// data, couplings to the level above and, below the top of the leaf level,
/// couplings to every child and to the same column one level down.
pub fn objective_level(
    level: usize,
    factors: &FactorSet,
    data: &[SparseTraitMatrix],
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<f64, FactorError> {
    check_problem(factors, data, tree)?;
    check_level(level, tree)?;
    let below = level < tree.depth();
    let (u, v) = (factors.u(level), factors.v(level));
    let mut reg_u = 0.0;
    for n in 0..u.n() {
        reg_u += sq_dist(
            u.col(n),
            factors.u(level - 1).col(row_parent(tree, level, n)),
        );
        if below {
            let down = factors.u(level + 1);
            for &c in tree.children(level, n) {
                reg_u += sq_dist(u.col(n), down.col(c));
            }
        }
    }
    let mut reg_v = 0.0;
    for m in 0..v.n() {
        reg_v += sq_dist(v.col(m), factors.v(level - 1).col(m));
        if below {
            reg_v += sq_dist(v.col(m), factors.v(level + 1).col(m));
        }
    }
    Ok(data_term(&data[level - 1], u, v) + h.lambda_u * reg_u + h.lambda_v * reg_v)
}

/// Hierarchy-regularized objective: only the leaf data term, plus every
/// parent coupling. Upper-level data in `data` is ignored.
pub fn objective_hrpmf(
    factors: &FactorSet,
    data: &[SparseTraitMatrix],
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<f64, FactorError> {
    let leaf = leaf_of(factors, data, tree)?;
    let mut total = data_term(leaf, factors.leaf_u(), factors.leaf_v());
    for level in 1..=tree.depth() {
        total +=
            h.lambda_u * upward_u(factors, tree, level) + h.lambda_v * upward_v(factors, level);
    }
    Ok(total)
}

/// Gradient with respect to one level's row and column factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGradient {
    pub u: FactorMatrix,
    pub v: FactorMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ChildWeight {
    /// Each child coupling counts once (the objective as written).
    Sum,
    /// Child couplings are averaged over the children (SGD scheduling).
    #[cfg_attr(not(test), allow(dead_code))]
    Mean,
}

pub(crate) fn level_gradient(
    level: usize,
    factors: &FactorSet,
    data_at: Option<&SparseTraitMatrix>,
    tree: &TaxonomyTree,
    h: &Hyperparams,
    child: ChildWeight,
) -> LevelGradient {
    let k = factors.k();
    let below = level < tree.depth();
    let (u, v) = (factors.u(level), factors.v(level));
    let mut gu = FactorMatrix::zeros(k, u.n());
    let mut gv = FactorMatrix::zeros(k, v.n());
    if let Some(m) = data_at {
        for e in m.entries() {
            let (un, vm) = (u.col(e.row), v.col(e.col));
            let r = e.value - dot(un, vm);
            for i in 0..k {
                gu.col_mut(e.row)[i] -= 2.0 * r * vm[i];
                gv.col_mut(e.col)[i] -= 2.0 * r * un[i];
            }
        }
    }
    for n in 0..u.n() {
        let un = u.col(n);
        let parent = factors.u(level - 1).col(row_parent(tree, level, n));
        let g = gu.col_mut(n);
        for i in 0..k {
            g[i] += 2.0 * h.lambda_u * (un[i] - parent[i]);
        }
        if below {
            let kids = tree.children(level, n);
            let w = match child {
                ChildWeight::Sum => 1.0,
                ChildWeight::Mean => 1.0 / kids.len().max(1) as f64,
            };
            for &c in kids {
                let uc = factors.u(level + 1).col(c);
                for i in 0..k {
                    g[i] += 2.0 * h.lambda_u * w * (un[i] - uc[i]);
                }
            }
        }
    }
    for m in 0..v.n() {
        let vm = v.col(m);
        let prev = factors.v(level - 1).col(m);
        let g = gv.col_mut(m);
        for i in 0..k {
            g[i] += 2.0 * h.lambda_v * (vm[i] - prev[i]);
        }
        if below {
            let next = factors.v(level + 1).col(m);
            for i in 0..k {
                g[i] += 2.0 * h.lambda_v * (vm[i] - next[i]);
            }
        }
    }
    LevelGradient { u: gu, v: gv }
}

/// Analytic gradient of [`objective_level`] (equivalently of
/// [`objective_full`]) with respect to `U⁽ˡ⁾` and `V⁽ˡ⁾`.
pub fn gradient_level(
    level: usize,
    factors: &FactorSet,
    data: &[SparseTraitMatrix],
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<LevelGradient, FactorError> {
    check_problem(factors, data, tree)?;
    check_level(level, tree)?;
    Ok(level_gradient(
        level,
        factors,
        Some(&data[level - 1]),
        tree,
        h,
        ChildWeight::Sum,
    ))
}

/// Analytic gradient of [`objective_hrpmf`] with respect to level `level`.
pub fn gradient_hrpmf(
    level: usize,
    factors: &FactorSet,
    data: &[SparseTraitMatrix],
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<LevelGradient, FactorError> {
    let leaf = leaf_of(factors, data, tree)?;
    check_level(level, tree)?;
    let data_at = (level == tree.depth()).then_some(leaf);
    Ok(level_gradient(
        level,
        factors,
        data_at,
        tree,
        h,
        ChildWeight::Sum,
    ))
}
