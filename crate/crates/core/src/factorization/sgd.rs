//! One level's stochastic block update.
//!
//! For an observed entry `(n, m, x)` at level `ℓ` with residual
//! `e = x − ⟨u, v⟩`:
//!
//! ```text
//! u ← u + η ( e·v − λ_u [ (u − u_parent) + 1(ℓ<L) (u − mean_children) ] / d_u(n) )
//! v ← v + η ( e·u − λ_v [ (v − v_prev)   + 1(ℓ<L) (v − v_next)        ] / d_v(m) )
//! ```
//!
//! `d_u(n)` and `d_v(m)` count the observed entries of row `n` and column `m`
//! at this level, so one epoch applies each coupling gradient exactly once.
//! Rows and columns without observations at the level are moved to the
//! exact minimizer of their couplings (children summed, not averaged) once
//! per epoch.

use rand::seq::SliceRandom;
use rand::Rng;

use super::factors::{dot, FactorMatrix, FactorSet};
use super::objective::{check_problem, row_parent, LevelGradient};
use super::{FactorError, Hyperparams};
use crate::taxonomy::TaxonomyTree;
use crate::traitdata::SparseTraitMatrix;

/// What a level's factors are regularized toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Prior {
    /// Parent / children in the hierarchy and the same column one level up / down.
    Hierarchy,
    /// Zero-mean Gaussian prior, as in plain PMF.
    Zero,
}

/// Handling of rows or columns with no observations at the level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dataless {
    /// Set to the minimizer of the coupling terms.
    CouplingMinimizer,
    /// Leave untouched.
    Keep,
}

/// Regularization targets for one level, fixed while that level trains.
///
/// The coupling gradient of a vector `z` is `w·z − a` (up to the factor 2λ):
/// `w` counts the neighbours (1 or 2) and `a` sums their factors, with the
/// children of a row entering through their mean. `rest_u` is the exact
/// coupling minimizer `(u_parent + Σ children) / (1 + |c(n)|)`.
pub(crate) struct LevelSolver<'a> {
    level: usize,
    data: Option<&'a SparseTraitMatrix>,
    dataless: Dataless,
    anchor_u: FactorMatrix,
    weight_u: f64,
    rest_u: FactorMatrix,
    anchor_v: FactorMatrix,
    weight_v: f64,
    row_counts: Vec<usize>,
    col_counts: Vec<usize>,
}

impl<'a> LevelSolver<'a> {
    pub(crate) fn new(
        level: usize,
        data: Option<&'a SparseTraitMatrix>,
        prior: Prior,
        dataless: Dataless,
        factors: &FactorSet,
        tree: &TaxonomyTree,
    ) -> Self {
        let k = factors.k();
        let n_rows = factors.u(level).n();
        let n_cols = factors.n_cols();
        let mut anchor_u = FactorMatrix::zeros(k, n_rows);
        let mut rest_u = FactorMatrix::zeros(k, n_rows);
        let mut anchor_v = FactorMatrix::zeros(k, n_cols);
        let (mut weight_u, mut weight_v) = (1.0, 1.0);
        if prior == Prior::Hierarchy {
            let below = level < tree.depth();
            for n in 0..n_rows {
                let parent = factors.u(level - 1).col(row_parent(tree, level, n));
                let a = anchor_u.col_mut(n);
                a.copy_from_slice(parent);
                let r = rest_u.col_mut(n);
                r.copy_from_slice(parent);
                if below {
                    let kids = tree.children(level, n);
                    let inv = 1.0 / kids.len() as f64;
                    for &c in kids {
                        let child = factors.u(level + 1).col(c);
                        for j in 0..k {
                            a[j] += inv * child[j];
                            r[j] += child[j];
                        }
                    }
                    let scale = 1.0 / (1 + kids.len()) as f64;
                    r.iter_mut().for_each(|x| *x *= scale);
                }
            }
            for m in 0..n_cols {
                let a = anchor_v.col_mut(m);
                a.copy_from_slice(factors.v(level - 1).col(m));
                if below {
                    for (ai, ni) in a.iter_mut().zip(factors.v(level + 1).col(m)) {
                        *ai += ni;
                    }
                }
            }
            if below {
                weight_u = 2.0;
                weight_v = 2.0;
            }
        }
        let mut row_counts = vec![0usize; n_rows];
        let mut col_counts = vec![0usize; n_cols];
        if let Some(d) = data {
            for e in d.entries() {
                row_counts[e.row] += 1;
                col_counts[e.col] += 1;
            }
        }
        Self {
            level,
            data,
            dataless,
            anchor_u,
            weight_u,
            rest_u,
            anchor_v,
            weight_v,
            row_counts,
            col_counts,
        }
    }

    /// One pass over the level's entries in a fresh random order. Returns
    /// `false` if any factor of the level became non-finite.
    pub(crate) fn epoch<R: Rng + ?Sized>(
        &self,
        factors: &mut FactorSet,
        h: &Hyperparams,
        rng: &mut R,
    ) -> bool {
        let (eta, lu, lv) = (h.learning_rate, h.lambda_u, h.lambda_v);
        let (wu, wv) = (self.weight_u, self.weight_v);
        let (u, v) = factors.level_mut(self.level);
        if let Some(data) = self.data {
            let entries = data.entries();
            let mut order: Vec<usize> = (0..entries.len()).collect();
            order.shuffle(rng);
            for &i in &order {
                let en = entries[i];
                let cu = lu / self.row_counts[en.row] as f64;
                let cv = lv / self.col_counts[en.col] as f64;
                let au = self.anchor_u.col(en.row);
                let av = self.anchor_v.col(en.col);
                let un = u.col_mut(en.row);
                let vm = v.col_mut(en.col);
                let e = en.value - dot(un, vm);
                for j in 0..un.len() {
                    let (ui, vi) = (un[j], vm[j]);
                    un[j] = ui + eta * (e * vi - cu * (wu * ui - au[j]));
                    vm[j] = vi + eta * (e * ui - cv * (wv * vi - av[j]));
                }
            }
        }
        if self.dataless == Dataless::CouplingMinimizer {
            for (n, &c) in self.row_counts.iter().enumerate() {
                if c == 0 {
                    u.col_mut(n).copy_from_slice(self.rest_u.col(n));
                }
            }
            for (m, &c) in self.col_counts.iter().enumerate() {
                if c == 0 {
                    for (x, a) in v.col_mut(m).iter_mut().zip(self.anchor_v.col(m)) {
                        *x = a / wv;
                    }
                }
            }
        }
        u.is_finite() && v.is_finite()
    }

    /// Sum of the per-entry update directions (without the step size) at
    /// frozen factors.
    fn direction_sum(&self, factors: &FactorSet, h: &Hyperparams) -> LevelGradient {
        let (u, v) = (factors.u(self.level), factors.v(self.level));
        let mut du = FactorMatrix::zeros(u.k(), u.n());
        let mut dv = FactorMatrix::zeros(v.k(), v.n());
        if let Some(data) = self.data {
            for en in data.entries() {
                let cu = h.lambda_u / self.row_counts[en.row] as f64;
                let cv = h.lambda_v / self.col_counts[en.col] as f64;
                let (un, vm) = (u.col(en.row), v.col(en.col));
                let (au, av) = (self.anchor_u.col(en.row), self.anchor_v.col(en.col));
                let e = en.value - dot(un, vm);
                for j in 0..un.len() {
                    du.col_mut(en.row)[j] += e * vm[j] - cu * (self.weight_u * un[j] - au[j]);
                    dv.col_mut(en.col)[j] += e * un[j] - cv * (self.weight_v * vm[j] - av[j]);
                }
            }
        }
        LevelGradient { u: du, v: dv }
    }
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

/// One HPMF epoch at `level`; only `U⁽ˡ⁾` and `V⁽ˡ⁾` change.
pub fn sgd_epoch_level<R: Rng + ?Sized>(
    level: usize,
    factors: &mut FactorSet,
    data: &[SparseTraitMatrix],
    tree: &TaxonomyTree,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<(), FactorError> {
    check_problem(factors, data, tree)?;
    check_level(level, tree)?;
    let solver = LevelSolver::new(
        level,
        Some(&data[level - 1]),
        Prior::Hierarchy,
        Dataless::CouplingMinimizer,
        factors,
        tree,
    );
    if solver.epoch(factors, h, rng) {
        Ok(())
    } else {
        Err(FactorError::NonFiniteUpdate {
            pass: 0,
            level,
            epoch: 0,
        })
    }
}

/// Summed HPMF update directions of one epoch evaluated at fixed factors.
///
/// In the full-batch limit this equals `−½ ∇E⁽ˡ⁾` with each child coupling
/// weighted by `1 / |c(n)|`.
pub fn sgd_direction_sum(
    level: usize,
    factors: &FactorSet,
    data: &[SparseTraitMatrix],
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<LevelGradient, FactorError> {
    check_problem(factors, data, tree)?;
    check_level(level, tree)?;
    let solver = LevelSolver::new(
        level,
        Some(&data[level - 1]),
        Prior::Hierarchy,
        Dataless::CouplingMinimizer,
        factors,
        tree,
    );
    Ok(solver.direction_sum(factors, h))
}
