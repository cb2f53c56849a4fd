//! Trainers: HPMF, HRPMF, LPMF and PMF.
//!
//! All four share one schedule. A pass is a top-down sweep over levels
//! `1..=L` followed by a bottom-up sweep over `L..=1`; visiting a level runs
//! `epochs_per_level` SGD epochs on that level's factors with every other
//! level frozen. Validation RMSE at the leaf level is measured after each
//! pass. HPMF, HRPMF and PMF stop early on it and return the factors from
//! the best pass; LPMF always runs to the last pass.

use super::factors::{dot, FactorSet};
use super::objective::{self, data_term};
use super::sgd::{Dataless, LevelSolver, Prior};
use super::{FactorError, Hyperparams, Method};
use crate::rng::{self, Stream};
use crate::taxonomy::TaxonomyTree;
use crate::traitdata::SparseTraitMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    TopDown,
    BottomUp,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::TopDown => "top-down",
            Direction::BottomUp => "bottom-up",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStop,
    MaxPasses,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxPasses => "max_passes",
        }
    }
}

/// Training objective after one level visit.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub pass: usize,
    pub direction: Direction,
    pub level: usize,
    pub objective: f64,
}

/// State at the end of a full top-down + bottom-up pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PassRecord {
    pub pass: usize,
    pub objective: f64,
    /// `None` when the validation set is empty.
    pub validation_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub steps: Vec<TraceStep>,
    pub passes: Vec<PassRecord>,
    /// Pass whose factors were returned.
    pub best_pass: usize,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    Improved,
    NoImprovement,
    Stop,
}

/// Patience-based early stopping on a metric to be minimized.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_pass: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_pass: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, pass: usize, value: f64) -> StopSignal {
        match self.best {
            Some(b) if value >= b || value.is_nan() => {
                self.since_best += 1;
                if self.since_best >= self.patience {
                    StopSignal::Stop
                } else {
                    StopSignal::NoImprovement
                }
            }
            _ => {
                self.best = Some(value);
                self.best_pass = pass;
                self.since_best = 0;
                StopSignal::Improved
            }
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_pass(&self) -> usize {
        self.best_pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Schedule {
    Hpmf,
    Hrpmf,
    Lpmf,
}

fn validation_rmse(factors: &FactorSet, val: &SparseTraitMatrix) -> Option<f64> {
    if val.is_empty() {
        return None;
    }
    let sse = data_term(val, factors.leaf_u(), factors.leaf_v());
    Some((sse / val.len() as f64).sqrt())
}

/// Σ_ℓ of per-level PMF objectives (data plus zero-mean ridge terms).
fn objective_lpmf(factors: &FactorSet, data: &[SparseTraitMatrix], h: &Hyperparams) -> f64 {
    let sq = |xs: &[f64]| xs.iter().map(|x| x * x).sum::<f64>();
    (1..=factors.depth())
        .map(|l| {
            data_term(&data[l - 1], factors.u(l), factors.v(l))
                + h.lambda_u * sq(factors.u(l).as_slice())
                + h.lambda_v * sq(factors.v(l).as_slice())
        })
        .sum()
}

/// LPMF initialization of a level from its already-trained neighbour.
fn lpmf_seed_level(
    factors: &mut FactorSet,
    tree: &TaxonomyTree,
    level: usize,
    direction: Direction,
) {
    let depth = tree.depth();
    match direction {
        // Level 1 has no trained level above it; it keeps its current factors,
        // which on the first pass are the random draws around u⁽⁰⁾ = 0.
        Direction::TopDown if level > 1 => {
            let up_u = factors.u(level - 1).clone();
            let up_v = factors.v(level - 1).clone();
            let (u, v) = factors.level_mut(level);
            for n in 0..u.n() {
                let p = tree.parent(level, n).expect("level > 1");
                u.col_mut(n).copy_from_slice(up_u.col(p));
            }
            v.as_mut_slice().copy_from_slice(up_v.as_slice());
        }
        Direction::BottomUp if level < depth => {
            let down_u = factors.u(level + 1).clone();
            let down_v = factors.v(level + 1).clone();
            let (u, v) = factors.level_mut(level);
            for n in 0..u.n() {
                let kids = tree.children(level, n);
                let inv = 1.0 / kids.len() as f64;
                let col = u.col_mut(n);
                col.fill(0.0);
                for &c in kids {
                    for (x, y) in col.iter_mut().zip(down_u.col(c)) {
                        *x += inv * y;
                    }
                }
            }
            v.as_mut_slice().copy_from_slice(down_v.as_slice());
        }
        _ => {}
    }
}

fn check_inputs(
    data: &[SparseTraitMatrix],
    val: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<usize, FactorError> {
    h.validate()?;
    let leaf = data
        .last()
        .ok_or_else(|| FactorError::DimensionMismatch("no data matrices".into()))?;
    if leaf.is_empty() {
        return Err(FactorError::EmptyTrainingSet);
    }
    let m = leaf.n_cols();
    if data.len() != tree.depth() {
        return Err(FactorError::DimensionMismatch(format!(
            "{} data matrices for a {}-level tree",
            data.len(),
            tree.depth()
        )));
    }
    for (i, d) in data.iter().enumerate() {
        if d.n_rows() != tree.nodes_at(i + 1) || d.n_cols() != m {
            return Err(FactorError::DimensionMismatch(format!(
                "level {} data is {}x{}, expected {}x{m}",
                i + 1,
                d.n_rows(),
                d.n_cols(),
                tree.nodes_at(i + 1)
            )));
        }
    }
    if val.n_rows() != leaf.n_rows() || val.n_cols() != m {
        return Err(FactorError::DimensionMismatch(format!(
            "validation matrix is {}x{}, leaf data is {}x{m}",
            val.n_rows(),
            val.n_cols(),
            leaf.n_rows()
        )));
    }
    Ok(m)
}

fn run(
    schedule: Schedule,
    data: &[SparseTraitMatrix],
    val: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<(FactorSet, TrainTrace), FactorError> {
    let m = check_inputs(data, val, tree, h)?;
    let depth = tree.depth();
    let mut init_rng = rng::stream(h.seed, Stream::Init);
    let mut shuffle_rng = rng::stream(h.seed, Stream::Shuffle);
    let mut factors =
        FactorSet::random(h.k, &tree.nodes_per_level(), m, h.init_scale, &mut init_rng);

    let (prior, dataless) = match schedule {
        Schedule::Hpmf | Schedule::Hrpmf => (Prior::Hierarchy, Dataless::CouplingMinimizer),
        Schedule::Lpmf => (Prior::Zero, Dataless::Keep),
    };
    let level_data = |level: usize| -> Option<&SparseTraitMatrix> {
        match schedule {
            Schedule::Hrpmf if level < depth => None,
            _ => Some(&data[level - 1]),
        }
    };
    let objective = |f: &FactorSet| -> Result<f64, FactorError> {
        match schedule {
            Schedule::Hpmf => objective::objective_full(f, data, tree, h),
            Schedule::Hrpmf => objective::objective_hrpmf(f, data, tree, h),
            Schedule::Lpmf => Ok(objective_lpmf(f, data, h)),
        }
    };

    let mut trace = TrainTrace {
        steps: Vec::new(),
        passes: Vec::new(),
        best_pass: 0,
        stop_reason: StopReason::MaxPasses,
    };
    let mut stopper = EarlyStopping::new(h.patience);
    let mut best: Option<FactorSet> = None;

    'passes: for pass in 1..=h.max_passes {
        let sweeps: [(Direction, Vec<usize>); 2] = [
            (Direction::TopDown, (1..=depth).collect()),
            (Direction::BottomUp, (1..=depth).rev().collect()),
        ];
        for (direction, levels) in sweeps {
            for level in levels {
                if schedule == Schedule::Lpmf {
                    lpmf_seed_level(&mut factors, tree, level, direction);
                }
                let solver =
                    LevelSolver::new(level, level_data(level), prior, dataless, &factors, tree);
                for epoch in 0..h.epochs_per_level {
                    if !solver.epoch(&mut factors, h, &mut shuffle_rng) {
                        return Err(FactorError::NonFiniteUpdate { pass, level, epoch });
                    }
                }
                trace.steps.push(TraceStep {
                    pass,
                    direction,
                    level,
                    objective: objective(&factors)?,
                });
            }
        }
        let rmse = validation_rmse(&factors, val);
        trace.passes.push(PassRecord {
            pass,
            objective: trace.steps.last().map(|s| s.objective).unwrap_or(0.0),
            validation_rmse: rmse,
        });
        // LPMF runs every pass and keeps its final factors.
        if let (Some(r), true) = (rmse, schedule != Schedule::Lpmf) {
            match stopper.observe(pass, r) {
                StopSignal::Improved => best = Some(factors.clone()),
                StopSignal::NoImprovement => {}
                StopSignal::Stop => {
                    trace.stop_reason = StopReason::EarlyStop;
                    break 'passes;
                }
            }
        }
    }
    let factors = match best {
        Some(b) => {
            trace.best_pass = stopper.best_pass();
            b
        }
        None => {
            trace.best_pass = trace.passes.len();
            factors
        }
    };
    Ok((factors, trace))
}

/// HPMF: data at every level, every level coupled to its parent and children.
///
/// `data[ℓ - 1]` is the level-`ℓ` training matrix (see
/// [`crate::traitdata::aggregate_levels`]); `val` is at the leaf level.
pub fn train_hpmf(
    data: &[SparseTraitMatrix],
    val: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<(FactorSet, TrainTrace), FactorError> {
    run(Schedule::Hpmf, data, val, tree, h)
}

/// HRPMF: the hierarchy only regularizes; upper levels carry no data term.
pub fn train_hrpmf(
    leaf: &SparseTraitMatrix,
    val: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<(FactorSet, TrainTrace), FactorError> {
    let depth = tree.depth();
    let mut data: Vec<SparseTraitMatrix> = (1..depth)
        .map(|l| SparseTraitMatrix::empty(l, tree.nodes_at(l), leaf.n_cols()))
        .collect();
    data.push(leaf.clone().with_level(depth));
    run(Schedule::Hrpmf, &data, val, tree, h)
}

/// LPMF: independent zero-prior PMF per level, chained only through
/// initialization (parent factors top-down, child means bottom-up).
///
/// Runs all `max_passes` passes without early stopping and returns the
/// factors of the final sweep; validation RMSE is still traced.
pub fn train_lpmf(
    data: &[SparseTraitMatrix],
    val: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<(FactorSet, TrainTrace), FactorError> {
    run(Schedule::Lpmf, data, val, tree, h)
}

/// PMF on the leaf matrix alone: HPMF over a single-level tree, where the
/// only coupling is the zero root prior.
pub fn train_pmf(
    leaf: &SparseTraitMatrix,
    val: &SparseTraitMatrix,
    h: &Hyperparams,
) -> Result<(FactorSet, TrainTrace), FactorError> {
    let tree = TaxonomyTree::flat(leaf.n_rows());
    run(Schedule::Hpmf, &[leaf.clone().with_level(1)], val, &tree, h)
}

/// Dispatches to the trainer of a factor model. `data` holds every level's
/// training matrix (leaf last); models that ignore upper levels use only the
/// leaf.
pub fn train_method(
    method: Method,
    data: &[SparseTraitMatrix],
    val: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<(FactorSet, TrainTrace), FactorError> {
    let leaf = data
        .last()
        .ok_or_else(|| FactorError::DimensionMismatch("no data matrices".into()))?;
    match method {
        Method::Hpmf => train_hpmf(data, val, tree, h),
        Method::Lpmf => train_lpmf(data, val, tree, h),
        Method::Hrpmf => train_hrpmf(leaf, val, tree, h),
        Method::Pmf => train_pmf(leaf, val, h),
        Method::Mean => Err(FactorError::NotFactorModel(method)),
    }
}

/// Predictions for every entry of `cells` from the leaf factors.
pub(crate) fn predict_entries(factors: &FactorSet, cells: &SparseTraitMatrix) -> Vec<f64> {
    cells
        .entries()
        .iter()
        .map(|e| dot(factors.leaf_u().col(e.row), factors.leaf_v().col(e.col)))
        .collect()
}
