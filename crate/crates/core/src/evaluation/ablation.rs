use rayon::prelude::*;

use super::{filter_predictable, paired, partition_ab, rmse, EvalError};
use crate::baseline::{build_mean_tables, mean_predict};
use crate::factorization::{train_method, Hyperparams, Method};
use crate::rng::{self, Stream};
use crate::taxonomy::TaxonomyTree;
use crate::traitdata::{
    aggregate_levels, split_per_plant, split_random, Entry, SparseTraitMatrix, SplitBundle,
    SplitFractions, TraitStats,
};

/// `"none"` for no ancestor levels, otherwise the kept level names joined by
/// `+` (e.g. `phylo+family`).
pub fn prefix_label(tree: &TaxonomyTree, upper_levels: usize) -> String {
    if upper_levels == 0 {
        "none".to_string()
    } else {
        tree.level_names()[..upper_levels].join("+")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub methods: Vec<Method>,
    /// Numbers of ancestor levels kept, each in `0..L`.
    pub prefixes: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub hyper: Hyperparams,
    /// Log / z-score each repeat's data with statistics of its training part.
    pub transform: bool,
    /// Worker threads; 0 lets the pool pick.
    pub jobs: usize,
}

impl AblationConfig {
    pub fn new(tree: &TaxonomyTree, hyper: Hyperparams) -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            prefixes: (0..tree.depth()).collect(),
            repeats: 5,
            seed: hyper.seed,
            hyper,
            transform: true,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub upper_levels: usize,
    pub levels: String,
    pub method: Method,
    pub rmse_mean: f64,
    /// Sample standard deviation over repeats; 0 for a single repeat.
    pub rmse_std: f64,
    pub repeats: usize,
    pub per_repeat: Vec<f64>,
    /// Mean leaf validation RMSE over repeats that had validation entries.
    pub validation_mean: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartAbRow {
    pub method: Method,
    pub col: usize,
    pub part: Part,
    pub rmse: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationReport {
    pub level_ablation: Vec<AblationRow>,
    /// Mean share of test entries that could be predicted.
    pub predictable_fraction: f64,
    pub overall_rmse: Option<f64>,
    /// `(rmse, count)` per column; `None` for columns without test entries.
    pub per_trait_rmse: Vec<Option<(f64, usize)>>,
    pub part_ab: Vec<PartAbRow>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn keep_cols(m: &SparseTraitMatrix, keep: &[bool]) -> SparseTraitMatrix {
    let entries = m
        .entries()
        .iter()
        .copied()
        .filter(|e| keep[e.col])
        .collect();
    SparseTraitMatrix::from_entries(m.level(), m.n_rows(), m.n_cols(), entries)
        .expect("subset of a valid matrix")
}

/// How a leaf matrix is divided into train / validation / test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitKind {
    /// Per-row hold-out (see [`split_per_plant`]).
    PerPlant,
    /// Uniform split of all entries.
    Random(SplitFractions),
    /// Everything is training data.
    None,
}

/// A split ready for training: validation and test cells restricted to
/// predictable ones, optionally transformed with training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplit {
    pub train: SparseTraitMatrix,
    pub validation: SparseTraitMatrix,
    pub test: SparseTraitMatrix,
    /// Present when the data was transformed.
    pub stats: Option<TraitStats>,
    /// Share of the split's test entries that were kept.
    pub kept_fraction: f64,
    pub seed: u64,
}

pub fn prepare_split(
    leaf: &SparseTraitMatrix,
    kind: SplitKind,
    seed: u64,
    transform: bool,
) -> Result<PreparedSplit, EvalError> {
    let split = match kind {
        SplitKind::PerPlant => split_per_plant(leaf, seed)?,
        SplitKind::Random(f) => split_random(leaf, f, seed)?,
        SplitKind::None => {
            let empty = SparseTraitMatrix::empty(leaf.level(), leaf.n_rows(), leaf.n_cols());
            SplitBundle {
                train: leaf.clone(),
                validation: empty.clone(),
                test: empty,
                seed,
            }
        }
    };
    let total_test = split.test.len();
    // Cells in columns without any training entry cannot be predicted by
    // any method (and have no transform statistics).
    let has_train: Vec<bool> = (0..leaf.n_cols())
        .map(|c| split.train.col_len(c) > 0)
        .collect();
    let test = filter_predictable(&keep_cols(&split.test, &has_train), &split.train).kept;
    let validation =
        filter_predictable(&keep_cols(&split.validation, &has_train), &split.train).kept;
    let kept_fraction = if total_test == 0 {
        1.0
    } else {
        test.len() as f64 / total_test as f64
    };
    if transform {
        let stats = TraitStats::fit(&split.train)?;
        Ok(PreparedSplit {
            train: stats.apply(&split.train)?,
            validation: stats.apply(&validation)?,
            test: stats.apply(&test)?,
            stats: Some(stats),
            kept_fraction,
            seed,
        })
    } else {
        Ok(PreparedSplit {
            train: split.train,
            validation,
            test,
            stats: None,
            kept_fraction,
            seed,
        })
    }
}

/// Trains `method` on a leaf training matrix and predicts every cell of
/// `cells`. MEAN consults every ancestor level of `tree`.
pub fn fit_and_predict(
    method: Method,
    train: &SparseTraitMatrix,
    validation: &SparseTraitMatrix,
    cells: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    h: &Hyperparams,
) -> Result<SparseTraitMatrix, EvalError> {
    let values: Vec<f64> = match method {
        Method::Mean => {
            let tables = build_mean_tables(train, tree)?;
            let max_level = tree.depth() - 1;
            cells
                .entries()
                .iter()
                .map(|e| mean_predict(&tables, tree, e.row, e.col, max_level).map(|(v, _)| v))
                .collect::<Result<_, _>>()?
        }
        _ => {
            let levels = aggregate_levels(train, tree)?;
            let (factors, _) = train_method(method, &levels, validation, tree, h)?;
            crate::factorization::predict_entries(&factors, cells)
        }
    };
    let entries = cells
        .entries()
        .iter()
        .zip(values)
        .map(|(e, v)| Entry::new(e.row, e.col, v))
        .collect();
    Ok(SparseTraitMatrix::from_entries(
        cells.level(),
        cells.n_rows(),
        cells.n_cols(),
        entries,
    )?)
}

/// The level-ablation experiment: for every repeat a fresh per-plant split,
/// then for every ancestor prefix and applicable method, the leaf test RMSE.
///
/// Cells are independent and run on a pool of `jobs` threads; results are
/// merged in `(prefix, method)` order, so the report does not depend on
/// scheduling.
pub fn run_ablation(
    leaf: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    cfg: &AblationConfig,
) -> Result<EvaluationReport, EvalError> {
    if cfg.repeats == 0 {
        return Err(EvalError::BadConfig("repeats must be at least 1".into()));
    }
    if let Some(&p) = cfg.prefixes.iter().find(|&&p| p >= tree.depth()) {
        return Err(EvalError::BadConfig(format!(
            "prefix of {p} ancestor levels, tree has {}",
            tree.depth() - 1
        )));
    }
    cfg.hyper.validate()?;
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut prefixes = cfg.prefixes.clone();
    prefixes.sort();
    prefixes.dedup();

    let prepared: Vec<PreparedSplit> = (0..cfg.repeats)
        .map(|r| {
            let seed = rng::derive_seed(cfg.seed, Stream::Repeat, r as u64);
            prepare_split(leaf, SplitKind::PerPlant, seed, cfg.transform)
        })
        .collect::<Result<_, _>>()?;
    let trees: Vec<TaxonomyTree> = prefixes
        .iter()
        .map(|&p| tree.truncate(p))
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::new();
    for (pi, &p) in prefixes.iter().enumerate() {
        for &method in &methods {
            if method.applies_to(p) {
                for r in 0..cfg.repeats {
                    cells.push((pi, method, r));
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| EvalError::BadConfig(e.to_string()))?;
    // (test RMSE, validation RMSE) per cell
    let scores: Vec<(f64, Option<f64>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(pi, method, r)| {
                let d = &prepared[r];
                let h = Hyperparams {
                    seed: d.seed,
                    ..cfg.hyper.clone()
                };
                let cells = d.test.union(&d.validation)?;
                let pred =
                    fit_and_predict(method, &d.train, &d.validation, &cells, &trees[pi], &h)?;
                let test = rmse(&paired(&d.test, &pred)?)?;
                let val = rmse(&paired(&d.validation, &pred)?).ok();
                Ok((test, val))
            })
            .collect::<Result<_, EvalError>>()
    })?;

    let mut rows = Vec::new();
    for (chunk, group) in scores.chunks(cfg.repeats).zip(cells.chunks(cfg.repeats)) {
        let (pi, method, _) = group[0];
        let tests: Vec<f64> = chunk.iter().map(|c| c.0).collect();
        let vals: Vec<f64> = chunk.iter().filter_map(|c| c.1).collect();
        let (rmse_mean, rmse_std) = mean_std(&tests);
        rows.push(AblationRow {
            upper_levels: prefixes[pi],
            levels: prefix_label(tree, prefixes[pi]),
            method,
            rmse_mean,
            rmse_std,
            repeats: cfg.repeats,
            per_repeat: tests,
            validation_mean: (!vals.is_empty()).then(|| mean_std(&vals).0),
        });
    }
    let predictable_fraction =
        prepared.iter().map(|d| d.kept_fraction).sum::<f64>() / prepared.len() as f64;
    Ok(EvaluationReport {
        level_ablation: rows,
        predictable_fraction,
        ..EvaluationReport::default()
    })
}

/// `(rmse, count)` per column of `truth`.
pub fn per_trait_rmse(
    truth: &SparseTraitMatrix,
    predictions: &SparseTraitMatrix,
) -> Result<Vec<Option<(f64, usize)>>, EvalError> {
    let pairs = super::paired(truth, predictions)?;
    let mut by_col: Vec<Vec<(f64, f64)>> = vec![Vec::new(); truth.n_cols()];
    for (e, p) in truth.entries().iter().zip(pairs) {
        by_col[e.col].push(p);
    }
    Ok(by_col
        .iter()
        .map(|ps| rmse(ps).ok().map(|r| (r, ps.len())))
        .collect())
}

/// Per-column RMSE of one method's predictions on Part A and Part B.
pub fn part_ab_rows(
    method: Method,
    test: &SparseTraitMatrix,
    train: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    predictions: &SparseTraitMatrix,
) -> Result<Vec<PartAbRow>, EvalError> {
    let ab = partition_ab(test, train, tree)?;
    let a = per_trait_rmse(&ab.part_a, predictions)?;
    let b = per_trait_rmse(&ab.part_b, predictions)?;
    let mut rows = Vec::new();
    for col in 0..test.n_cols() {
        for (part, cell) in [(Part::A, a[col]), (Part::B, b[col])] {
            rows.push(PartAbRow {
                method,
                col,
                part,
                rmse: cell.map(|c| c.0),
                count: cell.map_or(0, |c| c.1),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::{generate_synthetic, SynthConfig};
    use crate::taxonomy::LineageRecord;

    fn tree() -> TaxonomyTree {
        let mut records = Vec::new();
        for leaf in 0..40 {
            records.push(LineageRecord::new(
                format!("p{leaf}"),
                vec![format!("g{}", leaf / 20), format!("s{}", leaf / 5)],
            ));
        }
        TaxonomyTree::build(&records, &["phylo", "species", "plant"].map(String::from)).unwrap()
    }

    fn data(t: &TaxonomyTree) -> SparseTraitMatrix {
        let cfg = SynthConfig {
            missing_rates: vec![0.0, 0.0, 0.5],
            ..SynthConfig::new(2, 4, 3, 1)
        };
        generate_synthetic(t, &cfg).unwrap().0.pop().unwrap()
    }

    fn quick() -> Hyperparams {
        Hyperparams {
            k: 2,
            learning_rate: 0.05,
            epochs_per_level: 3,
            max_passes: 2,
            init_scale: 0.1,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn labels() {
        let t = tree();
        assert_eq!(prefix_label(&t, 0), "none");
        assert_eq!(prefix_label(&t, 2), "phylo+species");
    }

    #[test]
    fn table_shape_and_reproducibility() {
        let t = tree();
        let leaf = data(&t);
        let cfg = AblationConfig {
            repeats: 2,
            transform: false,
            jobs: 2,
            ..AblationConfig::new(&t, quick())
        };
        let report = run_ablation(&leaf, &t, &cfg).unwrap();
        let shape: Vec<(usize, Method)> = report
            .level_ablation
            .iter()
            .map(|r| (r.upper_levels, r.method))
            .collect();
        use Method::*;
        assert_eq!(
            shape,
            vec![
                (0, Mean),
                (0, Pmf),
                (1, Mean),
                (1, Lpmf),
                (1, Hrpmf),
                (1, Hpmf),
                (2, Mean),
                (2, Lpmf),
                (2, Hrpmf),
                (2, Hpmf)
            ]
        );
        let serial = run_ablation(
            &leaf,
            &t,
            &AblationConfig {
                jobs: 1,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(report, serial);
        assert_eq!(report.predictable_fraction, 1.0);
    }

    #[test]
    fn single_repeat_has_zero_std() {
        let t = tree();
        let cfg = AblationConfig {
            repeats: 1,
            methods: vec![Method::Mean],
            transform: false,
            ..AblationConfig::new(&t, quick())
        };
        let report = run_ablation(&data(&t), &t, &cfg).unwrap();
        assert!(report
            .level_ablation
            .iter()
            .all(|r| r.rmse_std == 0.0 && r.per_repeat.len() == 1));
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn bad_configs() {
        let t = tree();
        let leaf = data(&t);
        let base = AblationConfig::new(&t, quick());
        assert!(run_ablation(
            &leaf,
            &t,
            &AblationConfig {
                repeats: 0,
                ..base.clone()
            }
        )
        .is_err());
        assert!(run_ablation(
            &leaf,
            &t,
            &AblationConfig {
                prefixes: vec![3],
                ..base
            }
        )
        .is_err());
    }

    #[test]
    fn pooled_parts_equal_overall() {
        let t = tree();
        let leaf = data(&t);
        let d = prepare_split(&leaf, SplitKind::PerPlant, 3, false).unwrap();
        let pred =
            fit_and_predict(Method::Mean, &d.train, &d.validation, &d.test, &t, &quick()).unwrap();
        let rows = part_ab_rows(Method::Mean, &d.test, &d.train, &t, &pred).unwrap();
        let n: usize = rows.iter().map(|r| r.count).sum();
        assert_eq!(n, d.test.len());
        let sse: f64 = rows
            .iter()
            .filter_map(|r| r.rmse.map(|x| x * x * r.count as f64))
            .sum();
        let pooled = (sse / n as f64).sqrt();
        assert!((pooled - rmse(&paired(&d.test, &pred).unwrap()).unwrap()).abs() < 1e-12);
    }
}
