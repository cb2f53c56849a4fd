use std::path::{Path, PathBuf};

use clap::Args;
use hpmf_core::evaluation::{prepare_split, SplitKind};
use hpmf_core::io::{self, TraitIds};
use hpmf_core::{
    aggregate_levels, build_mean_tables, train_method, DataError, Method, SparseTraitMatrix,
};

use crate::common::{
    create_out, hyperparams, opt, opt_path, parse_levels, parse_split, write_manifest, HyperArgs,
    HYPER_DEFAULTS,
};
use crate::config::{parse_config, Settings};
use crate::error::CliError;

pub const MODEL_FILE: &str = "model.txt";
pub const FACTOR_DIR: &str = "factors";
pub const MEAN_FILE: &str = "mean_tables.csv";
pub const STATS_FILE: &str = "stats.csv";

const DEFAULTS: &[(&str, &str)] = &[
    ("taxonomy", ""),
    ("traits", ""),
    ("out", ""),
    ("seed", "0"),
    ("method", "hpmf"),
    ("levels", "all"),
    ("split", "per_plant"),
    ("validation", ""),
    ("transform", "true"),
];

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub traits: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// mean, pmf, lpmf, hpmf or hrpmf.
    #[arg(long)]
    pub method: Option<String>,
    /// Ancestor levels to use: none, all, a count, or e.g. `phylo+family`.
    #[arg(long)]
    pub levels: Option<String>,
    /// per_plant, random, or none (train on everything).
    #[arg(long)]
    pub split: Option<String>,
    /// Validation entries for early stopping when `--split none`.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Train on the raw values instead of log z-scores.
    #[arg(long)]
    pub no_transform: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

/// What `predict` needs to know about a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInfo {
    pub method: Method,
    pub upper_levels: usize,
    pub transform: bool,
    pub trait_ids: TraitIds,
}

impl ModelInfo {
    pub fn to_text(&self) -> String {
        format!(
            "method = {}\nupper_levels = {}\ntransform = {}\ntrait_ids = {}\n",
            self.method,
            self.upper_levels,
            self.transform,
            self.trait_ids.as_slice().join(",")
        )
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MODEL_FILE);
        let text = io::read_text(&path)?;
        let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
        let kv =
            parse_config(&text, &path.display().to_string()).map_err(|e| bad(e.to_string()))?;
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| bad(format!("missing `{k}`")))
        };
        Ok(Self {
            method: get("method")?.parse().map_err(bad)?,
            upper_levels: get("upper_levels")?
                .parse()
                .map_err(|e| bad(format!("{e}")))?,
            transform: get("transform")?.parse().map_err(|e| bad(format!("{e}")))?,
            trait_ids: TraitIds::new(get("trait_ids")?.split(',').map(str::to_string).collect()),
        })
    }
}

fn raw_cells(
    raw: &SparseTraitMatrix,
    cells: &SparseTraitMatrix,
) -> Result<SparseTraitMatrix, DataError> {
    let entries = cells
        .entries()
        .iter()
        .map(|e| {
            let mut e = *e;
            e.value = raw.get(e.row, e.col).expect("cell comes from raw");
            e
        })
        .collect();
    SparseTraitMatrix::from_entries(raw.level(), raw.n_rows(), raw.n_cols(), entries)
}

pub fn run(a: &TrainArgs) -> Result<(), CliError> {
    let defaults: Vec<(&str, &str)> = DEFAULTS.iter().chain(&HYPER_DEFAULTS).copied().collect();
    let mut flags = vec![
        ("taxonomy", opt_path(&a.taxonomy)),
        ("traits", opt_path(&a.traits)),
        ("seed", opt(&a.seed)),
        ("out", opt_path(&a.out)),
        ("method", a.method.clone()),
        ("levels", a.levels.clone()),
        ("split", a.split.clone()),
        ("validation", opt_path(&a.validation)),
        ("transform", a.no_transform.then(|| "false".to_string())),
    ];
    flags.extend(a.hyper.flags());
    let s = Settings::resolve("train", &defaults, a.config.as_deref(), flags)?;

    let tax_path = s.require_path("taxonomy")?;
    let traits_path = s.require_path("traits")?;
    let out = s.require_path("out")?;
    let method: Method = s.get("method")?;
    let h = hyperparams(&s)?;
    let transform = s.flag("transform")?;
    let split = parse_split(s.str("split"))?;
    let val_path = s.path("validation");
    if val_path.is_some() && split != SplitKind::None {
        return Err(CliError::Usage("`validation` needs `split = none`".into()));
    }

    let full = io::read_taxonomy(&tax_path)?;
    let (raw, ids) = io::read_traits(&traits_path, &full, None)?;
    let requested = parse_levels(s.str("levels"), &full)?;
    // PMF never looks at the hierarchy.
    let upper = if method == Method::Pmf { 0 } else { requested };
    let tree = full.truncate(upper)?;

    let mut d = prepare_split(&raw, split, h.seed, transform)?;
    let raw_test = raw_cells(&raw, &d.test)?;
    if let Some(p) = &val_path {
        let (v, _) = io::read_traits(p, &full, Some(&ids))?;
        d.validation = match &d.stats {
            Some(stats) => stats.apply(&v)?,
            None => v,
        };
    }

    create_out(&out)?;
    let factor_dir = out.join(FACTOR_DIR);
    if method == Method::Mean {
        let tables = build_mean_tables(&d.train, &tree)?;
        io::write_mean_tables(&out.join(MEAN_FILE), &tables, &tree, &ids)?;
    } else {
        let levels = aggregate_levels(&d.train, &tree)?;
        let (factors, trace) = train_method(method, &levels, &d.validation, &tree, &h)?;
        io::write_factor_set(&factor_dir, &factors)?;
        io::write_atomic(&out.join("trace.csv"), io::trace_csv(&trace).as_bytes())?;
        eprintln!(
            "train: {method} stopped after {} passes ({}), best pass {}",
            trace.passes.len(),
            trace.stop_reason.as_str(),
            trace.best_pass
        );
    }
    if let Some(stats) = &d.stats {
        io::write_stats(&out.join(STATS_FILE), stats, &ids)?;
    }
    if split != SplitKind::None {
        io::write_traits(&out.join("test.csv"), &raw_test, &full, &ids)?;
    }
    let info = ModelInfo {
        method,
        upper_levels: upper,
        transform,
        trait_ids: ids,
    };
    io::write_atomic(&out.join(MODEL_FILE), info.to_text().as_bytes())?;
    let mut inputs = vec![tax_path, traits_path];
    inputs.extend(val_path);
    write_manifest(&out, &s, &inputs)?;
    Ok(())
}
