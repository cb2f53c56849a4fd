use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use hpmf_core::io;
use hpmf_core::{mean_predict, predict, Entry, MeanError, Method, SparseTraitMatrix};

use crate::common::{create_out, opt_path, write_manifest};
use crate::config::Settings;
use crate::error::CliError;
use crate::train::{ModelInfo, FACTOR_DIR, MEAN_FILE, MODEL_FILE, STATS_FILE};

const DEFAULTS: &[(&str, &str)] = &[
    ("model", ""),
    ("taxonomy", ""),
    ("traits", ""),
    ("cells", ""),
    ("all_missing", "false"),
    ("transformed", "false"),
    ("out", ""),
];

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Observed data; with `--all-missing`, every other cell is predicted.
    #[arg(long)]
    pub traits: Option<PathBuf>,
    /// CSV of `leaf_id,trait_id` cells to predict.
    #[arg(long)]
    pub cells: Option<PathBuf>,
    #[arg(long)]
    pub all_missing: bool,
    /// Keep predictions on the training scale.
    #[arg(long)]
    pub transformed: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Every cell not observed in `observed`, row-major.
fn missing_cells(observed: &SparseTraitMatrix) -> Result<SparseTraitMatrix, CliError> {
    let mut entries = Vec::new();
    for row in 0..observed.n_rows() {
        for col in 0..observed.n_cols() {
            if !observed.contains(row, col) {
                entries.push(Entry::new(row, col, 0.0));
            }
        }
    }
    Ok(SparseTraitMatrix::from_entries(
        observed.level(),
        observed.n_rows(),
        observed.n_cols(),
        entries,
    )?)
}

pub fn run(a: &PredictArgs) -> Result<(), CliError> {
    let s = Settings::resolve(
        "predict",
        DEFAULTS,
        a.config.as_deref(),
        vec![
            ("model", opt_path(&a.model)),
            ("taxonomy", opt_path(&a.taxonomy)),
            ("traits", opt_path(&a.traits)),
            ("cells", opt_path(&a.cells)),
            ("all_missing", a.all_missing.then(|| "true".to_string())),
            ("transformed", a.transformed.then(|| "true".to_string())),
            ("out", opt_path(&a.out)),
        ],
    )?;
    let model_dir = s.require_path("model")?;
    let tax_path = s.require_path("taxonomy")?;
    let out = s.require_path("out")?;
    let info = ModelInfo::read(&model_dir)?;
    let full = io::read_taxonomy(&tax_path)?;
    let tree = full.truncate(info.upper_levels)?;
    let ids = &info.trait_ids;

    let mut inputs = vec![tax_path, model_dir.join(MODEL_FILE)];
    let cells = match (s.path("cells"), s.flag("all_missing")?) {
        (Some(p), false) => {
            let c = io::read_cells(&p, &full, ids)?;
            inputs.push(p);
            c
        }
        (None, true) => {
            let p = s.require_path("traits")?;
            let (observed, _) = io::read_traits(&p, &full, Some(ids))?;
            inputs.push(p);
            missing_cells(&observed)?
        }
        _ => {
            return Err(CliError::Usage(
                "give exactly one of `cells` and `all_missing`".into(),
            ))
        }
    };

    let stats = if info.transform && !s.flag("transformed")? {
        let p = model_dir.join(STATS_FILE);
        let (stats, _) = io::read_stats(&p)?;
        inputs.push(p);
        Some(stats)
    } else {
        None
    };

    // (value on the model scale, level used by MEAN)
    let raw: Vec<(Option<f64>, Option<usize>)> = if info.method == Method::Mean {
        let p = model_dir.join(MEAN_FILE);
        let tables = io::read_mean_tables(&p, &tree, ids)?;
        inputs.push(p);
        cells
            .entries()
            .iter()
            .map(
                |e| match mean_predict(&tables, &tree, e.row, e.col, info.upper_levels) {
                    Ok((v, level)) => Ok((Some(v), Some(level))),
                    Err(MeanError::NoPrediction { .. }) => Ok((None, None)),
                    Err(err) => Err(CliError::from(err)),
                },
            )
            .collect::<Result<_, _>>()?
    } else {
        let factors = io::read_factor_set(&model_dir.join(FACTOR_DIR))?;
        factors.check_shape(&tree, ids.len())?;
        cells
            .entries()
            .iter()
            .map(|e| Ok((Some(predict(&factors, e.row, e.col)?), None)))
            .collect::<Result<_, CliError>>()?
    };

    let leaves = full.labels(full.depth());
    let mean = info.method == Method::Mean;
    let mut text = String::from(if mean {
        "leaf_id,trait_id,prediction,level_used\n"
    } else {
        "leaf_id,trait_id,prediction\n"
    });
    let mut empty = 0usize;
    for (e, (value, level)) in cells.entries().iter().zip(raw) {
        let value = match (value, &stats) {
            (Some(v), Some(st)) => st.inverse_value(e.col, v).ok(),
            (v, _) => v,
        };
        let field = value.map(|v| v.to_string()).unwrap_or_else(|| {
            empty += 1;
            String::new()
        });
        let _ = write!(text, "{},{},{field}", leaves[e.row], ids.get(e.col));
        if mean {
            let _ = write!(
                text,
                ",{}",
                level.map(|l| l.to_string()).unwrap_or_default()
            );
        }
        text.push('\n');
    }
    create_out(&out)?;
    io::write_atomic(&out.join("predictions.csv"), text.as_bytes())?;
    write_manifest(&out, &s, &inputs)?;
    eprintln!(
        "predict: {} cells, {} without prediction",
        cells.len(),
        empty
    );
    Ok(())
}
