use std::path::PathBuf;

use clap::Args;
use hpmf_core::catalog;
use hpmf_core::evaluation::{
    correlation_report, fit_and_predict, part_ab_rows, partition_ab, prepare_split, run_ablation,
    scatter_export, AblationConfig,
};
use hpmf_core::io::{self, TraitIds};
use hpmf_core::Method;

use crate::common::{
    create_out, hyperparams, opt, opt_path, parse_levels, parse_split, write_manifest, HyperArgs,
    HYPER_DEFAULTS,
};
use crate::config::Settings;
use crate::error::CliError;

const DEFAULTS: &[(&str, &str)] = &[
    ("taxonomy", ""),
    ("traits", ""),
    ("out", ""),
    ("seed", "0"),
    ("mode", "ablation"),
    ("methods", ""),
    ("levels", ""),
    ("repeats", "5"),
    ("jobs", "1"),
    ("split", "per_plant"),
    ("transform", "true"),
    ("method", "hpmf"),
    ("trait_pair", ""),
    ("trait", ""),
];

#[derive(Debug, Args)]
pub struct EvaluateArgs {
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
    /// ablation, ab_split, correlation or scatter.
    #[arg(long)]
    pub mode: Option<String>,
    /// Comma-separated methods (ablation, ab_split).
    #[arg(long)]
    pub methods: Option<String>,
    /// Level prefixes: a comma list for ablation, a single prefix otherwise.
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Worker threads for ablation cells.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Split for the single-split modes: per_plant or random.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub no_transform: bool,
    /// Model for correlation and scatter.
    #[arg(long)]
    pub method: Option<String>,
    /// Two trait ids, e.g. `13,6`.
    #[arg(long)]
    pub trait_pair: Option<String>,
    /// Trait id for scatter.
    #[arg(long = "trait")]
    pub trait_id: Option<String>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

fn trait_col(ids: &TraitIds, id: &str) -> Result<usize, CliError> {
    ids.find(id)
        .ok_or_else(|| CliError::Usage(format!("trait `{id}` does not occur in the data")))
}

pub fn run(a: &EvaluateArgs) -> Result<(), CliError> {
    let defaults: Vec<(&str, &str)> = DEFAULTS.iter().chain(&HYPER_DEFAULTS).copied().collect();
    let mut flags = vec![
        ("taxonomy", opt_path(&a.taxonomy)),
        ("traits", opt_path(&a.traits)),
        ("seed", opt(&a.seed)),
        ("out", opt_path(&a.out)),
        ("mode", a.mode.clone()),
        ("methods", a.methods.clone()),
        ("levels", a.levels.clone()),
        ("repeats", opt(&a.repeats)),
        ("jobs", opt(&a.jobs)),
        ("split", a.split.clone()),
        ("transform", a.no_transform.then(|| "false".to_string())),
        ("method", a.method.clone()),
        ("trait_pair", a.trait_pair.clone()),
        ("trait", a.trait_id.clone()),
    ];
    flags.extend(a.hyper.flags());
    let s = Settings::resolve("evaluate", &defaults, a.config.as_deref(), flags)?;

    let tax_path = s.require_path("taxonomy")?;
    let traits_path = s.require_path("traits")?;
    let out = s.require_path("out")?;
    let h = hyperparams(&s)?;
    let transform = s.flag("transform")?;
    let full = io::read_taxonomy(&tax_path)?;
    let (raw, ids) = io::read_traits(&traits_path, &full, None)?;
    let level_args: Vec<String> = s.list("levels")?;
    let prefixes = level_args
        .iter()
        .map(|l| parse_levels(l, &full))
        .collect::<Result<Vec<_>, _>>()?;
    let methods: Vec<Method> = s.list("methods")?;
    create_out(&out)?;

    let mode = s.str("mode").to_string();
    match mode.as_str() {
        "ablation" => {
            let mut cfg = AblationConfig::new(&full, h);
            if !methods.is_empty() {
                cfg.methods = methods;
            }
            if !prefixes.is_empty() {
                cfg.prefixes = prefixes;
            }
            cfg.repeats = s.get("repeats")?;
            cfg.jobs = s.get("jobs")?;
            cfg.transform = transform;
            let report = run_ablation(&raw, &full, &cfg)?;
            io::write_atomic(
                &out.join("report.tsv"),
                io::report_tsv(&report.level_ablation).as_bytes(),
            )?;
            eprintln!(
                "evaluate: {} cells, {:.4} of test entries predictable",
                report.level_ablation.len(),
                report.predictable_fraction
            );
        }
        "ab_split" | "correlation" | "scatter" => {
            let upper = match prefixes[..] {
                [] => full.depth() - 1,
                [p] => p,
                _ => {
                    return Err(CliError::Usage(format!(
                        "mode `{mode}` takes a single level prefix"
                    )))
                }
            };
            let tree = full.truncate(upper)?;
            let split = parse_split(s.str("split"))?;
            let d = prepare_split(&raw, split, h.seed, transform)?;
            match mode.as_str() {
                "ab_split" => {
                    let methods = if methods.is_empty() {
                        vec![Method::Mean, Method::Hpmf]
                    } else {
                        methods
                    };
                    let ab = partition_ab(&d.test, &d.train, &full)?;
                    let mut rows = Vec::new();
                    for method in methods {
                        let t = if method == Method::Pmf {
                            full.truncate(0)?
                        } else {
                            tree.clone()
                        };
                        let pred =
                            fit_and_predict(method, &d.train, &d.validation, &d.test, &t, &h)?;
                        rows.extend(part_ab_rows(method, &d.test, &d.train, &full, &pred)?);
                    }
                    io::write_atomic(
                        &out.join("part_ab.csv"),
                        io::part_ab_csv(&rows, &ids).as_bytes(),
                    )?;
                    eprintln!(
                        "evaluate: |A| = {}, |B| = {}, |test| = {}",
                        ab.part_a.len(),
                        ab.part_b.len(),
                        d.test.len()
                    );
                }
                "correlation" => {
                    let pair: Vec<String> = s.list("trait_pair")?;
                    let [ti, tj] = &pair[..] else {
                        return Err(CliError::Usage("`trait_pair` needs two trait ids".into()));
                    };
                    let (i, j) = (trait_col(&ids, ti)?, trait_col(&ids, tj)?);
                    let method: Method = s.get("method")?;
                    let pred =
                        fit_and_predict(method, &d.train, &d.validation, &d.test, &tree, &h)?;
                    let report = correlation_report(&d.test, &pred, (i, j))?;
                    io::write_atomic(
                        &out.join("correlation.csv"),
                        io::correlation_csv(&report, &full).as_bytes(),
                    )?;
                    eprintln!(
                        "evaluate: {} vs {}: pearson_true = {:.4}, pearson_pred = {:.4} over {} plants",
                        catalog::display_name(ti),
                        catalog::display_name(tj),
                        report.pearson_true,
                        report.pearson_pred,
                        report.rows.len()
                    );
                }
                _ => {
                    let tid = s.str("trait").to_string();
                    if tid.is_empty() {
                        return Err(CliError::Usage("`trait` is required for scatter".into()));
                    }
                    let col = trait_col(&ids, &tid)?;
                    let method: Method = s.get("method")?;
                    let pred =
                        fit_and_predict(method, &d.train, &d.validation, &d.test, &tree, &h)?;
                    let rows = scatter_export(&d.test, &pred, col)?;
                    io::write_atomic(
                        &out.join("scatter.csv"),
                        io::scatter_csv(&rows, &full).as_bytes(),
                    )?;
                    eprintln!(
                        "evaluate: {} rows for {}",
                        rows.len(),
                        catalog::display_name(&tid)
                    );
                }
            }
        }
        other => {
            return Err(CliError::Usage(format!(
                "mode `{other}`: expected ablation, ab_split, correlation or scatter"
            )))
        }
    }
    write_manifest(&out, &s, &[tax_path, traits_path])?;
    Ok(())
}
