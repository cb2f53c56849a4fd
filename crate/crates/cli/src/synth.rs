use std::path::PathBuf;

use clap::Args;
use hpmf_core::io::{self, TraitIds, LEAF_LEVEL};
use hpmf_core::taxonomy::LineageRecord;
use hpmf_core::{generate_synthetic, SynthConfig, TaxonomyTree, TraitStats};

use crate::common::{create_out, opt, opt_path, write_manifest};
use crate::config::Settings;
use crate::error::CliError;

const DEFAULTS: &[(&str, &str)] = &[
    ("out", ""),
    ("seed", "0"),
    ("branching", "3,4,5,5,4"),
    ("level_names", ""),
    ("n_traits", "17"),
    ("k", "5"),
    ("sigma_u", "0.3"),
    ("sigma_v", "0.3"),
    ("sigma", "0.1"),
    ("missing_rate", "0.9"),
    ("transformed", "false"),
];

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Children per node at each level, root first, e.g. `3,4,5,5,4`.
    #[arg(long)]
    pub branching: Option<String>,
    /// Names of the ancestor levels, comma-separated.
    #[arg(long)]
    pub level_names: Option<String>,
    /// Number of trait columns.
    #[arg(long)]
    pub n_traits: Option<usize>,
    /// Latent dimension of the ground truth.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub sigma_u: Option<f64>,
    #[arg(long)]
    pub sigma_v: Option<f64>,
    /// Observation noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Probability that a leaf cell is missing.
    #[arg(long)]
    pub missing_rate: Option<f64>,
    /// Write values on the latent (log z-score) scale instead of `exp(x)`.
    #[arg(long)]
    pub transformed: bool,
}

/// A complete tree with `branching[i]` children per node at level `i + 1`.
pub fn branching_tree(branching: &[usize], names: &[String]) -> Result<TaxonomyTree, CliError> {
    if branching.is_empty() || branching.contains(&0) {
        return Err(CliError::Usage(
            "branching needs at least one level, all ≥ 1".into(),
        ));
    }
    let depth = branching.len();
    let sizes: Vec<usize> = branching
        .iter()
        .scan(1usize, |n, &b| {
            *n *= b;
            Some(*n)
        })
        .collect();
    let leaves = sizes[depth - 1];
    let records: Vec<LineageRecord> = (0..leaves)
        .map(|leaf| {
            let ancestors = (0..depth - 1)
                .map(|l| {
                    // every level below l + 1 divides the index by its branching
                    let per = sizes[depth - 1] / sizes[l];
                    format!("{}_{}", names[l], leaf / per)
                })
                .collect();
            LineageRecord::new(format!("plant_{leaf}"), ancestors)
        })
        .collect();
    let mut all_names = names.to_vec();
    all_names.push(LEAF_LEVEL.to_string());
    Ok(TaxonomyTree::build(&records, &all_names)?)
}

fn default_names(upper: usize) -> Vec<String> {
    const NAMED: [&str; 4] = ["phylo", "family", "genus", "species"];
    if upper <= NAMED.len() {
        NAMED[..upper].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=upper).map(|l| format!("level{l}")).collect()
    }
}

pub fn run(a: &SynthArgs) -> Result<(), CliError> {
    let s = Settings::resolve(
        "synth",
        DEFAULTS,
        a.config.as_deref(),
        vec![
            ("seed", opt(&a.seed)),
            ("out", opt_path(&a.out)),
            ("branching", a.branching.clone()),
            ("level_names", a.level_names.clone()),
            ("n_traits", opt(&a.n_traits)),
            ("k", opt(&a.k)),
            ("sigma_u", opt(&a.sigma_u)),
            ("sigma_v", opt(&a.sigma_v)),
            ("sigma", opt(&a.sigma)),
            ("missing_rate", opt(&a.missing_rate)),
            ("transformed", a.transformed.then(|| "true".to_string())),
        ],
    )?;
    let out = s.require_path("out")?;
    let seed: u64 = s.get("seed")?;
    let branching: Vec<usize> = s.list("branching")?;
    let depth = branching.len();
    let mut names: Vec<String> = s.list("level_names")?;
    if names.is_empty() {
        names = default_names(depth.saturating_sub(1));
    }
    if names.len() + 1 != depth {
        return Err(CliError::Usage(format!(
            "{} level names for {} ancestor levels",
            names.len(),
            depth.saturating_sub(1)
        )));
    }
    let tree = branching_tree(&branching, &names)?;
    let n_traits: usize = s.get("n_traits")?;
    let mut missing_rates = vec![0.0; depth];
    missing_rates[depth - 1] = s.get("missing_rate")?;
    let cfg = SynthConfig {
        k: s.get("k")?,
        n_cols: n_traits,
        sigma_u: s.get("sigma_u")?,
        sigma_v: s.get("sigma_v")?,
        sigma: s.get("sigma")?,
        missing_rates,
        seed,
    };
    let (data, truth) = generate_synthetic(&tree, &cfg)?;
    let leaf = data.last().expect("depth ≥ 1");
    let values = if s.flag("transformed")? {
        leaf.clone()
    } else {
        TraitStats::identity(n_traits).invert(leaf)?
    };
    let ids = TraitIds::new((1..=n_traits).map(|i| i.to_string()).collect());

    create_out(&out)?;
    io::write_taxonomy(&out.join("taxonomy.csv"), &tree)?;
    io::write_traits(&out.join("traits.csv"), &values, &tree, &ids)?;
    io::write_factor_set(&out.join("truth"), &truth)?;
    write_manifest(&out, &s, &[])?;
    eprintln!(
        "synth: {} leaves, {} traits, {} observed cells",
        tree.leaf_count(),
        n_traits,
        values.len()
    );
    Ok(())
}
