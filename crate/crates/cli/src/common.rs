use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use hpmf_core::evaluation::SplitKind;
use hpmf_core::io;
use hpmf_core::traitdata::SplitFractions;
use hpmf_core::{Hyperparams, TaxonomyTree};

use crate::config::{Settings, MANIFEST};
use crate::error::CliError;

/// Ancestor level names accepted by `--levels` on any tree of enough depth.
const CANONICAL_LEVELS: [&str; 4] = ["phylo", "family", "genus", "species"];

pub const HYPER_DEFAULTS: [(&str, &str); 8] = [
    ("k", "15"),
    ("lambda_u", "0.1"),
    ("lambda_v", "0.1"),
    ("lr", "0.005"),
    ("epochs_per_level", "10"),
    ("passes", "5"),
    ("patience", "5"),
    ("init_scale", "0.01"),
];

#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    /// Latent dimension.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda_u: Option<f64>,
    #[arg(long)]
    pub lambda_v: Option<f64>,
    /// SGD learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// SGD epochs per level visit.
    #[arg(long)]
    pub epochs_per_level: Option<usize>,
    /// Maximum top-down + bottom-up passes.
    #[arg(long)]
    pub passes: Option<usize>,
    /// Passes without validation improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Standard deviation of the random initialization.
    #[arg(long)]
    pub init_scale: Option<f64>,
}

impl HyperArgs {
    pub fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("k", self.k.map(|v| v.to_string())),
            ("lambda_u", self.lambda_u.map(|v| v.to_string())),
            ("lambda_v", self.lambda_v.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            (
                "epochs_per_level",
                self.epochs_per_level.map(|v| v.to_string()),
            ),
            ("passes", self.passes.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("init_scale", self.init_scale.map(|v| v.to_string())),
        ]
    }
}

pub fn hyperparams(s: &Settings) -> Result<Hyperparams, CliError> {
    let h = Hyperparams {
        k: s.get("k")?,
        lambda_u: s.get("lambda_u")?,
        lambda_v: s.get("lambda_v")?,
        learning_rate: s.get("lr")?,
        epochs_per_level: s.get("epochs_per_level")?,
        max_passes: s.get("passes")?,
        patience: s.get("patience")?,
        init_scale: s.get("init_scale")?,
        seed: s.get("seed")?,
    };
    h.validate()?;
    Ok(h)
}

pub fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

pub fn opt_path(v: &Option<PathBuf>) -> Option<String> {
    v.as_ref().map(|p| p.display().to_string())
}

/// Number of ancestor levels selected by a `--levels` value: `none`, `all`,
/// a count, or a `+`-joined top prefix of level names.
pub fn parse_levels(s: &str, tree: &TaxonomyTree) -> Result<usize, CliError> {
    let upper = tree.depth() - 1;
    let n = match s.trim() {
        "none" => 0,
        "all" => upper,
        t if t.chars().all(|c| c.is_ascii_digit()) && !t.is_empty() => t
            .parse()
            .map_err(|_| CliError::Usage(format!("bad level count `{t}`")))?,
        t => {
            let parts: Vec<&str> = t.split('+').map(str::trim).collect();
            let names = &tree.level_names()[..upper];
            let is_prefix =
                |seq: &[&str]| parts.len() <= seq.len() && parts[..] == seq[..parts.len()];
            let own: Vec<&str> = names.iter().map(String::as_str).collect();
            if is_prefix(&own) || is_prefix(&CANONICAL_LEVELS) {
                parts.len()
            } else {
                return Err(CliError::Usage(format!(
                    "levels `{t}` is not a top prefix of {}",
                    names.join("+")
                )));
            }
        }
    };
    if n > upper {
        return Err(CliError::Usage(format!(
            "levels `{s}` asks for {n} ancestor levels, the taxonomy has {upper}"
        )));
    }
    Ok(n)
}

pub fn parse_split(s: &str) -> Result<SplitKind, CliError> {
    match s {
        "per_plant" => Ok(SplitKind::PerPlant),
        "random" => Ok(SplitKind::Random(SplitFractions::default())),
        "none" => Ok(SplitKind::None),
        other => Err(CliError::Usage(format!(
            "split `{other}`: expected per_plant, random or none"
        ))),
    }
}

pub fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

pub fn write_manifest(dir: &Path, s: &Settings, inputs: &[PathBuf]) -> Result<(), CliError> {
    let text = s.manifest(inputs)?;
    io::write_atomic(&dir.join(MANIFEST), text.as_bytes())?;
    Ok(())
}
