//! `key = value` settings: built-in defaults, then an optional config file,
//! then command-line flags. The resolved set is echoed into the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.txt";

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{origin}, line {}: expected `key = value`",
                i + 1
            )));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(CliError::Usage(format!(
                "{origin}, line {}: empty key",
                i + 1
            )));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Settings {
    command: String,
    values: BTreeMap<String, String>,
}

impl Settings {
    /// `defaults` lists every accepted key; an empty default means unset.
    pub fn resolve(
        command: &str,
        defaults: &[(&str, &str)],
        file: Option<&Path>,
        flags: Vec<(&str, Option<String>)>,
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> = defaults
            .iter()
            .map(|&(k, v)| (k.to_string(), v.to_string()))
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            for (k, v) in parse_config(&text, &path.display().to_string())? {
                if k == "command" {
                    if v != command {
                        return Err(CliError::Usage(format!(
                            "{}: config is for `{v}`, not `{command}`",
                            path.display()
                        )));
                    }
                    continue;
                }
                match values.get_mut(&k) {
                    Some(slot) => *slot = v,
                    None => {
                        return Err(CliError::Usage(format!(
                            "{}: unknown key `{k}` for `{command}`",
                            path.display()
                        )))
                    }
                }
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                let slot = values
                    .get_mut(k)
                    .unwrap_or_else(|| panic!("flag `{k}` has no default"));
                *slot = v;
            }
        }
        Ok(Self {
            command: command.to_string(),
            values,
        })
    }

    pub fn str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("unknown setting `{key}`"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.str(key);
        v.parse()
            .map_err(|e| CliError::Usage(format!("`{key} = {v}`: {e}")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.str(key).to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(CliError::Usage(format!(
                "`{key} = {v}`: expected true or false"
            ))),
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.str(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key).ok_or_else(|| {
            CliError::Usage(format!("`{key}` is required (--{})", key.replace('_', "-")))
        })
    }

    /// Comma-separated list; empty gives an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.str(key);
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| CliError::Usage(format!("`{key} = {v}`: {e}")))
            })
            .collect()
    }

    /// The manifest: input hashes and version as comments, then every
    /// resolved key. Feeding it back through `--config` repeats the run.
    pub fn manifest(&self, inputs: &[PathBuf]) -> Result<String, CliError> {
        let mut out = String::from("# hpmf run manifest\n");
        let _ = writeln!(out, "# version = {}", env!("CARGO_PKG_VERSION"));
        for path in inputs {
            let _ = writeln!(out, "# sha256 {} = {}", path.display(), sha256_file(path)?);
        }
        let _ = writeln!(out, "command = {}", self.command);
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        Ok(out)
    }
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULTS: &[(&str, &str)] = &[("k", "15"), ("lr", "0.005"), ("out", "")];

    #[test]
    fn parse_skips_comments() {
        let kv = parse_config("# c\n\nk = 3\n  lr=0.1  \n", "x").unwrap();
        assert_eq!(
            kv,
            vec![("k".into(), "3".into()), ("lr".into(), "0.1".into())]
        );
        assert!(parse_config("k 3\n", "x").is_err());
        assert!(parse_config(" = 3\n", "x").is_err());
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "k = 7\nlr = 0.2\n").unwrap();
        let s = Settings::resolve(
            "train",
            DEFAULTS,
            Some(&p),
            vec![("lr", Some("0.3".into()))],
        )
        .unwrap();
        assert_eq!(s.get::<usize>("k").unwrap(), 7);
        assert_eq!(s.get::<f64>("lr").unwrap(), 0.3);
        assert_eq!(s.path("out"), None);
        let s = Settings::resolve("train", DEFAULTS, None, vec![("k", None)]).unwrap();
        assert_eq!(s.str("k"), "15");
    }

    #[test]
    fn unknown_key_and_wrong_command() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "bogus = 1\n").unwrap();
        assert!(matches!(
            Settings::resolve("train", DEFAULTS, Some(&p), vec![]),
            Err(CliError::Usage(_))
        ));
        std::fs::write(&p, "command = predict\n").unwrap();
        assert!(Settings::resolve("train", DEFAULTS, Some(&p), vec![]).is_err());
    }

    #[test]
    fn manifest_round_trips() {
        let s = Settings::resolve("train", DEFAULTS, None, vec![("k", Some("4".into()))]).unwrap();
        let text = s.manifest(&[]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        std::fs::write(&p, &text).unwrap();
        let again = Settings::resolve("train", DEFAULTS, Some(&p), vec![]).unwrap();
        assert_eq!(again.manifest(&[]).unwrap(), text);
    }
}
