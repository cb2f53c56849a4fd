//! Text file formats: taxonomy and trait CSVs, the transform sidecar,
//! factor files, mean tables, traces, reports and exports.
//!
//! Floating-point values are written in Rust's shortest round-trip form
//! unless noted, so reading a file back gives the exact same `f64`. Every
//! writer replaces its target atomically (temporary file in the same
//! directory, then rename).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::baseline::{MeanCell, MeanTables};
use crate::evaluation::{AblationRow, CorrelationReport, Part, PartAbRow, ScatterRow};
use crate::factorization::{FactorError, FactorMatrix, FactorSet, TrainTrace};
use crate::taxonomy::{LineageRecord, TaxonomyError, TaxonomyTree};
use crate::traitdata::{
    ColumnStats, DataError, Entry, SparseTraitMatrix, StdConvention, TraitStats,
};

/// Name given to the leaf level, which the taxonomy header does not name.
pub const LEAF_LEVEL: &str = "leaf";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}, line {line}: {msg}")]
    Format {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Taxonomy {
        path: PathBuf,
        #[source]
        source: TaxonomyError,
    },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: DataError,
    },
    #[error("{path}: {source}")]
    Factor {
        path: PathBuf,
        #[source]
        source: FactorError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Replaces `path` with `contents` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| IoError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, IoError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err(path))
}

fn parse_f64(path: &Path, line: usize, field: &str, what: &str) -> Result<f64, IoError> {
    field
        .parse::<f64>()
        .map_err(|_| format_err(path, line, format!("{what} `{field}` is not a number")))
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

// ---- taxonomy ----

/// Taxonomy CSV: header `leaf_id,<level 1>,…,<level L−1>`, one row per leaf.
pub fn read_taxonomy(path: &Path) -> Result<TaxonomyTree, IoError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.get(0) != Some("leaf_id") {
        return Err(format_err(path, 1, "header must start with `leaf_id`"));
    }
    let mut names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    names.push(LEAF_LEVEL.to_string());
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let mut fields = rec.iter();
        let leaf = fields.next().unwrap_or_default();
        records.push(LineageRecord::new(
            leaf,
            fields.map(str::to_string).collect(),
        ));
    }
    TaxonomyTree::build(&records, &names).map_err(|source| IoError::Taxonomy {
        path: path.to_path_buf(),
        source,
    })
}

pub fn taxonomy_csv(tree: &TaxonomyTree) -> String {
    let depth = tree.depth();
    let mut out = String::from("leaf_id");
    for name in &tree.level_names()[..depth - 1] {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for rec in tree.records() {
        out.push_str(&rec.leaf);
        for a in &rec.ancestors {
            out.push(',');
            out.push_str(a);
        }
        out.push('\n');
    }
    out
}

pub fn write_taxonomy(path: &Path, tree: &TaxonomyTree) -> Result<(), IoError> {
    write_atomic(path, taxonomy_csv(tree).as_bytes())
}

// ---- trait data ----

/// Column ids of a trait matrix, in column order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraitIds {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl TraitIds {
    pub fn new(ids: Vec<String>) -> Self {
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Self { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, col: usize) -> &str {
        &self.ids[col]
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.ids
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), self.ids.len() - 1);
        self.ids.len() - 1
    }
}

fn leaf_index(tree: &TaxonomyTree, path: &Path, line: usize, leaf: &str) -> Result<usize, IoError> {
    tree.find_leaf(leaf)
        .ok_or_else(|| format_err(path, line, format!("leaf `{leaf}` is not in the taxonomy")))
}

/// Trait CSV in long form, header `leaf_id,trait_id,value`.
///
/// With `known` set, trait ids must come from it and columns keep its order;
/// otherwise columns are numbered by first appearance.
pub fn read_traits(
    path: &Path,
    tree: &TaxonomyTree,
    known: Option<&TraitIds>,
) -> Result<(SparseTraitMatrix, TraitIds), IoError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().collect::<Vec<_>>() != ["leaf_id", "trait_id", "value"] {
        return Err(format_err(
            path,
            1,
            "header must be `leaf_id,trait_id,value`",
        ));
    }
    let mut ids = known.cloned().unwrap_or_default();
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = record_line(&rec);
        if rec.len() != 3 {
            return Err(format_err(path, line, "expected 3 fields"));
        }
        let row = leaf_index(tree, path, line, &rec[0])?;
        let col = match known {
            Some(k) => k
                .find(&rec[1])
                .ok_or_else(|| format_err(path, line, format!("unknown trait `{}`", &rec[1])))?,
            None => ids.intern(&rec[1]),
        };
        let value = parse_f64(path, line, &rec[2], "value")?;
        if !value.is_finite() {
            return Err(format_err(path, line, "value is not finite"));
        }
        entries.push(Entry::new(row, col, value));
    }
    let m = SparseTraitMatrix::from_entries(tree.depth(), tree.leaf_count(), ids.len(), entries)
        .map_err(|source| IoError::Data {
            path: path.to_path_buf(),
            source,
        })?;
    Ok((m, ids))
}

pub fn traits_csv(m: &SparseTraitMatrix, tree: &TaxonomyTree, ids: &TraitIds) -> String {
    let mut out = String::from("leaf_id,trait_id,value\n");
    let leaves = tree.labels(tree.depth());
    for e in m.entries() {
        let _ = writeln!(out, "{},{},{}", leaves[e.row], ids.get(e.col), e.value);
    }
    out
}

pub fn write_traits(
    path: &Path,
    m: &SparseTraitMatrix,
    tree: &TaxonomyTree,
    ids: &TraitIds,
) -> Result<(), IoError> {
    write_atomic(path, traits_csv(m, tree, ids).as_bytes())
}

/// Target cells (`leaf_id,trait_id`) for prediction; extra columns are
/// ignored, so a trait CSV can be used directly.
pub fn read_cells(
    path: &Path,
    tree: &TaxonomyTree,
    ids: &TraitIds,
) -> Result<SparseTraitMatrix, IoError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.get(0) != Some("leaf_id") || header.get(1) != Some("trait_id") {
        return Err(format_err(
            path,
            1,
            "header must start with `leaf_id,trait_id`",
        ));
    }
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = record_line(&rec);
        let row = leaf_index(tree, path, line, rec.get(0).unwrap_or_default())?;
        let tid = rec.get(1).unwrap_or_default();
        let col = ids
            .find(tid)
            .ok_or_else(|| format_err(path, line, format!("unknown trait `{tid}`")))?;
        entries.push(Entry::new(row, col, 0.0));
    }
    SparseTraitMatrix::from_entries(tree.depth(), tree.leaf_count(), ids.len(), entries).map_err(
        |source| IoError::Data {
            path: path.to_path_buf(),
            source,
        },
    )
}

// ---- transform statistics ----

/// Sidecar `trait_id,lm,ls,std_convention`; columns without statistics have
/// empty `lm` and `ls` fields.
pub fn stats_csv(stats: &TraitStats, ids: &TraitIds) -> String {
    let mut out = String::from("trait_id,lm,ls,std_convention\n");
    let conv = stats.convention().as_str();
    for (col, s) in stats.columns().iter().enumerate() {
        match s {
            Some(c) => {
                let _ = writeln!(out, "{},{},{},{conv}", ids.get(col), c.lm, c.ls);
            }
            None => {
                let _ = writeln!(out, "{},,,{conv}", ids.get(col));
            }
        }
    }
    out
}

pub fn write_stats(path: &Path, stats: &TraitStats, ids: &TraitIds) -> Result<(), IoError> {
    write_atomic(path, stats_csv(stats, ids).as_bytes())
}

pub fn read_stats(path: &Path) -> Result<(TraitStats, TraitIds), IoError> {
    let mut rdr = reader(path)?;
    let mut ids = Vec::new();
    let mut columns = Vec::new();
    let mut convention = None;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = record_line(&rec);
        if rec.len() != 4 {
            return Err(format_err(path, line, "expected 4 fields"));
        }
        ids.push(rec[0].to_string());
        columns.push(if rec[1].is_empty() && rec[2].is_empty() {
            None
        } else {
            Some(ColumnStats {
                lm: parse_f64(path, line, &rec[1], "lm")?,
                ls: parse_f64(path, line, &rec[2], "ls")?,
            })
        });
        let c = StdConvention::parse(&rec[3])
            .ok_or_else(|| format_err(path, line, format!("unknown convention `{}`", &rec[3])))?;
        if convention.is_some_and(|prev| prev != c) {
            return Err(format_err(path, line, "mixed std conventions"));
        }
        convention = Some(c);
    }
    let stats = TraitStats::new(columns, convention.unwrap_or(StdConvention::Sample));
    Ok((stats, TraitIds::new(ids)))
}

// ---- factor files ----

fn factor_file(dir: &Path, side: char, level: usize) -> PathBuf {
    dir.join(format!("factors_{side}_{level}.txt"))
}

/// Header `level,side,k,n`, then one k-vector per line with 17 significant
/// digits.
pub fn factor_matrix_text(level: usize, side: char, m: &FactorMatrix) -> String {
    let mut out = format!("level,side,k,n\n{level},{side},{},{}\n", m.k(), m.n());
    for i in 0..m.n() {
        let line: Vec<String> = m.col(i).iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn parse_factor_matrix(
    path: &Path,
    text: &str,
    level: usize,
    side: char,
) -> Result<FactorMatrix, IoError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("level,side,k,n") {
        return Err(format_err(path, 1, "expected header `level,side,k,n`"));
    }
    let meta: Vec<&str> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(str::trim)
        .collect();
    let bad_meta = || format_err(path, 2, "malformed `level,side,k,n` line");
    if meta.len() != 4 {
        return Err(bad_meta());
    }
    let l: usize = meta[0].parse().map_err(|_| bad_meta())?;
    let k: usize = meta[2].parse().map_err(|_| bad_meta())?;
    let n: usize = meta[3].parse().map_err(|_| bad_meta())?;
    if l != level || meta[1] != side.to_string() {
        return Err(format_err(
            path,
            2,
            format!("expected level {level} side {side}"),
        ));
    }
    let mut data = Vec::with_capacity(k * n);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(parse_f64(path, i + 3, tok, "factor value")?);
        }
        if data.len() - before != k {
            return Err(format_err(path, i + 3, format!("expected {k} values")));
        }
        rows += 1;
    }
    if rows != n {
        return Err(format_err(
            path,
            0,
            format!("expected {n} vectors, found {rows}"),
        ));
    }
    FactorMatrix::from_data(k, n, data).map_err(|source| IoError::Factor {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `factors_u_<ℓ>.txt` and `factors_v_<ℓ>.txt` for `ℓ = 0..=L`.
pub fn write_factor_set(dir: &Path, f: &FactorSet) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for level in 0..=f.depth() {
        for (side, m) in [('u', f.u(level)), ('v', f.v(level))] {
            let path = factor_file(dir, side, level);
            write_atomic(&path, factor_matrix_text(level, side, m).as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn read_factor_set(dir: &Path) -> Result<FactorSet, IoError> {
    let (mut u, mut v) = (Vec::new(), Vec::new());
    for level in 0.. {
        let pu = factor_file(dir, 'u', level);
        if !pu.exists() {
            break;
        }
        let pv = factor_file(dir, 'v', level);
        u.push(parse_factor_matrix(&pu, &read_text(&pu)?, level, 'u')?);
        v.push(parse_factor_matrix(&pv, &read_text(&pv)?, level, 'v')?);
    }
    FactorSet::from_parts(u, v).map_err(|source| IoError::Factor {
        path: dir.to_path_buf(),
        source,
    })
}

// ---- mean tables ----

/// `level,node_id,trait_id,mean,count`; level 0 is the global table with an
/// empty node id.
pub fn mean_tables_csv(t: &MeanTables, tree: &TaxonomyTree, ids: &TraitIds) -> String {
    let mut out = String::from("level,node_id,trait_id,mean,count\n");
    for level in 0..=t.upper_levels() {
        for node in 0..t.nodes_at(level) {
            for col in 0..t.n_cols() {
                if let Some(c) = t.cell(level, node, col) {
                    let label = if level == 0 {
                        ""
                    } else {
                        tree.label(level, node)
                    };
                    let _ = writeln!(
                        out,
                        "{level},{label},{},{},{}",
                        ids.get(col),
                        c.mean,
                        c.count
                    );
                }
            }
        }
    }
    out
}

pub fn write_mean_tables(
    path: &Path,
    t: &MeanTables,
    tree: &TaxonomyTree,
    ids: &TraitIds,
) -> Result<(), IoError> {
    write_atomic(path, mean_tables_csv(t, tree, ids).as_bytes())
}

pub fn read_mean_tables(
    path: &Path,
    tree: &TaxonomyTree,
    ids: &TraitIds,
) -> Result<MeanTables, IoError> {
    let m = ids.len();
    let upper = tree.depth() - 1;
    let mut levels: Vec<Vec<Option<MeanCell>>> = (1..=upper)
        .map(|l| vec![None; tree.nodes_at(l) * m])
        .collect();
    let mut global = vec![None; m];
    let lookups: Vec<HashMap<&str, usize>> = (1..=upper)
        .map(|l| {
            tree.labels(l)
                .iter()
                .enumerate()
                .map(|(i, s)| (s.as_str(), i))
                .collect()
        })
        .collect();
    let mut rdr = reader(path)?;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = record_line(&rec);
        if rec.len() != 5 {
            return Err(format_err(path, line, "expected 5 fields"));
        }
        let level: usize = rec[0]
            .parse()
            .map_err(|_| format_err(path, line, "bad level"))?;
        if level > upper {
            return Err(format_err(
                path,
                line,
                format!("level {level} above {upper}"),
            ));
        }
        let col = ids
            .find(&rec[2])
            .ok_or_else(|| format_err(path, line, format!("unknown trait `{}`", &rec[2])))?;
        let cell = Some(MeanCell {
            mean: parse_f64(path, line, &rec[3], "mean")?,
            count: rec[4]
                .parse()
                .map_err(|_| format_err(path, line, "bad count"))?,
        });
        if level == 0 {
            global[col] = cell;
        } else {
            let node = *lookups[level - 1]
                .get(&rec[1])
                .ok_or_else(|| format_err(path, line, format!("unknown node `{}`", &rec[1])))?;
            levels[level - 1][node * m + col] = cell;
        }
    }
    Ok(MeanTables::from_parts(m, levels, global))
}

// ---- trace, reports, exports ----

/// One line per level visit; `validation_rmse` is filled on the last visit
/// of each pass. Stop reason and best pass follow as comment lines.
pub fn trace_csv(trace: &TrainTrace) -> String {
    let mut out = String::from("pass,direction,level,objective,validation_rmse\n");
    for (i, s) in trace.steps.iter().enumerate() {
        let pass_end = trace.steps.get(i + 1).is_none_or(|n| n.pass != s.pass);
        let rmse = if pass_end {
            trace
                .passes
                .iter()
                .find(|p| p.pass == s.pass)
                .and_then(|p| p.validation_rmse)
                .map(|r| r.to_string())
                .unwrap_or_default()
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{rmse}",
            s.pass,
            s.direction.as_str(),
            s.level,
            s.objective
        );
    }
    let _ = writeln!(out, "# stop_reason = {}", trace.stop_reason.as_str());
    let _ = writeln!(out, "# best_pass = {}", trace.best_pass);
    out
}

/// Tab-separated `levels method rmse_mean rmse_std repeats`.
pub fn report_tsv(rows: &[AblationRow]) -> String {
    let mut out = String::from("levels\tmethod\trmse_mean\trmse_std\trepeats\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.levels, r.method, r.rmse_mean, r.rmse_std, r.repeats
        );
    }
    out
}

pub fn scatter_csv(rows: &[ScatterRow], tree: &TaxonomyTree) -> String {
    let leaves = tree.labels(tree.depth());
    let mut out = String::from("row_id,truth,prediction\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", leaves[r.row], r.truth, r.prediction);
    }
    out
}

pub fn correlation_csv(report: &CorrelationReport, tree: &TaxonomyTree) -> String {
    let leaves = tree.labels(tree.depth());
    let mut out = String::from("row_id,truth_i,truth_j,pred_i,pred_j\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            leaves[r.row], r.truth_i, r.truth_j, r.pred_i, r.pred_j
        );
    }
    let _ = writeln!(out, "pearson_true,{}", report.pearson_true);
    let _ = writeln!(out, "pearson_pred,{}", report.pearson_pred);
    out
}

/// `method,trait_id,part,rmse,count`; `rmse` is empty for an empty cell.
pub fn part_ab_csv(rows: &[PartAbRow], ids: &TraitIds) -> String {
    let mut out = String::from("method,trait_id,part,rmse,count\n");
    for r in rows {
        let part = match r.part {
            Part::A => "A",
            Part::B => "B",
        };
        let rmse = r.rmse.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{part},{rmse},{}",
            r.method,
            ids.get(r.col),
            r.count
        );
    }
    out
}
