//! Balanced row hierarchy (e.g. phylogenetic group → family → genus →
//! species → plant).
//!
//! Levels are numbered `1..=L` from the top; level `L` holds the leaves, which
//! are the rows of the observed data matrix. The implicit root above level 1
//! carries the prior factor `u⁽⁰⁾` and has no index of its own.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("no lineage records supplied")]
    EmptyInput,
    #[error("leaf `{0}` appears more than once")]
    DuplicateLeaf(String),
    #[error("label `{label}` at level {level} is assigned to two different parents (`{first}` and `{second}`)")]
    InconsistentLineage {
        level: usize,
        label: String,
        first: String,
        second: String,
    },
    #[error("leaf `{leaf}` has {found} ancestor labels, expected {expected}")]
    LineageLength {
        leaf: String,
        expected: usize,
        found: usize,
    },
    #[error("empty label in lineage of leaf `{0}`")]
    EmptyLabel(String),
    #[error("index {index} out of range at level {level} ({len} nodes)")]
    IndexOutOfRange {
        level: usize,
        index: usize,
        len: usize,
    },
    #[error("level {level} outside 1..={depth}")]
    BadLevel { level: usize, depth: usize },
}

/// One leaf and its ancestors ordered from the top level down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineageRecord {
    pub leaf: String,
    pub ancestors: Vec<String>,
}

impl LineageRecord {
    pub fn new(leaf: impl Into<String>, ancestors: Vec<String>) -> Self {
        Self {
            leaf: leaf.into(),
            ancestors,
        }
    }
}

/// Immutable balanced tree. Node indices at each level are dense and follow
/// first-appearance order of their labels in the input records.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxonomyTree {
    level_names: Vec<String>,
    labels: Vec<Vec<String>>,
    // parent[i][n]: parent of node n at internal level i (i >= 1) in level i - 1.
    parent: Vec<Vec<usize>>,
    // children[i][n]: children of node n at internal level i in level i + 1.
    children: Vec<Vec<Vec<usize>>>,
    leaf_lookup: HashMap<String, usize>,
}

impl TaxonomyTree {
    /// Builds and validates a tree from lineage records.
    ///
    /// `level_names` has one entry per level including the leaf level, so
    /// every record must carry `level_names.len() - 1` ancestors.
    pub fn build(records: &[LineageRecord], level_names: &[String]) -> Result<Self, TaxonomyError> {
        if records.is_empty() || level_names.is_empty() {
            return Err(TaxonomyError::EmptyInput);
        }
        let depth = level_names.len();
        let mut labels: Vec<Vec<String>> = vec![Vec::new(); depth];
        let mut lookup: Vec<HashMap<String, usize>> = vec![HashMap::new(); depth];
        let mut parent: Vec<Vec<usize>> = vec![Vec::new(); depth];

        for rec in records {
            if rec.ancestors.len() != depth - 1 {
                return Err(TaxonomyError::LineageLength {
                    leaf: rec.leaf.clone(),
                    expected: depth - 1,
                    found: rec.ancestors.len(),
                });
            }
            if rec.leaf.is_empty() || rec.ancestors.iter().any(|a| a.is_empty()) {
                return Err(TaxonomyError::EmptyLabel(rec.leaf.clone()));
            }
            if lookup[depth - 1].contains_key(&rec.leaf) {
                return Err(TaxonomyError::DuplicateLeaf(rec.leaf.clone()));
            }
            let path = rec.ancestors.iter().chain(std::iter::once(&rec.leaf));
            let mut above: Option<usize> = None;
            for (lvl, label) in path.enumerate() {
                let idx = match lookup[lvl].get(label) {
                    Some(&idx) => {
                        if let Some(p) = above {
                            let known = parent[lvl][idx];
                            if known != p {
                                return Err(TaxonomyError::InconsistentLineage {
                                    level: lvl + 1,
                                    label: label.clone(),
                                    first: labels[lvl - 1][known].clone(),
                                    second: labels[lvl - 1][p].clone(),
                                });
                            }
                        }
                        idx
                    }
                    None => {
                        let idx = labels[lvl].len();
                        labels[lvl].push(label.clone());
                        lookup[lvl].insert(label.clone(), idx);
                        if let Some(p) = above {
                            parent[lvl].push(p);
                        }
                        idx
                    }
                };
                above = Some(idx);
            }
        }

        let mut children: Vec<Vec<Vec<usize>>> =
            labels.iter().map(|l| vec![Vec::new(); l.len()]).collect();
        for lvl in 1..depth {
            for (n, &p) in parent[lvl].iter().enumerate() {
                children[lvl - 1][p].push(n);
            }
        }
        let leaf_lookup = lookup.pop().unwrap_or_default();
        Ok(Self {
            level_names: level_names.to_vec(),
            labels,
            parent,
            children,
            leaf_lookup,
        })
    }

    /// Single-level tree over `n_leaves` leaves labelled `0..n_leaves`.
    pub fn flat(n_leaves: usize) -> Self {
        let records: Vec<LineageRecord> = (0..n_leaves)
            .map(|i| LineageRecord::new(i.to_string(), Vec::new()))
            .collect();
        if records.is_empty() {
            return Self {
                level_names: vec!["leaf".into()],
                labels: vec![Vec::new()],
                parent: vec![Vec::new()],
                children: vec![Vec::new()],
                leaf_lookup: HashMap::new(),
            };
        }
        Self::build(&records, &["leaf".to_string()]).expect("flat tree is always valid")
    }

    /// Number of levels `L`.
    pub fn depth(&self) -> usize {
        self.level_names.len()
    }

    pub fn level_names(&self) -> &[String] {
        &self.level_names
    }

    /// `N⁽ˡ⁾` for `level` in `1..=L`.
    pub fn nodes_at(&self, level: usize) -> usize {
        self.labels[level - 1].len()
    }

    pub fn nodes_per_level(&self) -> Vec<usize> {
        self.labels.iter().map(Vec::len).collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.labels[self.depth() - 1].len()
    }

    /// Parent index in `level - 1`; `None` at level 1 where the parent is the root.
    pub fn parent(&self, level: usize, node: usize) -> Option<usize> {
        if level <= 1 {
            None
        } else {
            Some(self.parent[level - 1][node])
        }
    }

    /// Children of `node` at `level + 1`; empty at the leaf level.
    pub fn children(&self, level: usize, node: usize) -> &[usize] {
        &self.children[level - 1][node]
    }

    pub fn label(&self, level: usize, node: usize) -> &str {
        &self.labels[level - 1][node]
    }

    pub fn labels(&self, level: usize) -> &[String] {
        &self.labels[level - 1]
    }

    pub fn find_leaf(&self, label: &str) -> Option<usize> {
        self.leaf_lookup.get(label).copied()
    }

    fn check_level(&self, level: usize) -> Result<(), TaxonomyError> {
        if level == 0 || level > self.depth() {
            Err(TaxonomyError::BadLevel {
                level,
                depth: self.depth(),
            })
        } else {
            Ok(())
        }
    }

    /// Ancestor of `leaf` at `level`; the identity at level `L`.
    pub fn ancestor(&self, leaf: usize, level: usize) -> Result<usize, TaxonomyError> {
        self.check_level(level)?;
        let depth = self.depth();
        if leaf >= self.leaf_count() {
            return Err(TaxonomyError::IndexOutOfRange {
                level: depth,
                index: leaf,
                len: self.leaf_count(),
            });
        }
        let mut node = leaf;
        for lvl in (level + 1..=depth).rev() {
            node = self.parent[lvl - 1][node];
        }
        Ok(node)
    }

    /// Ancestors of every leaf at `level`, indexed by leaf.
    pub fn ancestors_at(&self, level: usize) -> Vec<usize> {
        let depth = self.depth();
        let mut map: Vec<usize> = (0..self.leaf_count()).collect();
        for lvl in (level + 1..=depth).rev() {
            for node in map.iter_mut() {
                *node = self.parent[lvl - 1][*node];
            }
        }
        map
    }

    /// The lineage records this tree was built from, in leaf order.
    pub fn records(&self) -> Vec<LineageRecord> {
        let depth = self.depth();
        (0..self.leaf_count())
            .map(|leaf| {
                let ancestors = (1..depth)
                    .map(|lvl| {
                        let node = self.ancestor(leaf, lvl).expect("valid leaf");
                        self.labels[lvl - 1][node].clone()
                    })
                    .collect();
                LineageRecord::new(self.labels[depth - 1][leaf].clone(), ancestors)
            })
            .collect()
    }

    /// Tree keeping the leaves and the top `upper_levels` ancestor levels.
    ///
    /// `truncate(0)` is the flat tree used for plain PMF; `truncate(L - 1)`
    /// reproduces the full tree. Leaf indices are preserved.
    pub fn truncate(&self, upper_levels: usize) -> Result<Self, TaxonomyError> {
        let depth = self.depth();
        if upper_levels >= depth {
            return Err(TaxonomyError::BadLevel {
                level: upper_levels + 1,
                depth,
            });
        }
        let records: Vec<LineageRecord> = self
            .records()
            .into_iter()
            .map(|mut r| {
                r.ancestors.truncate(upper_levels);
                r
            })
            .collect();
        let mut names: Vec<String> = self.level_names[..upper_levels].to_vec();
        names.push(self.level_names[depth - 1].clone());
        Self::build(&records, &names)
    }
}
