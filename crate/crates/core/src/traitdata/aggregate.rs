use super::{DataError, Entry, SparseTraitMatrix};
use crate::taxonomy::TaxonomyTree;

/// Builds the level matrices `X⁽¹⁾ … X⁽ᴸ⁾` from the leaf matrix.
///
/// Each upper entry `(n, m)` is the arithmetic mean of the observed leaf
/// values in column `m` over all leaves below `n` (not a mean of child-level
/// means). The last element is the leaf matrix itself.
pub fn aggregate_levels(
    leaf: &SparseTraitMatrix,
    tree: &TaxonomyTree,
) -> Result<Vec<SparseTraitMatrix>, DataError> {
    if leaf.n_rows() != tree.leaf_count() {
        return Err(DataError::RowMismatch {
            expected: tree.leaf_count(),
            found: leaf.n_rows(),
        });
    }
    let depth = tree.depth();
    let m = leaf.n_cols();
    let mut out = Vec::with_capacity(depth);
    for level in 1..depth {
        let owner = tree.ancestors_at(level);
        let n = tree.nodes_at(level);
        let mut sum = vec![0.0f64; n * m];
        let mut count = vec![0u32; n * m];
        for e in leaf.entries() {
            let cell = owner[e.row] * m + e.col;
            sum[cell] += e.value;
            count[cell] += 1;
        }
        let entries = (0..n * m)
            .filter(|&c| count[c] > 0)
            .map(|c| Entry::new(c / m, c % m, sum[c] / f64::from(count[c])))
            .collect();
        out.push(SparseTraitMatrix::from_entries(level, n, m, entries)?);
    }
    out.push(leaf.clone().with_level(depth));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::LineageRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_plant_species_mean() {
        let recs = vec![
            LineageRecord::new("a", names(&["s"])),
            LineageRecord::new("b", names(&["s"])),
        ];
        let tree = TaxonomyTree::build(&recs, &names(&["species", "plant"])).unwrap();
        let leaf = SparseTraitMatrix::from_entries(
            2,
            2,
            2,
            vec![Entry::new(0, 0, 2.0), Entry::new(1, 0, 4.0)],
        )
        .unwrap();
        let levels = aggregate_levels(&leaf, &tree).unwrap();
        assert_eq!(levels.len(), 2);
        assert_eq!(levels[0].get(0, 0), Some(3.0));
        assert_eq!(levels[0].get(0, 1), None);
        assert_eq!(levels[1], leaf);
    }

    #[test]
    fn row_mismatch() {
        let tree = TaxonomyTree::flat(3);
        let leaf = SparseTraitMatrix::empty(1, 2, 1);
        assert_eq!(
            aggregate_levels(&leaf, &tree).unwrap_err(),
            DataError::RowMismatch {
                expected: 3,
                found: 2
            }
        );
    }

    #[test]
    fn random_three_level_matches_descendant_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut recs = Vec::new();
        for i in 0..60 {
            let g = rng.random_range(0..4);
            let s = g * 10 + rng.random_range(0..3);
            recs.push(LineageRecord::new(
                format!("p{i}"),
                vec![format!("g{g}"), format!("s{s}")],
            ));
        }
        let tree = TaxonomyTree::build(&recs, &names(&["genus", "species", "plant"])).unwrap();
        let m = 5;
        let mut entries = Vec::new();
        for r in 0..60 {
            for c in 0..m {
                if rng.random_bool(0.4) {
                    entries.push(Entry::new(r, c, rng.random_range(-3.0..3.0)));
                }
            }
        }
        let leaf = SparseTraitMatrix::from_entries(3, 60, m, entries).unwrap();
        let levels = aggregate_levels(&leaf, &tree).unwrap();
        for level in 1..=2 {
            let mat = &levels[level - 1];
            assert_eq!(mat.level(), level);
            for node in 0..tree.nodes_at(level) {
                let label = tree.label(level, node);
                for c in 0..m {
                    let vals: Vec<f64> = recs
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| r.ancestors[level - 1] == label)
                        .filter_map(|(i, _)| leaf.get(i, c))
                        .collect();
                    match mat.get(node, c) {
                        None => assert!(vals.is_empty()),
                        Some(v) => {
                            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                            assert!((v - mean).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}
