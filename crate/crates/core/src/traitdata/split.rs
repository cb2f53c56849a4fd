use rand::seq::SliceRandom;

use super::{DataError, Entry, SparseTraitMatrix};
use crate::rng::{self, Stream};

/// Disjoint train / validation / test partition of a leaf matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub train: SparseTraitMatrix,
    pub validation: SparseTraitMatrix,
    pub test: SparseTraitMatrix,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    fn validate(&self) -> Result<(), DataError> {
        let f = [self.train, self.validation, self.test];
        let ok = f.iter().all(|x| x.is_finite() && *x > 0.0)
            && (f.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(DataError::BadFractions((
                self.train,
                self.validation,
                self.test,
            )))
        }
    }

    /// Largest-remainder apportionment of `n` items: floor every share, then
    /// hand the leftover items to the largest fractional parts (ties go to
    /// train, then validation).
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let shares = [self.train, self.validation, self.test].map(|f| f * n as f64);
        // The epsilon absorbs representation error such as 0.7 * 10 = 7.000000000000001.
        let mut counts = shares.map(|s| (s + 1e-9).floor() as usize);
        let mut left = n - counts.iter().sum::<usize>().min(n);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = shares[a] - counts[a] as f64;
            let fb = shares[b] - counts[b] as f64;
            fb.partial_cmp(&fa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        (counts[0], counts[1], counts[2])
    }
}

fn bundle(
    leaf: &SparseTraitMatrix,
    train: Vec<Entry>,
    validation: Vec<Entry>,
    test: Vec<Entry>,
    seed: u64,
) -> Result<SplitBundle, DataError> {
    let mk = |e| SparseTraitMatrix::from_entries(leaf.level(), leaf.n_rows(), leaf.n_cols(), e);
    Ok(SplitBundle {
        train: mk(train)?,
        validation: mk(validation)?,
        test: mk(test)?,
        seed,
    })
}

/// Per-row hold-out: rows with three or more entries give one test and one
/// validation entry, rows with two give one test entry, and single entries
/// always stay in training.
pub fn split_per_plant(leaf: &SparseTraitMatrix, seed: u64) -> Result<SplitBundle, DataError> {
    if leaf.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let mut rng = rng::stream(seed, Stream::Split);
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for row in 0..leaf.n_rows() {
        let mut cells = leaf.row(row).to_vec();
        cells.shuffle(&mut rng);
        match cells.len() {
            0 => {}
            1 => train.push(cells[0]),
            2 => {
                test.push(cells[0]);
                train.push(cells[1]);
            }
            _ => {
                test.push(cells[0]);
                validation.push(cells[1]);
                train.extend_from_slice(&cells[2..]);
            }
        }
    }
    bundle(leaf, train, validation, test, seed)
}

/// Entry-level random split: a seeded shuffle cut into contiguous blocks of
/// the apportioned sizes (test first, then validation, the rest train).
pub fn split_random(
    leaf: &SparseTraitMatrix,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitBundle, DataError> {
    fractions.validate()?;
    if leaf.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let mut rng = rng::stream(seed, Stream::Split);
    let mut cells = leaf.entries().to_vec();
    cells.shuffle(&mut rng);
    let (_, n_val, n_test) = fractions.counts(cells.len());
    let train = cells.split_off(n_test + n_val);
    let validation = cells.split_off(n_test);
    bundle(leaf, train, validation, cells, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, p: f64, seed: u64) -> SparseTraitMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if rng.random_bool(p) {
                    entries.push(Entry::new(r, c, rng.random_range(-2.0..2.0)));
                }
            }
        }
        SparseTraitMatrix::from_entries(5, rows, cols, entries).unwrap()
    }

    fn one_row(n: usize) -> SparseTraitMatrix {
        let entries = (0..n).map(|c| Entry::new(0, c, c as f64)).collect();
        SparseTraitMatrix::from_entries(1, 1, n.max(1), entries).unwrap()
    }

    fn sizes(b: &SplitBundle) -> (usize, usize, usize) {
        (b.train.len(), b.validation.len(), b.test.len())
    }

    #[test]
    fn small_rows_follow_the_rule() {
        assert_eq!(sizes(&split_per_plant(&one_row(1), 0).unwrap()), (1, 0, 0));
        assert_eq!(sizes(&split_per_plant(&one_row(2), 0).unwrap()), (1, 0, 1));
        assert_eq!(sizes(&split_per_plant(&one_row(3), 0).unwrap()), (1, 1, 1));
        assert_eq!(sizes(&split_per_plant(&one_row(7), 0).unwrap()), (5, 1, 1));
        assert_eq!(
            split_per_plant(&SparseTraitMatrix::empty(1, 3, 3), 0).unwrap_err(),
            DataError::EmptyInput
        );
    }

    #[test]
    fn per_plant_recount_and_determinism() {
        let leaf = random_matrix(1000, 17, 0.15, 1);
        let a = split_per_plant(&leaf, 42).unwrap();
        let b = split_per_plant(&leaf, 42).unwrap();
        assert_eq!(a, b);
        for row in 0..leaf.n_rows() {
            let n = leaf.row_len(row);
            let got = (
                a.train.row_len(row),
                a.validation.row_len(row),
                a.test.row_len(row),
            );
            let want = match n {
                0 => (0, 0, 0),
                1 => (1, 0, 0),
                2 => (1, 0, 1),
                k => (k - 2, 1, 1),
            };
            assert_eq!(got, want, "row {row}");
        }
        let union = a
            .train
            .union(&a.validation)
            .unwrap()
            .union(&a.test)
            .unwrap();
        assert_eq!(union.entries(), leaf.entries());

        // A different seed changes the test set; count how often over seeds.
        let differs = (0..100u64)
            .filter(|s| split_per_plant(&leaf, 1000 + s).unwrap().test != a.test)
            .count();
        assert!(differs as f64 / 100.0 > 0.99);
    }

    #[test]
    fn random_split_counts() {
        let f = SplitFractions::default();
        assert_eq!(f.counts(10), (8, 1, 1));
        assert_eq!(f.counts(9), (7, 1, 1));
        assert_eq!(f.counts(100), (80, 10, 10));
        assert_eq!(f.counts(1), (1, 0, 0));
        assert_eq!(f.counts(0), (0, 0, 0));
        let leaf = random_matrix(5, 2, 1.0, 0);
        assert_eq!(sizes(&split_random(&leaf, f, 3).unwrap()), (8, 1, 1));
        let bad = SplitFractions {
            train: 0.9,
            validation: 0.1,
            test: 0.1,
        };
        assert!(matches!(
            split_random(&leaf, bad, 3),
            Err(DataError::BadFractions(_))
        ));
    }

    #[test]
    fn random_split_is_exact_partition() {
        for seed in 0..20 {
            let leaf = random_matrix(50, 9, 0.3, seed);
            let b = split_random(&leaf, SplitFractions::default(), seed).unwrap();
            let mut seen: Vec<(usize, usize)> = Vec::new();
            for m in [&b.train, &b.validation, &b.test] {
                for e in m.entries() {
                    assert_eq!(leaf.get(e.row, e.col), Some(e.value));
                    seen.push((e.row, e.col));
                }
            }
            let total = seen.len();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), total, "overlap");
            assert_eq!(total, leaf.len());
            assert_eq!(sizes(&b), SplitFractions::default().counts(leaf.len()));
        }
    }
}
