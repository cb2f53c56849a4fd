//! Sampling from the hierarchical generative model.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::factors::{dot, FactorSet};
use super::FactorError;
use crate::rng::{self, Stream};
use crate::taxonomy::TaxonomyTree;
use crate::traitdata::{Entry, SparseTraitMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub k: usize,
    pub n_cols: usize,
    pub sigma_u: f64,
    pub sigma_v: f64,
    /// Observation noise.
    pub sigma: f64,
    /// Probability that a cell is missing, one value per level `1..=L`.
    pub missing_rates: Vec<f64>,
    pub seed: u64,
}

impl SynthConfig {
    /// Defaults for a tree of `depth` levels: noise scales 0.3 / 0.3 / 0.1,
    /// no missing cells.
    pub fn new(k: usize, n_cols: usize, depth: usize, seed: u64) -> Self {
        Self {
            k,
            n_cols,
            sigma_u: 0.3,
            sigma_v: 0.3,
            sigma: 0.1,
            missing_rates: vec![0.0; depth],
            seed,
        }
    }

    fn validate(&self, tree: &TaxonomyTree) -> Result<(), FactorError> {
        if self.k == 0 || self.n_cols == 0 {
            return Err(FactorError::BadHyperparams(
                "k and the column count must be at least 1".into(),
            ));
        }
        for s in [self.sigma_u, self.sigma_v, self.sigma] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(FactorError::BadSigma(s));
            }
        }
        if self.missing_rates.len() != tree.depth() {
            return Err(FactorError::DimensionMismatch(format!(
                "{} missing rates for a {}-level tree",
                self.missing_rates.len(),
                tree.depth()
            )));
        }
        for &r in &self.missing_rates {
            if !(0.0..1.0).contains(&r) {
                return Err(FactorError::BadRate(r));
            }
        }
        Ok(())
    }
}

fn gaussian(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated scale")
}

/// Ground-truth factors: standard normal roots, then each level drawn
/// around its parent (rows) or the same column one level up.
pub fn sample_factors(tree: &TaxonomyTree, cfg: &SynthConfig) -> Result<FactorSet, FactorError> {
    cfg.validate(tree)?;
    let mut rng = rng::stream(rng::derive_seed(cfg.seed, Stream::Synth, 0), Stream::Synth);
    let mut f = FactorSet::for_tree(cfg.k, tree, cfg.n_cols);
    let (u0, v0) = f.level_mut(0);
    for x in u0.as_mut_slice().iter_mut().chain(v0.as_mut_slice()) {
        *x = rng.sample(StandardNormal);
    }
    let (du, dv) = (gaussian(cfg.sigma_u), gaussian(cfg.sigma_v));
    for level in 1..=tree.depth() {
        for n in 0..tree.nodes_at(level) {
            let p = tree.parent(level, n).unwrap_or(0);
            let parent = f.u(level - 1).col(p).to_vec();
            for (x, pj) in f.u_mut(level).col_mut(n).iter_mut().zip(parent) {
                *x = pj + du.sample(&mut rng);
            }
        }
        for m in 0..cfg.n_cols {
            let prev = f.v(level - 1).col(m).to_vec();
            for (x, pj) in f.v_mut(level).col_mut(m).iter_mut().zip(prev) {
                *x = pj + dv.sample(&mut rng);
            }
        }
    }
    Ok(f)
}

/// Observations of one level: each cell kept with probability
/// `1 − missing_rate`, valued `⟨u, v⟩ + N(0, σ²)`.
pub fn sample_level_data(
    factors: &FactorSet,
    level: usize,
    missing_rate: f64,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SparseTraitMatrix, FactorError> {
    if !(0.0..1.0).contains(&missing_rate) {
        return Err(FactorError::BadRate(missing_rate));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(FactorError::BadSigma(sigma));
    }
    if level == 0 || level > factors.depth() {
        return Err(FactorError::BadLevel {
            level,
            depth: factors.depth(),
        });
    }
    let noise = gaussian(sigma);
    let (u, v) = (factors.u(level), factors.v(level));
    let mut entries = Vec::new();
    for n in 0..u.n() {
        for m in 0..v.n() {
            if rng.random::<f64>() < missing_rate {
                continue;
            }
            let x = dot(u.col(n), v.col(m)) + noise.sample(rng);
            entries.push(Entry::new(n, m, x));
        }
    }
    Ok(SparseTraitMatrix::from_entries(
        level,
        u.n(),
        v.n(),
        entries,
    )?)
}

/// Data for every level (index `ℓ − 1`) together with the true factors.
///
/// Upper-level matrices are sampled directly from their own factors, not
/// averaged from the leaves.
pub fn generate_synthetic(
    tree: &TaxonomyTree,
    cfg: &SynthConfig,
) -> Result<(Vec<SparseTraitMatrix>, FactorSet), FactorError> {
    let factors = sample_factors(tree, cfg)?;
    let data = (1..=tree.depth())
        .map(|level| {
            let mut rng = rng::stream(
                rng::derive_seed(cfg.seed, Stream::Synth, level as u64),
                Stream::Synth,
            );
            sample_level_data(
                &factors,
                level,
                cfg.missing_rates[level - 1],
                cfg.sigma,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((data, factors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::objective::tests::random_tree;

    #[test]
    fn noiseless_chain_collapses_to_root() {
        let tree = random_tree(&[2, 3, 2]);
        let cfg = SynthConfig {
            sigma_u: 0.0,
            sigma_v: 0.0,
            sigma: 0.0,
            ..SynthConfig::new(3, 4, 3, 1)
        };
        let (data, f) = generate_synthetic(&tree, &cfg).unwrap();
        for level in 1..=3 {
            for n in 0..tree.nodes_at(level) {
                assert_eq!(f.u(level).col(n), f.u(0).col(0));
            }
            assert_eq!(f.v(level), f.v(0));
        }
        for m in 0..4 {
            let vals: Vec<f64> = data[2].col(m).map(|e| e.value).collect();
            assert!(vals.iter().all(|&x| x == vals[0]));
            assert_eq!(vals[0], dot(f.u(0).col(0), f.v(0).col(m)));
        }
    }

    #[test]
    fn no_missing_gives_dense_levels() {
        let tree = random_tree(&[3, 4]);
        let (data, _) = generate_synthetic(&tree, &SynthConfig::new(2, 5, 2, 3)).unwrap();
        assert_eq!(data[0].len(), 3 * 5);
        assert_eq!(data[1].len(), 12 * 5);
    }

    #[test]
    fn missing_rate_thins_entries() {
        let tree = random_tree(&[10, 20]);
        let cfg = SynthConfig {
            missing_rates: vec![0.0, 0.9],
            ..SynthConfig::new(2, 50, 2, 3)
        };
        let (data, _) = generate_synthetic(&tree, &cfg).unwrap();
        let kept = data[1].len() as f64 / (200.0 * 50.0);
        assert!((kept - 0.1).abs() < 0.02, "{kept}");
    }

    #[test]
    fn step_variance_matches_sigma_u() {
        let tree = random_tree(&[50, 40]);
        let cfg = SynthConfig {
            sigma_u: 0.3,
            ..SynthConfig::new(5, 1, 2, 11)
        };
        let f = sample_factors(&tree, &cfg).unwrap();
        let mut diffs = Vec::new();
        for n in 0..tree.nodes_at(2) {
            let p = tree.parent(2, n).unwrap();
            for (a, b) in f.u(2).col(n).iter().zip(f.u(1).col(p)) {
                diffs.push(a - b);
            }
        }
        assert!(diffs.len() >= 10_000);
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        assert!((var / 0.09 - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn bad_inputs() {
        let tree = random_tree(&[2]);
        let bad_rate = SynthConfig {
            missing_rates: vec![1.0],
            ..SynthConfig::new(2, 2, 1, 0)
        };
        assert_eq!(
            generate_synthetic(&tree, &bad_rate).unwrap_err(),
            FactorError::BadRate(1.0)
        );
        let bad_sigma = SynthConfig {
            sigma: -0.1,
            ..SynthConfig::new(2, 2, 1, 0)
        };
        assert_eq!(
            generate_synthetic(&tree, &bad_sigma).unwrap_err(),
            FactorError::BadSigma(-0.1)
        );
    }

    #[test]
    fn seeded() {
        let tree = random_tree(&[3, 3]);
        let cfg = SynthConfig {
            missing_rates: vec![0.5, 0.5],
            ..SynthConfig::new(2, 3, 2, 4)
        };
        assert_eq!(
            generate_synthetic(&tree, &cfg).unwrap(),
            generate_synthetic(&tree, &cfg).unwrap()
        );
    }
}
