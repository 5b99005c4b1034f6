//! Permutation feature importance and top-k selection.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FeatureError, FeatureMatrix};
use crate::stats::r_squared;

pub const DEFAULT_SHUFFLES: usize = 5;

/// Anything that maps a feature matrix to one prediction per row.
pub trait Predictor {
    fn predict(&self, x: &FeatureMatrix) -> Vec<f64>;
}

impl<F: Fn(&FeatureMatrix) -> Vec<f64>> Predictor for F {
    fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        self(x)
    }
}

fn shuffle_seed(seed: u64, feature: usize, shuffle: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((feature as u64) << 32)
        ^ shuffle as u64
}

/// Percentage decrease of validation R² when `feature` is shuffled,
/// averaged over `shuffles` deterministic permutations.
pub fn permutation_importance<P: Predictor + ?Sized>(
    model: &P,
    x: &FeatureMatrix,
    y: &[f64],
    feature: &str,
    shuffles: usize,
    seed: u64,
) -> Result<f64, FeatureError> {
    if x.n_rows() == 0 {
        return Err(FeatureError::EmptyValidation);
    }
    let j = x
        .column_index(feature)
        .ok_or_else(|| FeatureError::UnknownFeature(feature.to_string()))?;
    let baseline = r_squared(y, &model.predict(x));
    if !(baseline > 0.0) {
        return Err(FeatureError::UninformativeBaseline(baseline));
    }
    let shuffles = shuffles.max(1);
    let mut total = 0.0;
    for s in 0..shuffles {
        let mut permuted = x.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(seed, j, s));
        permuted.column_mut(j).shuffle(&mut rng);
        let r2 = r_squared(y, &model.predict(&permuted));
        total += (baseline - r2) / baseline.abs() * 100.0;
    }
    Ok(total / shuffles as f64)
}

/// Importance of every named column of `x`.
pub fn permutation_importances<P: Predictor + Sync + ?Sized>(
    model: &P,
    x: &FeatureMatrix,
    y: &[f64],
    features: &[String],
    shuffles: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>, FeatureError> {
    use rayon::prelude::*;
    let scores: Result<Vec<(String, f64)>, FeatureError> = features
        .par_iter()
        .map(|f| permutation_importance(model, x, y, f, shuffles, seed).map(|s| (f.clone(), s)))
        .collect();
    Ok(scores?.into_iter().collect())
}

/// Selected features ordered by importance, most important first.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSubset {
    pub features: Vec<(String, f64)>,
}

impl FeatureSubset {
    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|(n, _)| n.clone()).collect()
    }
}

/// Top `k` features by score; equal scores are ordered by name.
pub fn select_top(importances: &BTreeMap<String, f64>, k: usize) -> Result<FeatureSubset, FeatureError> {
    if k == 0 || k > importances.len() {
        return Err(FeatureError::InvalidSubsetSize {
            k,
            max: importances.len(),
        });
    }
    let mut all: Vec<(String, f64)> = importances.iter().map(|(n, s)| (n.clone(), *s)).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    Ok(FeatureSubset { features: all })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn scores(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(n, s)| (n.to_string(), *s)).collect()
    }

    #[test]
    fn top_k_examples() {
        let s = scores(&[("a", 3.0), ("b", 1.0), ("c", 2.0)]);
        assert_eq!(select_top(&s, 2).unwrap().names(), vec!["a", "c"]);
        assert_eq!(select_top(&s, 3).unwrap().features.len(), 3);
        let tied = scores(&[("b", 1.0), ("a", 1.0)]);
        assert_eq!(select_top(&tied, 1).unwrap().names(), vec!["a"]);
        assert!(select_top(&s, 0).is_err());
        assert!(select_top(&s, 4).is_err());
    }

    fn planted() -> (FeatureMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 300;
        let signal: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let constant = vec![4.0; n];
        let y = signal.iter().map(|s| 3.0 * s + 0.1 * rng.random::<f64>()).collect();
        (
            FeatureMatrix::from_columns(
                vec!["signal".into(), "noise".into(), "constant".into()],
                vec![signal, noise, constant],
            ),
            y,
        )
    }

    fn linear(x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows()).map(|i| 3.0 * x.get(i, 0) + 0.05).collect()
    }

    #[test]
    fn constant_column_has_zero_importance() {
        let (x, y) = planted();
        assert_eq!(permutation_importance(&linear, &x, &y, "constant", 5, 1).unwrap(), 0.0);
    }

    #[test]
    fn signal_dominates_noise() {
        let (x, y) = planted();
        let s = permutation_importance(&linear, &x, &y, "signal", 5, 1).unwrap();
        let n = permutation_importance(&linear, &x, &y, "noise", 5, 1).unwrap();
        assert!(s > 100.0);
        assert_eq!(n, 0.0);
    }

    #[test]
    fn uninformative_baseline_is_an_error() {
        let (x, y) = planted();
        let bad = |x: &FeatureMatrix| vec![-10.0; x.n_rows()];
        assert!(matches!(
            permutation_importance(&bad, &x, &y, "signal", 5, 1),
            Err(FeatureError::UninformativeBaseline(_))
        ));
    }

    #[test]
    fn importance_is_deterministic_by_seed() {
        let (x, y) = planted();
        let a = permutation_importance(&linear, &x, &y, "signal", 5, 9).unwrap();
        let b = permutation_importance(&linear, &x, &y, "signal", 5, 9).unwrap();
        assert_eq!(a, b);
    }
}
