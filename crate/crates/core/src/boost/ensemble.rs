//! Stagewise least-squares boosting of regression trees.

use super::tree::{fit_presorted, presort, RegressionTree};
use super::{BoostError, HyperParams};
use crate::features::{FeatureMatrix, Predictor};

#[derive(Clone, Debug, PartialEq)]
pub struct BoostedEnsemble {
    /// Column names the trees were trained on; tree feature indices refer
    /// to this list.
    pub feature_names: Vec<String>,
    pub params: HyperParams,
    pub base: f64,
    pub trees: Vec<RegressionTree>,
    /// Training MSE after each cycle.
    pub train_mse: Vec<f64>,
}

impl BoostedEnsemble {
    fn column_map(&self, x: &FeatureMatrix) -> Vec<usize> {
        self.feature_names
            .iter()
            .map(|n| {
                x.column_index(n)
                    .unwrap_or_else(|| panic!("feature '{n}' missing from prediction input"))
            })
            .collect()
    }

    pub fn predict_rows(&self, x: &FeatureMatrix) -> Vec<f64> {
        let map = self.column_map(x);
        let mut out = vec![self.base; x.n_rows()];
        for tree in &self.trees {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.params.learn_rate * tree.eval(|j| x.get(i, map[j]));
            }
        }
        out
    }

    /// True when the recorded training MSE never increases beyond rounding.
    pub fn mse_non_increasing(&self) -> bool {
        self.train_mse
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(f64::MIN_POSITIVE))
    }
}

impl Predictor for BoostedEnsemble {
    fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        self.predict_rows(x)
    }
}

fn mse(y: &[f64], p: &[f64]) -> f64 {
    y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Fits `params.n_cycles` trees, each to the residuals of the current
/// prediction, starting from the mean target.
pub fn fit_ensemble(x: &FeatureMatrix, y: &[f64], params: HyperParams) -> Result<BoostedEnsemble, BoostError> {
    if y.is_empty() || x.n_rows() == 0 {
        return Err(BoostError::EmptyInput);
    }
    if x.n_rows() != y.len() {
        return Err(BoostError::LengthMismatch {
            rows: x.n_rows(),
            targets: y.len(),
        });
    }
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let presorted = presort(x);
    let mut pred = vec![base; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_cycles);
    let mut train_mse = Vec::with_capacity(params.n_cycles);
    for _ in 0..params.n_cycles {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let tree = fit_presorted(x, &presorted, &residual, params.max_splits, params.min_parent);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learn_rate * tree.eval(|j| x.get(i, j));
        }
        trees.push(tree);
        train_mse.push(mse(y, &pred));
    }
    let ens = BoostedEnsemble {
        feature_names: x.names().to_vec(),
        params,
        base,
        trees,
        train_mse,
    };
    debug_assert!(ens.mse_non_increasing(), "training MSE increased");
    Ok(ens)
}
