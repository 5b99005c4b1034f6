//! Least-squares gradient-boosted regression trees, training-set cleaning,
//! leave-one-group-out cross-validation, grid tuning and evaluation metrics.

mod clean;
mod cv;
mod ensemble;
mod model;
mod tree;

use crate::features::FeatureError;
use crate::stats::r_squared;

pub use clean::{clean_training_set, clean_training_set_with, CleaningReport, MIN_BRAND_REVENUE, MIN_PEER_CORRELATION};
pub use cv::{
    build_training_table, loco_cv, lopo_cv, rank_features, run_cv, summarize, tune, CvKind, CvSummary, FoldResult,
    TrainingTable, TuningCell,
};
pub use ensemble::{fit_ensemble, BoostedEnsemble};
pub use model::{fit_model, predict_all, prediction_years, reference_year, Learner, OlsModel, Regressor, TrainedModel};
pub use tree::{fit_tree, Node, RegressionTree};

/// Consumption below this many USD counts as zero.
pub const ZERO_THRESHOLD_USD: f64 = 1000.0;

#[derive(Debug, thiserror::Error)]
pub enum BoostError {
    #[error("empty training input")]
    EmptyInput,
    #[error("targets and rows differ in length ({rows} rows, {targets} targets)")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("zero variance in targets: R² undefined")]
    ZeroVariance,
    #[error("metrics need at least two pairs, got {0}")]
    TooFewPairs(usize),
    #[error("cross-validation needs at least two {kind}, got {found}")]
    TooFewGroups { kind: &'static str, found: usize },
    #[error("no brand survives training-set cleaning")]
    EmptyCleanSet,
    #[error("no observed consumption for {0}")]
    NoObservedData(i32),
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperParams {
    pub max_splits: usize,
    pub min_parent: usize,
    pub learn_rate: f64,
    pub n_cycles: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            max_splits: 5,
            min_parent: 10,
            learn_rate: 0.1,
            n_cycles: 150,
        }
    }
}

impl HyperParams {
    pub fn with_cell(max_splits: usize, min_parent: usize) -> Self {
        Self {
            max_splits,
            min_parent,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperGrid {
    pub max_splits: Vec<usize>,
    pub min_parent: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            max_splits: vec![1, 3, 5, 10, 15, 20, 30, 50],
            min_parent: vec![3, 5, 7, 10],
        }
    }
}

impl HyperGrid {
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &s in &self.max_splits {
            for &m in &self.min_parent {
                out.push((s, m));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub r2: f64,
    /// NaN when fewer than two pairs reach the threshold or they have no
    /// variance.
    pub restricted_r2: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Scores USD predictions. R² values are computed on `ln(1 + usd)`; the
/// classification treats a value as nonzero iff it is at least `threshold`,
/// on both sides.
pub fn metrics(y: &[f64], yhat: &[f64], threshold: f64) -> Result<Metrics, BoostError> {
    if y.len() != yhat.len() {
        return Err(BoostError::LengthMismatch {
            rows: yhat.len(),
            targets: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(BoostError::TooFewPairs(y.len()));
    }
    let ly: Vec<f64> = y.iter().map(|v| v.max(0.0).ln_1p()).collect();
    let lh: Vec<f64> = yhat.iter().map(|v| v.max(0.0).ln_1p()).collect();
    let r2 = r_squared(&ly, &lh);
    if r2.is_nan() {
        return Err(BoostError::ZeroVariance);
    }
    let (ry, rh): (Vec<f64>, Vec<f64>) = y
        .iter()
        .zip(&ly)
        .zip(&lh)
        .filter(|((v, _), _)| **v >= threshold)
        .map(|((_, a), b)| (*a, *b))
        .unzip();
    let restricted_r2 = if ry.len() >= 2 { r_squared(&ry, &rh) } else { f64::NAN };
    let (accuracy, f1) = classification(y, yhat, threshold);
    Ok(Metrics {
        r2,
        restricted_r2,
        accuracy,
        f1,
    })
}

/// Accuracy and F1 of the nonzero classification. F1 is 1 when there are
/// neither positives nor positive predictions.
pub(crate) fn classification(y: &[f64], yhat: &[f64], threshold: f64) -> (f64, f64) {
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (a, b) in y.iter().zip(yhat) {
        match (*a >= threshold, *b >= threshold) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / y.len().max(1) as f64;
    let f1 = if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    (accuracy, f1)
}

/// `exp(yhat) - 1` clamped at zero, then zeroed below the threshold. The
/// comparison happens in log space so that `ln(1 + threshold)` itself is
/// retained despite rounding in `exp_m1`.
pub fn log_to_usd(yhat_log: f64, threshold: f64) -> f64 {
    if yhat_log < (1.0 + threshold).ln() {
        0.0
    } else {
        yhat_log.exp_m1().max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let y = [0.0, 1500.0, 30000.0, 2e6];
        let m = metrics(&y, &y, ZERO_THRESHOLD_USD).unwrap();
        assert_eq!((m.r2, m.restricted_r2, m.accuracy, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn swapped_prediction() {
        let m = metrics(&[0.0, 5000.0], &[5000.0, 0.0], ZERO_THRESHOLD_USD).unwrap();
        assert_eq!(m.accuracy, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn hand_confusion_matrix() {
        // tp = 1, tn = 1, fn = 1, fp = 0
        let m = metrics(&[0.0, 2000.0, 3000.0], &[0.0, 2000.0, 0.0], ZERO_THRESHOLD_USD).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn no_positives_anywhere() {
        let m = metrics(&[0.0, 10.0], &[0.0, 0.0], ZERO_THRESHOLD_USD).unwrap();
        assert_eq!(m.f1, 1.0);
        assert!(m.restricted_r2.is_nan());
    }

    #[test]
    fn constant_targets_are_an_error() {
        assert!(matches!(
            metrics(&[5.0, 5.0], &[1.0, 2.0], ZERO_THRESHOLD_USD),
            Err(BoostError::ZeroVariance)
        ));
        assert!(matches!(metrics(&[5.0], &[1.0], ZERO_THRESHOLD_USD), Err(BoostError::TooFewPairs(1))));
    }

    #[test]
    fn usd_conversion_edges() {
        assert_eq!(log_to_usd(0.0, ZERO_THRESHOLD_USD), 0.0);
        let at = log_to_usd(1001f64.ln(), ZERO_THRESHOLD_USD);
        assert!((at - 1000.0).abs() < 1e-9, "at = {at}");
        assert_eq!(log_to_usd(501f64.ln(), ZERO_THRESHOLD_USD), 0.0);
        assert_eq!(log_to_usd(-3.0, ZERO_THRESHOLD_USD), 0.0);
    }

    #[test]
    fn default_grid_has_32_cells() {
        assert_eq!(HyperGrid::default().cells().len(), 32);
    }
}
