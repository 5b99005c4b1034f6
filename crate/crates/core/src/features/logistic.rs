//! Ridge-stabilized logistic regression for the probability of non-zero
//! consumption, fitted by Newton-Raphson (IRLS) with step halving.

use nalgebra::{DMatrix, DVector};

use super::{FeatureError, FeatureMatrix, REGION_COLUMNS};
use crate::data_model::REGIONS;

pub const LOGISTIC_RIDGE: f64 = 1e-6;
pub const LOGISTIC_TOL: f64 = 1e-8;
pub const LOGISTIC_MAX_ITER: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Set when the training labels had a single class; the model then
    /// predicts this probability everywhere.
    pub constant: Option<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn constant(p: f64, n_features: usize) -> Self {
        Self {
            intercept: 0.0,
            coefficients: vec![0.0; n_features],
            constant: Some(p),
        }
    }

    pub fn fit(x: &FeatureMatrix, labels: &[bool]) -> Result<Self, FeatureError> {
        let n = x.n_rows();
        let p = x.n_cols();
        assert_eq!(n, labels.len(), "one label per row");
        let positives = labels.iter().filter(|&&l| l).count();
        if n > 0 && (positives == 0 || positives == n) {
            log::debug!("zero stage: single-class labels, using a constant model");
            return Ok(Self::constant(if positives == 0 { 0.0 } else { 1.0 }, p));
        }
        if n <= p {
            return Err(FeatureError::TooFewRows { rows: n, cols: p });
        }

        // Standardize columns; constant columns are zeroed out.
        let mut centers = vec![0.0; p];
        let mut scales = vec![0.0; p];
        for j in 0..p {
            let col = x.column(j);
            let m = crate::stats::mean(col);
            let sd = crate::stats::population_sd(col);
            centers[j] = m;
            scales[j] = if sd > 0.0 { sd } else { 0.0 };
        }
        let design = DMatrix::from_fn(n, p + 1, |i, j| {
            if j == 0 {
                1.0
            } else if scales[j - 1] > 0.0 {
                (x.get(i, j - 1) - centers[j - 1]) / scales[j - 1]
            } else {
                0.0
            }
        });
        let y = DVector::from_iterator(n, labels.iter().map(|&l| if l { 1.0 } else { 0.0 }));

        let penalized_ll = |beta: &DVector<f64>| -> f64 {
            let eta = &design * beta;
            let mut ll = 0.0;
            for i in 0..n {
                let e = eta[i];
                // log(1 + exp(e)) computed stably.
                let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
                ll += y[i] * e - softplus;
            }
            let ridge: f64 = beta.iter().skip(1).map(|b| b * b).sum();
            ll - 0.5 * LOGISTIC_RIDGE * ridge
        };

        let mut beta = DVector::zeros(p + 1);
        let base_rate = positives as f64 / n as f64;
        beta[0] = (base_rate / (1.0 - base_rate)).ln();
        let mut ll = penalized_ll(&beta);
        for _ in 0..LOGISTIC_MAX_ITER {
            let eta = &design * &beta;
            let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
            let mut grad = design.transpose() * DVector::from_iterator(n, (0..n).map(|i| y[i] - mu[i]));
            let mut weighted = design.clone();
            for i in 0..n {
                let w = (mu[i] * (1.0 - mu[i])).max(1e-12);
                weighted.row_mut(i).scale_mut(w);
            }
            let mut hess = design.transpose() * weighted;
            for j in 1..=p {
                grad[j] -= LOGISTIC_RIDGE * beta[j];
                hess[(j, j)] += LOGISTIC_RIDGE;
            }
            hess[(0, 0)] += 1e-12;
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&grad),
                None => match hess.lu().solve(&grad) {
                    Some(s) => s,
                    None => break,
                },
            };
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let cand = &beta + &step * t;
                let cand_ll = penalized_ll(&cand);
                if cand_ll.is_finite() && cand_ll >= ll - 1e-12 {
                    accepted = Some((cand, cand_ll));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, cand_ll)) = accepted else { break };
            let change = (cand_ll - ll).abs();
            beta = cand;
            ll = cand_ll;
            if change < LOGISTIC_TOL {
                break;
            }
        }

        // Map back to the raw feature scale.
        let mut coefficients = vec![0.0; p];
        let mut intercept = beta[0];
        for j in 0..p {
            if scales[j] > 0.0 {
                coefficients[j] = beta[j + 1] / scales[j];
                intercept -= coefficients[j] * centers[j];
            }
        }
        Ok(Self {
            intercept,
            coefficients,
            constant: None,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        if let Some(p) = self.constant {
            return p;
        }
        let eta = self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>();
        sigmoid(eta)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.predict_row(&x.row(i))).collect()
    }
}

/// Expands ordinal region columns into one-hot dummies (first level
/// dropped); every other column passes through.
pub fn one_hot_regions(x: &FeatureMatrix) -> FeatureMatrix {
    let mut out = FeatureMatrix::from_columns(Vec::new(), Vec::new());
    for j in 0..x.n_cols() {
        let name = &x.names()[j];
        let is_region = REGION_COLUMNS.iter().any(|&r| super::FEATURE_NAMES[r] == name);
        if is_region {
            for level in 1..REGIONS.len() {
                let col = x
                    .column(j)
                    .iter()
                    .map(|&v| if v as usize == level { 1.0 } else { 0.0 })
                    .collect();
                out.push_column(format!("{name}={}", REGIONS[level]), col);
            }
        } else {
            out.push_column(name.clone(), x.column(j).to_vec());
        }
    }
    out
}

/// The zero stage: logistic regression on the covariates with regions
/// one-hot encoded. Its output becomes the `zero_prob` feature.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroStage {
    pub model: LogisticModel,
}

impl ZeroStage {
    pub fn fit(features: &FeatureMatrix, nonzero: &[bool]) -> Result<Self, FeatureError> {
        let design = one_hot_regions(features);
        let model = match LogisticModel::fit(&design, nonzero) {
            Ok(m) => m,
            Err(FeatureError::TooFewRows { rows, cols }) => {
                log::debug!("zero stage: {rows} rows for {cols} features, using the label mean");
                let p = nonzero.iter().filter(|&&b| b).count() as f64 / nonzero.len().max(1) as f64;
                LogisticModel::constant(p, design.n_cols())
            }
            Err(e) => return Err(e),
        };
        Ok(Self { model })
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Vec<f64> {
        self.model.predict(&one_hot_regions(features))
    }
}
