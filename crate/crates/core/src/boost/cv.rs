//! Leave-one-country-out and leave-one-product-out cross-validation, grid
//! tuning, and permutation ranking of the covariates.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{augment, fit_model, log_targets, nonzero_labels, Learner};
use super::{classification, fit_ensemble, metrics, BoostError, HyperGrid, HyperParams, ZERO_THRESHOLD_USD};
use crate::data_model::{BrandId, CountryCode, Provenance, Year};
use crate::features::{permutation_importances, FeatureContext, FeatureMatrix, ZeroStage, FEATURE_NAMES};
use crate::stats::{finite_mean, mse};

/// Observed training rows of one year with their 22 covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTable {
    pub year: Year,
    pub keys: Vec<(BrandId, CountryCode)>,
    pub x: FeatureMatrix,
    pub y_usd: Vec<f64>,
}

impl TrainingTable {
    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn select(&self, rows: &[usize]) -> TrainingTable {
        TrainingTable {
            year: self.year,
            keys: rows.iter().map(|&i| self.keys[i].clone()).collect(),
            x: self.x.select_rows(rows),
            y_usd: rows.iter().map(|&i| self.y_usd[i]).collect(),
        }
    }
}

/// Observed entries of `year` for the given brands.
pub fn build_training_table(
    ctx: &FeatureContext,
    year: Year,
    brands: &BTreeSet<BrandId>,
) -> Result<TrainingTable, BoostError> {
    let ds = ctx.dataset();
    let mut keys = Vec::new();
    let mut y_usd = Vec::new();
    for ((b, c, y), e) in &ds.consumption.entries {
        if *y == year && e.provenance == Provenance::Observed && brands.contains(b) {
            keys.push((b.clone(), c.clone()));
            y_usd.push(e.value);
        }
    }
    if keys.is_empty() {
        return Err(BoostError::NoObservedData(year));
    }
    let full: Vec<_> = keys.iter().map(|(b, c)| (b.clone(), c.clone(), year)).collect();
    let x = ctx.assemble_matrix(&full)?;
    Ok(TrainingTable { year, keys, x, y_usd })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CvKind {
    /// Hold out one destination country at a time.
    Loco,
    /// Hold out one brand at a time.
    Lopo,
}

impl CvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CvKind::Loco => "loco",
            CvKind::Lopo => "lopo",
        }
    }

    fn groups(self, table: &TrainingTable) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, (b, c)) in table.keys.iter().enumerate() {
            let g = match self {
                CvKind::Loco => c.as_str(),
                CvKind::Lopo => b.as_str(),
            };
            out.entry(g.to_string()).or_default().push(i);
        }
        out
    }

    fn kind_name(self) -> &'static str {
        match self {
            CvKind::Loco => "countries",
            CvKind::Lopo => "products",
        }
    }
}

/// Out-of-sample scores of one held-out group. R² values are NaN when the
/// held-out targets have no variance.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub key: String,
    pub n_test: usize,
    pub r2: f64,
    pub restricted_r2: f64,
    pub accuracy: f64,
    pub f1: f64,
    /// Mean squared error in `ln(1 + usd)` space.
    pub mse: f64,
}

struct Fold {
    key: String,
    train: Vec<usize>,
    test: Vec<usize>,
}

fn folds(table: &TrainingTable, kind: CvKind) -> Result<Vec<Fold>, BoostError> {
    let groups = kind.groups(table);
    if groups.len() < 2 {
        return Err(BoostError::TooFewGroups {
            kind: kind.kind_name(),
            found: groups.len(),
        });
    }
    Ok(groups
        .into_iter()
        .map(|(g, test)| {
            let held: BTreeSet<usize> = test.iter().copied().collect();
            let train = (0..table.n_rows()).filter(|i| !held.contains(i)).collect();
            Fold {
                key: format!("{}:{g}", kind.as_str()),
                train,
                test,
            }
        })
        .collect())
}

fn score(key: String, y_usd: &[f64], yhat_log: &[f64]) -> FoldResult {
    let yhat_usd: Vec<f64> = yhat_log.iter().map(|v| v.exp_m1().max(0.0)).collect();
    let (accuracy, f1) = classification(y_usd, &yhat_usd, ZERO_THRESHOLD_USD);
    let (r2, restricted_r2) = match metrics(y_usd, &yhat_usd, ZERO_THRESHOLD_USD) {
        Ok(m) => (m.r2, m.restricted_r2),
        Err(_) => (f64::NAN, f64::NAN),
    };
    FoldResult {
        key,
        n_test: y_usd.len(),
        r2,
        restricted_r2,
        accuracy,
        f1,
        mse: mse(&log_targets(y_usd), yhat_log),
    }
}

/// Fits a fresh model (zero stage included) per fold and scores the
/// held-out group. Folds run in parallel; results come back in key order.
pub fn run_cv(
    table: &TrainingTable,
    kind: CvKind,
    learner: Learner,
    features: &[String],
) -> Result<Vec<FoldResult>, BoostError> {
    folds(table, kind)?
        .into_par_iter()
        .map(|f| {
            let train = table.select(&f.train);
            let test = table.select(&f.test);
            let model = fit_model(&train.x, &train.y_usd, learner, features, table.year)?;
            Ok(score(f.key, &test.y_usd, &model.predict_log(&test.x)))
        })
        .collect()
}

pub fn loco_cv(table: &TrainingTable, learner: Learner, features: &[String]) -> Result<Vec<FoldResult>, BoostError> {
    run_cv(table, CvKind::Loco, learner, features)
}

pub fn lopo_cv(table: &TrainingTable, learner: Learner, features: &[String]) -> Result<Vec<FoldResult>, BoostError> {
    run_cv(table, CvKind::Lopo, learner, features)
}

/// Fold means, skipping undefined values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvSummary {
    pub r2: f64,
    pub restricted_r2: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub mse: f64,
}

pub fn summarize(results: &[FoldResult]) -> CvSummary {
    CvSummary {
        r2: finite_mean(results.iter().map(|r| r.r2)),
        restricted_r2: finite_mean(results.iter().map(|r| r.restricted_r2)),
        accuracy: finite_mean(results.iter().map(|r| r.accuracy)),
        f1: finite_mean(results.iter().map(|r| r.f1)),
        mse: finite_mean(results.iter().map(|r| r.mse)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuningCell {
    pub max_splits: usize,
    pub min_parent: usize,
    pub mean_mse: f64,
}

struct PreparedFold {
    train_x: FeatureMatrix,
    train_y: Vec<f64>,
    test_x: FeatureMatrix,
    test_y: Vec<f64>,
}

/// Exhaustive grid search by mean leave-one-product-out MSE. Equal errors
/// prefer fewer splits, then larger parents.
pub fn tune(
    table: &TrainingTable,
    grid: &HyperGrid,
    features: &[String],
    base: HyperParams,
) -> Result<(HyperParams, Vec<TuningCell>), BoostError> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(BoostError::EmptyGrid);
    }
    // The zero stage does not depend on the tree parameters, so each fold's
    // inputs are prepared once.
    let prepared: Vec<PreparedFold> = folds(table, CvKind::Lopo)?
        .into_par_iter()
        .map(|f| {
            let train = table.select(&f.train);
            let test = table.select(&f.test);
            let zero = ZeroStage::fit(&train.x, &nonzero_labels(&train.y_usd))?;
            Ok(PreparedFold {
                train_x: augment(&zero, &train.x, features),
                train_y: log_targets(&train.y_usd),
                test_x: augment(&zero, &test.x, features),
                test_y: log_targets(&test.y_usd),
            })
        })
        .collect::<Result<_, BoostError>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..prepared.len()).map(move |f| (c, f)))
        .collect();
    let errors: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (s, m) = cells[c];
            let params = HyperParams {
                max_splits: s,
                min_parent: m,
                ..base
            };
            let p = &prepared[f];
            let e = fit_ensemble(&p.train_x, &p.train_y, params)?;
            Ok(mse(&p.test_y, &e.predict_rows(&p.test_x)))
        })
        .collect::<Result<_, BoostError>>()?;
    let table: Vec<TuningCell> = cells
        .iter()
        .enumerate()
        .map(|(c, &(s, m))| TuningCell {
            max_splits: s,
            min_parent: m,
            mean_mse: errors[c * prepared.len()..(c + 1) * prepared.len()].iter().sum::<f64>()
                / prepared.len() as f64,
        })
        .collect();
    let best = table
        .iter()
        .min_by(|a, b| {
            a.mean_mse
                .total_cmp(&b.mean_mse)
                .then(a.max_splits.cmp(&b.max_splits))
                .then(b.min_parent.cmp(&a.min_parent))
        })
        .expect("grid is non-empty");
    Ok((
        HyperParams {
            max_splits: best.max_splits,
            min_parent: best.min_parent,
            ..base
        },
        table,
    ))
}

/// Permutation importance of every covariate. A random fifth of the brands
/// is held out; the model is fit on the rest with all covariates. Shuffled
/// covariates also feed the zero stage, so `zero_prob` follows them.
pub fn rank_features(
    table: &TrainingTable,
    params: HyperParams,
    shuffles: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>, BoostError> {
    let mut brands: Vec<&BrandId> = table.keys.iter().map(|(b, _)| b).collect::<BTreeSet<_>>().into_iter().collect();
    if brands.len() < 2 {
        return Err(BoostError::TooFewGroups {
            kind: "products",
            found: brands.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    brands.shuffle(&mut rng);
    let n_valid = ((brands.len() as f64 * 0.2).round() as usize).clamp(1, brands.len() - 1);
    let valid: BTreeSet<&BrandId> = brands[..n_valid].iter().copied().collect();
    let (test, train): (Vec<usize>, Vec<usize>) = (0..table.n_rows()).partition(|&i| valid.contains(&table.keys[i].0));
    let train = table.select(&train);
    let test = table.select(&test);
    let all: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let model = fit_model(&train.x, &train.y_usd, Learner::Boosted(params), &all, table.year)?;
    Ok(permutation_importances(
        &model,
        &test.x,
        &log_targets(&test.y_usd),
        &all,
        shuffles,
        seed,
    )?)
}
