//! The full consumption model (zero stage plus regressor), its text
//! serialization, and prediction over every (brand, destination, year).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::tree::{Node, RegressionTree};
use super::{log_to_usd, BoostError, BoostedEnsemble, HyperParams};
use crate::data_model::{BrandId, ConsumptionMatrix, CountryCode, Dataset, Provenance, Year};
use crate::features::{FeatureContext, FeatureMatrix, LogisticModel, Predictor, ZeroStage, ZERO_PROB};

/// Least-squares linear baseline on the same inputs as the boosted model.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsModel {
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl OlsModel {
    pub fn fit(x: &FeatureMatrix, y: &[f64]) -> Result<Self, BoostError> {
        let (n, p) = (x.n_rows(), x.n_cols());
        if n == 0 {
            return Err(BoostError::EmptyInput);
        }
        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
        let svd = design.svd(true, true);
        let eps = svd.singular_values.max() * 1e-12 * (n.max(p + 1) as f64);
        let beta = svd
            .solve(&DVector::from_column_slice(y), eps)
            .map_err(|_| BoostError::EmptyInput)?;
        Ok(Self {
            feature_names: x.names().to_vec(),
            intercept: beta[0],
            coefficients: beta.iter().skip(1).copied().collect(),
        })
    }

    pub fn predict_rows(&self, x: &FeatureMatrix) -> Vec<f64> {
        let map: Vec<usize> = self
            .feature_names
            .iter()
            .map(|n| x.column_index(n).unwrap_or_else(|| panic!("feature '{n}' missing")))
            .collect();
        (0..x.n_rows())
            .map(|i| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .zip(&map)
                        .map(|(b, &j)| b * x.get(i, j))
                        .sum::<f64>()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Regressor {
    Boosted(BoostedEnsemble),
    Ols(OlsModel),
}

/// Zero stage, selected features, and a regressor on `ln(1 + usd)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub reference_year: Year,
    pub zero_stage: ZeroStage,
    /// Selected covariates; `zero_prob` is always appended as an input.
    pub features: Vec<String>,
    pub regressor: Regressor,
}

/// Appends the zero-stage probability and keeps only `features` plus it.
pub(crate) fn augment(zero: &ZeroStage, x22: &FeatureMatrix, features: &[String]) -> FeatureMatrix {
    let cols: Vec<usize> = features
        .iter()
        .map(|f| x22.column_index(f).unwrap_or_else(|| panic!("feature '{f}' missing")))
        .collect();
    let mut out = x22.select_columns(&cols);
    out.push_column(ZERO_PROB, zero.predict(x22));
    out
}

pub(crate) fn nonzero_labels(y_usd: &[f64]) -> Vec<bool> {
    y_usd.iter().map(|&v| v >= super::ZERO_THRESHOLD_USD).collect()
}

pub(crate) fn log_targets(y_usd: &[f64]) -> Vec<f64> {
    y_usd.iter().map(|v| v.max(0.0).ln_1p()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Learner {
    Boosted(HyperParams),
    Ols,
}

/// Fits the zero stage on all 22 covariates, then the regressor on the
/// selected covariates plus `zero_prob`.
pub fn fit_model(
    x22: &FeatureMatrix,
    y_usd: &[f64],
    learner: Learner,
    features: &[String],
    reference_year: Year,
) -> Result<TrainedModel, BoostError> {
    if x22.n_rows() == 0 {
        return Err(BoostError::EmptyInput);
    }
    let zero_stage = ZeroStage::fit(x22, &nonzero_labels(y_usd))?;
    let xa = augment(&zero_stage, x22, features);
    let y = log_targets(y_usd);
    let regressor = match learner {
        Learner::Boosted(p) => Regressor::Boosted(super::fit_ensemble(&xa, &y, p)?),
        Learner::Ols => Regressor::Ols(OlsModel::fit(&xa, &y)?),
    };
    Ok(TrainedModel {
        reference_year,
        zero_stage,
        features: features.to_vec(),
        regressor,
    })
}

impl TrainedModel {
    /// Predictions of `ln(1 + usd)` from a 22-column feature matrix.
    pub fn predict_log(&self, x22: &FeatureMatrix) -> Vec<f64> {
        let xa = augment(&self.zero_stage, x22, &self.features);
        self.predict_augmented(&xa)
    }

    pub(crate) fn predict_augmented(&self, xa: &FeatureMatrix) -> Vec<f64> {
        match &self.regressor {
            Regressor::Boosted(e) => e.predict_rows(xa),
            Regressor::Ols(m) => m.predict_rows(xa),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "digitrade-model 1").unwrap();
        writeln!(s, "reference_year {}", self.reference_year).unwrap();
        writeln!(s, "features {} {}", self.features.len(), self.features.join(" ")).unwrap();
        let z = &self.zero_stage.model;
        match z.constant {
            Some(p) => writeln!(s, "zero_constant {p}").unwrap(),
            None => writeln!(s, "zero_constant none").unwrap(),
        }
        writeln!(s, "zero_intercept {}", z.intercept).unwrap();
        writeln!(s, "zero_coefficients {} {}", z.coefficients.len(), list(&z.coefficients)).unwrap();
        match &self.regressor {
            Regressor::Ols(m) => {
                writeln!(s, "regressor ols").unwrap();
                writeln!(s, "inputs {} {}", m.feature_names.len(), m.feature_names.join(" ")).unwrap();
                writeln!(s, "intercept {}", m.intercept).unwrap();
                writeln!(s, "coefficients {} {}", m.coefficients.len(), list(&m.coefficients)).unwrap();
            }
            Regressor::Boosted(e) => {
                let p = e.params;
                writeln!(s, "regressor boosted").unwrap();
                writeln!(s, "inputs {} {}", e.feature_names.len(), e.feature_names.join(" ")).unwrap();
                writeln!(
                    s,
                    "params {} {} {} {}",
                    p.max_splits, p.min_parent, p.learn_rate, p.n_cycles
                )
                .unwrap();
                writeln!(s, "base {}", e.base).unwrap();
                writeln!(s, "train_mse {} {}", e.train_mse.len(), list(&e.train_mse)).unwrap();
                writeln!(s, "trees {}", e.trees.len()).unwrap();
                for t in &e.trees {
                    writeln!(s, "tree {}", t.nodes.len()).unwrap();
                    for node in &t.nodes {
                        match node {
                            Node::Leaf { value, n_samples } => writeln!(s, "L {value} {n_samples}").unwrap(),
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                                n_samples,
                            } => writeln!(s, "S {feature} {threshold} {left} {right} {n_samples}").unwrap(),
                        }
                    }
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, BoostError> {
        let mut p = Parser::new(text);
        p.expect_line(&["digitrade-model", "1"])?;
        let reference_year = p.keyed("reference_year")?.parse_one()?;
        let features = p.keyed("features")?.counted_words()?;
        let constant = match p.keyed("zero_constant")?.words.as_slice() {
            [v] if v == "none" => None,
            [v] => Some(p.num(v)?),
            _ => return Err(p.err("zero_constant takes one value")),
        };
        let intercept = p.keyed("zero_intercept")?.parse_one()?;
        let coefficients = p.keyed("zero_coefficients")?.counted_nums()?;
        let zero_stage = ZeroStage {
            model: LogisticModel {
                intercept,
                coefficients,
                constant,
            },
        };
        let kind = p.keyed("regressor")?.words.first().cloned().unwrap_or_default();
        let inputs = p.keyed("inputs")?.counted_words()?;
        let regressor = match kind.as_str() {
            "ols" => {
                let intercept = p.keyed("intercept")?.parse_one()?;
                let coefficients = p.keyed("coefficients")?.counted_nums()?;
                Regressor::Ols(OlsModel {
                    feature_names: inputs,
                    intercept,
                    coefficients,
                })
            }
            "boosted" => {
                let w = p.keyed("params")?;
                if w.words.len() != 4 {
                    return Err(p.err("params takes four values"));
                }
                let params = HyperParams {
                    max_splits: p.num(&w.words[0])?,
                    min_parent: p.num(&w.words[1])?,
                    learn_rate: p.num(&w.words[2])?,
                    n_cycles: p.num(&w.words[3])?,
                };
                let base = p.keyed("base")?.parse_one()?;
                let train_mse = p.keyed("train_mse")?.counted_nums()?;
                let n_trees: usize = p.keyed("trees")?.parse_one()?;
                let mut trees = Vec::with_capacity(n_trees);
                for _ in 0..n_trees {
                    let n_nodes: usize = p.keyed("tree")?.parse_one()?;
                    let mut nodes = Vec::with_capacity(n_nodes);
                    for _ in 0..n_nodes {
                        let line = p.next_words()?;
                        let node = match line.as_slice() {
                            [k, v, n] if k == "L" => Node::Leaf {
                                value: p.num(v)?,
                                n_samples: p.num(n)?,
                            },
                            [k, f, t, l, r, n] if k == "S" => Node::Split {
                                feature: p.num(f)?,
                                threshold: p.num(t)?,
                                left: p.num(l)?,
                                right: p.num(r)?,
                                n_samples: p.num(n)?,
                            },
                            _ => return Err(p.err("malformed tree node")),
                        };
                        nodes.push(node);
                    }
                    let tree = RegressionTree { nodes };
                    check_tree(&tree, inputs.len()).map_err(|m| p.err(m))?;
                    trees.push(tree);
                }
                Regressor::Boosted(BoostedEnsemble {
                    feature_names: inputs,
                    params,
                    base,
                    trees,
                    train_mse,
                })
            }
            other => return Err(p.err(&format!("unknown regressor '{other}'"))),
        };
        Ok(Self {
            reference_year,
            zero_stage,
            features,
            regressor,
        })
    }
}

/// Predicts `ln(1 + usd)` from the 22 covariates, recomputing `zero_prob`.
impl Predictor for TrainedModel {
    fn predict(&self, x22: &FeatureMatrix) -> Vec<f64> {
        self.predict_log(x22)
    }
}

fn check_tree(t: &RegressionTree, n_features: usize) -> Result<(), &'static str> {
    if t.nodes.is_empty() {
        return Err("empty tree");
    }
    for (i, node) in t.nodes.iter().enumerate() {
        if let Node::Split {
            feature, left, right, ..
        } = node
        {
            if *feature >= n_features {
                return Err("split feature out of range");
            }
            if *left <= i || *right <= i || *left >= t.nodes.len() || *right >= t.nodes.len() {
                return Err("child index out of range");
            }
        }
    }
    Ok(())
}

struct Keyed {
    words: Vec<String>,
    line: usize,
}

impl Keyed {
    fn parse_one<T: std::str::FromStr>(&self) -> Result<T, BoostError> {
        match self.words.as_slice() {
            [w] => w.parse().map_err(|_| BoostError::Parse {
                line: self.line,
                message: format!("bad value '{w}'"),
            }),
            _ => Err(BoostError::Parse {
                line: self.line,
                message: "expected one value".into(),
            }),
        }
    }

    fn counted_words(&self) -> Result<Vec<String>, BoostError> {
        let n: usize = self
            .words
            .first()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| BoostError::Parse {
                line: self.line,
                message: "missing count".into(),
            })?;
        if self.words.len() != n + 1 {
            return Err(BoostError::Parse {
                line: self.line,
                message: format!("expected {n} values, found {}", self.words.len() - 1),
            });
        }
        Ok(self.words[1..].to_vec())
    }

    fn counted_nums(&self) -> Result<Vec<f64>, BoostError> {
        self.counted_words()?
            .iter()
            .map(|w| {
                w.parse().map_err(|_| BoostError::Parse {
                    line: self.line,
                    message: format!("bad number '{w}'"),
                })
            })
            .collect()
    }
}

struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, message: &str) -> BoostError {
        BoostError::Parse {
            line: self.line,
            message: message.to_string(),
        }
    }

    fn next_words(&mut self) -> Result<Vec<String>, BoostError> {
        loop {
            let (i, l) = self.lines.next().ok_or_else(|| self.err("unexpected end of file"))?;
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Ok(l.split_whitespace().map(str::to_string).collect());
            }
        }
    }

    fn expect_line(&mut self, words: &[&str]) -> Result<(), BoostError> {
        let got = self.next_words()?;
        if got != words {
            return Err(self.err(&format!("expected '{}'", words.join(" "))));
        }
        Ok(())
    }

    fn keyed(&mut self, key: &str) -> Result<Keyed, BoostError> {
        let mut w = self.next_words()?;
        if w[0] != key {
            return Err(self.err(&format!("expected '{key}', found '{}'", w[0])));
        }
        w.remove(0);
        Ok(Keyed {
            words: w,
            line: self.line,
        })
    }

    fn num<T: std::str::FromStr>(&self, w: &str) -> Result<T, BoostError> {
        w.parse().map_err(|_| self.err(&format!("bad value '{w}'")))
    }
}

/// Latest year with any observed consumption.
pub fn reference_year(ds: &Dataset) -> Option<Year> {
    ds.consumption
        .entries
        .iter()
        .filter(|(_, e)| e.provenance == Provenance::Observed)
        .map(|((_, _, y), _)| *y)
        .max()
}

/// Predicted USD consumption for every brand × country × year, with values
/// below the zero threshold set to zero.
pub fn predict_all(
    model: &TrainedModel,
    ctx: &FeatureContext,
    years: &[Year],
    threshold: f64,
) -> Result<ConsumptionMatrix, BoostError> {
    let ds = ctx.dataset();
    let brands: Vec<&BrandId> = ds.brands.keys().collect();
    let countries: Vec<&CountryCode> = ds.countries.keys().collect();
    let per_year: Result<Vec<_>, BoostError> = years
        .par_iter()
        .map(|&year| {
            let keys: Vec<(BrandId, CountryCode, Year)> = brands
                .iter()
                .flat_map(|b| countries.iter().map(move |c| ((*b).clone(), (*c).clone(), year)))
                .collect();
            let x = ctx.assemble_matrix(&keys)?;
            let yhat = model.predict_log(&x);
            Ok(keys.into_iter().zip(yhat).collect::<Vec<_>>())
        })
        .collect();
    let mut out = ConsumptionMatrix::default();
    for rows in per_year? {
        for ((b, c, y), v) in rows {
            out.insert(b, c, y, log_to_usd(v, threshold), Provenance::Predicted);
        }
    }
    Ok(out)
}

/// Years covered by a dataset's covariates that the model can be applied to.
pub fn prediction_years(ds: &Dataset) -> Vec<Year> {
    let years: BTreeSet<Year> = ds.years().collect();
    years.into_iter().collect()
}
