//! Gravity, size and ICT covariates for each (brand, destination, year),
//! the logistic zero stage, and permutation feature importance.

mod importance;
mod logistic;

use std::collections::BTreeMap;

use crate::data_model::{region_code, BrandId, CountryCode, Dataset, DyadRecord, Year};

pub use importance::{permutation_importance, permutation_importances, select_top, FeatureSubset, Predictor, DEFAULT_SHUFFLES};
pub use logistic::{one_hot_regions, LogisticModel, ZeroStage, LOGISTIC_MAX_ITER, LOGISTIC_RIDGE, LOGISTIC_TOL};

pub const N_FEATURES: usize = 22;

/// Feature names in fixed order. Continuous features are `ln(x + 1)`; the
/// two region columns are ordinal codes from [`crate::data_model::REGIONS`];
/// contiguity and the seven cultural/historical dummies are 0/1.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "product_revenue",
    "origin_digital_revenue",
    "sector_world_revenue",
    "origin_gdp",
    "dest_gdp",
    "distance",
    "origin_region",
    "dest_region",
    "contiguity",
    "comlang_official",
    "comlang_ethno",
    "colony_ever",
    "comcol_post45",
    "curcol",
    "col_post45",
    "same_country_ever",
    "origin_internet",
    "dest_internet",
    "origin_fixed_bb",
    "dest_fixed_bb",
    "origin_mobile_bb",
    "dest_mobile_bb",
];

pub const ZERO_PROB: &str = "zero_prob";
pub const REGION_COLUMNS: [usize; 2] = [6, 7];
pub const DUMMY_COLUMNS: std::ops::RangeInclusive<usize> = 8..=15;

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FeatureError {
    #[error("missing dyad {origin}->{dest}")]
    MissingDyad { origin: CountryCode, dest: CountryCode },
    #[error("missing covariates for country {country} in {year}")]
    MissingCovariate { country: CountryCode, year: Year },
    #[error("unknown brand {0}")]
    UnknownBrand(BrandId),
    #[error("unknown region '{0}'")]
    UnknownRegion(String),
    #[error("logistic fit needs more rows ({rows}) than features ({cols})")]
    TooFewRows { rows: usize, cols: usize },
    #[error("uninformative baseline: validation R² = {0}")]
    UninformativeBaseline(f64),
    #[error("feature subset size must be in 1..={max}, got {k}")]
    InvalidSubsetSize { k: usize, max: usize },
    #[error("unknown feature '{0}'")]
    UnknownFeature(String),
    #[error("empty validation set")]
    EmptyValidation,
}

/// The 22 transformed covariates of one (brand, destination, year) plus the
/// zero-stage probability of non-zero consumption.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; N_FEATURES],
    pub zero_prob: f64,
}

/// Column-major feature matrix with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl FeatureMatrix {
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), columns.len(), "one name per column");
        let n_rows = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == n_rows), "ragged columns");
        Self { names, columns, n_rows }
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let columns = (0..names.len())
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        let mut m = Self::from_columns(names, columns);
        m.n_rows = rows.len();
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut Vec<f64> {
        &mut self.columns[j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            n_rows: self.n_rows,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) {
        if self.columns.is_empty() {
            self.n_rows = values.len();
        }
        assert_eq!(values.len(), self.n_rows, "column length");
        self.names.push(name.into());
        self.columns.push(values);
    }
}

fn log1p(x: f64) -> f64 {
    (x + 1.0).ln()
}

fn lookup<K: Ord>(m: &BTreeMap<K, f64>, k: &K) -> f64 {
    m.get(k).copied().unwrap_or(0.0)
}

fn dummy(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Aggregates needed by assembly, precomputed once per dataset.
pub struct FeatureContext<'a> {
    ds: &'a Dataset,
    domestic_floor_km: f64,
    brand_revenue: BTreeMap<(BrandId, Year), f64>,
    country_revenue: BTreeMap<(CountryCode, Year), f64>,
    sector_revenue: BTreeMap<(String, Year), f64>,
}

impl<'a> FeatureContext<'a> {
    pub fn new(ds: &'a Dataset, domestic_floor_km: f64) -> Self {
        let mut brand_revenue = BTreeMap::new();
        let mut country_revenue = BTreeMap::new();
        let mut sector_revenue = BTreeMap::new();
        for ((firm, brand, year), v) in &ds.revenue.entries {
            *brand_revenue.entry((brand.clone(), *year)).or_insert(0.0) += v;
            if let Some(f) = ds.firms.get(firm) {
                *country_revenue.entry((f.country.clone(), *year)).or_insert(0.0) += v;
            }
            if let Some(b) = ds.brands.get(brand) {
                *sector_revenue.entry((b.sector.clone(), *year)).or_insert(0.0) += v;
            }
        }
        Self {
            ds,
            domestic_floor_km,
            brand_revenue,
            country_revenue,
            sector_revenue,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        self.ds
    }

    /// The transformed covariates for one (brand, destination, year). The
    /// zero probability is left at 0 until a zero stage is applied.
    pub fn assemble(&self, brand: &BrandId, dest: &CountryCode, year: Year) -> Result<FeatureVector, FeatureError> {
        let ds = self.ds;
        let b = ds.brands.get(brand).ok_or_else(|| FeatureError::UnknownBrand(brand.clone()))?;
        let origin = ds
            .brand_origin(brand)
            .ok_or_else(|| FeatureError::UnknownBrand(brand.clone()))?;
        let covariate = |c: &CountryCode| {
            ds.country_year(c, year).ok_or_else(|| FeatureError::MissingCovariate {
                country: c.clone(),
                year,
            })
        };
        let o = covariate(origin)?;
        let d = covariate(dest)?;
        let region = |c: &CountryCode| -> Result<f64, FeatureError> {
            let r = &ds.countries[c].region;
            region_code(r)
                .map(|x| x as f64)
                .ok_or_else(|| FeatureError::UnknownRegion(r.clone()))
        };
        let domestic;
        let dyad = match ds.dyad(origin, dest) {
            Some(d) => d,
            None if origin == dest => {
                domestic = DyadRecord::domestic(origin, self.domestic_floor_km);
                &domestic
            }
            None => {
                return Err(FeatureError::MissingDyad {
                    origin: origin.clone(),
                    dest: dest.clone(),
                })
            }
        };
        let values = [
            log1p(lookup(&self.brand_revenue, &(brand.clone(), year))),
            log1p(lookup(&self.country_revenue, &(origin.clone(), year))),
            log1p(lookup(&self.sector_revenue, &(b.sector.clone(), year))),
            log1p(o.gdp_ppp),
            log1p(d.gdp_ppp),
            log1p(dyad.dist_km),
            region(origin)?,
            region(dest)?,
            dummy(dyad.contiguity),
            dummy(dyad.comlang_official),
            dummy(dyad.comlang_ethno),
            dummy(dyad.colony_ever),
            dummy(dyad.comcol_post45),
            dummy(dyad.curcol),
            dummy(dyad.col_post45),
            dummy(dyad.same_country_ever),
            log1p(o.internet_share),
            log1p(d.internet_share),
            log1p(o.fixed_bb_share),
            log1p(d.fixed_bb_share),
            log1p(o.mobile_bb_share),
            log1p(d.mobile_bb_share),
        ];
        Ok(FeatureVector { values, zero_prob: 0.0 })
    }

    /// Assembles the 22-column matrix for a list of keys.
    pub fn assemble_matrix(&self, keys: &[(BrandId, CountryCode, Year)]) -> Result<FeatureMatrix, FeatureError> {
        let mut columns = (0..N_FEATURES).map(|_| Vec::with_capacity(keys.len())).collect::<Vec<_>>();
        for (b, c, y) in keys {
            let v = self.assemble(b, c, *y)?;
            for (col, x) in columns.iter_mut().zip(v.values) {
                col.push(x);
            }
        }
        let mut m = FeatureMatrix::from_columns(FEATURE_NAMES.iter().map(|s| s.to_string()).collect(), columns);
        m.n_rows = keys.len();
        Ok(m)
    }
}

/// Convenience single-shot assembly with the default 1 km domestic floor.
pub fn assemble(ds: &Dataset, brand: &BrandId, dest: &CountryCode, year: Year) -> Result<FeatureVector, FeatureError> {
    FeatureContext::new(ds, 1.0).assemble(brand, dest, year)
}
