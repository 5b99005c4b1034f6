//! Descriptive and inferential analytics over bilateral flow tables.

mod centrality;
mod concentration;
mod decoupling;
mod regression;

use std::collections::BTreeMap;

use crate::data_model::{CountryCode, Year};
use crate::transport::FlowRow;

pub use centrality::{eigenvector_centrality, flow_matrix, DEFAULT_TELEPORT};
pub use concentration::{lorenz, pooled_entropy, random_basket_entropy, shannon_entropy, top_share, DEFAULT_TRIALS};
pub use decoupling::{
    country_decoupling, decoupling, group_trends, EmissionsBasis, DecouplingRecord, GroupTrend, HIGH_INCOME_GDP_PC,
};
pub use regression::{ols_robust, reference_upper_bound, RegressionResult};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalyticsError {
    #[error("base value must be positive, got {0}")]
    NonPositiveBase(f64),
    #[error("growth period must be at least one year")]
    InvalidPeriod,
    #[error("all values are zero")]
    AllZero,
    #[error("negative or non-finite value {0}")]
    InvalidValue(f64),
    #[error("mass must lie in (0, 1], got {0}")]
    InvalidMass(f64),
    #[error("target {target} exceeds total physical trade {total}")]
    TargetExceedsTotal { target: f64, total: f64 },
    #[error("no physical trade data")]
    NoPhysicalData,
    #[error("reducible flow graph")]
    ReducibleGraph,
    #[error("flow matrix is empty or all zero")]
    NoFlows,
    #[error("power iteration did not converge in {0} steps")]
    NonConvergence(usize),
    #[error("GDP change is zero, decoupling index undefined")]
    ZeroGdpChange,
    #[error("empty group: {0}")]
    EmptyGroup(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("need more observations ({n}) than columns ({k})")]
    TooFewObservations { n: usize, k: usize },
    #[error("only {0} countries with positive values on both sides, need 3")]
    InsufficientOverlap(usize),
}

/// Annualized growth rate (v1/v0)^(1/years) − 1.
pub fn cagr(v0: f64, v1: f64, years: u32) -> Result<f64, AnalyticsError> {
    if !(v0 > 0.0) {
        return Err(AnalyticsError::NonPositiveBase(v0));
    }
    if years == 0 {
        return Err(AnalyticsError::InvalidPeriod);
    }
    Ok((v1 / v0).powf(1.0 / f64::from(years)) - 1.0)
}

pub fn trade_balance(exports: f64, imports: f64) -> f64 {
    exports - imports
}

pub fn combined_balance(physical_net: f64, digital_net: f64) -> f64 {
    physical_net + digital_net
}

/// Fraction of a physical deficit closed by the digital balance.
pub fn deficit_offset(physical_net: f64, digital_net: f64) -> f64 {
    digital_net / -physical_net
}

/// Grouping keys for [`aggregate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKey {
    Year,
    Sector,
    Origin,
    Dest,
}

/// Sums of flow values keyed by the chosen fields, in key order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowSeries {
    pub keys: Vec<FlowKey>,
    pub values: BTreeMap<Vec<String>, f64>,
}

impl FlowSeries {
    pub fn total(&self) -> f64 {
        self.values.values().sum()
    }
}

pub fn aggregate(flows: &[FlowRow], keys: &[FlowKey]) -> FlowSeries {
    let mut values = BTreeMap::new();
    for f in flows {
        let k: Vec<String> = keys
            .iter()
            .map(|k| match k {
                FlowKey::Year => f.year.to_string(),
                FlowKey::Sector => f.sector.clone(),
                FlowKey::Origin => f.origin.to_string(),
                FlowKey::Dest => f.dest.to_string(),
            })
            .collect();
        *values.entry(k).or_insert(0.0) += f.value;
    }
    FlowSeries {
        keys: keys.to_vec(),
        values,
    }
}

pub fn exports_by_country(flows: &[FlowRow], year: Year) -> BTreeMap<CountryCode, f64> {
    let mut out = BTreeMap::new();
    for f in flows.iter().filter(|f| f.year == year) {
        *out.entry(f.origin.clone()).or_insert(0.0) += f.value;
    }
    out
}

pub fn imports_by_country(flows: &[FlowRow], year: Year) -> BTreeMap<CountryCode, f64> {
    let mut out = BTreeMap::new();
    for f in flows.iter().filter(|f| f.year == year) {
        *out.entry(f.dest.clone()).or_insert(0.0) += f.value;
    }
    out
}

/// Share of each sector in its year's total trade.
pub fn sector_shares(flows: &[FlowRow]) -> BTreeMap<(Year, String), f64> {
    let mut by_year: BTreeMap<Year, f64> = BTreeMap::new();
    let mut by_sector: BTreeMap<(Year, String), f64> = BTreeMap::new();
    for f in flows {
        *by_year.entry(f.year).or_insert(0.0) += f.value;
        *by_sector.entry((f.year, f.sector.clone())).or_insert(0.0) += f.value;
    }
    by_sector
        .into_iter()
        .map(|((y, s), v)| ((y, s), v / by_year[&y]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow(year: Year, sector: &str, o: &str, d: &str, v: f64) -> FlowRow {
        FlowRow {
            year,
            brand: "b".into(),
            sector: sector.into(),
            origin: o.into(),
            dest: d.into(),
            value: v,
            lower: v,
            upper: v,
        }
    }

    #[test]
    fn growth_rates() {
        let g = cagr(411e9, 1.02e12, 5).unwrap();
        assert!((0.195..=0.204).contains(&g));
        assert_eq!(cagr(7.0, 7.0, 3).unwrap(), 0.0);
        assert!((cagr(17.3e12, 16.1e12, 1).unwrap() + 0.0694).abs() < 1e-4);
        assert!(cagr(0.0, 1.0, 1).is_err());
        assert!(cagr(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn balances() {
        assert_eq!(trade_balance(1.63e12, 2.73e12), -1.10e12);
        assert_eq!(trade_balance(5.0, 5.0), 0.0);
        let combined = combined_balance(-1.10e12, 0.315e12);
        assert!((combined + 0.785e12).abs() < 1.0);
        assert!((deficit_offset(-1.10e12, 0.315e12) - 0.286).abs() < 1e-3);
    }

    #[test]
    fn aggregation_is_exact() {
        let flows = vec![
            flow(2020, "Cloud", "A", "B", 1.0),
            flow(2020, "Cloud", "A", "C", 2.0),
            flow(2020, "Games", "B", "A", 4.0),
            flow(2021, "Games", "B", "A", 8.0),
        ];
        let s = aggregate(&flows, &[FlowKey::Year, FlowKey::Origin]);
        assert_eq!(s.values[&vec!["2020".to_string(), "A".to_string()]], 3.0);
        assert_eq!(s.total(), 15.0);
        assert_eq!(exports_by_country(&flows, 2020)[&CountryCode::from("B")], 4.0);
        assert_eq!(imports_by_country(&flows, 2020)[&CountryCode::from("A")], 4.0);
        let shares = sector_shares(&flows);
        for y in [2020, 2021] {
            let t: f64 = shares.iter().filter(|((yy, _), _)| *yy == y).map(|(_, v)| v).sum();
            assert!((t - 1.0).abs() < 1e-15);
        }
    }
}
